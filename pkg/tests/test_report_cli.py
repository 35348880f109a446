import json
import re

import numpy as np
import pytest

from driftscope.cli import DEFAULTS, main, resolve_config
from driftscope.dataset import load_csv, write_csv
from driftscope.errors import ValidationError
from driftscope.report import load_schema, render_markdown, validate_report, write_report
from driftscope.synthetic import planted_shift_pair


def cli(*args):
    try:
        return main([str(a) for a in args])
    except SystemExit as exc:
        return exc.code


def report(out):
    return json.loads((out / "report.json").read_text())


@pytest.fixture
def planted(tmp_path):
    d, dp, planted_ids = planted_shift_pair(120, 4, 0.05, seed=0)
    write_csv(d, tmp_path / "d.csv")
    write_csv(dp, tmp_path / "dp.csv")
    return tmp_path / "d.csv", tmp_path / "dp.csv", planted_ids


@pytest.fixture
def corpora(tmp_path, write_text):
    a = write_text(tmp_path / "a.txt", "The results are presented herein.\nWe observe an improvement.\n"
                                       "Kindly find attached.\nPursuant to our agreement.\n")
    b = write_text(tmp_path / "b.txt", "lol so cool\nno way dude\nhaha nice one\nwhatever works\n")
    fa = write_text(tmp_path / "fa.json", json.dumps({"*": ["yes", "yes"]}))
    fb = write_text(tmp_path / "fb.json", json.dumps({"1": ["no", "yes"], "2": ["no", "no"], "3": "1. NO\n2. maybe",
                                                       "4": ["yes", "no"]}))
    cfg = write_text(tmp_path / "attr.json", json.dumps({
        "d": str(a), "d_prime": str(b), "attributes": ["Use formal language", "Have consistent writing structure"],
        "provider": {"type": "mock", "fixture_d": str(fa), "fixture_d_prime": str(fb)},
    }))
    return cfg


# -------------------------------------------------------------------- report


def test_written_reports_validate_and_broken_ones_do_not(tmp_path):
    assert cli("eval", "gen-mixture", "--case", "1", "--out", tmp_path) == 0
    rep = report(tmp_path)
    validate_report(rep)
    assert load_schema()["type"] == "object"
    for key in ("tool", "config"):
        broken = dict(rep)
        del broken[key]
        with pytest.raises(ValidationError):
            validate_report(broken)
    broken = {**rep, "results": {k: v for k, v in rep["results"].items() if k != "nspd"}}
    with pytest.raises(ValidationError):
        validate_report(broken)


def test_reports_refuse_non_finite_numbers(tmp_path):
    rep = report_of_validation(tmp_path)
    rep["results"]["sign_agreement"] = float("nan")
    with pytest.raises(ValueError):
        write_report(rep, tmp_path / "again")


def report_of_validation(tmp_path):
    assert cli("eval", "validate-influence", "--set", "n=20", "--set", "n_test=20", "--out", tmp_path / "vi") == 0
    return report(tmp_path / "vi")


def test_markdown_is_rendered_from_the_json(tmp_path):
    assert cli("eval", "gen-mixture", "--case", "2", "--out", tmp_path / "m") == 0
    out = tmp_path / "prot"
    cfg = {"d": str(tmp_path / "m" / "X.csv"), "d_prime": str(tmp_path / "m" / "Y.csv"), "k": 6}
    (tmp_path / "p.json").write_text(json.dumps(cfg))
    assert cli("prototypes", "--config", tmp_path / "p.json", "--out", out) == 0
    rep = report(out)
    md = (out / "report.md").read_text()
    assert md == render_markdown(rep)
    for p in rep["results"]["neighbourhood"]["prototypes"]:
        assert f"| {p['prototype_id']} | {p['count_d']} | {p['count_d_prime']} | {json.dumps(p['nspd'])} |" in md
    spelled = set(re.findall(r"-?\d+\.\d+(?:e-?\d+)?", (out / "report.json").read_text()))
    assert set(re.findall(r"-?\d+\.\d+(?:e-?\d+)?", md)) <= spelled


# ---------------------------------------------------------------- prototypes


def test_identical_inputs_give_zero_statistics(tmp_path, planted):
    d, _, _ = planted
    assert cli("prototypes", "--set", f'd="{d}"', "--set", f'd_prime="{d}"', "--set", "k=3",
               "--out", tmp_path / "o") == 0
    rows = report(tmp_path / "o")["results"]["neighbourhood"]["prototypes"]
    assert all(r["nspd"] == 0.0 and r["nsdd"] in (0.0, None) for r in rows)
    assert "same share of samples" in (tmp_path / "o" / "report.md").read_text()


def test_missing_input_path_names_the_path(tmp_path, capsys):
    assert cli("prototypes", "--set", 'd="/no/such/file.csv"', "--set", 'd_prime="/no/such/file.csv"',
               "--out", tmp_path / "o") == 1
    assert "/no/such/file.csv" in capsys.readouterr().err


def test_mismatched_columns_are_invalid(tmp_path, planted, write_text):
    d, _, _ = planted
    other = write_text(tmp_path / "other.csv", "a,b\n1,2\n3,4\n")
    assert cli("prototypes", "--set", f'd="{d}"', "--set", f'd_prime="{other}"', "--out", tmp_path / "o") == 1


def test_case_two_mixture_nspd_matches_ground_truth(tmp_path):
    assert cli("eval", "gen-mixture", "--case", "2", "--seed", "0", "--out", tmp_path) == 0
    rep = report(tmp_path)
    assert rep["results"]["n_x"] == rep["results"]["n_y"] == 360
    assert load_csv(tmp_path / "Y.csv").n_rows == 360
    pi = np.array(rep["results"]["groundtruth"]["proportions"]["y"])
    np.testing.assert_allclose(rep["results"]["nspd"], 1 / 6 - pi, atol=3 / np.sqrt(360))


# ----------------------------------------------------------------- influence


def test_influence_command(tmp_path, planted):
    d, dp, planted_ids = planted
    out = tmp_path / "inf"
    code = cli("influence", "--set", f'd="{d}"', "--set", f'd_prime="{dp}"', "--set", 'label_column="label"',
               "--set", "K=6", "--set", "alignment_fractions=[0.05, 0.5]", "--out", out)
    assert code == 0
    res = report(out)["results"]
    assert set(res["selected_ids"]) & set(planted_ids.tolist())
    assert res["alignment_curve"][0]["alignment"] > 0
    tables = res["summary_table"]
    assert [t["dataset"] for t in tables] == ["D", "D′", "influential"]
    assert all(set(t) == {"dataset", "n", "features", "class_counts"} for t in tables)
    assert all(set(v) == {"mean", "standard_error"} for t in tables for v in t["features"].values())
    assert tables[2]["n"] == 6 and sum(tables[2]["class_counts"].values()) == 6
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert header == "dataset,feature,mean,standard_error,class_counts"


def test_influence_bounds_on_k(tmp_path, planted):
    d, dp, _ = planted
    base = ["influence", "--set", f'd="{d}"', "--set", f'd_prime="{dp}"', "--set", 'label_column="label"']
    assert cli(*base, "--set", "K=121", "--out", tmp_path / "a") == 1
    assert not (tmp_path / "a" / "report.json").exists()
    assert cli(*base, "--set", "K=120", "--out", tmp_path / "b") == 2


def test_influence_needs_labels(tmp_path, planted):
    d, dp, _ = planted
    assert cli("influence", "--set", f'd="{d}"', "--set", f'd_prime="{dp}"', "--out", tmp_path) == 1


# ---------------------------------------------------------------- attributes


@pytest.mark.filterwarnings("ignore:1 unparsed answers imputed as no")
def test_attribute_reports_are_byte_identical(tmp_path, corpora):
    outs = [tmp_path / f"run{i}" for i in range(2)]
    for o in outs:
        assert cli("attributes", "--config", corpora, "--set", "humanize=true",
                   "--set", 'provider.fixture_humanized="' + str(tmp_path / "fb.json") + '"', "--out", o) == 0
    for name in ("report.json", "report.md", "attributes.csv", "audit.jsonl", "humanized.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    res = report(outs[0])["results"]
    assert res["humanized_documents"] == 4
    assert res["separability"][0]["notes"] == ["1 unparsed answers imputed as no"]
    assert [t["yes_percent"] for t in res["tables"][:2]] == [[100.0, 100.0], [25.0, 100 / 3]]
    assert (outs[0] / "attributes.csv").read_text().splitlines()[0] == \
        "corpus,Use formal language,Have consistent writing structure"


def test_provider_failure_exits_three(tmp_path, corpora, write_text, capsys):
    partial = write_text(tmp_path / "partial.json", json.dumps({"1": ["yes", "no"]}))
    code = cli("attributes", "--config", corpora, "--set", f'provider.fixture_d_prime="{partial}"',
               "--out", tmp_path / "o")
    assert code == 3
    assert "coverage 0.250" in capsys.readouterr().err


def test_attributes_need_questions(tmp_path, corpora):
    assert cli("attributes", "--config", corpora, "--set", "attributes=null", "--out", tmp_path / "o") == 1


# -------------------------------------------------------------------- config


def test_precedence_defaults_file_set_flag(tmp_path, write_text):
    cfg = write_text(tmp_path / "c.json", json.dumps({"n": 40, "m": 3, "seed": 1}))
    resolved = resolve_config("validate-influence", cfg, ["m=4", "seed=2"], {"seed": 3})
    assert resolved["n"] == 40 and resolved["m"] == 4 and resolved["seed"] == 3
    assert resolved["l2"] == DEFAULTS["validate-influence"]["l2"]


def test_config_is_echoed_in_full(tmp_path):
    out = tmp_path / "vi"
    assert cli("eval", "validate-influence", "--set", "n=40", "--set", "n_test=40", "--seed", "4", "--out", out) == 0
    rep = report(out)
    assert rep["config"] == {**DEFAULTS["validate-influence"], "n": 40, "n_test": 40, "seed": 4}
    assert rep["seeds"] == {"seed": 4}
    assert rep["results"]["pearson"] >= 0.9
    assert {"report.json", "report.md", "influence_validation.csv"} <= set(rep["artifacts"])


@pytest.mark.parametrize(
    "args",
    [
        ["eval", "validate-influence", "--set", "unknown_key=1"],
        ["eval", "validate-influence", "--set", 'n="many"'],
        ["eval", "validate-influence", "--set", "novalue"],
        ["eval", "validate-influence", "--config", "/no/such/config.json"],
        ["frobnicate"],
        ["eval", "gen-mixture", "--case", "5"],
    ],
)
def test_invalid_invocations_exit_one(tmp_path, args):
    assert cli(*args, "--out", tmp_path / "o") == 1


def test_bad_config_json(tmp_path, write_text):
    cfg = write_text(tmp_path / "c.json", "{not json")
    assert cli("eval", "validate-influence", "--config", cfg, "--out", tmp_path / "o") == 1


def test_degenerate_validation_reports_null(tmp_path):
    out = tmp_path / "o"
    assert cli("eval", "validate-influence", "--set", "n=20", "--set", "degenerate=true", "--out", out) == 0
    assert report(out)["results"]["pearson"] is None


def test_sweep_commands(tmp_path):
    assert cli("eval", "faithfulness", "--set", "seeds=[0, 1]", "--set", "n_trials=200", "--out", tmp_path / "f") == 0
    summary = report(tmp_path / "f")["results"]["summary"]
    top = [s for s in summary if s["K"] == 8]
    assert all(s["rta"] == 1.0 and s["gpa"] == 1.0 for s in top)
    assert cli("eval", "tradeoff", "--set", "n_samples=20", "--out", tmp_path / "t") == 0
    corr = report(tmp_path / "t")["results"]["correlation"]
    assert set(corr) == {"3", "4", "5", "pooled"}
