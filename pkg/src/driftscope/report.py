"""Report assembly: JSON envelope, schema validation and Markdown rendering.

The Markdown narrative is produced from the JSON document alone, and every
number it prints is the JSON serialization of a value stored in the report.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from . import __version__
from .errors import ValidationError

SCHEMA_NAME = "report.schema.json"


def load_schema() -> dict:
    return json.loads(resources.files("driftscope").joinpath("schemas", SCHEMA_NAME).read_text("utf-8"))


def validate_report(report: dict) -> None:
    try:
        jsonschema.validate(report, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ValidationError(f"report does not match its schema at '{path}': {exc.message}") from None


def make_report(command: str, config: dict, results: dict, seeds: dict, artifacts=(), notes=(),
                subcommand: Optional[str] = None) -> dict:
    return {
        "tool": {"name": "driftscope", "version": __version__},
        "command": command,
        "subcommand": subcommand,
        "config": config,
        "seeds": seeds,
        "results": results,
        "artifacts": sorted(artifacts),
        "notes": list(notes),
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_report(report: dict, out_dir) -> Path:
    """Validate, then write ``report.json`` and ``report.md`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = dict(report)
    report["artifacts"] = sorted(set(report.get("artifacts", [])) | {"report.json", "report.md"})
    validate_report(report)
    (out / "report.json").write_text(dumps(report), encoding="utf-8")
    (out / "report.md").write_text(render_markdown(json.loads(dumps(report))), encoding="utf-8")
    return out / "report.json"


# ------------------------------------------------------------------ markdown


def _n(v) -> str:
    """A value exactly as it is spelled in the JSON document."""
    return json.dumps(v)


def _table(header, rows) -> list:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return lines + [""]


def _names(config: dict):
    return config.get("d_name") or "D", config.get("d_prime_name") or "D′"


def _md_prototypes(rep: dict) -> list:
    res = rep["results"]
    a, b = _names(rep["config"])
    nb = res["neighbourhood"]
    rows = [
        [p["prototype_id"], p["count_d"], p["count_d_prime"], _n(p["nspd"]), _n(p["nsdd"])]
        for p in nb["prototypes"]
    ]
    lines = ["## Neighbourhood statistics", ""]
    lines += _table(["prototype", f"count {a}", f"count {b}", "NSPD", "NSDD"], rows)
    lines += ["## Explanation", ""]
    said = False
    for p in nb["prototypes"]:
        if p["nspd"] == 0 and not p["nsdd"]:
            continue
        said = True
        more = "more" if p["nspd"] < 0 else "fewer"
        sent = f"- Compared to {a}, {b} has {more} samples near prototype {p['prototype_id']} (NSPD {_n(p['nspd'])})"
        if p["nsdd"] is None:
            sent += "; their neighbour distances are not comparable."
        elif p["nsdd"] == 0:
            sent += "."
        else:
            closer = "farther from" if p["nsdd"] < 0 else "closer to"
            sent += f", and those samples lie {closer} it than the ones in {a} (NSDD {_n(p['nsdd'])})."
        lines.append(sent)
    if not said:
        lines.append(f"- {a} and {b} place the same share of samples near every prototype at the same distances.")
    lines.append("")
    partial = res.get("partial_prototypes") or []
    if partial:
        lines += ["## Partial prototypes", ""]
        for pp in partial:
            lines.append(f"- Prototype {pp['parent_id']} is summarised by: {', '.join(pp['features'])}.")
        lines.append("")
    emb = res.get("embedding")
    if emb and emb.get("source") != "none":
        lines += ["## Embedding", "", f"- Source: {emb['source']}. {emb.get('note', '')}".rstrip(), ""]
    return lines


def _md_influence(rep: dict) -> list:
    res = rep["results"]
    a, b = _names(rep["config"])
    tri = res["gifim_triplet"]
    lines = ["## Influential examples", ""]
    lines.append(f"- Discriminator accuracy: {_n(res['discriminator_accuracy'])}.")
    lines.append(f"- Selected rows of {b}: {', '.join(_n(i) for i in res['selected_ids'])}.")
    if res["alignment"] is None:
        lines.append("- Alignment: undefined.")
    else:
        lines.append(f"- Alignment after removing them: {_n(res['alignment'])}.")
    lines += ["", "## Global intrinsic importance", ""]
    rows = [[f, _n(x), _n(y), _n(z) if tri["d_prime_minus_s"] is not None else ""]
            for f, x, y, z in zip(tri["feature_names"], tri["d"], tri["d_prime"],
                                  tri["d_prime_minus_s"] or [None] * len(tri["d"]))]
    lines += _table(["feature", a, b, f"{b} without selected"], rows)
    summary = res.get("summary_table") or []
    if summary:
        lines += ["## Feature means", ""]
        feats = list(summary[0]["features"])
        header = ["dataset"] + feats + ["class counts"]
        body = []
        for s in summary:
            cells = [s["dataset"]]
            for f in feats:
                m = s["features"][f]
                cells.append(f"{_n(m['mean'])} ± {_n(m['standard_error'])}")
            cells.append(", ".join(f"{k}: {_n(v)}" for k, v in sorted(s["class_counts"].items())))
            body.append(cells)
        lines += _table(header, body)
    for note in res.get("notes", []):
        lines.append(f"- Note: {note}")
    return lines + [""]


def _md_attributes(rep: dict) -> list:
    res = rep["results"]
    tables = res["tables"]
    attrs = tables[0]["attributes"]
    lines = ["## Attribute YES percentages", ""]
    rows = [[t["corpus"]] + [("" if v is None else _n(v)) for v in t["yes_percent"]] for t in tables]
    lines += _table(["corpus"] + attrs, rows)
    for sep in res.get("separability", []):
        lines.append(f"- Classifier accuracy, {sep['corpus_d']} vs {sep['corpus_d_prime']}: {_n(sep['accuracy'])}.")
    for t in tables:
        if any(t["unparsed"]):
            lines.append(f"- {t['corpus']}: unparsed answers per attribute {', '.join(_n(u) for u in t['unparsed'])}.")
    return lines + [""]


def _md_eval(rep: dict) -> list:
    res = rep["results"]
    sub = rep["subcommand"]
    lines = [f"## Evaluation: {sub}", ""]
    if sub == "validate-influence":
        lines.append(f"- Pearson correlation with retraining: {_n(res['pearson'])}.")
        lines.append(f"- Sign agreement: {_n(res['sign_agreement'])}.")
        if res.get("degenerate"):
            lines.append("- Input is degenerate; correlation is undefined.")
    elif sub == "gen-mixture":
        gt = res["groundtruth"]
        lines.append(f"- Points per dataset: {_n(res['n_x'])} and {_n(res['n_y'])}.")
        rows = [[i, _n(px), _n(py), _n(nspd)] for i, px, py, nspd in
                zip(res["clusters"], gt["proportions"]["x"], gt["proportions"]["y"], res["nspd"])]
        lines += [""] + _table(["cluster", "proportion X", "proportion Y", "NSPD"], rows)
    elif sub == "faithfulness":
        rows = [[s["K"], _n(s["rta"]), _n(s["gpa"]), _n(s["neighbourhood_variance"])] for s in res["summary"]]
        lines += _table(["K", "RTA", "GPA", "variance"], rows)
    elif sub == "tradeoff":
        rows = [[k, _n(v)] for k, v in res["correlation"].items()]
        lines += _table(["K", "correlation"], rows)
    return lines + [""]


_RENDER = {"prototypes": _md_prototypes, "influence": _md_influence, "attributes": _md_attributes, "eval": _md_eval}


def render_markdown(report: dict) -> str:
    lines = [f"# driftscope {report['command']}" + (f" {report['subcommand']}" if report.get("subcommand") else ""), ""]
    lines.append(f"Tool version {report['tool']['version']}.")
    lines.append("")
    lines += _RENDER[report["command"]](report)
    if report.get("notes"):
        lines += ["## Notes", ""] + [f"- {n}" for n in report["notes"]] + [""]
    lines += ["## Artifacts", ""] + [f"- {a}" for a in report["artifacts"]]
    return "\n".join(lines) + "\n"
