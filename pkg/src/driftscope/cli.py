"""Command-line front end.

``driftscope <subcommand> --config <path> [--set key=value ...] --out <dir>``

A JSON config is merged over the built-in defaults, then ``--set`` overrides
(dotted keys, JSON-decoded values) and the dedicated flags are applied; the
fully resolved config is echoed into ``report.json``. Exit codes: 0 success,
1 invalid input or config, 2 computation failure, 3 provider failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attributes import (
    AuditLog,
    ChatCompletionProvider,
    MockProvider,
    attribute_percentages,
    humanize_corpus,
    load_corpus,
    separability_score,
    write_attribute_csv,
    write_corpus,
)
from .dataset import TabularDataset, apply_normalizer, fit_normalizer, invert_normalizer, load_csv, write_csv
from .errors import ComputationError, DriftscopeError, ProviderError, SchemaMismatch, ValidationError
from .evaluation import (
    PrototypeContext,
    SweepResult,
    build_prototype_context,
    faithfulness_sweep,
    fit_lifim_provider,
    synthetic_context,
    tradeoff_correlation,
    tradeoff_sweep,
    validate_influence,
)
from .influence import DEFAULT_L2, InfluentialExampleExplainer
from .prototypes import (
    Prototype,
    kmeans_prototypes,
    neighbourhood_stats,
    partial_prototypes,
    percentile_grid_prototypes,
    prototypes_from_dicts,
)
from .rashomon import ImportanceVector, RashomonImportance, write_importance_csv
from .report import make_report, write_report
from .synthetic import mixture_case

log = logging.getLogger("driftscope")

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION, EXIT_PROVIDER = 0, 1, 2, 3

_IMPORTANCE = RashomonImportance().get_params()
_PROVIDER = {
    "type": "mock",
    "fixture_d": None,
    "fixture_d_prime": None,
    "fixture_humanized": None,
    "echo": False,
    "endpoint": None,
    "model": None,
    "api_key_env": "DRIFTSCOPE_API_KEY",
    "timeout": 60.0,
    "max_retries": 3,
    "backoff": 1.0,
}
_PAIR = {"d": None, "d_prime": None, "d_name": None, "d_prime_name": None}

DEFAULTS = {
    "prototypes": {
        **_PAIR,
        "label_column": None,
        "method": "kmeans",
        "k": 8,
        "grid_columns": None,
        "grid_percentiles": [10, 50, 90],
        "label_tree_depth": 2,
        "prototypes_file": None,
        "metric": "euclidean",
        "label_aware": False,
        "normalize": True,
        "partial": {"enabled": True, "K": None, "c1": 0.0, "c2": 0.0, "c3": 1.0, "delta_percentile": 10.0, "delta_reference": "d"},
        "importance": dict(_IMPORTANCE),
        "max_thresholds_per_column": 3,
        "embedding": {"source": "none", "file": None},
        "seed": 0,
    },
    "influence": {
        **_PAIR,
        "label_column": None,
        "K": 10,
        "l2": DEFAULT_L2,
        "class_weight": None,
        "max_thresholds_per_column": 3,
        "importance": {**_IMPORTANCE, "attribution": "absolute"},
        "alignment_fractions": None,
        "seed": 0,
    },
    "attributes": {
        **_PAIR,
        "attributes": None,
        "attributes_file": None,
        "provider": dict(_PROVIDER),
        "humanize": False,
        "humanize_provider": {**_PROVIDER, "echo": True},
        "seed": 0,
    },
    "validate-influence": {"n": 200, "m": 5, "l2": DEFAULT_L2, "n_test": 200, "degenerate": False, "seed": 0},
    "gen-mixture": {"case": 1, "k": 6, "std": 1.0, "seed": 0},
    "faithfulness": {
        **_PAIR,
        "label_column": None,
        "n": 300,
        "m": 8,
        "k": 4,
        "K_values": None,
        "selection": ["scored", "random"],
        "seeds": list(range(10)),
        "delta_percentile": 10.0,
        "n_trials": 1000,
        "seed": 0,
    },
    "tradeoff": {
        **_PAIR,
        "label_column": None,
        "n": 300,
        "m": 8,
        "k": 4,
        "n_samples": 200,
        "c_low": 0.01,
        "c_high": 10.0,
        "K_set": [3, 4, 5],
        "delta_percentile": 10.0,
        "importance": dict(_IMPORTANCE),
        "seed": 0,
    },
}

# keys whose non-null values must name existing files
_PATH_KEYS = ("d", "d_prime", "prototypes_file", "attributes_file", "embedding.file", "provider.fixture_d",
              "provider.fixture_d_prime", "provider.fixture_humanized", "humanize_provider.fixture_d",
              "humanize_provider.fixture_d_prime", "humanize_provider.fixture_humanized")


# -------------------------------------------------------------------- config


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        path = f"{where}{key}"
        if key not in base:
            raise ValidationError(f"unknown config key '{path}'; allowed: {', '.join(sorted(base))}")
        default = base[key]
        if isinstance(default, dict):
            if not isinstance(val, dict):
                raise ValidationError(f"config key '{path}' must be an object")
            out[key] = _merge(default, val, path + ".")
        else:
            out[key] = _check_type(path, default, val)
    return out


def _check_type(path, default, val):
    if default is None or val is None:
        return val
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ValidationError(f"config key '{path}' must be true or false, got {val!r}")
    elif isinstance(default, int):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ValidationError(f"config key '{path}' must be an integer, got {val!r}")
    elif isinstance(default, float):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ValidationError(f"config key '{path}' must be a number, got {val!r}")
        val = float(val)
    elif isinstance(default, str):
        if not isinstance(val, str):
            raise ValidationError(f"config key '{path}' must be a string, got {val!r}")
    elif isinstance(default, list):
        if not isinstance(val, list):
            raise ValidationError(f"config key '{path}' must be a list, got {val!r}")
    return val


def _parse_set(item: str):
    if "=" not in item:
        raise ValidationError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested = value
    for part in reversed(key.strip().split(".")):
        nested = {part: nested}
    return nested


def _deep_update(a: dict, b: dict) -> dict:
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(a.get(k), dict):
            _deep_update(a[k], v)
        else:
            a[k] = v
    return a


def _get(cfg: dict, dotted: str):
    cur = cfg
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def resolve_config(name: str, config_path, sets=(), flags=None) -> dict:
    """Defaults, then the config file, then ``--set`` items, then dedicated flags."""
    over = {}
    if config_path is not None:
        p = Path(config_path)
        if not p.exists():
            raise ValidationError(f"config file not found: {p}")
        try:
            loaded = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {p} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ValidationError(f"config file {p} must hold a JSON object")
        over = loaded
    for item in sets:
        _deep_update(over, _parse_set(item))
    for k, v in (flags or {}).items():
        if v is not None:
            over[k] = v
    cfg = _merge(DEFAULTS[name], over)
    for key in _PATH_KEYS:
        v = _get(cfg, key)
        if v is not None and not Path(v).exists():
            raise ValidationError(f"config key '{key}': file not found: {v}")
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise ValidationError(f"config key '{k}' is required")


# ----------------------------------------------------------------- utilities


def _load_pair(cfg, label_column=None):
    _require(cfg, "d", "d_prime")
    d = load_csv(cfg["d"], label_column, name=cfg.get("d_name") or "D")
    dp = load_csv(cfg["d_prime"], label_column, name=cfg.get("d_prime_name") or "D′")
    if d.feature_names != dp.feature_names:
        raise SchemaMismatch(f"column mismatch: {list(d.feature_names)} vs {list(dp.feature_names)}")
    return d, dp


def _importance(cfg_imp: dict, seed: int) -> RashomonImportance:
    params = dict(cfg_imp)
    params["seed"] = seed
    return RashomonImportance(**params)


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    return None if v is None or not np.isfinite(v) else float(v)


# ------------------------------------------------------------------ commands


def cmd_prototypes(cfg: dict, out: Path) -> dict:
    d, dp = _load_pair(cfg, cfg["label_column"])
    seed = cfg["seed"]
    names = d.feature_names
    stats = fit_normalizer(d) if cfg["normalize"] else None
    dn = apply_normalizer(stats, d) if stats else d
    dpn = apply_normalizer(stats, dp) if stats else dp

    method = cfg["method"]
    if method == "kmeans":
        protos = kmeans_prototypes(dn, cfg["k"], seed=seed)
    elif method == "percentile_grid":
        if not cfg["grid_columns"]:
            raise ValidationError("method 'percentile_grid' needs config key 'grid_columns'")
        protos = percentile_grid_prototypes(dn, cfg["grid_columns"], cfg["grid_percentiles"], cfg["label_tree_depth"])
    elif method == "manual":
        _require(cfg, "prototypes_file")
        records = json.loads(Path(cfg["prototypes_file"]).read_text(encoding="utf-8"))
        raw = prototypes_from_dicts(records)
        for p in raw:
            if len(p.features) != len(names):
                raise ValidationError(f"prototype {p.id} has {len(p.features)} features, data has {len(names)}")
        if stats:
            P = apply_normalizer(stats, TabularDataset(np.vstack([p.features for p in raw]), names)).X
            protos = [Prototype(p.id, P[i], p.label, p.provenance) for i, p in enumerate(raw)]
        else:
            protos = raw
    else:
        raise ValidationError(f"unknown prototype method {method!r}; use kmeans, percentile_grid or manual")

    nb = neighbourhood_stats(protos, dn, dpn, cfg["metric"], cfg["label_aware"])
    nb.write_plot_csv(out / "neighbourhood.csv")

    P = np.vstack([p.features for p in protos])
    P_orig = invert_normalizer(stats, TabularDataset(P, names)).X if stats else P
    proto_rows = []
    for p, orig in zip(protos, P_orig):
        rec = Prototype(p.id, orig, p.label, p.provenance).to_dict(names)
        rec["normalized_features"] = {n: float(v) for n, v in zip(names, p.features)}
        proto_rows.append(rec)
    _write_rows(out / "prototypes.csv", ["id", "label", "provenance", *names],
                [[r["id"], "" if r["label"] is None else r["label"], r["provenance"],
                  *(repr(r["features"][n]) for n in names)] for r in proto_rows])

    partial = []
    pc = cfg["partial"]
    if pc["enabled"]:
        K = pc["K"] if pc["K"] is not None else min(3, len(names))
        provider = None
        if pc["c1"] > 0 or pc["c2"] > 0:
            provider = fit_lifim_provider(dn, dpn, _importance(cfg["importance"], seed),
                                          cfg["max_thresholds_per_column"], seed)
        pps = partial_prototypes(protos, dn, dpn, K, pc["c1"], pc["c2"], pc["c3"],
                                 {"percentile": pc["delta_percentile"]}, provider, cfg["metric"],
                                 cfg["label_aware"], pc["delta_reference"])
        partial = [pp.to_dict(names) for pp in pps]
        _write_rows(out / "partial_prototypes.csv", ["parent_id", "position", "feature", "value"],
                    [[pp["parent_id"], pos, f, repr(v)] for pp in partial
                     for pos, (f, v) in enumerate(zip(pp["features"], pp["values"]))])

    emb = _embedding(cfg["embedding"], dn, dpn, P, out, seed)
    artifacts = ["neighbourhood.csv", "prototypes.csv"] + (["partial_prototypes.csv"] if partial else [])
    if emb["source"] != "none":
        artifacts.append("embedding.csv")
    results = {
        "prototypes": proto_rows,
        "neighbourhood": nb.to_dict(),
        "partial_prototypes": partial,
        "normalization": stats.to_dict() if stats else None,
        "embedding": emb,
    }
    return make_report("prototypes", cfg, results, {"seed": seed}, artifacts)


def _embedding(ecfg, dn, dpn, P, out: Path, seed: int) -> dict:
    source = ecfg["source"]
    if source == "none":
        return {"source": "none"}
    if source == "file":
        _require(ecfg, "file")
        with Path(ecfg["file"]).open(newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
        if [h.strip() for h in header] != ["dataset", "row_id", "x", "y"]:
            raise ValidationError("embedding file must have the header dataset,row_id,x,y")
        shutil.copyfile(ecfg["file"], out / "embedding.csv")
        return {"source": "file", "note": "Coordinates passed through from a precomputed embedding."}
    if source == "pca":
        from sklearn.decomposition import PCA

        pca = PCA(n_components=min(2, dn.n_features), random_state=seed).fit(np.vstack([dn.X, dpn.X]))
        rows = []
        for tag, X in (("d", dn.X), ("d_prime", dpn.X), ("prototype", P)):
            Z = pca.transform(X)
            if Z.shape[1] == 1:
                Z = np.column_stack([Z, np.zeros(len(Z))])
            rows += [[tag, i, repr(float(a)), repr(float(b))] for i, (a, b) in enumerate(Z)]
        _write_rows(out / "embedding.csv", ["dataset", "row_id", "x", "y"], rows)
        return {
            "source": "pca",
            "note": "Linear PCA projection used as a fallback; it is not a structure-preserving embedding.",
            "explained_variance_ratio": [float(v) for v in pca.explained_variance_ratio_],
        }
    raise ValidationError(f"unknown embedding source {source!r}; use none, pca or file")


def _summary_table(datasets) -> list:
    rows = []
    for tag, data in datasets:
        n = data.n_rows
        feats = {}
        for j, name in enumerate(data.feature_names):
            col = data.X[:, j]
            se = float(col.std(ddof=1) / np.sqrt(n)) if n > 1 else None
            feats[name] = {"mean": float(col.mean()), "standard_error": se}
        y = data.y.astype(int)
        counts = {str(c): int((y == c).sum()) for c in (0, 1)}
        rows.append({"dataset": tag, "n": n, "features": feats, "class_counts": counts})
    return rows


def cmd_influence(cfg: dict, out: Path) -> dict:
    if cfg["label_column"] is None:
        raise ValidationError("config key 'label_column' is required: the influence pipeline needs task labels")
    d, dp = _load_pair(cfg, cfg["label_column"])
    K = cfg["K"]
    if not isinstance(K, int) or K < 1 or K > dp.n_rows:
        raise ValidationError(f"K={K} must lie in [1, {dp.n_rows}] (the rows of {dp.name})")
    cw = cfg["class_weight"]
    if isinstance(cw, list):
        cw = tuple(float(v) for v in cw)
    seed = cfg["seed"]
    ex = InfluentialExampleExplainer(_importance(cfg["importance"], seed), cfg["l2"], cw,
                                     cfg["max_thresholds_per_column"], seed)
    rep = ex.fit(d, dp).explain(K)
    results = rep.to_dict()
    rep.write_csv(out / "scores.csv")
    names = list(rep.feature_names)
    vectors = [ImportanceVector(rep.gifim_d, "gifim", "d", tuple(names)),
               ImportanceVector(rep.gifim_dp, "gifim", "d_prime", tuple(names))]
    if rep.gifim_dp_minus_s is not None:
        vectors.append(ImportanceVector(rep.gifim_dp_minus_s, "gifim", "d_prime_minus_selected", tuple(names)))
    write_importance_csv(vectors, out / "gifim.csv")

    summary = _summary_table([(d.name, d), (dp.name, dp), ("influential", dp.subset(rep.selected_ids))])
    results["summary_table"] = summary
    _write_rows(out / "summary.csv", ["dataset", "feature", "mean", "standard_error", "class_counts"],
                [[s["dataset"], f, repr(v["mean"]), "" if v["standard_error"] is None else repr(v["standard_error"]),
                  ";".join(f"{k}={c}" for k, c in sorted(s["class_counts"].items()))]
                 for s in summary for f, v in s["features"].items()])
    artifacts = ["scores.csv", "gifim.csv", "summary.csv"]
    if cfg["alignment_fractions"]:
        curve = ex.alignment_curve(cfg["alignment_fractions"])
        results["alignment_curve"] = [{"fraction": float(f), "alignment": float(a)}
                                      for f, a in zip(cfg["alignment_fractions"], curve)]
        _write_rows(out / "alignment_curve.csv", ["fraction", "alignment"],
                    [[repr(float(f)), repr(float(a))] for f, a in zip(cfg["alignment_fractions"], curve)])
        artifacts.append("alignment_curve.csv")
    return make_report("influence", cfg, results, {"seed": seed}, artifacts, rep.notes)


def _provider(pcfg: dict, fixture_key: str):
    kind = pcfg["type"]
    if kind == "mock":
        if pcfg["echo"]:
            return MockProvider(echo=True)
        path = pcfg.get(fixture_key) or pcfg.get("fixture_d_prime")
        if path is None:
            raise ValidationError(f"mock provider needs 'provider.{fixture_key}' (or set echo)")
        return MockProvider.from_file(path)
    if kind == "chat":
        if not pcfg["endpoint"] or not pcfg["model"]:
            raise ValidationError("chat provider needs 'endpoint' and 'model'")
        return ChatCompletionProvider(pcfg["endpoint"], pcfg["model"], pcfg["api_key_env"], pcfg["timeout"],
                                      pcfg["max_retries"], pcfg["backoff"])
    raise ValidationError(f"unknown provider type {kind!r}; use mock or chat")


def _describe(p):
    return p.describe() if hasattr(p, "describe") else {"provider": type(p).__name__}


def cmd_attributes(cfg: dict, out: Path, workers: int = 1) -> dict:
    _require(cfg, "d", "d_prime")
    if cfg["attributes"]:
        attrs = list(cfg["attributes"])
    elif cfg["attributes_file"]:
        attrs = [ln.strip() for ln in Path(cfg["attributes_file"]).read_text(encoding="utf-8").splitlines() if ln.strip()]
    else:
        raise ValidationError("config needs 'attributes' (a list) or 'attributes_file'")
    cd = load_corpus(cfg["d"], cfg.get("d_name") or "D")
    cdp = load_corpus(cfg["d_prime"], cfg.get("d_prime_name") or "D′")
    pcfg = cfg["provider"]
    p_d = _provider(pcfg, "fixture_d")
    p_dp = _provider(pcfg, "fixture_d_prime")
    seed = cfg["seed"]
    artifacts = ["attributes.csv", "audit.jsonl"]
    with AuditLog(out / "audit.jsonl", {"d": _describe(p_d), "d_prime": _describe(p_dp)}) as audit:
        t_d = attribute_percentages(cd, attrs, p_d, audit, workers)
        t_dp = attribute_percentages(cdp, attrs, p_dp, audit, workers)
        tables = [t_d, t_dp]
        seps = [("d", "d_prime", t_d, t_dp)]
        if cfg["humanize"]:
            hcfg = cfg["humanize_provider"]
            rewritten = humanize_corpus(cdp, _provider(hcfg, "fixture_d_prime"), audit, workers)
            write_corpus(rewritten, out / "humanized.csv")
            artifacts.append("humanized.csv")
            t_h = attribute_percentages(rewritten, attrs, _provider(pcfg, "fixture_humanized"), audit, workers)
            tables.append(t_h)
            seps.append(("d", "humanized", t_d, t_h))
    write_attribute_csv(tables, out / "attributes.csv")
    separability = []
    for a, b, ta, tb in seps:
        r = separability_score(ta, tb, seed=seed)
        separability.append({"corpus_d": ta.corpus, "corpus_d_prime": tb.corpus, **r.to_dict()})
    results = {
        "tables": [t.to_dict() for t in tables],
        "shares": [{"corpus": t.corpus, **{k: [float(x) for x in v] for k, v in t.shares().items()}} for t in tables],
        "separability": separability,
        "provider": {"d": _describe(p_d), "d_prime": _describe(p_dp)},
    }
    if cfg["humanize"]:
        results["humanized_documents"] = len(tables[2].doc_ids) + len(tables[2].failed_ids)
    return make_report("attributes", cfg, results, {"seed": seed}, artifacts)


def cmd_validate_influence(cfg: dict, out: Path) -> dict:
    v = validate_influence(cfg["n"], cfg["m"], cfg["l2"], cfg["seed"], cfg["n_test"], cfg["degenerate"])
    v.write_csv(out / "influence_validation.csv")
    return make_report("eval", cfg, v.to_dict(), {"seed": cfg["seed"]}, ["influence_validation.csv"], v.notes,
                       subcommand="validate-influence")


def cmd_gen_mixture(cfg: dict, out: Path) -> dict:
    X, Y, truth = mixture_case(cfg["case"], cfg["seed"], cfg["std"], cfg["k"])
    write_csv(X, out / "X.csv")
    write_csv(Y, out / "Y.csv")
    truth.save(out / "groundtruth.json")
    protos = [Prototype(i, c, None, "groundtruth") for i, c in enumerate(truth.centers_x)]
    nb = neighbourhood_stats(protos, X, Y)
    results = {
        "case": cfg["case"],
        "n_x": X.n_rows,
        "n_y": Y.n_rows,
        "groundtruth": truth.to_dict(),
        "clusters": list(range(len(protos))),
        "nspd": [float(v) for v in nb.nspd],
        "nsdd": [_num(v) for v in nb.nsdd],
        "prototype_source": "ground-truth centres of X",
    }
    return make_report("eval", cfg, results, {"seed": cfg["seed"]}, ["X.csv", "Y.csv", "groundtruth.json"],
                       subcommand="gen-mixture")


def _context(cfg: dict, with_importance: bool) -> PrototypeContext:
    imp = _importance(cfg["importance"], cfg["seed"]) if "importance" in cfg else None
    if cfg["d"] is None and cfg["d_prime"] is None:
        return synthetic_context(cfg["seed"], cfg["n"], cfg["m"], cfg["k"], with_importance, imp)
    d, dp = _load_pair(cfg, cfg["label_column"])
    return build_prototype_context(d, dp, cfg["k"], cfg["seed"], imp, with_importance)


def cmd_faithfulness(cfg: dict, out: Path) -> dict:
    ctx = _context(cfg, with_importance=False)
    records, summary = [], []
    delta = {"percentile": cfg["delta_percentile"]}
    for sel in cfg["selection"]:
        res = faithfulness_sweep(ctx, cfg["K_values"], sel, cfg["seeds"], delta, cfg["n_trials"])
        records += res.records
        for metric in ("rta", "gpa", "neighbourhood_variance"):
            for K, v in res.mean_by("K", metric).items():
                row = next((s for s in summary if s["K"] == K and s["selection"] == sel), None)
                if row is None:
                    row = {"K": K, "selection": sel}
                    summary.append(row)
                row[metric] = v
    summary.sort(key=lambda s: (s["selection"], -s["K"]))
    SweepResult("faithfulness", records).write_csv(out / "faithfulness.csv")
    results = {"selection": cfg["selection"], "summary": summary, "n_records": len(records)}
    return make_report("eval", cfg, results, {"seed": cfg["seed"], "seeds": list(cfg["seeds"])},
                       ["faithfulness.csv"], subcommand="faithfulness")


def cmd_tradeoff(cfg: dict, out: Path) -> dict:
    ctx = _context(cfg, with_importance=True)
    res = tradeoff_sweep(ctx, cfg["n_samples"], (cfg["c_low"], cfg["c_high"]), cfg["K_set"],
                         cfg["delta_percentile"], cfg["seed"])
    res.write_csv(out / "tradeoff.csv")
    corr = {str(k): v for k, v in tradeoff_correlation(res).items()}
    results = {"correlation": corr, "n_records": len(res.records)}
    return make_report("eval", cfg, results, {"seed": cfg["seed"]}, ["tradeoff.csv"], subcommand="tradeoff")


# ---------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; here usage errors are validation errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted path, JSON value); repeatable")
    p.add_argument("--seed", type=int, help="override the seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftscope", description="Explain the differences between two datasets.")
    parser.add_argument("--version", action="version", version=f"driftscope {__version__}")
    parser.add_argument("--workers", type=int, default=1, help="concurrent provider requests")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("prototypes", "prototype neighbourhood comparison"),
                        ("influence", "influential examples behind an importance shift"),
                        ("attributes", "language-model attribute comparison of two text corpora")):
        _common(sub.add_parser(name, help=help_))
    ev = sub.add_parser("eval", help="evaluation sweeps and synthetic data")
    evsub = ev.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    _common(evsub.add_parser("validate-influence", help="influence scores against retraining"))
    gm = evsub.add_parser("gen-mixture", help="paired circle mixtures with ground truth")
    _common(gm)
    gm.add_argument("--case", type=int, choices=(1, 2))
    _common(evsub.add_parser("faithfulness", help="partial-prototype structure preservation"))
    _common(evsub.add_parser("tradeoff", help="penalty-weight tradeoff sweep"))
    return parser


_COMMANDS = {
    "prototypes": cmd_prototypes,
    "influence": cmd_influence,
    "attributes": cmd_attributes,
    "validate-influence": cmd_validate_influence,
    "gen-mixture": cmd_gen_mixture,
    "faithfulness": cmd_faithfulness,
    "tradeoff": cmd_tradeoff,
}


def run(args) -> dict:
    name = args.eval_command if args.command == "eval" else args.command
    flags = {"seed": args.seed}
    if name == "gen-mixture":
        flags["case"] = args.case
    cfg = resolve_config(name, args.config, args.sets, flags)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if name == "attributes":
        report = cmd_attributes(cfg, out, args.workers)
    else:
        report = _COMMANDS[name](cfg, out)
    write_report(report, out)
    return report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run(args)
    except ValidationError as exc:
        print(f"driftscope: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ProviderError as exc:
        extra = f" after {exc.attempts} attempts" if exc.attempts else ""
        if exc.partial is not None and hasattr(exc.partial, "coverage"):
            extra += f"; coverage {exc.partial.coverage:.3f}"
        print(f"driftscope: provider failure{extra}: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ComputationError, DriftscopeError) as exc:
        print(f"driftscope: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"driftscope: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
