"""Run directories: results.json, results.csv, schema.json and plots/, and their comparison."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from . import __version__
from .config import ExperimentConfig

FLOAT_FORMAT = ".10g"


class CompareError(ValueError):
    """The two runs cannot be compared (kind or shape mismatch, missing files)."""


def _cell(value, typ: str) -> str:
    if typ == "bool":
        return "true" if value else "false"
    if typ == "int":
        return "nan" if isinstance(value, float) and math.isnan(value) else str(int(value))
    if typ == "float":
        value = float(value)
        return "nan" if math.isnan(value) else format(value, FLOAT_FORMAT)
    return str(value)


def csv_text(rows: list[dict], columns) -> str:
    names = [c[0] for c in columns]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(names)
    for row in rows:
        extra = set(row) - set(names)
        if extra:
            raise ValueError(f"undeclared CSV columns: {sorted(extra)}")
        wr.writerow([_cell(row.get(name, float("nan")), typ) for name, typ, _ in columns])
    return buf.getvalue()


def schema(kind: str, columns, key_columns) -> dict:
    return {
        "kind": kind,
        "format": {"delimiter": ",", "float": FLOAT_FORMAT, "bool": ["true", "false"], "missing": "nan"},
        "key_columns": list(key_columns),
        "columns": [{"name": n, "type": t, "description": d} for n, t, d in columns],
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_run(outdir: Path, cfg: ExperimentConfig, outcome, columns, key_columns) -> dict:
    """Write every artifact of one run and return the results document."""
    from .plotting import render

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "results.csv").write_text(csv_text(outcome.rows, columns))
    (outdir / "schema.json").write_text(json.dumps(schema(cfg.kind, columns, key_columns), indent=2) + "\n")
    plots = render(cfg.kind, outcome.plot_data, outdir / "plots")
    doc = {
        "kind": cfg.kind,
        "version": __version__,
        "config": {"domain": cfg.domain, "h": cfg.h, "sweep": cfg.sweep, "seed": cfg.seed},
        "summary": outcome.summary,
        "rows": outcome.rows,
        "key_columns": list(key_columns),
        "errors": outcome.errors,
        "plots": sorted(plots),
        "status": "ok" if not outcome.errors else "partial",
    }
    (outdir / "results.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return doc


def _load(run_dir) -> dict:
    path = Path(run_dir) / "results.json"
    try:
        return json.loads(path.read_text())
    except OSError:
        raise CompareError(f"{path}: no results.json") from None
    except json.JSONDecodeError as exc:
        raise CompareError(f"{path}: unreadable ({exc})") from None


def _num(v):
    if isinstance(v, bool) or v is None:
        return None
    if isinstance(v, (int, float)):
        return float(v)
    if v in ("nan", "inf", "-inf"):
        return float(v)
    return None


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if math.isnan(a) or math.isnan(b):
        return math.nan
    return abs(a - b) / max(abs(a), abs(b))


def compare_runs(run_a, run_b, tolerance: float = 1e-9) -> dict:
    """Per-metric relative differences between two runs of the same kind and shape.

    Rows are matched in order and must agree on the key columns.  For the
    summary metrics the ratio a/b is reported too, which is what a
    refinement study reads off (e.g. deviations at h against h/2).
    """
    a, b = _load(run_a), _load(run_b)
    if a["kind"] != b["kind"]:
        raise CompareError(f"kind mismatch: {a['kind']} vs {b['kind']}")
    if len(a["rows"]) != len(b["rows"]):
        raise CompareError(f"shape mismatch: {len(a['rows'])} vs {len(b['rows'])} rows")
    keys = a.get("key_columns", [])
    diffs, flags = [], []
    for i, (ra, rb) in enumerate(zip(a["rows"], b["rows"])):
        for k in keys:
            if ra.get(k) != rb.get(k):
                raise CompareError(f"shape mismatch: row {i} key {k} differs ({ra.get(k)} vs {rb.get(k)})")
        for col in sorted(ra):
            if col in keys:
                continue
            va, vb = _num(ra.get(col)), _num(rb.get(col))
            if va is None or vb is None:
                if ra.get(col) != rb.get(col):
                    flags.append({"row": i, "metric": col, "a": ra.get(col), "b": rb.get(col)})
                continue
            d = _rel(va, vb)
            diffs.append({"row": i, "metric": col, "a": va, "b": vb, "rel_diff": d})
            if not (d <= tolerance):
                flags.append({"row": i, "metric": col, "a": va, "b": vb, "rel_diff": d})
    summary = []
    for k in sorted(set(a.get("summary", {})) & set(b.get("summary", {}))):
        va, vb = _num(a["summary"][k]), _num(b["summary"][k])
        if va is None or vb is None:
            continue
        summary.append({"metric": k, "a": va, "b": vb, "rel_diff": _rel(va, vb),
                        "ratio": va / vb if vb != 0 else math.inf})
    return {"kind": a["kind"], "tolerance": tolerance, "rows": len(a["rows"]), "diffs": diffs,
            "summary": summary, "flags": flags}
