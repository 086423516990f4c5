"""CSV / JSON writers and readers for results and per-trial tables.

Floats are written at 6 significant digits in both formats so a CSV and a
JSON file of the same run carry identical numbers. NaN is written as
``nan`` in CSV and ``null`` in JSON.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

from .engine import TrialResult
from .montecarlo import OperatingCharacteristics
from .population import CovariateSpec

FORMATS = ("csv", "json")


def round6(x: float) -> float:
    return x if math.isnan(x) or math.isinf(x) else float(f"{x:.6g}")


def _cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def oc_columns(label: str) -> list[str]:
    return [label] + OperatingCharacteristics.field_names()


def oc_csv(rows: Sequence[tuple[object, OperatingCharacteristics]], label: str = "label") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(oc_columns(label))
    for name, oc in rows:
        w.writerow([_cell(name)] + [_cell(getattr(oc, f)) for f in OperatingCharacteristics.field_names()])
    return buf.getvalue()


def oc_json(rows: Sequence[tuple[object, OperatingCharacteristics]], label: str = "label") -> str:
    records = []
    for name, oc in rows:
        rec = {label: name}
        for f in OperatingCharacteristics.field_names():
            v = getattr(oc, f)
            if isinstance(v, float):
                v = None if math.isnan(v) else round6(v)
            rec[f] = v
        records.append(rec)
    return json.dumps(records, indent=2) + "\n"


def _oc_from_mapping(values: dict) -> OperatingCharacteristics:
    kwargs = {}
    for f in OperatingCharacteristics.field_names():
        v = values[f]
        if f == "replications":
            kwargs[f] = int(v)
        else:
            kwargs[f] = math.nan if v is None or v == "nan" else float(v)
    return OperatingCharacteristics(**kwargs)


def read_oc_csv(text: str) -> list[tuple[str, OperatingCharacteristics]]:
    reader = csv.DictReader(io.StringIO(text))
    label = reader.fieldnames[0]
    return [(row[label], _oc_from_mapping(row)) for row in reader]


def read_oc_json(text: str) -> list[tuple[object, OperatingCharacteristics]]:
    records = json.loads(text)
    out = []
    for rec in records:
        label = next(iter(rec))
        out.append((rec[label], _oc_from_mapping(rec)))
    return out


def emit_report(rows: Sequence[tuple[object, OperatingCharacteristics]], out_dir: str | Path,
                fmt: str, stem: str, label: str = "label") -> Path:
    """Write ``rows`` to ``out_dir/stem.{csv,json}`` and return the path.

    Raises ``OSError`` when the directory cannot be created or written.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.{fmt}"
    path.write_text(oc_csv(rows, label) if fmt == "csv" else oc_json(rows, label))
    return path


def stage1_csv(result: TrialResult, covariates: Sequence[CovariateSpec]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *[c.name for c in covariates], "pre", "post", "improvement", "self_report", "responder"])
    for r in result.stage1.records:
        w.writerow([r.id, *[_cell(float(v)) for v in r.covariates], _cell(r.pre), _cell(r.post),
                    _cell(r.improvement), _cell(r.self_report), _cell(r.responder)])
    return buf.getvalue()


def stage2_csv(result: TrialResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", "period", "arm", "outcome", "urn_E", "urn_C"])
    if result.stage2 is not None:
        for o in result.stage2.observations:
            w.writerow([o.patient_id, o.period, o.arm.value, _cell(o.outcome),
                        "" if o.urn_e is None else o.urn_e, "" if o.urn_c is None else o.urn_c])
    return buf.getvalue()


def analysis_json(result: TrialResult) -> str:
    rec = {"method": None, "point": None, "se": None, "p": None, "n_used": None,
           "interim": None, "decision": result.decision.value,
           "reason": result.stop_reason.value if result.stop_reason else None}
    if result.effect is not None:
        e = result.effect
        rec.update(method=e.method, point=round6(e.point),
                   se=None if e.standard_error is None else round6(e.standard_error),
                   p=round6(e.p_value), n_used=e.n_used)
    s2 = result.stage2
    if s2 is not None and (s2.interim_decision is not None or s2.interim_skipped):
        est = s2.interim_estimate
        rec["interim"] = {"decision": s2.interim_decision.value if s2.interim_decision else "Skipped",
                          "p": round6(est.p_value) if est else None,
                          "point": round6(est.point) if est else None}
    return json.dumps(rec, indent=2) + "\n"


def dump_trial(result: TrialResult, covariates: Sequence[CovariateSpec], out_dir: str | Path) -> Path:
    """Stage tables, analysis summary and JSON-lines event log of one trial."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stage1.csv").write_text(stage1_csv(result, covariates))
    (out / "stage2.csv").write_text(stage2_csv(result))
    (out / "analysis.json").write_text(analysis_json(result))
    (out / "events.jsonl").write_text(result.events.to_jsonl())
    return out
