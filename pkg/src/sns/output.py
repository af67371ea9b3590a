"""Serialization of run artifacts: CSV tables, JSON sidecars, manifests.

All CSV output uses '.' as the decimal separator, '\\n' line endings, and
17-significant-digit rendering so that identical runs are byte-identical and
values round-trip exactly.  JSON is written with sorted keys; non-finite
numbers become null.
"""

from __future__ import annotations

import json
import math
import os
from typing import Sequence

from .experiments import ErrorTable, HorizonRow
from .monitors import MONITOR_COLUMNS, ExpMomentSeries, MonitorRecord

__all__ = [
    "fmt17",
    "write_monitors_csv",
    "write_errors_csv",
    "write_fit_json",
    "write_horizon_csv",
    "write_expmoment_csv",
    "write_json",
]


def fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_monitors_csv(path: str, records: Sequence[MonitorRecord]) -> None:
    lines = [",".join(MONITOR_COLUMNS)]
    for rec in records:
        lines.append(
            ",".join(
                fmt17(v)
                for v in (rec.t, rec.charge, rec.energy_H, rec.h1_norm, rec.h2_norm, rec.exp_arg)
            )
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_errors_csv(path: str, table: ErrorTable) -> None:
    lines = ["tau,error,ci_half_width,used_in_fit"]
    for row in table.rows:
        lines.append(
            f"{fmt17(row.tau)},{fmt17(row.error)},{fmt17(row.half_width)},"
            f"{'true' if row.used_in_fit else 'false'}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_fit_json(path: str, table: ErrorTable, config_hash: str, master_seed: int) -> None:
    write_json(
        path,
        {
            "slope": table.fitted_slope,
            "intercept": table.fitted_intercept,
            "sample_count": table.sample_count,
            "reference_tau": table.reference_tau,
            "config_hash": config_hash,
            "master_seed": master_seed,
        },
    )


def write_horizon_csv(path: str, rows: Sequence[HorizonRow]) -> None:
    lines = ["T,error,ci_half_width"]
    for row in rows:
        lines.append(f"{fmt17(row.T)},{fmt17(row.error)},{fmt17(row.half_width)}")
    _write_text(path, "\n".join(lines) + "\n")


def write_expmoment_csv(path: str, series: ExpMomentSeries) -> None:
    lines = ["t,mean_exp,running_max"]
    for t, m, rm in zip(series.t, series.mean_exp, series.running_max):
        lines.append(f"{fmt17(t)},{fmt17(m)},{fmt17(rm)}")
    _write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: str, payload: dict) -> None:
    _write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
