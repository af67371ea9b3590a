"""Figure builders over the solver's CSV/JSON artifacts.

Input schemas (produced by the sns command line):
  errors.csv     tau,error,ci_half_width,used_in_fit
  fit.json       slope, intercept, sample_count, reference_tau, ...
  monitors.csv   t,charge,energy_H,h1_norm,h2_norm,exp_arg
  verdict.json   passed, worst_ratio, margin_a, tolerance, ...
  expmoment.csv  t,mean_exp,running_max

Rendering is a pure function of the input files: re-rendering reproduces
the same figure (modulo image-library metadata).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("strong", "weak", "decay", "exp-moment")


class InputError(ValueError):
    """Missing or malformed input artifact."""


@dataclass(frozen=True)
class FigureJob:
    kind: str
    input_dir: str
    output_path: str


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise InputError(f"missing input file: {path}")
    return path


def _read_csv(path: str, expected_header: list[str]) -> dict[str, np.ndarray]:
    with open(_require(path), newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if header != expected_header:
            raise InputError(
                f"{path}: header {header} does not match expected {expected_header}"
            )
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    columns: dict[str, np.ndarray] = {}
    for idx, name in enumerate(header):
        raw = [row[idx] for row in rows]
        if name == "used_in_fit":
            columns[name] = np.array([v == "true" for v in raw])
        else:
            try:
                columns[name] = np.array([float(v) for v in raw])
            except ValueError as exc:
                raise InputError(f"{path}: non-numeric entry in column {name}: {exc}") from None
    return columns


def _read_json(path: str) -> dict:
    with open(_require(path)) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None


def _convergence_figure(job: FigureJob, order_label: str) -> plt.Figure:
    errors = _read_csv(
        os.path.join(job.input_dir, "errors.csv"),
        ["tau", "error", "ci_half_width", "used_in_fit"],
    )
    fit = _read_json(os.path.join(job.input_dir, "fit.json"))
    tau = errors["tau"]
    err = errors["error"]
    used = errors["used_in_fit"]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.errorbar(
        tau[used], err[used], yerr=errors["ci_half_width"][used],
        fmt="o", capsize=3, label="measured error",
    )
    if np.any(~used):
        ax.plot(tau[~used], err[~used], "x", color="gray", label="noise-dominated (excluded)")

    slope = fit.get("slope")
    guide_tau = np.array([tau.min(), tau.max()])
    if slope is not None and fit.get("intercept") is not None:
        fitted = np.exp(fit["intercept"]) * guide_tau ** slope
        ax.plot(guide_tau, fitted, "-", label=f"fitted slope {slope:.3f}")
    # dashed reference-order guides anchored at the coarsest measured point
    anchor_t, anchor_e = tau[0], err[0]
    for order, style in ((0.5, ":"), (1.0, "--")):
        ax.plot(
            guide_tau, anchor_e * (guide_tau / anchor_t) ** order,
            style, color="gray", linewidth=1,
            label=f"order {order:g} guide",
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("time step")
    ax.set_ylabel(f"{order_label} error")
    ax.set_title(f"{order_label} convergence ({fit.get('sample_count', '?')} samples)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def _decay_figure(job: FigureJob) -> plt.Figure:
    monitors = _read_csv(
        os.path.join(job.input_dir, "monitors.csv"),
        ["t", "charge", "energy_H", "h1_norm", "h2_norm", "exp_arg"],
    )
    verdict = _read_json(os.path.join(job.input_dir, "verdict.json"))
    t = monitors["t"]
    q = monitors["charge"]
    a = verdict.get("margin_a", 0.0)
    envelope = np.exp(-2.0 * a * t) * q[0]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(t, q, label="charge")
    ax.plot(t, envelope, "--", label=f"envelope exp(-2at) q0, a={a:g}")
    status = "passed" if verdict.get("passed") else "FAILED"
    ax.set_title(f"pathwise charge decay ({status}, worst ratio {verdict.get('worst_ratio', float('nan')):.6f})")
    ax.set_xlabel("t")
    ax.set_ylabel("charge")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def _exp_moment_figure(job: FigureJob) -> plt.Figure:
    series = _read_csv(
        os.path.join(job.input_dir, "expmoment.csv"),
        ["t", "mean_exp", "running_max"],
    )
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(series["t"], series["mean_exp"], label="empirical mean of exp(exp_arg)")
    ax.plot(series["t"], series["running_max"], "--", label="running max")
    ax.set_xlabel("t")
    ax.set_ylabel("exponential moment")
    ax.set_title("exponential-moment diagnostic")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def build_figure(job: FigureJob) -> plt.Figure:
    """Pure figure construction; raises InputError on schema violations."""
    if job.kind == "strong":
        return _convergence_figure(job, "strong")
    if job.kind == "weak":
        return _convergence_figure(job, "weak")
    if job.kind == "decay":
        return _decay_figure(job)
    if job.kind == "exp-moment":
        return _exp_moment_figure(job)
    raise InputError(f"unknown figure kind {job.kind!r}; choose from {FIGURE_KINDS}")


def render(job: FigureJob) -> None:
    """Build and write the figure; output format follows the file suffix."""
    fig = build_figure(job)
    out_dir = os.path.dirname(job.output_path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    # strip volatile metadata so re-rendering is reproducible
    metadata = {"Date": None} if job.output_path.endswith(".svg") else None
    fig.savefig(job.output_path, dpi=150, metadata=metadata)
    plt.close(fig)
