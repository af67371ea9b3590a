"""Flat key-value run configuration: parsing, validation, and builders.

The format is diff-friendly: one ``section.key = value`` per line, ``#``
comments, no nesting.  Unknown keys are errors, every omitted key gets the
documented default, and the canonical rendering of the fully resolved
mapping (plus the damping table bytes, when one is referenced) feeds the
config hash recorded in run manifests.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .experiments import FUNCTIONALS, ProblemSetup
from .grid import GridSpec, StateVector, make_grid, make_state
from .noise import DampingProfile, NoiseModel, build_noise, damping_margin

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "validate_for_command",
    "build_problem",
    "render_value",
]

COMMANDS = (
    "simulate",
    "decay-check",
    "strong-order",
    "weak-order",
    "horizon",
    "exp-moment",
)

DAMPING_KINDS = ("constant_plus_halfFQ", "conservative", "custom")
INIT_KINDS = ("gaussian_bump", "plane_wave", "zero")

# key -> (type tag, default); None means "no default, presence depends on
# the subcommand".  Type tags: int, float, str, float_list, tol (float or
# the literal ``auto``).
KEY_TABLE: dict[str, tuple[str, object]] = {
    "grid.L": ("float", 16.0),
    "grid.N": ("int", 128),
    "noise.K": ("int", 8),
    "noise.amplitude": ("float", 1.0),
    "noise.r": ("float", 3.0),
    "damping.kind": ("str", "constant_plus_halfFQ"),
    "damping.a0": ("float", 0.5),
    "damping.file": ("str", None),
    "scheme.tau": ("float", 1.0 / 256.0),
    "scheme.T": ("float", None),
    "scheme.M": ("int", None),
    "scheme.lambda": ("int", -1),
    "scheme.fp_tol": ("tol", None),
    "scheme.fp_max_iters": ("int", 50),
    "init.kind": ("str", "gaussian_bump"),
    "init.amplitude": ("float", 1.0),
    "init.width": ("float", 1.0),
    "init.center": ("float", 0.0),
    "init.mode_index": ("int", 1),
    "experiment.tau_list": ("float_list", None),
    "experiment.tau_ref": ("float", None),
    "experiment.samples": ("int", 100),
    "experiment.phi": ("str", "exp_neg_charge"),
    "experiment.beta": ("float", 1.0),
    "experiment.record_every": ("int", 1),
    "experiment.horizons": ("float_list", None),
    "experiment.slope_min": ("float", None),
    "experiment.slope_max": ("float", None),
    "experiment.horizon_ratio_max": ("float", 2.0),
    "experiment.expmom_growth_max": ("float", 1.10),
    "experiment.decay_tolerance": ("float", None),
    "seed": ("int", 12345),
    "output.dir": ("str", "out"),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


def render_value(value) -> str:
    """Canonical text form used for hashing and the manifest echo."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (tuple, list)):
        return ",".join(render_value(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration with derived quantities filled in."""

    values: dict
    config_hash: str
    source_path: str
    damping_table: tuple | None = None

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output_dir(self) -> str:
        return self.values["output.dir"]

    def canonical_text(self) -> str:
        lines = [
            f"{key} = {render_value(self.values[key])}"
            for key in sorted(self.values)
            if self.values[key] is not None
        ]
        return "\n".join(lines) + "\n"


def _convert(key: str, raw: str, line_no: int):
    tag, _ = KEY_TABLE[key]
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "tol":
            return None if raw == "auto" else float(raw)
        if tag == "float_list":
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if not parts:
                raise ValueError("empty list")
            return tuple(float(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(
            f"line {line_no}: key {key}: cannot parse {raw!r} as {tag} ({exc})"
        ) from exc


def parse_config(path: str) -> RunConfig:
    """Read, type, resolve and validate a configuration file.

    Raises ConfigError with a line/key diagnostic on any violation.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {line.rstrip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in KEY_TABLE:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {line_no}: duplicate key {key!r}")
            values[key] = _convert(key, raw, line_no)
    for key, (_, default) in KEY_TABLE.items():
        values.setdefault(key, default)
    _resolve_time_grid(values)
    damping_table = _load_damping_table(values, os.path.dirname(os.path.abspath(path)))
    _validate_common(values, damping_table)
    config = RunConfig(
        values=values,
        config_hash="",
        source_path=os.path.abspath(path),
        damping_table=damping_table,
    )
    digest = hashlib.sha256(config.canonical_text().encode())
    if damping_table is not None:
        digest.update(render_value(damping_table).encode())
    object.__setattr__(config, "config_hash", digest.hexdigest())
    return config


def _resolve_time_grid(values: dict) -> None:
    tau = values["scheme.tau"]
    if tau is None or tau <= 0:
        raise ConfigError(f"key scheme.tau: step size must be positive, got {tau}")
    T, M = values["scheme.T"], values["scheme.M"]
    if M is None and T is None:
        T = 1.0
    if M is None:
        M = round(T / tau)
        if abs(M * tau - T) > 1e-9 * max(T, 1.0):
            raise ConfigError(
                f"key scheme.T: horizon {T} is not an integer number of steps of scheme.tau={tau}"
            )
    elif M < 0:
        raise ConfigError(f"key scheme.M: step count must be nonnegative, got {M}")
    if T is None:
        T = M * tau
    if abs(M * tau - T) > 1e-9 * max(T, 1.0):
        raise ConfigError(
            f"keys scheme.M/scheme.T: inconsistent, M*tau = {M * tau} but T = {T}"
        )
    values["scheme.M"] = int(M)
    values["scheme.T"] = float(T)


def _load_damping_table(values: dict, base_dir: str) -> tuple | None:
    if values["damping.kind"] != "custom":
        return None
    rel = values["damping.file"]
    if rel is None:
        raise ConfigError("key damping.file: required when damping.kind = custom")
    path = rel if os.path.isabs(rel) else os.path.join(base_dir, rel)
    if not os.path.exists(path):
        raise ConfigError(f"key damping.file: table not found at {path}")
    try:
        table = tuple(float(tok) for tok in open(path, "r", encoding="utf-8").read().split())
    except ValueError as exc:
        raise ConfigError(f"key damping.file: non-numeric entry in {path} ({exc})") from exc
    return table


def _validate_common(values: dict, damping_table: tuple | None) -> None:
    def fail(key: str, msg: str):
        raise ConfigError(f"key {key}: {msg}")

    L, N = values["grid.L"], values["grid.N"]
    if L <= 0:
        fail("grid.L", f"must be positive, got {L}")
    if N < 4 or N % 2 != 0:
        fail("grid.N", f"must be an even integer >= 4, got {N}")

    K, amp, r = values["noise.K"], values["noise.amplitude"], values["noise.r"]
    if K < 0:
        fail("noise.K", f"must be nonnegative, got {K}")
    if K > N // 4:
        fail("noise.K", f"K={K} exceeds the aliasing guard N/4 = {N // 4}")
    if amp < 0:
        fail("noise.amplitude", f"must be nonnegative, got {amp}")
    if r < 3:
        fail("noise.r", f"eigenvalue decay must satisfy r >= 3, got {r}")

    kind = values["damping.kind"]
    if kind not in DAMPING_KINDS:
        fail("damping.kind", f"must be one of {DAMPING_KINDS}, got {kind!r}")
    if kind == "custom" and len(damping_table) != N:
        fail(
            "damping.file",
            f"table has {len(damping_table)} entries, grid.N = {N} expected",
        )

    if values["scheme.lambda"] not in (-1, 0, 1):
        fail("scheme.lambda", f"must be -1, 0 or +1, got {values['scheme.lambda']}")
    tol = values["scheme.fp_tol"]
    if tol is not None and tol <= 0:
        fail("scheme.fp_tol", f"must be positive or 'auto', got {tol}")
    if values["scheme.fp_max_iters"] < 1:
        fail("scheme.fp_max_iters", "must be at least 1")

    init_kind = values["init.kind"]
    if init_kind not in INIT_KINDS:
        fail("init.kind", f"must be one of {INIT_KINDS}, got {init_kind!r}")
    if init_kind == "gaussian_bump" and values["init.width"] <= 0:
        fail("init.width", f"must be positive, got {values['init.width']}")
    if init_kind == "plane_wave" and abs(values["init.mode_index"]) >= N // 2:
        fail("init.mode_index", f"mode {values['init.mode_index']} is not resolved on N={N}")

    if values["experiment.phi"] not in FUNCTIONALS:
        fail("experiment.phi", f"must be one of {sorted(FUNCTIONALS)}, got {values['experiment.phi']!r}")
    if values["experiment.beta"] <= 0:
        fail("experiment.beta", f"must be positive, got {values['experiment.beta']}")
    if values["experiment.record_every"] < 1:
        fail("experiment.record_every", "must be at least 1")
    if values["experiment.samples"] < 1:
        fail("experiment.samples", "must be at least 1")
    if values["seed"] < 0:
        fail("seed", f"must be a nonnegative integer, got {values['seed']}")

    tau_list = values["experiment.tau_list"]
    if tau_list is not None:
        if any(t <= 0 for t in tau_list):
            fail("experiment.tau_list", "entries must be positive")
        if any(a <= b for a, b in zip(tau_list, tau_list[1:])):
            fail("experiment.tau_list", "entries must be strictly decreasing")
        tau_ref = values["experiment.tau_ref"]
        if tau_ref is not None:
            for t in tau_list:
                ratio = t / tau_ref
                if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 1:
                    fail(
                        "experiment.tau_list",
                        f"entry {t:.17g} is not an integer multiple of tau_ref={tau_ref:.17g}",
                    )
    horizons = values["experiment.horizons"]
    if horizons is not None:
        if any(t <= 0 for t in horizons):
            fail("experiment.horizons", "entries must be positive")
        if any(a >= b for a, b in zip(horizons, horizons[1:])):
            fail("experiment.horizons", "entries must be strictly increasing")


# Sobolev demand of each subcommand, expressed as the minimal eigenvalue
# decay the noise must carry.  The floor r >= 3 covers the trajectory-level
# runs; the weak study leans on fourth-order regularity and requires r >= 9.
MIN_DECAY_BY_COMMAND = {
    "simulate": 3.0,
    "decay-check": 3.0,
    "strong-order": 3.0,
    "horizon": 3.0,
    "exp-moment": 3.0,
    "weak-order": 9.0,
}


def validate_for_command(config: RunConfig, command: str) -> None:
    """Check the keys a specific subcommand relies on."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    v = config.values
    min_r = MIN_DECAY_BY_COMMAND[command]
    if v["noise.r"] < min_r:
        raise ConfigError(
            f"key noise.r: decay {v['noise.r']} too slow for {command}; this "
            f"experiment's Sobolev demands require r >= {min_r}"
        )
    if command in ("strong-order", "weak-order"):
        for key in ("experiment.tau_list", "experiment.tau_ref"):
            if v[key] is None:
                raise ConfigError(f"key {key}: required by {command}")
        if v["experiment.samples"] < 50:
            raise ConfigError(
                f"key experiment.samples: {command} needs at least 50, got {v['experiment.samples']}"
            )
    if command == "horizon":
        for key in ("experiment.horizons", "experiment.tau_ref"):
            if v[key] is None:
                raise ConfigError(f"key {key}: required by horizon")
        tau = v["scheme.tau"]
        ratio = tau / v["experiment.tau_ref"]
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 1:
            raise ConfigError(
                f"key scheme.tau: {tau:.17g} is not an integer multiple of "
                f"experiment.tau_ref={v['experiment.tau_ref']:.17g}"
            )
        for t in v["experiment.horizons"]:
            m = round(t / tau)
            if m < 1 or abs(m * tau - t) > 1e-9 * max(t, 1.0):
                raise ConfigError(
                    f"key experiment.horizons: entry {t:.17g} is not an integer "
                    f"number of steps of scheme.tau={tau:.17g}"
                )


@dataclass(frozen=True, eq=False)
class Problem:
    """Configured objects ready to integrate."""

    grid: GridSpec
    model: NoiseModel
    damping: DampingProfile
    u0: StateVector
    setup: ProblemSetup


def build_problem(config: RunConfig) -> Problem:
    """Materialize grid, noise, damping and initial state from a RunConfig."""
    v = config.values
    grid = make_grid(v["grid.L"], v["grid.N"])
    model = build_noise(grid, v["noise.K"], v["noise.amplitude"], v["noise.r"])

    kind = v["damping.kind"]
    if kind == "constant_plus_halfFQ":
        alpha = v["damping.a0"] + 0.5 * model.fq
    elif kind == "conservative":
        alpha = 0.5 * model.fq
    else:
        alpha = np.array(config.damping_table, dtype=np.float64)
    damping = damping_margin(alpha, model)

    init_kind = v["init.kind"]
    if init_kind == "gaussian_bump":
        envelope = v["init.amplitude"] * np.exp(
            -((grid.x - v["init.center"]) ** 2) / (2.0 * v["init.width"] ** 2)
        )
        u0 = make_state(envelope.astype(np.complex128), grid)
    elif init_kind == "plane_wave":
        k = v["init.mode_index"] * np.pi / grid.L
        u0 = make_state(v["init.amplitude"] * np.exp(1j * k * grid.x), grid)
    else:
        u0 = make_state(np.zeros(grid.N, dtype=np.complex128), grid)

    setup = ProblemSetup(
        model=model,
        damping=damping,
        u0=u0,
        lam=v["scheme.lambda"],
        fp_tol=v["scheme.fp_tol"],
        fp_max_iters=v["scheme.fp_max_iters"],
        master_seed=v["seed"],
    )
    return Problem(grid=grid, model=model, damping=damping, u0=u0, setup=setup)
