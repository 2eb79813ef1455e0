"""Experiment configuration: TOML parsing, defaults, and full validation.

One config drives one experiment run.  Every constraint the owning modules
enforce at runtime is re-checked here first, so `validate` can list all
violations without touching the numerics.  The resolved config is embedded in
every report for reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from .paths import ValidationError

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "GridParams",
    "HjbParams",
    "McParams",
    "RelaxationParams",
    "default_config",
    "load_config",
    "validate_config",
]

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "tsirelson-gap",
    "uniformity",
    "recursion-check",
    "girsanov-check",
    "qv-recovery",
    "hjb-benchmark",
    "equivalence-triangle",
)


@dataclass(frozen=True)
class GridParams:
    horizon: float = 1.0
    levels: int = 20
    ratio: float = 0.5
    substeps: int = 4


@dataclass(frozen=True)
class McParams:
    n_paths: int = 10_000
    master_seed: int = 12345


@dataclass(frozen=True)
class RelaxationParams:
    # "auto": epsilon from the two-step-size calibration, h from the grid step
    epsilon: float | str = "auto"
    h: float | str = "auto"


@dataclass(frozen=True)
class HjbParams:
    x_lo: float = -7.0
    x_hi: float = 8.0
    n_x: int = 751
    n_t: int = 3000
    n_actions: int = 21
    boundary: str = "dirichlet"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    schema_version: int = SCHEMA_VERSION
    grid: GridParams = field(default_factory=GridParams)
    mc: McParams = field(default_factory=McParams)
    relaxation: RelaxationParams = field(default_factory=RelaxationParams)
    uniformity_levels: tuple = (-1, -5, -10)
    hjb: HjbParams = field(default_factory=HjbParams)
    out_dir: str = "reports"

    def to_dict(self) -> dict:
        """Run parameters for report embedding.

        out_dir is deliberately excluded: reports are byte-identical functions
        of the experiment parameters and seed, wherever they are written.
        """
        d = asdict(self)
        d["uniformity_levels"] = list(self.uniformity_levels)
        del d["out_dir"]
        return d


# per-experiment overrides of the base defaults; n_paths follows the scale
# each demonstration is specified at
_EXPERIMENT_DEFAULTS = {
    "tsirelson-gap": dict(mc=McParams(n_paths=10_000)),
    "uniformity": dict(mc=McParams(n_paths=10_000)),
    "recursion-check": dict(mc=McParams(n_paths=100)),
    "girsanov-check": dict(
        mc=McParams(n_paths=100_000),
        grid=GridParams(levels=4, substeps=2),
    ),
    "qv-recovery": dict(
        mc=McParams(n_paths=100),
        grid=GridParams(levels=10, substeps=2),
    ),
    "hjb-benchmark": dict(),
    "equivalence-triangle": dict(
        mc=McParams(n_paths=20_000),
        grid=GridParams(levels=2, substeps=4),
    ),
}


def default_config(experiment: str) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ValidationError(
            f"unknown experiment {experiment!r}; one of {', '.join(EXPERIMENTS)}"
        )
    return ExperimentConfig(experiment=experiment, **_EXPERIMENT_DEFAULTS[experiment])


def _take(table: dict, key: str, kind, diags: list, where: str, default):
    if key not in table:
        return default
    val = table.pop(key)
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        diags.append(f"{where}.{key}: expected an integer, got {val!r}")
        return default
    if not isinstance(val, kind):
        diags.append(f"{where}.{key}: expected {kind.__name__}, got {val!r}")
        return default
    return val


def _parse(data: dict, diags: list) -> ExperimentConfig:
    data = dict(data)
    experiment = data.pop("experiment", None)
    if experiment not in EXPERIMENTS:
        diags.append(
            f"experiment: expected one of {', '.join(EXPERIMENTS)}, got {experiment!r}"
        )
        experiment = EXPERIMENTS[0]
    cfg = default_config(experiment)

    schema = data.pop("schema_version", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        diags.append(f"schema_version: this build reads version {SCHEMA_VERSION}, got {schema!r}")

    if "grid" in data:
        tb = dict(data.pop("grid"))
        g = cfg.grid
        g = GridParams(
            horizon=_take(tb, "horizon", float, diags, "grid", g.horizon),
            levels=_take(tb, "levels", int, diags, "grid", g.levels),
            ratio=_take(tb, "ratio", float, diags, "grid", g.ratio),
            substeps=_take(tb, "substeps", int, diags, "grid", g.substeps),
        )
        for k in tb:
            diags.append(f"grid.{k}: unknown key")
        cfg = replace(cfg, grid=g)

    if "mc" in data:
        tb = dict(data.pop("mc"))
        m = cfg.mc
        m = McParams(
            n_paths=_take(tb, "n_paths", int, diags, "mc", m.n_paths),
            master_seed=_take(tb, "master_seed", int, diags, "mc", m.master_seed),
        )
        for k in tb:
            diags.append(f"mc.{k}: unknown key")
        cfg = replace(cfg, mc=m)

    if "relaxation" in data:
        tb = dict(data.pop("relaxation"))
        r = cfg.relaxation
        eps = tb.pop("epsilon", r.epsilon)
        h = tb.pop("h", r.h)
        if not (eps == "auto" or isinstance(eps, (int, float))):
            diags.append(f"relaxation.epsilon: expected a number or 'auto', got {eps!r}")
            eps = "auto"
        if not (h == "auto" or isinstance(h, (int, float))):
            diags.append(f"relaxation.h: expected a number or 'auto', got {h!r}")
            h = "auto"
        for k in tb:
            diags.append(f"relaxation.{k}: unknown key")
        cfg = replace(cfg, relaxation=RelaxationParams(epsilon=eps, h=h))

    if "uniformity" in data:
        tb = dict(data.pop("uniformity"))
        levels = tb.pop("levels", list(cfg.uniformity_levels))
        if not (isinstance(levels, list) and all(isinstance(k, int) for k in levels) and levels):
            diags.append(f"uniformity.levels: expected a non-empty list of integers, got {levels!r}")
            levels = list(cfg.uniformity_levels)
        for k in tb:
            diags.append(f"uniformity.{k}: unknown key")
        cfg = replace(cfg, uniformity_levels=tuple(levels))

    if "hjb" in data:
        tb = dict(data.pop("hjb"))
        h = cfg.hjb
        h = HjbParams(
            x_lo=_take(tb, "x_lo", float, diags, "hjb", h.x_lo),
            x_hi=_take(tb, "x_hi", float, diags, "hjb", h.x_hi),
            n_x=_take(tb, "n_x", int, diags, "hjb", h.n_x),
            n_t=_take(tb, "n_t", int, diags, "hjb", h.n_t),
            n_actions=_take(tb, "n_actions", int, diags, "hjb", h.n_actions),
            boundary=_take(tb, "boundary", str, diags, "hjb", h.boundary),
        )
        for k in tb:
            diags.append(f"hjb.{k}: unknown key")
        cfg = replace(cfg, hjb=h)

    if "output" in data:
        tb = dict(data.pop("output"))
        out = _take(tb, "dir", str, diags, "output", cfg.out_dir)
        for k in tb:
            diags.append(f"output.{k}: unknown key")
        cfg = replace(cfg, out_dir=out)

    for k in data:
        diags.append(f"{k}: unknown top-level key")
    return cfg


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """All constraint violations, one message per field problem."""
    diags = []
    g = cfg.grid
    if not (isinstance(g.horizon, float) and g.horizon > 0 and math.isfinite(g.horizon)):
        diags.append(f"grid.horizon: must be a positive real, got {g.horizon!r}")
    if g.levels < 2:
        diags.append(f"grid.levels: need at least 2 geometric levels, got {g.levels}")
    if not 0.0 < g.ratio < 1.0:
        diags.append(f"grid.ratio: must lie strictly inside (0, 1), got {g.ratio}")
    if g.substeps < 1:
        diags.append(f"grid.substeps: need at least 1 Euler substep, got {g.substeps}")

    if cfg.mc.n_paths < 2:
        diags.append(f"mc.n_paths: need at least 2 paths, got {cfg.mc.n_paths}")
    if not 0 <= cfg.mc.master_seed < 2**64:
        diags.append(f"mc.master_seed: must fit an unsigned 64-bit integer, got {cfg.mc.master_seed}")

    r = cfg.relaxation
    if r.epsilon != "auto":
        if r.epsilon <= 0:
            diags.append(
                "relaxation.epsilon: must be positive; the exact-zero membership "
                "payoff is degenerate under discretization"
            )
    if r.h != "auto" and r.h <= 0:
        diags.append(f"relaxation.h: must be positive, got {r.h}")

    if cfg.experiment == "uniformity":
        for k in cfg.uniformity_levels:
            if not (-g.levels + 1 <= k <= -1):
                diags.append(
                    f"uniformity.levels: k={k} outside [-(levels-1), -1] = "
                    f"[{-g.levels + 1}, -1]"
                )

    h = cfg.hjb
    if not h.x_lo < h.x_hi:
        diags.append(f"hjb: need x_lo < x_hi, got [{h.x_lo}, {h.x_hi}]")
    if h.n_x < 3:
        diags.append(f"hjb.n_x: need at least 3 space nodes, got {h.n_x}")
    if h.n_t < 1:
        diags.append(f"hjb.n_t: need at least 1 time step, got {h.n_t}")
    if h.n_actions < 2:
        diags.append(f"hjb.n_actions: need at least 2 action samples, got {h.n_actions}")
    if h.boundary not in ("dirichlet", "neumann"):
        diags.append(f"hjb.boundary: expected 'dirichlet' or 'neumann', got {h.boundary!r}")

    if cfg.experiment in ("hjb-benchmark", "equivalence-triangle") and h.n_x >= 3 and h.x_lo < h.x_hi:
        # benchmark dynamics are b in [0, 1], sigma = 1: the CFL load is known here
        dx = (h.x_hi - h.x_lo) / (h.n_x - 1)
        load = 1.0 / (dx * dx) + 1.0 / dx
        needed = int(math.ceil(g.horizon * load)) + 1
        if (g.horizon / h.n_t) * load > 1.0 + 1e-12:
            diags.append(
                f"hjb.n_t: explicit-scheme CFL bound violated for the benchmark "
                f"coefficients; need n_t >= {needed}"
            )
    return diags


def load_config(path) -> tuple[ExperimentConfig, list[str]]:
    """Parse a TOML config; returns (config, diagnostics).

    Parse errors raise ValidationError with the decoder's line/column message;
    semantic problems are collected in the diagnostics list.
    """
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ValidationError(f"config parse error in {path}: {e}") from e
    diags: list[str] = []
    cfg = _parse(data, diags)
    diags.extend(validate_config(cfg))
    return cfg, diags
