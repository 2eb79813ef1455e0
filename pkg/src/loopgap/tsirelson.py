"""The open/closed-loop value-gap counterexample at finite grid depth.

Everything here lives on the geometric grid: the drift mu reads the fractional
part of the state's increment quotient over the previous coarse interval, the
relaxed terminal payoff tests whether the control derivative recovered from
(X - B) matches mu in L1 up to a tolerance, and the interval-by-interval
recursion rebuilds the control from a prefix plus the noise path.

Truncation conventions (the infinite grid is cut at K levels): mu is 0 on the
stub [0, t_{-K}) and on [t_{-K}, t_{-K+1}) where the needed earlier knot is
missing.  All integrals of per-step-constant controls are computed as exact
step-function sums (the left rule), which for those integrands coincides with
the trapezoid rule of the step representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import ControlProblem, ActionInterval, Policy, PolicyKind, SimulatedSolution, simulate
from .paths import (
    BrownianPath,
    RngStream,
    SamplePath,
    TimeGrid,
    ValidationError,
    increment_quotient,
)

__all__ = [
    "DELTA_REL",
    "CalibrationResult",
    "RelaxedPayoffConfig",
    "TsirelsonDrift",
    "E_k_indicator",
    "alpha_prefix",
    "alpha_star",
    "calibrate_epsilon",
    "closed_loop_tsirelson_policy",
    "consistency_check_ank",
    "extend_alpha_k",
    "fractional_uniformity_samples",
    "make_tsirelson_problem",
    "membership_integral",
    "mu",
    "open_loop_probe_family",
    "relaxed_g",
    "theta",
    "uniformity_table",
]

# relative scale of the default membership tolerance: epsilon = T * DELTA_REL
DELTA_REL = 1e-3

# stream indices reserved for epsilon calibration runs, away from estimation streams
_CAL_STREAM_OFFSET = 1_000_000


def theta(x: float) -> float:
    """Fractional part x - floor(x), in [0, 1).

    Rounding can push x - floor(x) to 1.0 when x sits just below an integer;
    that edge wraps to 0.0 so the half-open range contract holds.
    """
    if not math.isfinite(x):
        raise ValidationError(f"theta needs finite input, got {x!r}")
    r = x - math.floor(x)
    return 0.0 if r >= 1.0 else r


class TsirelsonDrift:
    """The drift mu(t, x): fractional part of x's previous coarse increment quotient.

    On [t_k, t_{k+1}) the output depends only on x at t_{k-1} and t_k; it is 0
    on the stub and wherever the earlier knot is truncated away.
    """

    def __init__(self, grid: TimeGrid):
        self.grid = grid
        self._cidx = grid.coarse_fine_idx
        self._ck = grid.coarse_knots

    def __call__(self, t: float, x: SamplePath) -> float:
        i = self.grid.coarse_interval(t)     # raises for t outside [0, T)
        if i < 1:
            return 0.0
        ia, ib = self._cidx[i - 1], self._cidx[i]
        if len(x.values) <= ib:
            raise ValidationError(f"path not defined up to the coarse knot {self._ck[i]!r}")
        q = (x.values[ib] - x.values[ia]) / (self._ck[i] - self._ck[i - 1])
        return theta(q)

    def step_values(self, x_values: np.ndarray) -> np.ndarray:
        """mu on every fine step: entry j is mu on [knots[j], knots[j+1])."""
        grid = self.grid
        out = np.zeros(grid.n_steps)
        cidx, ck = self._cidx, self._ck
        q = (x_values[cidx[1:-1]] - x_values[cidx[:-2]]) / (ck[1:-1] - ck[:-2])
        th = q - np.floor(q)
        th[th >= 1.0] = 0.0
        for i in range(1, len(ck) - 1):
            out[cidx[i]: cidx[i + 1]] = th[i - 1]
        return out


def mu(t: float, x: SamplePath, grid: TimeGrid | None = None) -> float:
    """Functional form of TsirelsonDrift; grid defaults to the path's own."""
    grid = grid or x.grid
    if grid is None:
        raise ValidationError("mu needs a TimeGrid (pass one or use a grid-aware path)")
    return TsirelsonDrift(grid)(t, x)


def closed_loop_tsirelson_policy(grid: TimeGrid | None = None) -> Policy:
    """The closed-loop law (t, X-path) -> mu(t, X).

    With no grid argument the law reads the grid off the path view it is
    handed, so the policy object stays grid-free as in the defining formula.
    """
    if grid is not None:
        drift = TsirelsonDrift(grid)
        return Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: drift(t, xv), name="mu(X)")
    return Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: mu(t, xv), name="mu(X)")


@dataclass(frozen=True)
class RelaxedPayoffConfig:
    """Window and tolerance of the relaxed membership payoff.

    h is the backward-difference window of the control-derivative estimator
    (None: the grid's smallest Euler step, which aligns each estimate with
    exactly one step); epsilon is the L1 tolerance replacing the exact-zero
    membership test (None: horizon * DELTA_REL).  epsilon = 0 is rejected:
    the exact-zero set has empty interior under any discretization.
    """

    h: float | None = None
    epsilon: float | None = None

    def resolve(self, grid: TimeGrid) -> tuple[float, float]:
        h = grid.euler_step if self.h is None else float(self.h)
        eps = grid.horizon * DELTA_REL if self.epsilon is None else float(self.epsilon)
        if h <= 0:
            raise ValidationError(f"window h must be positive, got {h!r}")
        if eps <= 0:
            raise ValidationError(
                "epsilon must be positive: the exact-zero membership set is "
                "degenerate under discretization"
            )
        return h, eps


def alpha_star(t: float, B: SamplePath, X: SamplePath, h: float) -> float:
    """Backward difference quotient of (X - B) over [(t-h)^+, t], clamped to [0, 1].

    The window start is snapped down to a knot and the quotient divides by the
    actual span, so the estimator returns a piecewise-constant control exactly
    at knots interior to its constancy windows.
    """
    if t <= X.knots[0]:
        raise ValidationError(f"alpha_star needs t > {X.knots[0]}, got {t!r}")
    if h <= 0:
        raise ValidationError(f"window h must be positive, got {h!r}")
    lo = max(t - h, X.knots[0])
    s_idx = max(int(np.searchsorted(X.knots, lo, side="right")) - 1, 0)
    s = X.knots[s_idx]
    d_t = X.value_at(t) - B.value_at(t)
    d_s = X.values[s_idx] - B.values[s_idx]
    q = (d_t - d_s) / (t - s)
    return min(1.0, max(0.0, q))


def _alpha_star_knots(solution: SimulatedSolution, h: float) -> np.ndarray:
    """Vectorized alpha_star at knots 1..N (entry j-1 is the estimate at knot j)."""
    knots = solution.X.knots
    D = solution.X.values - solution.B.values
    steps = np.diff(knots)
    if h <= np.min(steps):
        quotients = np.diff(D) / steps
    else:
        lo = np.maximum(knots[1:] - h, knots[0])
        s_idx = np.maximum(np.searchsorted(knots, lo, side="right") - 1, 0)
        quotients = (D[1:] - D[s_idx]) / (knots[1:] - knots[s_idx])
    return np.clip(quotients, 0.0, 1.0)


def membership_integral(solution: SimulatedSolution, cfg: RelaxedPayoffConfig | None = None) -> float:
    """L1 distance between the recovered control derivative and mu(., X).

    Both sides are sampled per Euler step (the derivative estimate at the step's
    right knot against the drift in force on that step), so the integrand is
    evaluated in step interiors where it lives a.e., never exactly at the
    coarse-knot discontinuities.
    """
    cfg = cfg or RelaxedPayoffConfig()
    grid = solution.grid
    if grid is None:
        raise ValidationError("solution paths carry no TimeGrid")
    h, _ = cfg.resolve(grid)
    astar = _alpha_star_knots(solution, h)
    mu_steps = TsirelsonDrift(grid).step_values(solution.X.values)
    return float(np.sum(np.abs(astar - mu_steps) * grid.step_sizes()))


def relaxed_g(solution: SimulatedSolution, cfg: RelaxedPayoffConfig | None = None) -> float:
    """Indicator of relaxed membership: 1 iff membership_integral < epsilon."""
    cfg = cfg or RelaxedPayoffConfig()
    integral = membership_integral(solution, cfg)    # validates the grid
    _, eps = cfg.resolve(solution.grid)
    return 1.0 if integral < eps else 0.0


def make_tsirelson_problem(grid: TimeGrid, cfg: RelaxedPayoffConfig | None = None) -> ControlProblem:
    """The counterexample problem: dX = a dt + dB, A = [0,1], relaxed payoff."""
    cfg = cfg or RelaxedPayoffConfig()
    return ControlProblem(
        x0=0.0,
        T=grid.horizon,
        action_set=ActionInterval(0.0, 1.0),
        drift=lambda t, x, a: a,
        diffusion=lambda t, x, a: 1.0,
        g=lambda sol: relaxed_g(sol, cfg),
    )


def _coarse_index(grid: TimeGrid, k: int) -> int:
    """Map level k <= 0 to the coarse_knots index; t_k = coarse_knots[k + K]."""
    i = k + grid.levels
    if not 0 <= i <= grid.levels:
        raise ValidationError(f"level k={k} outside [-K, 0] for K={grid.levels}")
    return i


def E_k_indicator(
    solution: SimulatedSolution,
    k: int,
    epsilon: float | None = None,
    scaled: bool = True,
) -> int:
    """1 iff the realized control matches mu(., X) in L1 on [0, t_k].

    The tolerance is epsilon * t_k / T when scaled (the default), so the
    exact-zero event degrades gracefully with the window length; scaled=False
    compares against the fixed epsilon instead.
    """
    grid = solution.grid
    if k > -1:
        raise ValidationError(f"E_k is defined for k <= -1, got k={k}")
    i = _coarse_index(grid, k)
    t_k = grid.coarse_knots[i]
    j_k = int(grid.coarse_fine_idx[i])
    eps = grid.horizon * DELTA_REL if epsilon is None else float(epsilon)
    eps_k = eps * t_k / grid.horizon if scaled else eps
    mu_steps = TsirelsonDrift(grid).step_values(solution.X.values)
    f = np.abs(solution.alpha.values[:j_k] - mu_steps[:j_k])
    integral = float(np.sum(f * grid.step_sizes()[:j_k]))
    return 1 if integral < eps_k else 0


def _step_actions(path: SamplePath, n_steps: int) -> np.ndarray:
    """Per-step action values of a piecewise-constant control path prefix."""
    vals = np.asarray(path.values, dtype=float)
    if len(vals) < n_steps:
        raise ValidationError(f"control prefix covers {len(vals)} steps, need {n_steps}")
    return vals[:n_steps]


def _increments(B: SamplePath) -> np.ndarray:
    if isinstance(B, BrownianPath):
        return B.increments
    return np.diff(B.values)


def alpha_prefix(solution: SimulatedSolution, k: int) -> SamplePath:
    """The realized control restricted to [0, t_k), as a step-function path."""
    grid = solution.grid
    j_k = int(grid.coarse_fine_idx[_coarse_index(grid, k)])
    return SamplePath(solution.alpha.knots[:j_k], solution.alpha.values[:j_k], grid)


def extend_alpha_k(B: SamplePath, prefix: SamplePath, k: int) -> tuple[SamplePath, SamplePath]:
    """Extend a control prefix on [0, t_k) interval-by-interval from the noise.

    On each coarse interval [t_i, t_{i+1}), i = k..-1, the extended control is
    the fractional part of (B-increment + integral of the control over the
    previous coarse interval) / (interval length); the companion state is the
    running control integral plus B.  Valid for k in [-K+1, -1]: the first
    extension interval needs the coarse knot below t_k.
    """
    grid = B.grid
    if grid is None:
        raise ValidationError("driving path carries no TimeGrid")
    if not (-grid.levels + 1 <= k <= -1):
        raise ValidationError(f"k={k} outside [-K+1, -1] for K={grid.levels}")
    i_k = _coarse_index(grid, k)
    cidx = grid.coarse_fine_idx
    j_k = int(cidx[i_k])
    steps = grid.step_sizes()
    n_steps = grid.n_steps

    pref = _step_actions(prefix, j_k)
    if np.any(pref < 0.0) or np.any(pref >= 1.0):
        raise ValidationError("prefix control values must lie in [0, 1)")

    dB = _increments(B)
    actions = np.empty(n_steps)
    actions[:j_k] = pref
    for i in range(i_k, grid.levels):
        ia, ib = int(cidx[i - 1]), int(cidx[i])
        b_inc = B.values[ib] - B.values[ia]
        a_int = float(np.dot(actions[ia:ib], steps[ia:ib]))
        q = (b_inc + a_int) / (grid.coarse_knots[i] - grid.coarse_knots[i - 1])
        actions[ib: int(cidx[i + 1])] = theta(q)

    # companion state, accumulated in the engine's operation order
    x_vals = np.empty(n_steps + 1)
    x = 0.0
    x_vals[0] = x
    for j in range(n_steps):
        x = (x + actions[j] * steps[j]) + dB[j]
        x_vals[j + 1] = x

    a_path = SamplePath(grid.fine_knots, np.append(actions, actions[-1]), grid)
    x_path = SamplePath(grid.fine_knots, x_vals, grid)
    return a_path, x_path


def consistency_check_ank(
    B: SamplePath,
    alpha: SamplePath,
    n: int,
    k: int,
    epsilon: float | None = None,
) -> str:
    """'agree' iff the extensions from the [0, t_n) and [0, t_k) prefixes coincide.

    Both controls are rebuilt with extend_alpha_k from prefixes of the same
    driving control; agreement is L1 distance over [0, T] below epsilon.  The
    coincidence is only asserted (by the underlying theory) on paths where the
    driving control matches mu; elsewhere either label may come back.
    """
    if not n < k <= -1:
        raise ValidationError(f"need n < k <= -1, got n={n}, k={k}")
    grid = B.grid
    eps = grid.horizon * DELTA_REL if epsilon is None else float(epsilon)
    steps = grid.step_sizes()

    def build(level):
        j = int(grid.coarse_fine_idx[_coarse_index(grid, level)])
        pref = SamplePath(grid.fine_knots[:j], _step_actions(alpha, j), grid)
        return extend_alpha_k(B, pref, level)

    a_n, _ = build(n)
    a_k, _ = build(k)
    gap = float(np.sum(np.abs(a_n.values[:-1] - a_k.values[:-1]) * steps))
    return "agree" if gap <= eps else "disagree"


def fractional_uniformity_samples(
    problem: ControlProblem | None,
    grid: TimeGrid,
    streams: list[RngStream],
    k: int,
    policy: Policy | None = None,
) -> np.ndarray:
    """Fractional increment quotients eta_k of the closed-loop solution.

    Simulates one path per stream (aggregated in stream_index order) and
    returns theta of X's increment quotient over [t_{k-1}, t_k].  Under the
    closed-loop drift these are the statistics whose uniform limit law blocks
    noise-adapted solvability.
    """
    table = uniformity_table(problem, grid, streams, (k,), policy=policy)
    return table[k]


def uniformity_table(
    problem: ControlProblem | None,
    grid: TimeGrid,
    streams: list[RngStream],
    ks: tuple,
    policy: Policy | None = None,
) -> dict:
    """fractional_uniformity_samples for several levels from one set of paths."""
    for k in ks:
        i = _coarse_index(grid, k)
        if i < 1 or k > -1:
            raise ValidationError(f"uniformity level k={k} outside [-K+1, -1]")
    problem = problem or make_tsirelson_problem(grid)
    policy = policy or closed_loop_tsirelson_policy(grid)
    ordered = sorted(streams, key=lambda s: s.stream_index)
    out = {k: np.empty(len(ordered)) for k in ks}
    for row, stream in enumerate(ordered):
        sol = simulate(problem, policy, grid, stream)
        for k in ks:
            i = _coarse_index(grid, k)
            q = increment_quotient(sol.X, grid.coarse_knots[i - 1], grid.coarse_knots[i])
            out[k][row] = theta(q)
    return out


def open_loop_probe_family(grid: TimeGrid):
    """The shipped open-loop probe family: 11 constants, 5 deterministic
    time-varying laws, 3 noise-increment mimics of the drift.

    Deliberately excludes self-referential recursions (a control defined by
    its own running integral reconstructs the drift exactly at finite
    truncation depth; that construction lives in extend_alpha_k).
    """
    from .mc import PolicyFamily

    members = []
    for c in np.linspace(0.0, 1.0, 11):
        members.append((f"const a={c:.1f}", Policy(PolicyKind.OPEN_LOOP, lambda t, bv, c=c: c)))

    T = grid.horizon
    det_laws = [
        ("ramp t/T", lambda t, bv: t / T),
        ("ramp 1-t/T", lambda t, bv: 1.0 - t / T),
        ("sine", lambda t, bv: 0.5 * (1.0 + math.sin(2.0 * math.pi * t / T))),
        ("cosine", lambda t, bv: 0.5 * (1.0 + math.cos(2.0 * math.pi * t / T))),
        ("saturating 2t/T", lambda t, bv: min(1.0, 2.0 * t / T)),
    ]
    for label, law in det_laws:
        members.append((label, Policy(PolicyKind.OPEN_LOOP, law)))

    drift = TsirelsonDrift(grid)

    def coarse_mimic(t, bv):
        return drift(t, bv)

    def local_mimic(t, bv):
        j = len(bv) - 1
        if j == 0:
            return 0.0
        return theta((bv.values[j] - bv.values[j - 1]) / (bv.knots[j] - bv.knots[j - 1]))

    def sliding_mimic(t, bv):
        i = grid.coarse_interval(t)
        if i < 1:
            return 0.0
        delta = grid.coarse_knots[i] - grid.coarse_knots[i - 1]
        lo = max(t - delta, 0.0)
        span = t - lo
        if span <= 0.0:
            return 0.0
        return theta((bv.value_at(t) - bv.value_at(lo)) / span)

    members.append(("mu(B-path) mimic", Policy(PolicyKind.OPEN_LOOP, coarse_mimic)))
    members.append(("local-step mimic", Policy(PolicyKind.OPEN_LOOP, local_mimic)))
    members.append(("sliding-window mimic", Policy(PolicyKind.OPEN_LOOP, sliding_mimic)))

    return PolicyFamily(name="open-loop probe", members=tuple(members))


@dataclass(frozen=True)
class CalibrationResult:
    epsilon: float
    statistic_coarse: float
    statistic_fine: float
    shrink_ok: bool


def calibrate_epsilon(
    T: float,
    K: int,
    r: float,
    m: int,
    master_seed: int,
    n_cal: int = 64,
    delta_rel: float = DELTA_REL,
    multiplier: float = 10.0,
    noise_floor: float = 1e-6,
    shrink_factor: float = 0.75,
) -> CalibrationResult:
    """Calibrate the membership tolerance against the discretization-error oracle.

    Runs the closed-loop experiment at substep counts m and 2m and tracks the
    worst per-path membership integral.  A statistic above the noise floor
    must shrink by at least shrink_factor under refinement (first-order
    behavior); below the floor the statistic is pure rounding noise and the
    shrink test is vacuous.  Returns epsilon = max(T * delta_rel,
    multiplier * fine statistic).
    """
    from .paths import make_tsirelson_grid

    def worst_integral(mm: int) -> float:
        grid = make_tsirelson_grid(T, K, r, mm)
        problem = make_tsirelson_problem(grid)
        policy = closed_loop_tsirelson_policy(grid)
        worst = 0.0
        for i in range(n_cal):
            sol = simulate(problem, policy, grid, RngStream(master_seed, _CAL_STREAM_OFFSET + i))
            worst = max(worst, membership_integral(sol))
        return worst

    stat_coarse = worst_integral(m)
    stat_fine = worst_integral(2 * m)
    if stat_coarse > noise_floor:
        shrink_ok = stat_fine <= shrink_factor * stat_coarse
    else:
        shrink_ok = True
    return CalibrationResult(
        epsilon=max(T * delta_rel, multiplier * stat_fine),
        statistic_coarse=stat_coarse,
        statistic_fine=stat_fine,
        shrink_ok=shrink_ok,
    )
