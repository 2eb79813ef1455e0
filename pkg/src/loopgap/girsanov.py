"""Measure-change machinery: stochastic exponentials, reweighted values,
piecewise-constant policy projection, and Brownian recovery.

The reweighted estimator realizes the weak formulation numerically: simulate
the driftless state under the reference measure, evaluate the closed-loop
control along it, and weight payoffs by the stochastic exponential of the
drift-to-volatility ratio.  With left-endpoint evaluation on both sides the
discrete weighted law equals the discrete drifted law exactly, so reweighted
and direct estimates differ by Monte Carlo noise only, at any step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .engine import ControlProblem, EngineError, Policy, PolicyKind, payoff, simulate
from .mc import ValueEstimate, Z95, _map_indexed
from .paths import BrownianPath, RngStream, SamplePath, TimeGrid, ValidationError

__all__ = [
    "GirsanovWeight",
    "LambdaSpec",
    "estimate_quadratic_variation",
    "piecewise_constant_projection",
    "policy_actions_on_path",
    "recover_brownian",
    "reweighted_value",
    "stochastic_exponential",
]

DEFAULT_LOG_CAP = 30.0


@dataclass(frozen=True)
class GirsanovWeight:
    """Stochastic exponential split into its Ito and quadratic summands."""

    log_weight: float
    ito_integral_part: float
    quadratic_part: float

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass(frozen=True)
class LambdaSpec:
    """Drift-to-volatility ratio b = sigma * lambda with an a-priori bound."""

    func: Callable            # (t, x_view, a) -> float
    bound: float

    def __post_init__(self):
        if not self.bound > 0:
            raise ValidationError(f"lambda bound must be positive, got {self.bound!r}")


def stochastic_exponential(
    lambda_values: np.ndarray,
    brownian: SamplePath,
    grid: TimeGrid,
) -> GirsanovWeight:
    """exp( sum lambda_j dB_j - 1/2 sum lambda_j^2 dt_j ) with both parts kept.

    lambda_values holds the left-endpoint evaluations, one per fine step.
    The opposite-direction change of measure (drift removal rather than drift
    insertion) is the same object with lambda negated: the quadratic part is
    even in lambda, the Ito part flips sign.
    """
    lam = np.asarray(lambda_values, dtype=float)
    if lam.shape[0] != grid.n_steps:
        raise ValidationError(
            f"need one lambda per step: got {lam.shape[0]}, grid has {grid.n_steps}"
        )
    bad = np.flatnonzero(~np.isfinite(lam))
    if bad.size:
        j = int(bad[0])
        raise EngineError(f"non-finite lambda at step {j} (t={grid.fine_knots[j]})")
    dB = brownian.increments if isinstance(brownian, BrownianPath) else np.diff(brownian.values)
    ito = float(np.dot(lam, dB))
    quad = 0.5 * float(np.dot(lam * lam, grid.step_sizes()))
    log_w = ito - quad
    if not math.isfinite(log_w):
        raise EngineError(f"non-finite log-weight (ito={ito}, quad={quad})")
    return GirsanovWeight(log_weight=log_w, ito_integral_part=ito, quadratic_part=quad)


def reweighted_value(
    problem: ControlProblem,
    lam: LambdaSpec,
    closed_policy: Policy,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    threads: int = 1,
    log_cap: float = DEFAULT_LOG_CAP,
) -> ValueEstimate:
    """Weak-formulation estimate of E[g] for b = sigma * lambda dynamics.

    Requires sigma free of the action (only the drift is controlled, through
    lambda).  Simulates the driftless state, evaluates the closed-loop control
    and lambda along it, and returns the mean of weight * payoff (the identity
    estimator) with its plain standard error.  flags carries the effective
    sample size (sum w)^2 / sum w^2, the count of paths whose log-weight
    exceeded log_cap, and the self-normalized (ratio) estimate with its
    delta-method standard error.
    """
    if n_paths < 2:
        raise ValidationError(f"need n_paths >= 2, got {n_paths}")
    if closed_policy.kind is not PolicyKind.CLOSED_LOOP:
        raise ValidationError("reweighted_value expects a closed-loop policy")

    driftless = replace(problem, drift=lambda t, x, a: 0.0)
    knots = grid.fine_knots
    lam_fn, lam_bound = lam.func, lam.bound

    def one(i: int):
        sol = simulate(driftless, closed_policy, grid, RngStream(master_seed, i))
        lam_vals = np.empty(grid.n_steps)
        for j in range(grid.n_steps):
            lv = float(lam_fn(knots[j], sol.X.truncated(j), sol.alpha.values[j]))
            if abs(lv) > lam_bound:
                raise EngineError(
                    f"lambda exceeded its bound {lam_bound} at step {j}: {lv}"
                )
            lam_vals[j] = lv
        w = stochastic_exponential(lam_vals, sol.B, grid)
        return w.weight, payoff(driftless, sol), w.log_weight > log_cap, sol.clamp_violations

    rows = _map_indexed(one, n_paths, threads)
    w = np.array([r[0] for r in rows])
    g = np.array([r[1] for r in rows])
    capped = int(sum(r[2] for r in rows))
    clamps = int(sum(r[3] for r in rows))

    wg = w * g
    n = n_paths
    mean = float(np.mean(wg))
    stderr = float(np.std(wg, ddof=1) / np.sqrt(n))

    sum_w = float(np.sum(w))
    n_eff = sum_w * sum_w / float(np.sum(w * w))
    ratio = float(np.sum(wg) / sum_w)
    mw = sum_w / n
    var_ratio = (
        np.var(wg, ddof=1)
        - 2.0 * ratio * np.cov(wg, w, ddof=1)[0, 1]
        + ratio * ratio * np.var(w, ddof=1)
    ) / (n * mw * mw)
    ratio_stderr = float(np.sqrt(max(var_ratio, 0.0)))

    return ValueEstimate(
        mean=mean,
        stderr=stderr,
        n_paths=n,
        ci95=(mean - Z95 * stderr, mean + Z95 * stderr),
        master_seed=master_seed,
        flags={
            "clamp_violations": clamps,
            "log_weight_capped": capped,
            "n_eff": n_eff,
            "mean_weight": float(np.mean(w)),
            "self_normalized_mean": ratio,
            "self_normalized_stderr": ratio_stderr,
        },
    )


def policy_actions_on_path(
    policy: Policy,
    X: SamplePath,
    B: SamplePath | None = None,
) -> np.ndarray:
    """Left-endpoint actions of a policy along an already-realized path."""
    n_steps = len(X) - 1
    out = np.empty(n_steps)
    law, kind = policy.law, policy.kind
    for j in range(n_steps):
        t = X.knots[j]
        if kind is PolicyKind.CLOSED_LOOP:
            out[j] = law(t, X.truncated(j))
        elif kind is PolicyKind.FEEDBACK:
            out[j] = law(t, float(X.values[j]))
        elif kind is PolicyKind.OPEN_LOOP:
            if B is None:
                raise ValidationError("open-loop policy needs the driving path")
            out[j] = law(t, B.truncated(j))
        else:
            raise ValidationError(f"unsupported policy kind {kind!r} on a fixed path")
    return out


def piecewise_constant_projection(policy: Policy, knots) -> Policy:
    """Freeze a closed-loop policy at the given knots, holding between them.

    At time t the base law is evaluated at the latest projection knot t_i <= t
    with the path truncated to t_i, and that action is held on [t_i, t_{i+1}).
    Before the first projection knot the base law is frozen at the path start.
    """
    proj = np.asarray(knots, dtype=float)
    if proj.size == 0:
        raise ValidationError("projection needs at least one knot")
    if np.any(np.diff(proj) <= 0):
        raise ValidationError("projection knots must be strictly increasing")
    if policy.kind is not PolicyKind.CLOSED_LOOP:
        raise ValidationError("projection is defined for closed-loop policies")
    base = policy.law

    def law(t, xv):
        i = int(np.searchsorted(proj, t, side="right")) - 1
        ti = proj[i] if i >= 0 else xv.knots[0]
        j = int(np.searchsorted(xv.knots, ti))
        if j >= len(xv.knots) or xv.knots[j] != ti:
            raise ValidationError(f"projection knot {ti!r} is not a path knot")
        return base(ti, xv.truncated(j))

    return Policy(PolicyKind.CLOSED_LOOP, law, name=f"{policy.name or 'policy'}@{proj.size}knots")


def recover_brownian(
    X: SamplePath,
    drift: Callable,
    sigma: Callable,
    grid: TimeGrid | None = None,
) -> BrownianPath:
    """Invert the Euler recursion: dB_j = sigma^{-1} (dX_j - b(t_j, X) dt_j).

    drift and sigma are control-free path functionals (t, X-path up to t).
    The subtraction mirrors the engine's operation order, so on simulated
    paths the recovered increments reproduce the driving ones and re-running
    the engine with them rebuilds X to machine precision.  Uses the known
    sigma, not a quadratic-variation estimate (see estimate_quadratic_variation
    for that device).
    """
    grid = grid or X.grid
    if grid is None:
        raise ValidationError("recover_brownian needs a TimeGrid")
    knots = grid.fine_knots
    dts = grid.step_sizes()
    x_vals = X.values
    n_steps = len(knots) - 1
    inc = np.empty(n_steps)
    for j in range(n_steps):
        xv = SamplePath(knots[: j + 1], x_vals[: j + 1], grid)
        t = float(knots[j])
        bj = float(drift(t, xv))
        sj = float(sigma(t, xv))
        if sj == 0.0 or not math.isfinite(sj):
            raise EngineError(f"singular sigma={sj!r} at step {j} (t={t})")
        a = x_vals[j] + bj * dts[j]
        inc[j] = (x_vals[j + 1] - a) / sj
    return BrownianPath(knots, inc, grid)


def estimate_quadratic_variation(X: SamplePath, window: int) -> SamplePath:
    """Trailing realized-variance estimate of sigma^2 along the path.

    Entry j is sum(dX^2) / sum(dt) over the last min(window, j) steps; the
    first entry copies the second (no increments exist at the start).  This is
    the observable the recovery argument rests on; recover_brownian itself
    uses the exact sigma to keep the round trip noiseless.
    """
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window!r}")
    dx2 = np.diff(X.values) ** 2
    dts = np.diff(X.knots)
    c2 = np.concatenate(([0.0], np.cumsum(dx2)))
    ct = np.concatenate(([0.0], np.cumsum(dts)))
    j = np.arange(1, len(X.knots))
    lo = np.maximum(j - window, 0)
    est = (c2[j] - c2[lo]) / (ct[j] - ct[lo])
    vals = np.concatenate(([est[0]], est))
    return SamplePath(X.knots, vals, X.grid)
