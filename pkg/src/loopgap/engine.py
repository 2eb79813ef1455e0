"""Euler-Maruyama simulation of controlled path-dependent SDEs.

The engine realizes the strong formulation only: a fixed Brownian path drives
the state recursion

    X_{j+1} = X_j + b(t_j, X_[0,t_j], a_j) * dt_j + sigma(t_j, X_[0,t_j], a_j) * dB_j

with left-endpoint (Ito) evaluation of coefficients and actions.  Policies
receive truncated path views, so a law physically cannot read past its own
time argument.  Measure-changed (weak-formulation) sampling lives in the
girsanov module.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .paths import (
    BrownianPath,
    RngStream,
    SamplePath,
    TimeGrid,
    ValidationError,
    sample_brownian,
)

__all__ = [
    "ActionInterval",
    "ActionSet",
    "AugmentedView",
    "ControlProblem",
    "EngineError",
    "Policy",
    "PolicyKind",
    "SimulatedSolution",
    "payoff",
    "simulate",
    "simulate_augmented",
]


class EngineError(RuntimeError):
    """Numerical abort during simulation (non-finite or out-of-bound output)."""


class ActionSet:
    """Admissible actions: an interval or a finite set of points."""

    def clamp(self, a: float) -> float:
        raise NotImplementedError

    def contains(self, a: float) -> bool:
        raise NotImplementedError

    def sample(self, n: int) -> np.ndarray:
        """Finite probe of the set, used by the PDE solver's action max."""
        raise NotImplementedError


@dataclass(frozen=True)
class ActionInterval(ActionSet):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValidationError(f"empty action interval [{self.lo}, {self.hi}]")

    def clamp(self, a: float) -> float:
        return min(max(a, self.lo), self.hi)

    def contains(self, a: float) -> bool:
        return self.lo <= a <= self.hi

    def sample(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValidationError("need at least one action sample")
        if n == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, n)


@dataclass(frozen=True)
class ActionPoints(ActionSet):
    points: tuple

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValidationError("empty action set")

    def clamp(self, a: float) -> float:
        pts = self.points
        return min(pts, key=lambda p: abs(p - a))

    def contains(self, a: float) -> bool:
        return a in self.points

    def sample(self, n: int) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


class PolicyKind(enum.Enum):
    OPEN_LOOP = "open-loop"      # law(t, B-path up to t)
    CLOSED_LOOP = "closed-loop"  # law(t, X-path up to t)
    FEEDBACK = "feedback"        # law(t, x_t)
    AUGMENTED = "augmented"      # law(t, (B, X, Gamma) views up to t)


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    law: Callable
    name: str = ""

    def __repr__(self):
        return f"Policy({self.kind.value}, {self.name or self.law!r})"


@dataclass(frozen=True)
class AugmentedView:
    """Truncated (B, X, Gamma) views handed to augmented policies.

    B/X is the pair-state block form; Gamma is the running action integral,
    so laws measurable in the control alone read only .Gamma.
    """

    B: SamplePath
    X: SamplePath
    Gamma: SamplePath


@dataclass(frozen=True)
class ControlProblem:
    """Coefficients, payoff, and action set of one control problem.

    b and sigma receive (t, X-path view up to t, a); g receives the full
    SimulatedSolution so path payoffs may read the (B, X, alpha) triple.
    Coefficients must stay bounded by coeff_bound; the engine aborts if not.
    """

    x0: float
    T: float
    action_set: ActionSet
    drift: Callable          # (t, x_view, a) -> float
    diffusion: Callable      # (t, x_view, a) -> float
    g: Callable              # (SimulatedSolution) -> float
    n: int = 1
    d: int = 1
    coeff_bound: float = 1e3


@dataclass
class SimulatedSolution:
    B: SamplePath
    X: SamplePath
    alpha: SamplePath
    Gamma: SamplePath
    clamp_violations: int = 0

    @property
    def grid(self) -> TimeGrid:
        return self.X.grid


def _readonly_slice(arr: np.ndarray, j: int) -> np.ndarray:
    v = arr[: j + 1]
    v.flags.writeable = False
    return v


def simulate(
    problem: ControlProblem,
    policy: Policy,
    grid: TimeGrid,
    stream: RngStream | None,
    brownian: SamplePath | None = None,
) -> SimulatedSolution:
    """Run the Euler recursion for one path under the given policy.

    Pass either a stream (the driving path is drawn from it) or an explicit
    brownian path (used by splice tests, recovery round trips, and the
    measure-change machinery).  Only the data the policy kind is entitled to
    is handed to the law: B for open loop, X for closed loop, the current
    state for feedback, the (B, X, Gamma) triple for augmented.
    """
    if problem.n != 1 or problem.d != 1:
        raise ValidationError("engine currently simulates scalar states (n = d = 1)")

    knots = grid.fine_knots
    n_steps = grid.n_steps
    if brownian is None:
        if stream is None:
            raise ValidationError("simulate needs a stream or an explicit driving path")
        brownian = sample_brownian(grid, stream, problem.d)
    elif len(brownian) != len(knots):
        raise ValidationError("driving path does not match the grid")

    b_vals = brownian.values
    if isinstance(brownian, BrownianPath):
        dB = brownian.increments.tolist()
    else:
        dB = np.diff(b_vals).tolist()
    t_list = knots.tolist()
    dt_list = np.diff(knots).tolist()

    x_buf = np.empty(n_steps + 1)
    g_buf = np.empty(n_steps + 1)
    a_buf = np.empty(n_steps + 1)
    x_buf[0] = problem.x0
    g_buf[0] = 0.0

    action_set = problem.action_set
    law = policy.law
    kind = policy.kind
    bound = problem.coeff_bound
    clamps = 0
    x = problem.x0
    gam = 0.0

    for j in range(n_steps):
        t = t_list[j]
        x_view = SamplePath(knots[: j + 1], _readonly_slice(x_buf, j), grid)

        if kind is PolicyKind.CLOSED_LOOP:
            a = law(t, x_view)
        elif kind is PolicyKind.OPEN_LOOP:
            a = law(t, SamplePath(knots[: j + 1], _readonly_slice(b_vals, j), grid))
        elif kind is PolicyKind.FEEDBACK:
            a = law(t, x)
        elif kind is PolicyKind.AUGMENTED:
            a = law(
                t,
                AugmentedView(
                    B=SamplePath(knots[: j + 1], _readonly_slice(b_vals, j), grid),
                    X=x_view,
                    Gamma=SamplePath(knots[: j + 1], _readonly_slice(g_buf, j), grid),
                ),
            )
        else:  # pragma: no cover
            raise ValidationError(f"unknown policy kind {kind!r}")

        a = float(a)
        if not math.isfinite(a):
            raise EngineError(f"policy returned non-finite action at step {j} (t={t})")
        if not action_set.contains(a):
            a = action_set.clamp(a)
            clamps += 1

        bj = float(problem.drift(t, x_view, a))
        sj = float(problem.diffusion(t, x_view, a))
        if not (math.isfinite(bj) and math.isfinite(sj)):
            raise EngineError(f"non-finite coefficient at step {j} (t={t}): b={bj}, sigma={sj}")
        if abs(bj) > bound or abs(sj) > bound:
            raise EngineError(
                f"coefficient bound {bound} exceeded at step {j} (t={t}): b={bj}, sigma={sj}"
            )

        dt = dt_list[j]
        x = (x + bj * dt) + sj * dB[j]
        gam = gam + a * dt
        a_buf[j] = a
        x_buf[j + 1] = x
        g_buf[j + 1] = gam

    a_buf[n_steps] = a_buf[n_steps - 1] if n_steps else 0.0

    return SimulatedSolution(
        B=brownian,
        X=SamplePath(knots, x_buf, grid),
        alpha=SamplePath(knots, a_buf, grid),
        Gamma=SamplePath(knots, g_buf, grid),
        clamp_violations=clamps,
    )


def simulate_augmented(
    problem: ControlProblem,
    policy: Policy,
    grid: TimeGrid,
    stream: RngStream | None,
    brownian: SamplePath | None = None,
) -> SimulatedSolution:
    """simulate() for augmented policies reading the (B, X, Gamma) block state.

    State dynamics are identical to simulate(); the B block carries zero
    drift and unit diffusion, the Gamma block integrates the action with no
    noise, and the policy sees all three truncated views.
    """
    if policy.kind is not PolicyKind.AUGMENTED:
        raise ValidationError("simulate_augmented requires an AUGMENTED policy")
    return simulate(problem, policy, grid, stream, brownian=brownian)


def payoff(problem: ControlProblem, solution: SimulatedSolution) -> float:
    """Evaluate the terminal payoff functional on one realized solution."""
    val = float(problem.g(solution))
    if not math.isfinite(val):
        raise EngineError(f"payoff returned non-finite value {val!r}")
    return val
