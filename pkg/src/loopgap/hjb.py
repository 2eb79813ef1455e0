"""Explicit monotone finite-difference solver for the state-dependent
dynamic-programming PDE in one spatial dimension.

Backward time stepping with upwinded first derivatives (direction chosen per
action drift sign) and central second derivatives; the action sup is taken
over a finite sample of the action set.  Monotonicity under the CFL bound
gives the discrete maximum principle and convergence to the viscosity
solution for continuous terminal data; discontinuous terminal data (e.g.
indicator payoffs) is accepted, with no convergence claim inside the terminal
boundary layer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import ActionSet, ControlProblem, Policy, PolicyKind
from .paths import ValidationError

__all__ = [
    "CflError",
    "HjbGrid",
    "HjbSolution",
    "StateProblem",
    "extract_policy",
    "hamiltonian",
    "solve",
    "to_control_problem",
    "write_csv",
]


class CflError(ValidationError):
    """Explicit-scheme stability bound violated; carries the usable n_t."""

    def __init__(self, message: str, suggested_n_t: int):
        super().__init__(message)
        self.suggested_n_t = suggested_n_t


@dataclass(frozen=True)
class StateProblem:
    """State-dependent specialization: coefficients read the current value only.

    b and sigma take (t, x, a) with x an array of nodes; g takes the node
    array.  All three must broadcast over x.
    """

    x0: float
    T: float
    action_set: ActionSet
    b: Callable          # (t, x_array, a) -> array
    sigma: Callable      # (t, x_array, a) -> array
    g: Callable          # (x_array) -> array


@dataclass(frozen=True)
class HjbGrid:
    x_lo: float
    x_hi: float
    n_x: int
    n_t: int
    boundary: str = "dirichlet"      # "dirichlet" (frozen at g) or "neumann" (zero gradient)

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValidationError(f"need x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]")
        if self.n_x < 3:
            raise ValidationError(f"need n_x >= 3, got {self.n_x}")
        if self.n_t < 1:
            raise ValidationError(f"need n_t >= 1, got {self.n_t}")
        if self.boundary not in ("dirichlet", "neumann"):
            raise ValidationError(f"unknown boundary {self.boundary!r}")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n_x - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n_x)


@dataclass
class HjbSolution:
    times: np.ndarray        # (n_t + 1,)
    xs: np.ndarray           # (n_x,)
    v: np.ndarray            # (n_t + 1, n_x)
    policy: np.ndarray       # (n_t + 1, n_x) argmax actions

    def value_at_start(self, x: float) -> float:
        i = int(np.clip(round((x - self.xs[0]) / (self.xs[1] - self.xs[0])), 0, len(self.xs) - 1))
        return float(self.v[0, i])


def hamiltonian(
    t: float,
    x: float,
    z: float,
    gamma: float,
    problem: StateProblem,
    actions,
) -> tuple[float, float]:
    """sup over the action sample of 1/2 gamma sigma^2 + z b, with its argmax.

    Ties break to the smallest action index, so the extracted feedback map is
    deterministic.
    """
    acts = np.asarray(actions, dtype=float)
    if acts.size == 0:
        raise ValidationError("hamiltonian needs a non-empty action sample")
    best_val, best_a = -math.inf, acts[0]
    for a in acts:
        s = float(problem.sigma(t, x, a))
        val = 0.5 * gamma * s * s + z * float(problem.b(t, x, a))
        if val > best_val:
            best_val, best_a = val, float(a)
    return best_val, best_a


def _coefficient_bounds(problem: StateProblem, grid: HjbGrid, actions) -> tuple[float, float]:
    xs = grid.nodes()
    b_max, s2_max = 0.0, 0.0
    for t in (0.0, 0.5 * problem.T, problem.T):
        for a in actions:
            b = np.abs(np.broadcast_to(problem.b(t, xs, a), xs.shape))
            s = np.broadcast_to(problem.sigma(t, xs, a), xs.shape)
            b_max = max(b_max, float(np.max(b)))
            s2_max = max(s2_max, float(np.max(s * s)))
    return b_max, s2_max


def solve(problem: StateProblem, grid: HjbGrid, actions) -> HjbSolution:
    """Backward explicit sweep from the terminal layer v(T, .) = g.

    Refuses with the required n_t when the monotonicity (CFL) bound
    dt * (max sigma^2 / dx^2 + max |b| / dx) <= 1 fails.
    """
    acts = np.asarray(actions, dtype=float)
    if acts.size == 0:
        raise ValidationError("solve needs a non-empty action sample")
    xs = grid.nodes()
    dx = grid.dx
    dt = problem.T / grid.n_t

    b_max, s2_max = _coefficient_bounds(problem, grid, acts)
    load = s2_max / (dx * dx) + b_max / dx
    if dt * load > 1.0 + 1e-12:
        needed = int(math.ceil(problem.T * load)) + 1
        raise CflError(
            f"explicit scheme unstable: dt*(sigma^2/dx^2 + |b|/dx) = {dt * load:.3f} > 1; "
            f"use n_t >= {needed}",
            suggested_n_t=needed,
        )

    n_t, n_x = grid.n_t, grid.n_x
    times = np.linspace(0.0, problem.T, n_t + 1)
    v = np.empty((n_t + 1, n_x))
    pol = np.empty((n_t + 1, n_x))
    v[n_t] = np.broadcast_to(problem.g(xs), xs.shape)
    if not np.all(np.isfinite(v[n_t])):
        raise ValidationError("terminal payoff produced non-finite node values")

    x_int = xs[1:-1]

    def layer_operator(t, vrow):
        fwd = (vrow[2:] - vrow[1:-1]) / dx
        bwd = (vrow[1:-1] - vrow[:-2]) / dx
        cen = (vrow[2:] - 2.0 * vrow[1:-1] + vrow[:-2]) / (dx * dx)
        best = np.full(n_x - 2, -np.inf)
        best_a = np.empty(n_x - 2)
        for a in acts:
            b = np.broadcast_to(problem.b(t, x_int, a), x_int.shape)
            s = np.broadcast_to(problem.sigma(t, x_int, a), x_int.shape)
            la = b * np.where(b >= 0.0, fwd, bwd) + 0.5 * s * s * cen
            better = la > best
            best = np.where(better, la, best)
            best_a = np.where(better, a, best_a)
        return best, best_a

    _, pol_T = layer_operator(problem.T, v[n_t])
    pol[n_t, 1:-1] = pol_T
    pol[n_t, 0], pol[n_t, -1] = pol[n_t, 1], pol[n_t, -2]

    for n in range(n_t - 1, -1, -1):
        t = times[n]
        lv, la = layer_operator(t, v[n + 1])
        v[n, 1:-1] = v[n + 1, 1:-1] + dt * lv
        if grid.boundary == "dirichlet":
            v[n, 0], v[n, -1] = v[n_t, 0], v[n_t, -1]
        else:
            v[n, 0], v[n, -1] = v[n, 1], v[n, -2]
        pol[n, 1:-1] = la
        pol[n, 0], pol[n, -1] = pol[n, 1], pol[n, -2]

    return HjbSolution(times=times, xs=xs, v=v, policy=pol)


def extract_policy(solution: HjbSolution) -> Policy:
    """Feedback policy a*(nearest grid node), piecewise constant in space-time."""
    times, xs, pol = solution.times, solution.xs, solution.policy
    dt = times[1] - times[0] if len(times) > 1 else 1.0
    dx = xs[1] - xs[0]
    n_t, n_x = len(times) - 1, len(xs)

    def law(t, x):
        i = int(np.clip(round(t / dt), 0, n_t))
        j = int(np.clip(round((x - xs[0]) / dx), 0, n_x - 1))
        return float(pol[i, j])

    return Policy(PolicyKind.FEEDBACK, law, name="hjb-feedback")


def to_control_problem(problem: StateProblem, g_path=None, coeff_bound: float = 1e3) -> ControlProblem:
    """Path-functional wrapper of a state-dependent problem for the MC engine.

    The default payoff reads g at the terminal state; pass g_path to override
    with a full path functional.
    """
    if g_path is None:
        g_path = lambda sol: float(np.asarray(problem.g(np.asarray([sol.X.final]))).reshape(-1)[0])
    return ControlProblem(
        x0=problem.x0,
        T=problem.T,
        action_set=problem.action_set,
        drift=lambda t, xv, a: float(problem.b(t, xv.final, a)),
        diffusion=lambda t, xv, a: float(problem.sigma(t, xv.final, a)),
        g=g_path,
        coeff_bound=coeff_bound,
    )


def write_csv(solution: HjbSolution, path, stride_t: int = 1, stride_x: int = 1) -> None:
    """Dump (t, x, v, a*) rows, optionally strided to keep files reviewable."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "v", "a_star"])
        for i in range(0, len(solution.times), max(stride_t, 1)):
            for j in range(0, len(solution.xs), max(stride_x, 1)):
                w.writerow([
                    repr(float(solution.times[i])),
                    repr(float(solution.xs[j])),
                    repr(float(solution.v[i, j])),
                    repr(float(solution.policy[i, j])),
                ])
