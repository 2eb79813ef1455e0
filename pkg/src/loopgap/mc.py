"""Monte Carlo value estimation, policy-family envelopes, and uniformity tests.

A family envelope is the max of per-member estimates under common random
numbers.  It is always a finite-family LOWER BOUND on the corresponding value
sup; reports carry that label because no finite family certifies a supremum
over all noise-adapted controls.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import ControlProblem, EngineError, Policy, payoff, simulate
from .paths import RngStream, TimeGrid, ValidationError

__all__ = [
    "EnvelopeResult",
    "PolicyFamily",
    "ValueEstimate",
    "estimate_value",
    "ks_uniformity_test",
    "value_envelope",
]

Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class ValueEstimate:
    """Sample mean of the payoff with normal-approximation error bars."""

    mean: float
    stderr: float
    n_paths: int
    ci95: tuple
    master_seed: int
    flags: dict = field(default_factory=dict)

    @staticmethod
    def from_samples(samples: np.ndarray, master_seed: int, flags: dict | None = None) -> "ValueEstimate":
        n = len(samples)
        mean = float(np.mean(samples))
        stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return ValueEstimate(
            mean=mean,
            stderr=stderr,
            n_paths=n,
            ci95=(mean - Z95 * stderr, mean + Z95 * stderr),
            master_seed=master_seed,
            flags=dict(flags or {}),
        )


@dataclass(frozen=True)
class PolicyFamily:
    """A finite, single-kind list of (label, Policy) members."""

    name: str
    members: tuple

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValidationError("policy family needs at least one member")
        kinds = {p.kind for _, p in self.members}
        if len(kinds) != 1:
            raise ValidationError(
                f"family {self.name!r} mixes policy kinds {sorted(k.value for k in kinds)}; "
                "an envelope bounds the value of exactly one control class"
            )

    @property
    def kind(self):
        return self.members[0][1].kind


@dataclass(frozen=True)
class EnvelopeResult:
    """Envelope over a family: an explicit lower bound on the value sup."""

    family: str
    best_label: str
    best: ValueEstimate
    per_member: tuple          # ((label, ValueEstimate), ...)
    note: str = "finite-family lower bound on the sup; not the sup itself"


def _map_indexed(fn, n: int, threads: int = 1) -> list:
    """Deterministic map of fn over range(n): results gathered by index."""
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def estimate_value(
    problem: ControlProblem,
    policy: Policy,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    threads: int = 1,
) -> ValueEstimate:
    """Plain MC mean of the payoff over streams 0..n_paths-1."""
    if n_paths < 2:
        raise ValidationError(f"need n_paths >= 2, got {n_paths}")

    def one(i: int):
        try:
            sol = simulate(problem, policy, grid, RngStream(master_seed, i))
            return payoff(problem, sol), sol.clamp_violations
        except EngineError as e:
            raise EngineError(f"path {i} (seed {master_seed}): {e}") from e

    rows = _map_indexed(one, n_paths, threads)
    samples = np.array([r[0] for r in rows])
    clamps = int(sum(r[1] for r in rows))
    return ValueEstimate.from_samples(samples, master_seed, {"clamp_violations": clamps})


def value_envelope(
    problem: ControlProblem,
    family: PolicyFamily,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    threads: int = 1,
) -> EnvelopeResult:
    """Estimate every member under common random numbers and report the max.

    All members see the identical streams (same master_seed, same indices),
    which makes member comparisons low-variance and the envelope monotone
    under family extension.
    """
    per_member = []
    best_idx = 0
    for idx, (label, pol) in enumerate(family.members):
        est = estimate_value(problem, pol, grid, n_paths, master_seed, threads)
        per_member.append((label, est))
        if est.mean > per_member[best_idx][1].mean:
            best_idx = idx
    best_label, best = per_member[best_idx]
    return EnvelopeResult(
        family=family.name,
        best_label=best_label,
        best=best,
        per_member=tuple(per_member),
    )


def ks_uniformity_test(samples) -> tuple[float, bool]:
    """One-sample Kolmogorov-Smirnov statistic against Uniform[0, 1).

    Rejects at the 1% level iff D_n > 1.63 / sqrt(n) (asymptotic critical
    value).  Requires n >= 100 so the asymptotic rule applies.
    """
    u = np.sort(np.asarray(samples, dtype=float))
    n = len(u)
    if n < 100:
        raise ValidationError(f"KS uniformity test needs n >= 100, got {n}")
    if u[0] < 0.0 or u[-1] >= 1.0:
        raise ValidationError("samples must lie in [0, 1)")
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - u)
    d_minus = np.max(u - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    return d, bool(d > 1.63 / np.sqrt(n))
