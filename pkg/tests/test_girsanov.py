import math

import numpy as np
import pytest

from loopgap.engine import (
    ActionInterval,
    ControlProblem,
    EngineError,
    Policy,
    PolicyKind,
    simulate,
)
from loopgap.girsanov import (
    LambdaSpec,
    estimate_quadratic_variation,
    piecewise_constant_projection,
    policy_actions_on_path,
    recover_brownian,
    reweighted_value,
    stochastic_exponential,
)
from loopgap.mc import estimate_value
from loopgap.paths import (
    BrownianPath,
    RngStream,
    SamplePath,
    ValidationError,
    make_tsirelson_grid,
    sample_brownian,
)
from loopgap.tsirelson import closed_loop_tsirelson_policy, make_tsirelson_problem, mu

GRID = make_tsirelson_grid(T=1.0, K=4, r=0.5, m=2)


def drift_problem(g=lambda sol: sol.X.final, sigma=1.0):
    return ControlProblem(
        x0=0.0, T=1.0, action_set=ActionInterval(0.0, 1.0),
        drift=lambda t, x, a: a, diffusion=lambda t, x, a, s=sigma: s, g=g,
    )


class TestStochasticExponential:
    def test_zero_lambda_gives_unit_weight(self):
        b = sample_brownian(GRID, RngStream(1, 0))
        w = stochastic_exponential(np.zeros(GRID.n_steps), b, GRID)
        assert w.weight == 1.0
        assert w.ito_integral_part == 0.0
        assert w.quadratic_part == 0.0

    def test_martingale_mean(self):
        # E[exp(c B_T - c^2 T / 2)] = 1 within 3 standard errors
        c, N = 1.0, 2 * 10**4
        ws = np.empty(N)
        lam = np.full(GRID.n_steps, c)
        for i in range(N):
            ws[i] = stochastic_exponential(lam, sample_brownian(GRID, RngStream(8, i)), GRID).weight
        se = ws.std(ddof=1) / math.sqrt(N)
        assert abs(ws.mean() - 1.0) <= 3.0 * se

    def test_flat_path_weight(self):
        c = 0.7
        flat = SamplePath(GRID.fine_knots, np.zeros(len(GRID.fine_knots)), GRID)
        w = stochastic_exponential(np.full(GRID.n_steps, c), flat, GRID)
        assert w.weight == pytest.approx(math.exp(-c * c / 2.0), rel=1e-12)

    def test_log_decomposition(self):
        b = sample_brownian(GRID, RngStream(2, 5))
        lam = np.linspace(0.0, 1.0, GRID.n_steps)
        w = stochastic_exponential(lam, b, GRID)
        assert w.log_weight == w.ito_integral_part - w.quadratic_part
        assert w.weight > 0.0

    def test_nonfinite_lambda_aborts_with_step(self):
        b = sample_brownian(GRID, RngStream(2, 6))
        lam = np.zeros(GRID.n_steps)
        lam[3] = float("nan")
        with pytest.raises(EngineError, match="step 3"):
            stochastic_exponential(lam, b, GRID)

    def test_opposite_direction_weight(self):
        # drift removal is the negated-lambda exponential: the product of the
        # two weights is exp(-int lambda^2 ds) pathwise
        b = sample_brownian(GRID, RngStream(2, 7))
        lam = np.linspace(0.2, 0.9, GRID.n_steps)
        fwd = stochastic_exponential(lam, b, GRID)
        rev = stochastic_exponential(-lam, b, GRID)
        assert rev.quadratic_part == fwd.quadratic_part
        assert rev.ito_integral_part == -fwd.ito_integral_part
        combined = fwd.log_weight + rev.log_weight
        assert combined == pytest.approx(-2.0 * fwd.quadratic_part, rel=1e-12)


class TestReweightedValue:
    def test_zero_lambda_is_plain_driftless_mc(self):
        lam = LambdaSpec(lambda t, x, a: 0.0, bound=1.0)
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.3)
        rew = reweighted_value(drift_problem(), lam, pol, GRID, 500, 33)
        from dataclasses import replace as drep
        driftless = drep(drift_problem(), drift=lambda t, x, a: 0.0)
        direct = estimate_value(driftless, pol, GRID, 500, 33)
        assert rew.mean == pytest.approx(direct.mean, abs=1e-14)
        assert rew.flags["mean_weight"] == 1.0

    def test_cross_oracle_constant_drift(self):
        # b = a = 1, sigma = 1, g = x_T: reweighted and direct both estimate 1.0
        N = 5000
        lam = LambdaSpec(lambda t, x, a: a, bound=1.0)
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 1.0)
        rew = reweighted_value(drift_problem(), lam, pol, GRID, N, 44)
        direct = estimate_value(drift_problem(), pol, GRID, N, 44)
        tol = 3.0 * math.hypot(rew.stderr, direct.stderr)
        assert abs(rew.mean - direct.mean) <= tol
        assert abs(rew.mean - 1.0) <= 3.0 * rew.stderr

    def test_unit_payoff_mean_weight(self):
        lam = LambdaSpec(lambda t, x, a: a, bound=1.0)
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.8)
        rew = reweighted_value(drift_problem(g=lambda sol: 1.0), lam, pol, GRID, 4000, 55)
        assert abs(rew.mean - 1.0) <= 3.0 * rew.stderr
        assert rew.flags["n_eff"] <= rew.n_paths

    def test_requires_closed_loop(self):
        lam = LambdaSpec(lambda t, x, a: a, bound=1.0)
        pol = Policy(PolicyKind.OPEN_LOOP, lambda t, bv: 1.0)
        with pytest.raises(ValidationError):
            reweighted_value(drift_problem(), lam, pol, GRID, 10, 0)

    def test_lambda_bound_enforced(self):
        lam = LambdaSpec(lambda t, x, a: 5.0, bound=1.0)
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 1.0)
        with pytest.raises(EngineError, match="bound"):
            reweighted_value(drift_problem(), lam, pol, GRID, 10, 0)


class TestProjection:
    def test_constant_policy_unchanged(self):
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.4)
        proj = piecewise_constant_projection(pol, GRID.coarse_knots[:-1])
        sol1 = simulate(drift_problem(), pol, GRID, RngStream(6, 0))
        sol2 = simulate(drift_problem(), proj, GRID, RngStream(6, 0))
        assert np.array_equal(sol1.X.values, sol2.X.values)

    def test_all_fine_knots_is_identity(self):
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.5 * (1 + math.tanh(xv.final)))
        proj = piecewise_constant_projection(pol, GRID.fine_knots[:-1])
        sol1 = simulate(drift_problem(), pol, GRID, RngStream(6, 1))
        sol2 = simulate(drift_problem(), proj, GRID, RngStream(6, 1))
        assert np.array_equal(sol1.X.values, sol2.X.values)
        assert np.array_equal(sol1.alpha.values, sol2.alpha.values)

    def test_weight_gap_shrinks_under_refinement(self):
        # project the drift policy on nested coarse-knot subsets; the L2 gap
        # of the stochastic exponentials decreases as knots densify
        tgrid = make_tsirelson_grid(T=1.0, K=8, r=0.5, m=2)
        tprob = make_tsirelson_problem(tgrid)
        base = closed_loop_tsirelson_policy(tgrid)
        levels = [
            np.concatenate(([0.0], tgrid.coarse_knots[:-1][::4])),
            np.concatenate(([0.0], tgrid.coarse_knots[:-1][::2])),
            np.concatenate(([0.0], tgrid.coarse_knots[:-1])),
        ]
        gaps = []
        N = 300
        for knots in levels:
            proj = piecewise_constant_projection(base, np.unique(knots))
            tot = 0.0
            for i in range(N):
                sol = simulate(
                    ControlProblem(x0=0.0, T=1.0, action_set=ActionInterval(0, 1),
                                   drift=lambda t, x, a: 0.0,
                                   diffusion=lambda t, x, a: 1.0,
                                   g=lambda s: 0.0),
                    base, tgrid, RngStream(61, i))
                a_base = sol.alpha.values[:-1]
                a_proj = policy_actions_on_path(proj, sol.X)
                w_base = stochastic_exponential(a_base, sol.B, tgrid).weight
                w_proj = stochastic_exponential(a_proj, sol.B, tgrid).weight
                tot += (w_base - w_proj) ** 2
            gaps.append(tot / N)
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] == 0.0          # all coarse knots reproduce the drift policy

    def test_empty_knots_rejected(self):
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.4)
        with pytest.raises(ValidationError):
            piecewise_constant_projection(pol, [])


class TestRecoverBrownian:
    def test_pure_noise(self):
        prob = drift_problem()
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.0)
        sol = simulate(prob, pol, GRID, RngStream(71, 0))
        bhat = recover_brownian(sol.X, lambda t, xv: 0.0, lambda t, xv: 1.0, GRID)
        assert np.array_equal(bhat.values, sol.X.values)     # x0 = 0

    def test_tsirelson_drift_machine_precision(self):
        tgrid = make_tsirelson_grid(T=1.0, K=10, r=0.5, m=2)
        tprob = make_tsirelson_problem(tgrid)
        sol = simulate(tprob, closed_loop_tsirelson_policy(tgrid), tgrid, RngStream(71, 1))
        bhat = recover_brownian(sol.X, lambda t, xv: mu(t, xv), lambda t, xv: 1.0, tgrid)
        assert np.max(np.abs(bhat.values - sol.B.values)) <= 1e-12

    def test_scaled_sigma_halves_increments(self):
        prob = drift_problem(sigma=2.0)
        pol = Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.25)
        sol = simulate(prob, pol, GRID, RngStream(71, 2))
        bhat = recover_brownian(sol.X, lambda t, xv: 0.25, lambda t, xv: 2.0, GRID)
        dX = np.diff(sol.X.values)
        centered = dX - 0.25 * GRID.step_sizes()
        assert np.allclose(bhat.increments, centered / 2.0, rtol=0, atol=1e-15)

    def test_round_trip_bit_exact(self):
        tgrid = make_tsirelson_grid(T=1.0, K=10, r=0.5, m=2)
        tprob = make_tsirelson_problem(tgrid)
        pol = closed_loop_tsirelson_policy(tgrid)
        sol = simulate(tprob, pol, tgrid, RngStream(71, 3))
        bhat = recover_brownian(sol.X, lambda t, xv: mu(t, xv), lambda t, xv: 1.0, tgrid)
        resim = simulate(tprob, pol, tgrid, None, brownian=bhat)
        assert np.max(np.abs(resim.X.values - sol.X.values)) <= 1e-13

    def test_singular_sigma_aborts(self):
        sol = simulate(drift_problem(), Policy(PolicyKind.CLOSED_LOOP, lambda t, xv: 0.0),
                       GRID, RngStream(71, 4))
        with pytest.raises(EngineError, match="singular"):
            recover_brownian(sol.X, lambda t, xv: 0.0, lambda t, xv: 0.0, GRID)


class TestQuadraticVariation:
    def test_scaled_brownian(self):
        # realized variance of X = c B concentrates at c^2
        c, window = 2.0, 200
        g = make_tsirelson_grid(T=1.0, K=6, r=0.5, m=40)
        b = sample_brownian(g, RngStream(81, 0))
        x = SamplePath(g.fine_knots, c * b.values, g)
        est = estimate_quadratic_variation(x, window)
        assert abs(est.final - c * c) <= 5.0 * math.sqrt(2.0 / window) * c * c

    def test_unit_brownian(self):
        window = 200
        g = make_tsirelson_grid(T=1.0, K=6, r=0.5, m=40)
        b = sample_brownian(g, RngStream(81, 1))
        est = estimate_quadratic_variation(b, window)
        assert abs(est.final - 1.0) <= 5.0 * math.sqrt(2.0 / window)

    def test_deterministic_linear_path_vanishes(self):
        g = make_tsirelson_grid(T=1.0, K=4, r=0.5, m=4)
        x = SamplePath(g.fine_knots, 3.0 * g.fine_knots, g)
        est = estimate_quadratic_variation(x, 10)
        # drift contributes O(dt) to realized variance
        assert est.final <= 9.0 * np.max(g.step_sizes())

    def test_output_shape(self):
        g = make_tsirelson_grid(T=1.0, K=4, r=0.5, m=2)
        b = sample_brownian(g, RngStream(81, 2))
        est = estimate_quadratic_variation(b, 5)
        assert len(est) == len(g.fine_knots)
        assert est.values[0] == est.values[1]
