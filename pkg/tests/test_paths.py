import numpy as np
import pytest

from loopgap.paths import (
    RngStream,
    SamplePath,
    ValidationError,
    increment_quotient,
    make_tsirelson_grid,
    sample_brownian,
)


class TestMakeTsirelsonGrid:
    def test_basic_example(self):
        g = make_tsirelson_grid(T=1.0, K=2, r=0.5, m=1)
        assert np.array_equal(g.coarse_knots, [0.25, 0.5, 1.0])
        assert np.array_equal(g.fine_knots, [0.0, 0.125, 0.25, 0.5, 1.0])

    def test_k1_rejected(self):
        with pytest.raises(ValidationError):
            make_tsirelson_grid(T=1.0, K=1, r=0.5, m=1)

    def test_deeper_grid(self):
        g = make_tsirelson_grid(T=2.0, K=3, r=0.5, m=2)
        assert g.coarse_knots[0] == 0.25
        inside = g.fine_knots[(g.fine_knots >= 1.0) & (g.fine_knots <= 2.0)]
        assert np.array_equal(inside, [1.0, 1.5, 2.0])

    @pytest.mark.parametrize("bad", [dict(T=0.0), dict(T=-1.0), dict(r=0.0), dict(r=1.0), dict(m=0)])
    def test_rejects_bad_params(self, bad):
        kw = dict(T=1.0, K=3, r=0.5, m=1)
        kw.update(bad)
        with pytest.raises(ValidationError):
            make_tsirelson_grid(**kw)

    @pytest.mark.parametrize("K,r,m", [(2, 0.5, 1), (5, 0.5, 3), (8, 0.3, 2), (20, 0.5, 4)])
    def test_nesting_exact(self, K, r, m):
        g = make_tsirelson_grid(T=1.0, K=K, r=r, m=m)
        fine = set(g.fine_knots.tolist())
        for t in g.coarse_knots:
            assert t in fine
        assert np.all(np.diff(g.fine_knots) > 0)
        assert g.fine_knots[0] == 0.0
        assert g.fine_knots[-1] == g.horizon
        assert np.array_equal(g.fine_knots[g.coarse_fine_idx], g.coarse_knots)

    def test_euler_step_bound(self):
        g = make_tsirelson_grid(T=1.0, K=20, r=0.5, m=4)
        assert g.euler_step <= g.coarse_knots[1] - g.coarse_knots[0]

    def test_coarse_interval_lookup(self):
        g = make_tsirelson_grid(T=1.0, K=2, r=0.5, m=1)
        assert g.coarse_interval(0.1) == -1      # stub
        assert g.coarse_interval(0.25) == 0
        assert g.coarse_interval(0.3) == 0
        assert g.coarse_interval(0.5) == 1
        assert g.coarse_interval(0.999) == 1
        with pytest.raises(ValidationError):
            g.coarse_interval(1.0)


class TestSamplePath:
    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            SamplePath([0.0, 1.0], [1.0, 2.0, 3.0])

    def test_value_at_holds_previous_knot(self):
        p = SamplePath([0.0, 0.5, 1.0], [10.0, 20.0, 30.0])
        assert p.value_at(0.0) == 10.0
        assert p.value_at(0.4999) == 10.0
        assert p.value_at(0.5) == 20.0
        assert p.value_at(0.75) == 20.0
        assert p.value_at(1.0) == 30.0

    def test_truncated_is_view(self):
        p = SamplePath([0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
        q = p.truncated(1)
        assert len(q) == 2
        assert q.values.base is not None
        assert q.final == 2.0

    def test_knot_index_rejects_non_knot(self):
        p = SamplePath([0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValidationError):
            p.knot_index(0.3)


class TestSampleBrownian:
    def test_starts_at_zero(self):
        g = make_tsirelson_grid(T=1.0, K=3, r=0.5, m=2)
        b = sample_brownian(g, RngStream(7, 0))
        assert b.values[0] == 0.0

    def test_deterministic(self):
        g = make_tsirelson_grid(T=1.0, K=3, r=0.5, m=2)
        b1 = sample_brownian(g, RngStream(7, 3))
        b2 = sample_brownian(g, RngStream(7, 3))
        assert np.array_equal(b1.values, b2.values)

    def test_streams_differ(self):
        g = make_tsirelson_grid(T=1.0, K=3, r=0.5, m=2)
        b1 = sample_brownian(g, RngStream(7, 0))
        b2 = sample_brownian(g, RngStream(7, 1))
        assert not np.array_equal(b1.values, b2.values)

    def test_terminal_variance(self):
        # law-of-large-numbers oracle: Var(B_T) = T within 3*sqrt(2/N)*T
        g = make_tsirelson_grid(T=1.0, K=4, r=0.5, m=1)
        N = 10**5
        seed = 2024
        finals = np.empty(N)
        for i in range(N):
            finals[i] = sample_brownian(g, RngStream(seed, i)).final
        var = np.var(finals, ddof=1)
        assert abs(var - 1.0) <= 3.0 * np.sqrt(2.0 / N)

    def test_increment_variances(self):
        g = make_tsirelson_grid(T=1.0, K=2, r=0.5, m=2)
        N = 4000
        incs = np.empty((N, g.n_steps))
        for i in range(N):
            incs[i] = np.diff(sample_brownian(g, RngStream(99, i)).values)
        v = incs.var(axis=0, ddof=1)
        dts = g.step_sizes()
        assert np.all(np.abs(v - dts) <= 5.0 * np.sqrt(2.0 / N) * dts)

    def test_vector_dimension(self):
        g = make_tsirelson_grid(T=1.0, K=2, r=0.5, m=1)
        b = sample_brownian(g, RngStream(1, 0), d=3)
        assert b.dim == 3
        assert b.values.shape == (len(g.fine_knots), 3)
        assert np.all(b.values[0] == 0.0)


class TestIncrementQuotient:
    def test_basic(self):
        p = SamplePath([0.0, 0.5, 1.0], [0.0, 0.0, 1.0])
        assert increment_quotient(p, 0.5, 1.0) == 2.0

    def test_constant_path(self):
        p = SamplePath([0.0, 0.5, 1.0], [3.0, 3.0, 3.0])
        assert increment_quotient(p, 0.0, 1.0) == 0.0

    def test_linear_path(self):
        knots = np.linspace(0.0, 1.0, 9)
        p = SamplePath(knots, 2.5 * knots)
        for i in range(len(knots) - 1):
            for j in range(i + 1, len(knots)):
                q = increment_quotient(p, knots[i], knots[j])
                assert q == pytest.approx(2.5, rel=1e-12)

    def test_rejects_bad_order_and_non_knots(self):
        p = SamplePath([0.0, 0.5, 1.0], [0.0, 1.0, 2.0])
        with pytest.raises(ValidationError):
            increment_quotient(p, 0.5, 0.5)
        with pytest.raises(ValidationError):
            increment_quotient(p, 1.0, 0.5)
        with pytest.raises(ValidationError):
            increment_quotient(p, 0.2, 1.0)

    def test_vector_path_quotient(self):
        p = SamplePath([0.0, 0.5, 1.0], [[0.0, 0.0], [1.0, 2.0], [2.0, 4.0]])
        q = increment_quotient(p, 0.0, 0.5)
        assert np.array_equal(q, [2.0, 4.0])
        assert p.value_at(0.75).tolist() == [1.0, 2.0]
