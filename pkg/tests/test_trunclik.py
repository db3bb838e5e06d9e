import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from truncevt.errors import DegenerateWindowError, InconsistencyError, ParameterDomainError
from truncevt.evd import GpParams, gp_cdf, gp_logpdf
from truncevt.trunclik import (
    SamplingWindow,
    TruncatedObservation,
    TruncatedSample,
    log_contribution,
    total_loglik,
    untruncated,
)

EXP1 = GpParams(0.0, 1.0)


def obs(t, x, b, e):
    return TruncatedObservation(t, x, SamplingWindow(b, e))


class TestWindow:
    def test_begin_before_end(self):
        with pytest.raises(ParameterDomainError):
            SamplingWindow(2000.0, 2000.0)
        with pytest.raises(ParameterDomainError):
            SamplingWindow(2001.0, 2000.0)

    def test_half_open(self):
        w = SamplingWindow(1980.0, 2000.0)
        assert w.contains(1980.0)
        assert not w.contains(2000.0)
        assert w.contains(np.nextafter(2000.0, 0))


class TestObservation:
    def test_inclusion_case_a(self):
        o = obs(1995.0, 6.0, 2000.0, 2010.0)
        assert o.left_truncated and o.lower_bound == 5.0 and o.upper_bound == 15.0

    def test_inclusion_case_b(self):
        o = obs(2003.0, 1.0, 2000.0, 2005.0)
        assert not o.left_truncated and o.lower_bound == 0.0 and o.upper_bound == 2.0

    def test_death_before_window(self):
        with pytest.raises(InconsistencyError):
            obs(1990.0, 5.0, 2000.0, 2010.0)

    def test_death_at_window_end_excluded(self):
        with pytest.raises(InconsistencyError):
            obs(2003.0, 2.0, 2000.0, 2005.0)

    def test_negative_excess(self):
        with pytest.raises(InconsistencyError):
            obs(2003.0, -0.1, 2000.0, 2005.0)


class TestLogContribution:
    def test_case_a_hand_value(self):
        # b - t = 1, e - t = 3, x = 2
        got = log_contribution(obs(1999.0, 2.0, 2000.0, 2002.0), EXP1)
        ref = -2 - math.log(math.exp(-1) - math.exp(-3))
        assert got == pytest.approx(ref, rel=1e-14)
        assert got == pytest.approx(-0.8546, abs=1e-4)

    def test_case_b_hand_value(self):
        # t > b, e - t = 2, x = 1
        got = log_contribution(obs(2001.0, 1.0, 2000.0, 2003.0), EXP1)
        ref = -1 - math.log(1 - math.exp(-2))
        assert got == pytest.approx(ref, rel=1e-14)
        assert got == pytest.approx(-0.8546, abs=1e-4)

    def test_case_a_monte_carlo(self):
        # density of x given 1 <= x < 3 near x = 2, via rejection sampling of the scheme
        rng = np.random.default_rng(5)
        x = rng.exponential(1.0, 4_000_000)
        x = x[(x >= 1) & (x < 3)]
        h = 0.05
        dens = np.mean(np.abs(x - 2.0) < h / 2) / h
        se = math.sqrt(dens / (x.size * h))
        ref = math.exp(log_contribution(obs(1999.0, 2.0, 2000.0, 2002.0), EXP1))
        assert abs(dens - ref) < 4 * se + 1e-3

    def test_crossing_at_b_with_wide_window(self):
        o = obs(2000.0, 1.7, 2000.0, 1e9)
        assert log_contribution(o, GpParams(0.0, 1.34)) == pytest.approx(gp_logpdf(GpParams(0.0, 1.34), 1.7), abs=1e-12)

    def test_case_b_unification_exact(self):
        p = GpParams(-0.2, 1.3)
        o = obs(2002.5, 0.8, 2000.0, 2005.0)
        ref = gp_logpdf(p, 0.8) - math.log(gp_cdf(p, 2.5))
        assert log_contribution(o, p) == pytest.approx(ref, rel=1e-14)

    def test_widening_window_tends_to_density(self):
        p = GpParams(0.1, 1.2)
        target = gp_logpdf(p, 2.0)
        gaps = []
        for w in (1.0, 5.0, 20.0, 200.0, 5000.0):
            # b - t = 1/w shrinks to 0 while e - t = 2 + w grows
            t = 2000.0 - 1.0 / w
            o = obs(t, 2.0, 2000.0, t + 2.0 + w)
            gaps.append(abs(log_contribution(o, p) - target))
        assert all(a >= b for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 1e-3

    def test_degenerate_window(self):
        # crossing 3 years before b, endpoint 2: no mass in the window
        with pytest.raises(DegenerateWindowError):
            log_contribution(obs(1997.0, 3.5, 2000.0, 2005.0), GpParams(-0.5, 1.0))

    def test_excess_beyond_endpoint_is_minus_inf(self):
        o = obs(2001.0, 2.5, 2000.0, 2010.0)
        assert log_contribution(o, GpParams(-0.5, 1.0)) == -math.inf

    @given(
        t=st.floats(1900, 2100),
        back=st.floats(0, 10),
        width=st.floats(0.1, 30),
        frac=st.floats(0, 0.999),
        shift=st.floats(-500, 500),
        g=st.floats(-0.3, 0.8),
    )
    def test_translation_invariance(self, t, back, width, frac, shift, g):
        b = t - back
        e = max(b, t) + width
        x = (e - t) * frac if t > b else (back + (e - b) * frac)
        try:
            o1 = obs(t, x, b, e)
            o2 = obs(t + shift, x, b + shift, e + shift)
        except InconsistencyError:
            return
        p = GpParams(g, 1.3)
        try:
            v1 = log_contribution(o1, p)
        except DegenerateWindowError:
            return
        v2 = log_contribution(o2, p)
        if math.isinf(v1):
            assert v1 == v2
        else:
            assert v2 == pytest.approx(v1, rel=1e-6, abs=1e-6)


class TestTotalLoglik:
    def sample(self, n=200, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        while len(out) < n:
            t = rng.uniform(1990, 2010)
            x = rng.exponential(1.34)
            if 2000 <= t + x < 2008:
                out.append(obs(t, x, 2000.0, 2008.0))
        return out

    def test_empty(self):
        with pytest.raises(ParameterDomainError):
            total_loglik([], EXP1)

    def test_single(self):
        o = obs(1999.0, 2.0, 2000.0, 2002.0)
        assert total_loglik([o], EXP1) == log_contribution(o, EXP1)

    def test_duplicated_is_double(self):
        s = self.sample(50)
        p = GpParams(0.05, 1.3)
        assert total_loglik(s + s, p) == pytest.approx(2 * total_loglik(s, p), rel=1e-15)

    def test_sum_of_contributions(self):
        s = self.sample(100)
        p = GpParams(-0.1, 1.4)
        assert total_loglik(s, p) == pytest.approx(math.fsum(log_contribution(o, p) for o in s), rel=1e-13)

    def test_array_and_list_agree(self):
        s = self.sample(100)
        p = GpParams(0.2, 1.1)
        assert total_loglik(TruncatedSample.from_observations(s), p) == total_loglik(s, p)

    @given(st.permutations(list(range(30))))
    def test_exchangeable(self, perm):
        s = self.sample(30, seed=3)
        p = GpParams(0.1, 1.2)
        assert total_loglik([s[i] for i in perm], p) == pytest.approx(total_loglik(s, p), rel=1e-14)

    def test_partitioned_sum_matches(self):
        s = self.sample(300, seed=9)
        p = GpParams(0.0, 1.34)
        parts = [total_loglik(s[i:i + 37], p) for i in range(0, 300, 37)]
        assert math.fsum(parts) == pytest.approx(total_loglik(s, p), abs=1e-9)

    def test_infeasible_point_is_minus_inf(self):
        s = self.sample(50)
        assert total_loglik(s, GpParams(-1.0, 0.5)) == -math.inf

    def test_untruncated_copies(self):
        s = self.sample(20)
        u = untruncated(s)
        p = GpParams(0.0, 1.5)
        assert total_loglik(u, p) == pytest.approx(math.fsum(gp_logpdf(p, [o.excess for o in s])), rel=1e-14)

    def test_maximized_near_truth(self):
        s = TruncatedSample.from_observations(self.sample(5000, seed=4))
        grid = np.linspace(1.2, 1.5, 61)
        best = grid[np.argmax([total_loglik(s, GpParams(0.0, g)) for g in grid])]
        assert abs(best - 1.34) < 0.06
