import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from truncevt.dataio import default_records_path
from truncevt.diagnostics import qq_bend
from truncevt.errors import BudgetError, ParameterDomainError
from truncevt.evd import GpParams
from truncevt.simkit import (
    ALIVE_AT_B_SCENARIO,
    RAMP_SCENARIO,
    STATIONARY_SCENARIO,
    SchemeScenario,
    _arrival_times,
    calibration_study,
    null_generator,
    power_survival_increase,
    rep_generators,
    simulate_arrays,
    simulate_sample,
    simulate_scheme,
    simulate_yearly_counts,
    write_idl_fixture,
)
from truncevt.trunclik import SamplingWindow


class TestScenario:
    def test_validation(self):
        w = SamplingWindow(0.0, 1.0)
        with pytest.raises(ParameterDomainError):
            SchemeScenario(GpParams(0, 1), w, scheme="other")
        with pytest.raises(ParameterDomainError):
            SchemeScenario(GpParams(0, 1), w, rate=0)
        with pytest.raises(ParameterDomainError):
            SchemeScenario(GpParams(0, 1), w, growth=-1)
        with pytest.raises(ParameterDomainError):
            SchemeScenario(GpParams(0, 1), SamplingWindow(-math.inf, 1.0)).span

    def test_with_seed(self):
        assert STATIONARY_SCENARIO.with_seed(7).seed == 7

    def test_arrival_times_follow_linear_intensity(self, rng):
        t = _arrival_times(RAMP_SCENARIO, rng.random(20_000))
        start, stop = RAMP_SCENARIO.span
        g, d = RAMP_SCENARIO.growth, stop - start

        def cdf(v):
            tau = np.clip(np.asarray(v) - start, 0, d)
            return (tau + 0.5 * g * tau**2) / (d + 0.5 * g * d**2)

        assert stats.kstest(t, cdf).pvalue > 1e-3


class TestSchemes:
    def test_infinite_window_is_plain_gp(self):
        s = SchemeScenario(GpParams(0.1, 1.3), SamplingWindow(-math.inf, math.inf))
        _, x = simulate_arrays(s, 10_000, seed=1)
        assert stats.kstest(x, stats.genpareto(0.1, scale=1.3).cdf).pvalue > 1e-3

    def test_inclusion_rules(self):
        for s in (RAMP_SCENARIO, ALIVE_AT_B_SCENARIO, STATIONARY_SCENARIO):
            t, x = simulate_arrays(s, 2000, seed=2)
            d = t + x
            assert np.all((d >= s.window.begin) & (d < s.window.end))
            if s.scheme == "alive-at-b-dead-by-e":
                assert np.all(t <= s.window.begin)

    def test_stationary_excesses_are_unconditional(self):
        # constant intensity, burn-in past the support: sampled excesses follow f
        _, x = simulate_arrays(STATIONARY_SCENARIO, 10_000, seed=3)
        assert stats.kstest(x, stats.expon(scale=1.34).cdf).pvalue > 1e-3

    def test_alive_at_b_length_bias(self):
        # density proportional to min(x, e - b) exp(-x / sigma)
        L, sig = 3.5, 1.34
        _, x = simulate_arrays(ALIVE_AT_B_SCENARIO, 10_000, seed=4)
        head = lambda u: sig**2 - sig * np.exp(-u / sig) * (u + sig)
        z = head(L) + L * sig * math.exp(-L / sig)

        def cdf(v):
            u = np.asarray(v, float)
            tail = head(L) + L * sig * (math.exp(-L / sig) - np.exp(-u / sig))
            return np.where(u <= L, head(np.minimum(u, L)), tail) / z

        assert cdf(1e6) == pytest.approx(1.0)
        assert z == pytest.approx(integrate.quad(lambda v: min(v, L) * math.exp(-v / sig), 0, 60, points=[L])[0])
        assert stats.kstest(x, cdf).pvalue > 1e-3

    def test_deterministic(self):
        a = simulate_scheme(RAMP_SCENARIO, 300, seed=9)
        b = simulate_scheme(RAMP_SCENARIO, 300, seed=9)
        c = simulate_scheme(RAMP_SCENARIO, 300, seed=10)
        assert a == b and a != c
        assert simulate_scheme(RAMP_SCENARIO.with_seed(9), 300) == a

    def test_poisson_count(self):
        s = STATIONARY_SCENARIO
        n = [len(simulate_arrays(s, None, seed=i)[0]) for i in range(20)]
        # included lives per unit time equal the crossing rate
        assert abs(np.mean(n) - s.rate * (s.window.end - s.window.begin)) < 4 * math.sqrt(1000 / 20)

    def test_zero_and_negative_target(self):
        assert simulate_arrays(RAMP_SCENARIO, 0)[0].size == 0
        with pytest.raises(ParameterDomainError):
            simulate_arrays(RAMP_SCENARIO, -1)

    def test_budget(self):
        s = SchemeScenario(GpParams(0.0, 1.0), SamplingWindow(0.0, 1e-9), arrival_span=(-50.0, 0.0))
        with pytest.raises(BudgetError):
            simulate_arrays(s, 10, seed=0)

    def test_rep_streams_stable(self):
        a = [g.random() for g in rep_generators(5, 3)]
        b = [g.random() for g in rep_generators(5, 10)][:3]
        assert a == b and len(set(a)) == 3


class TestQqBend:
    def test_alive_at_b_bends_down(self):
        alive = [qq_bend(simulate_sample(ALIVE_AT_B_SCENARIO, 500, seed=s).excess) for s in range(10)]
        flat = [qq_bend(simulate_sample(STATIONARY_SCENARIO, 500, seed=s).excess) for s in range(10)]
        assert max(alive) < 0
        assert np.mean(alive) < np.mean(flat) - 0.5


class TestPower:
    def test_large_effect(self):
        r = power_survival_increase(1.34, 200, 0.30, reps=40, seed=1)
        assert r.power == 1.0 and r.failures == 0
        assert r.survival_new == pytest.approx(math.exp(-1 / 1.34) + 0.30)

    def test_no_effect_near_level(self):
        r = power_survival_increase(1.34, 200, 0.0, reps=400, seed=2)
        assert 0.02 <= r.power <= 0.09

    def test_monotone_in_delta(self):
        p = [power_survival_increase(1.34, 300, d, reps=200, seed=3).power for d in (0.0, 0.05, 0.1)]
        assert p[0] <= p[1] <= p[2]

    def test_with_scheme(self):
        r = power_survival_increase(1.34, 150, 0.2, reps=20, seed=4, scenario=STATIONARY_SCENARIO)
        assert r.power > 0.8

    def test_errors(self):
        with pytest.raises(ParameterDomainError):
            power_survival_increase(1.34, 100, 0.6)
        with pytest.raises(ParameterDomainError):
            power_survival_increase(1.34, 100, -0.1)
        with pytest.raises(ParameterDomainError):
            power_survival_increase(1.34, 100, 0.1, level=1.0)
        with pytest.raises(ParameterDomainError):
            power_survival_increase(1.34, 100, 0.1, reps=0)


class TestCalibration:
    def test_single_rep(self):
        out = calibration_study(null_generator(STATIONARY_SCENARIO, 100), "lr_exponential", reps=1)
        assert out.ks is None and out.p_values.size == 1

    def test_deterministic_summary(self):
        gen = null_generator(STATIONARY_SCENARIO, 80, groups=2)
        a = json.dumps(calibration_study(gen, "lr_groups_exp", reps=20, seed=3).summary(), sort_keys=True)
        b = json.dumps(calibration_study(gen, "lr_groups_exp", reps=20, seed=3).summary(), sort_keys=True)
        assert a == b

    def test_failure_budget(self):
        from truncevt.errors import ConvergenceError

        def broken(_data):
            raise ConvergenceError("always")

        with pytest.raises(BudgetError):
            calibration_study(null_generator(STATIONARY_SCENARIO, 10), broken, reps=5)

    def test_float_results(self):
        out = calibration_study(lambda rng: rng.random(), lambda u: float(u), reps=500, seed=1)
        assert out.ks < 0.07 and 0.02 < out.size() < 0.08


class TestYearlyCounts:
    def test_deterministic(self):
        f = lambda t: 3 + 0.1 * (t - 1980)
        assert simulate_yearly_counts(range(1980, 1990), f, seed=1) == simulate_yearly_counts(range(1980, 1990), f, seed=1)


class TestFixtureGenerator:
    def test_regenerates_bundled_file(self, tmp_path):
        path = write_idl_fixture(tmp_path)
        assert path.read_bytes() == default_records_path().read_bytes()
        bundled = json.loads((default_records_path().parent / "idl_synthetic_manifest.json").read_text())
        assert json.loads((tmp_path / "idl_synthetic_manifest.json").read_text()) == bundled
