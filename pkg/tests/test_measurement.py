"""
Tests for telegraph traces, single-shot readout histograms, the Zeno survival
formulas and laser-induced Rabi damping.
"""

import numpy as np
import pytest
from scipy import stats

from nvsim.measurement import (
    DampingPoint,
    ZenoParams,
    dwell_times,
    fit_readout,
    jump_trace,
    rabi_damping_point,
    rabi_damping_vs_power,
    readout_fidelity,
    readout_histogram,
    stationary_bright_fraction,
    zeno_survival_continuous,
    zeno_survival_discrete,
)
from nvsim.nv_model import PhotophysicsRates
from nvsim.util.errors import ValidationError
from nvsim.util.protocol import FitModel, SpinState

RATES = PhotophysicsRates.low_temperature()


# ═══════════════════════════════════════════════════════════════════
# Telegraph traces
# ═══════════════════════════════════════════════════════════════════


class TestJumpTrace:

    def test_same_seed_same_trace(self):
        a = jump_trace(RATES, seed=7, flip_rates=(10.0, 5.0))
        b = jump_trace(RATES, seed=7, flip_rates=(10.0, 5.0))
        np.testing.assert_array_equal(a["counts"], b["counts"])
        assert a.metadata["switch_times"] == b.metadata["switch_times"]

    def test_no_flips_stays_bright(self):
        trace = jump_trace(RATES, seed=1, flip_rates=(0.0, 0.0))
        assert trace.metadata["switch_times"] == []
        assert np.all(trace["state"] == SpinState.BRIGHT.value)
        assert trace["counts"].mean() == pytest.approx(75.0, rel=0.02)

    def test_bins(self):
        trace = jump_trace(RATES, duration=1.0, bin=5e-3, seed=3)
        assert trace.times.size == 200
        assert trace.bin == 5e-3
        assert trace.seed == 3
        np.testing.assert_allclose(trace["rate_cps"], trace["counts"] / 5e-3)

    def test_bright_fraction_matches_rates(self):
        trace = jump_trace(RATES, duration=1000.0, seed=11, flip_rates=(10.0, 5.0))
        fraction = np.mean(trace["state"] == SpinState.BRIGHT.value)
        assert fraction == pytest.approx(stationary_bright_fraction((10.0, 5.0)), abs=0.03)
        assert stationary_bright_fraction((10.0, 5.0)) == pytest.approx(1.0 / 3.0)

    def test_dwell_times_are_exponential(self):
        trace = jump_trace(RATES, duration=500.0, seed=5, flip_rates=(10.0, 5.0))
        bright = dwell_times(trace)[SpinState.BRIGHT]
        assert bright.size > 1000
        assert stats.kstest(bright, "expon", args=(0, 1.0 / 10.0)).pvalue > 0.01

    def test_derived_flip_rates_recorded(self):
        trace = jump_trace(RATES, duration=1.0, seed=2, laser_power=1e6)
        k_bd, k_db = trace.metadata["flip_rates"]
        assert k_db == pytest.approx(RATES.r_slr)
        assert k_bd > 0

    @pytest.mark.parametrize("kwargs", [
        {"bin": 0.0},
        {"duration": 1e-3},
        {"bright_cps": 100.0, "dark_cps": 200.0},
        {"flip_rates": (-1.0, 1.0)},
    ])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValidationError):
            jump_trace(RATES, seed=1, **kwargs)


# ═══════════════════════════════════════════════════════════════════
# Readout
# ═══════════════════════════════════════════════════════════════════


class TestReadout:

    def test_histogram_totals(self):
        h = readout_histogram(n_windows=2000, seed=4)
        assert h.total == 2000
        assert h.bin_edges.size == h.frequencies.size + 1
        assert h.acquisition_bin == 5e-3

    def test_same_seed_same_histogram(self):
        a = readout_histogram(n_windows=2000, seed=9)
        b = readout_histogram(n_windows=2000, seed=9)
        np.testing.assert_array_equal(a.frequencies, b.frequencies)

    def test_default_fidelity(self):
        result = readout_fidelity(readout_histogram(seed=1))
        assert result.resolved
        assert not result.fallback
        assert result.fidelity == pytest.approx(0.95, abs=0.02)
        assert result.wing_ratio < 0.05
        assert 5.0 < result.threshold < 75.0

    def test_fit_recovers_components(self):
        fit = fit_readout(readout_histogram(seed=2))
        assert fit.dark_mean == pytest.approx(5.0, rel=0.1)
        assert fit.bright_mean == pytest.approx(75.0, rel=0.02)
        assert fit.dark_weight == pytest.approx(0.05, abs=0.01)

    def test_gaussian_model(self):
        result = readout_fidelity(readout_histogram(seed=3), FitModel.GAUSSIAN)
        assert result.resolved
        assert result.fidelity > 0.9

    def test_identical_rates_unresolved(self):
        h = readout_histogram(n_windows=2000, bright_cps=1000.0, dark_cps=1000.0, seed=6)
        result = readout_fidelity(h)
        assert not result.resolved
        assert result.fidelity <= 0.6

    def test_continuous_flips_fill_between_peaks(self):
        stepped = readout_histogram(seed=8)
        smeared = readout_histogram(seed=8, flip_rate=10.0)
        middle = slice(25, 55)
        assert smeared.frequencies[middle].sum() > stepped.frequencies[middle].sum()

    @pytest.mark.parametrize("kwargs", [
        {"n_windows": 0},
        {"bin": -1.0},
        {"flip_probability": 1.5},
        {"bright_cps": 10.0, "dark_cps": 20.0},
    ])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValidationError):
            readout_histogram(seed=1, **kwargs)


# ═══════════════════════════════════════════════════════════════════
# Zeno effect
# ═══════════════════════════════════════════════════════════════════


class TestZeno:

    def test_reference_value(self):
        z = ZenoParams(1.0, 1.0, 4)
        assert zeno_survival_discrete(z) == pytest.approx(0.7931, abs=1e-4)
        assert zeno_survival_continuous(z) == pytest.approx(0.8033, abs=1e-4)

    def test_survival_grows_with_measurements(self):
        values = [zeno_survival_discrete(ZenoParams(1.0, 1.0, n)) for n in range(2, 1001)]
        assert np.all(np.diff(values) > 0)
        assert values[-1] < 1.0

    def test_continuous_limit(self):
        for n in (100, 300, 1000):
            z = ZenoParams(1.0, 1.0, n)
            assert abs(zeno_survival_discrete(z) - zeno_survival_continuous(z)) < 1e-3

    def test_no_coupling_survives(self):
        assert zeno_survival_discrete(ZenoParams(0.0, 1.0, 3)) == pytest.approx(1.0)

    def test_single_measurement_out_of_range(self):
        with pytest.raises(ValidationError):
            zeno_survival_discrete(ZenoParams(1.0, 1.0, 1))

    @pytest.mark.parametrize("args", [(1.0, 1.0, 0), (1.0, 1.0, 2.5), (-1.0, 1.0, 4), (3.0, 1.0, 2)])
    def test_invalid_params(self, args):
        with pytest.raises(ValidationError):
            ZenoParams(*args)


# ═══════════════════════════════════════════════════════════════════
# Rabi damping
# ═══════════════════════════════════════════════════════════════════


@pytest.fixture(scope="module")
def saturated_points():
    return rabi_damping_vs_power([5e8, 1e9])


class TestRabiDamping:

    def test_intrinsic_damping_without_laser(self):
        point = rabi_damping_point(0.0)
        assert isinstance(point, DampingPoint)
        assert point.mode_rate == pytest.approx(1e5, rel=0.02)

    def test_fitted_rate_tracks_mode_rate(self):
        point = rabi_damping_point(2e5)
        assert not point.flagged
        assert point.rate == pytest.approx(point.mode_rate, rel=0.1)

    def test_linear_at_low_power(self):
        powers = np.linspace(1e5, 1e6, 5)
        rates = np.array([rabi_damping_point(w).mode_rate for w in powers])
        slope, offset = np.polyfit(powers, rates, 1)
        residual = rates - (slope * powers + offset)
        assert slope > 0
        assert np.max(np.abs(residual)) < 0.05 * np.ptp(rates)

    def test_saturation(self, saturated_points):
        low, high = saturated_points
        assert high.mode_rate / low.mode_rate < 1.5

    def test_powers_must_ascend(self):
        with pytest.raises(ValidationError):
            rabi_damping_vs_power([1e6, 1e5])

    def test_powers_non_negative(self):
        with pytest.raises(ValidationError):
            rabi_damping_vs_power([-1.0, 1e5])

    def test_empty_powers(self):
        with pytest.raises(ValidationError):
            rabi_damping_vs_power([])
