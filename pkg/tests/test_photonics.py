"""
Tests for g2 antibunching, the EIT lambda system, dressed states and
dark-state polariton storage.
"""

from dataclasses import replace

import numpy as np
import pytest

from nvsim.photonics import (
    EmitterModel,
    LambdaSystem,
    dressed_states,
    eit_feature,
    eit_probe_spectrum,
    g2_curve,
    group_velocity_compression,
    linear_ramp,
    polariton,
    retrieval_sweep,
    storage_sweep,
    zpl_photon_rate,
)
from nvsim.util.errors import ValidationError
from nvsim.util.protocol import Presentation


# ═══════════════════════════════════════════════════════════════════
# g2
# ═══════════════════════════════════════════════════════════════════


class TestG2:

    def test_antibunching_at_zero_delay(self):
        curve = g2_curve(EmitterModel.nv(), 5e7, (-200.0, 200.0, 801))
        zero = int(np.argmin(np.abs(curve.axis)))
        assert curve.values[zero] == 0.0
        assert curve.axis_name == "delay_ns"

    def test_symmetric_in_delay(self):
        curve = g2_curve(EmitterModel.nv(), 5e7, (-200.0, 200.0, 801))
        np.testing.assert_allclose(curve.values, curve.values[::-1], atol=1e-12)

    def test_long_delay_limit(self):
        curve = g2_curve(EmitterModel.nv(), 5e7, (-3000.0, 3000.0, 1201))
        assert curve.values[-1] == pytest.approx(1.0, abs=1e-3)
        assert curve.values[0] == pytest.approx(1.0, abs=1e-3)

    def test_shelving_gives_bunching(self):
        curve = g2_curve(EmitterModel.ne8(), 5e7, (-500.0, 500.0, 1001))
        assert curve.values.max() > 1.0

    def test_two_level_rise_is_monotonic(self):
        curve = g2_curve(EmitterModel(lifetime=10.0), 5e7, (0.0, 200.0, 401))
        assert np.all(np.diff(curve.values) >= -1e-9)
        assert curve.values.max() <= 1.0 + 1e-6

    def test_rate_rescaling(self):
        base = g2_curve(EmitterModel.nv(), 5e7, (-200.0, 200.0, 401))
        fast_model = replace(EmitterModel.nv(), lifetime=6.5, isc_rate=2e7, shelf_lifetime=166.5)
        fast = g2_curve(fast_model, 1e8, (-100.0, 100.0, 401))
        np.testing.assert_allclose(fast.values, base.values, atol=1e-6)

    def test_tau_range_must_span_zero(self):
        with pytest.raises(ValidationError):
            g2_curve(EmitterModel.nv(), 5e7, (10.0, 100.0, 91))

    def test_pump_must_be_positive(self):
        with pytest.raises(ValidationError):
            g2_curve(EmitterModel.nv(), 0.0)

    def test_invalid_emitter(self):
        with pytest.raises(ValidationError):
            EmitterModel(lifetime=-1.0)
        with pytest.raises(ValidationError):
            EmitterModel(lifetime=5.0, debye_waller=1.5)

    def test_zpl_rate(self):
        nv = zpl_photon_rate(EmitterModel.nv(), 5e7)
        ne8 = zpl_photon_rate(EmitterModel.ne8(), 5e7)
        assert 0 < nv < ne8


# ═══════════════════════════════════════════════════════════════════
# EIT
# ═══════════════════════════════════════════════════════════════════


@pytest.fixture(scope="module")
def default_feature():
    sys = LambdaSystem.microwave()
    return sys, eit_feature(sys, (2790.0, 2804.0, 1401))


class TestLambdaSystem:

    def test_microwave_levels(self):
        sys = LambdaSystem.microwave()
        assert sys.probe_transition == pytest.approx(2797.0)
        assert sys.coupling_detuning == pytest.approx(0.0)
        assert sys.two_photon_resonance == pytest.approx(2797.0)

    def test_hamiltonian_is_hermitian(self):
        assert LambdaSystem.microwave().hamiltonian(2797.3).is_hermitian

    def test_negative_rabi_rejected(self):
        with pytest.raises(ValidationError):
            LambdaSystem.microwave(omega_c=-0.1)


class TestEit:

    def test_window_at_two_photon_resonance(self, default_feature):
        sys, feature = default_feature
        assert feature.center == pytest.approx(sys.two_photon_resonance, abs=0.01)
        assert feature.depth > 0

    def test_window_width(self, default_feature):
        _, feature = default_feature
        assert 0.7 < feature.fwhm < 1.4

    def test_fluorescence_rises_with_coupling(self):
        sys = LambdaSystem.microwave()
        axis = np.array([2796.0, 2797.0, 2798.0])
        with_c = eit_probe_spectrum(sys, axis)
        without = eit_probe_spectrum(replace(sys, omega_c=0.0), axis)
        assert with_c.values[1] > without.values[1]
        assert with_c.metadata["presentation"] == "fluorescence"

    def test_absorption_dips(self):
        sys = LambdaSystem.microwave()
        axis = np.array([2797.0, 2798.0])
        with_c = eit_probe_spectrum(sys, axis, Presentation.ABSORPTION)
        without = eit_probe_spectrum(replace(sys, omega_c=0.0), axis, Presentation.ABSORPTION)
        assert with_c.values[0] < without.values[0]

    def test_weak_probe_invariance(self, default_feature):
        _, feature = default_feature
        weak = eit_feature(LambdaSystem.microwave(omega_p=0.005), (2790.0, 2804.0, 1401))
        assert weak.center == pytest.approx(feature.center, abs=0.01)
        assert weak.fwhm == pytest.approx(feature.fwhm, rel=0.05)

    def test_width_tracks_ground_dephasing(self, default_feature):
        _, feature = default_feature
        noisy = eit_feature(LambdaSystem.microwave(ground_dephasing=2 * np.pi * 1e6), (2790.0, 2804.0, 1401))
        assert noisy.fwhm > feature.fwhm

    def test_no_coupling_no_window(self):
        sys = LambdaSystem.microwave(omega_c=0.0)
        spectrum = eit_probe_spectrum(sys, (2790.0, 2804.0, 141))
        assert "note" in spectrum.metadata
        with pytest.raises(ValidationError):
            eit_feature(sys, (2790.0, 2804.0, 141))


class TestDressedStates:

    def test_resonant_coupling(self):
        states = dressed_states(LambdaSystem.microwave())
        s = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(states.a, [0.0, s, s], atol=1e-12)
        np.testing.assert_allclose(states.b, [0.0, -s, s], atol=1e-12)

    def test_far_detuned_coupling(self):
        sys = LambdaSystem((6.0, 2800.0, 0.0), 0.3, 0.05, 2803.0)
        states = dressed_states(sys)
        leak = 1.0 - states.a[2] ** 2
        assert leak <= 1.1 * (sys.omega_c / (2 * sys.coupling_detuning)) ** 2

    def test_orthonormal(self):
        states = dressed_states(LambdaSystem((6.0, 2800.0, 0.0), 0.7, 0.05, 2801.0))
        assert np.dot(states.a, states.b) == pytest.approx(0.0, abs=1e-12)
        assert np.linalg.norm(states.a) == pytest.approx(1.0)


# ═══════════════════════════════════════════════════════════════════
# Polaritons
# ═══════════════════════════════════════════════════════════════════


G = 1e5
N_ATOMS = 1e6
EQUAL_MIX = G * np.sqrt(N_ATOMS) / (2 * np.pi * 1e6)


class TestPolariton:

    def test_equal_mixing(self):
        state = polariton(EQUAL_MIX, G, N_ATOMS)
        assert np.cos(state.theta) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)
        assert np.sin(state.theta) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(0)
        for omega, g, n in zip(rng.uniform(0, 100, 10000), rng.uniform(0, 1e6, 10000), rng.uniform(1, 1e8, 10000)):
            state = polariton(omega, g, n)
            assert abs(state.photon_fraction + state.spin_fraction - 1.0) <= 1e-15

    def test_undefined_angle(self):
        with pytest.raises(ValidationError):
            polariton(0.0, 0.0, 10.0)

    def test_adiabatic_storage(self):
        initial = polariton(EQUAL_MIX, G, N_ATOMS)
        trajectory = storage_sweep(initial, linear_ramp(EQUAL_MIX, 0.0, 1000))
        assert len(trajectory) == 1001
        assert trajectory[-1].spin_fraction > 0.999

    def test_norm_conserved(self):
        initial = polariton(EQUAL_MIX, G, N_ATOMS)
        for state in storage_sweep(initial, linear_ramp(EQUAL_MIX, 0.0, 200)):
            total = state.photon_fraction + state.spin_fraction + abs(state.excited_amplitude) ** 2
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_retrieval_round_trip(self):
        initial = polariton(EQUAL_MIX, G, N_ATOMS)
        stored = storage_sweep(initial, linear_ramp(EQUAL_MIX, 0.0, 1000))[-1]
        released = retrieval_sweep(stored, linear_ramp(0.0, EQUAL_MIX, 1000))[-1]
        assert released.photon_fraction == pytest.approx(initial.photon_fraction, abs=1e-3)

    def test_sudden_switch_off_keeps_spin_share(self):
        initial = polariton(EQUAL_MIX, G, N_ATOMS)
        quenched = storage_sweep(initial, [0.0])[-1]
        assert quenched.spin_fraction == pytest.approx(initial.spin_fraction, abs=1e-12)

    def test_storage_ramp_must_fall(self):
        initial = polariton(EQUAL_MIX, G, N_ATOMS)
        with pytest.raises(ValidationError):
            storage_sweep(initial, [1.0, 2.0, 0.0])
        with pytest.raises(ValidationError):
            storage_sweep(initial, [2.0, 1.0])

    def test_retrieval_ramp_must_rise(self):
        initial = polariton(EQUAL_MIX, G, N_ATOMS)
        with pytest.raises(ValidationError):
            retrieval_sweep(initial, [0.0, 2.0, 1.0])


class TestGroupVelocity:

    def test_no_dispersion(self):
        assert group_velocity_compression(0.0, 1e6) == pytest.approx(1.0)

    def test_doubling_dispersion(self):
        single = group_velocity_compression(1e-3, 1e6)
        double = group_velocity_compression(2e-3, 1e6)
        assert double / single == pytest.approx(2.0, rel=0.01)

    def test_non_positive_ratio(self):
        with pytest.raises(ValidationError):
            group_velocity_compression(-1.0, 10.0)
