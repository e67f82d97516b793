"""
Tests for the pulse-program DSL, the sequence simulator, Rabi and echo traces,
and Bell-state preparation with step-by-step tomography.
"""

import numpy as np
import pytest

from nvsim.nv_model import NucleusSpec, SpinHamiltonianParams
from nvsim.pulsec import (
    PulseEvent,
    PulseSequence,
    SpinSystem,
    bell_density,
    bell_vector,
    echo_frequencies,
    format_sequence,
    hahn_echo_trace,
    invert_sequence,
    parse_angle,
    parse_sequence,
    prepare_bell,
    probe_pulse,
    pulse_propagator,
    rabi_trace,
    simulate_sequence,
    tomography_reconstruct,
)
from nvsim.qops import fidelity
from nvsim.util import Util
from nvsim.util.errors import SequenceParseError, ValidationError
from nvsim.util.protocol import BellState, Frame, PulseKind

AXIAL = SpinHamiltonianParams(B0=(0.0, 0.0, 10.0))
LOWER_LINE = 2599.7   # m_s 0 -> -1 at 10 mT


# ═══════════════════════════════════════════════════════════════════
# DSL
# ═══════════════════════════════════════════════════════════════════


class TestParser:

    def test_full_program(self):
        seq = parse_sequence(
            "# sequence: rabi-pi\n"
            "init laser dur=3us\n"
            "pulse mw f=2880MHz rabi=140MHz phase=0 dur=3.571ns\n"
            "wait 1.5us\n"
            "readout laser dur=300ns\n"
        )
        assert seq.name == "rabi-pi"
        assert [e.kind for e in seq] == [PulseKind.LASER_INIT, PulseKind.MW_PULSE, PulseKind.DELAY,
                                         PulseKind.LASER_READOUT]
        pulse = seq.events[1]
        assert pulse.frequency == pytest.approx(2880.0)
        assert pulse.rabi == pytest.approx(140.0)
        assert pulse.duration == pytest.approx(3.571)
        assert seq.events[2].duration == pytest.approx(1500.0)
        assert seq.readout is seq.events[-1]

    def test_units(self):
        seq = parse_sequence("pulse rf f=0.1GHz rabi=1MHz dur=0.5us")
        assert seq.events[0].frequency == pytest.approx(100.0)
        assert seq.events[0].duration == pytest.approx(500.0)

    def test_angle_sets_duration(self):
        seq = parse_sequence("pulse mw f=2880MHz angle=pi rabi=10MHz")
        assert seq.events[0].duration == pytest.approx(50.0)

    def test_angle_sets_rabi(self):
        seq = parse_sequence("pulse mw on=1-2 angle=pi/2 dur=25ns")
        assert seq.events[0].rabi == pytest.approx(10.0)
        assert seq.events[0].target_transition == ("1", "2")

    def test_comments_and_blank_lines(self):
        seq = parse_sequence("\n# just a note\nwait 10ns  # trailing\n\n")
        assert len(seq) == 1

    def test_negative_rabi_reports_position(self):
        with pytest.raises(SequenceParseError) as excinfo:
            parse_sequence("wait 10ns\npulse mw f=2880MHz rabi=-1MHz dur=10ns")
        assert excinfo.value.line == 2
        assert excinfo.value.column == 25
        assert "rabi must be" in excinfo.value.message

    @pytest.mark.parametrize("text", [
        "wait 3parsecs",
        "wait 0ns",
        "wait 10",
        "pulse mw rabi=1MHz dur=10ns",
        "pulse mw f=2880MHz rabi=1MHz",
        "pulse uv f=2880MHz rabi=1MHz dur=10ns",
        "pulse mw f=2880MHz rabi=1MHz dur=10ns colour=red",
        "pulse mw f=2880MHz angle=pi rabi=1MHz dur=10ns",
        "jump 10ns",
        "readout laser dur=300ns\nwait 10ns",
        "",
    ])
    def test_rejected_programs(self, text):
        with pytest.raises(SequenceParseError):
            parse_sequence(text)

    def test_parse_error_is_validation_error(self):
        with pytest.raises(ValidationError) as excinfo:
            parse_sequence("wait 3parsecs")
        assert excinfo.value.field == "sequence"
        assert excinfo.value.position == "1:6"

    @pytest.mark.parametrize("text,value", [("pi/2", np.pi / 2), ("3pi/2", 1.5 * np.pi), ("0.5", 0.5),
                                            ("-pi", -np.pi), ("0.25pi", 0.25 * np.pi)])
    def test_parse_angle(self, text, value):
        assert parse_angle(text) == pytest.approx(value)

    def test_format_parse_is_stable(self):
        seq = PulseSequence((
            PulseEvent(PulseKind.LASER_INIT, 3000.0),
            PulseEvent(PulseKind.MW_PULSE, 25.0, 2880.0, 10.0, np.pi / 2),
            PulseEvent(PulseKind.DELAY, 1500.0),
            PulseEvent(PulseKind.RF_PULSE, 500.0, None, 1.0, 0.0, ("1", "2")),
            PulseEvent(PulseKind.LASER_READOUT, 300.0),
        ), "round")
        again = parse_sequence(format_sequence(seq))
        assert again.name == "round"
        assert again.events == seq.events


class TestSequenceModel:

    def test_readout_must_be_last(self):
        with pytest.raises(ValidationError):
            PulseSequence((PulseEvent(PulseKind.LASER_READOUT, 300.0), PulseEvent(PulseKind.DELAY, 10.0)))

    def test_empty_sequence(self):
        with pytest.raises(ValidationError):
            PulseSequence(())

    def test_pulse_needs_target(self):
        with pytest.raises(ValidationError):
            PulseEvent(PulseKind.MW_PULSE, 10.0, rabi=1.0)

    def test_inversion_reverses_and_shifts_phase(self):
        seq = PulseSequence((PulseEvent(PulseKind.MW_PULSE, 25.0, 2880.0, 10.0, 0.0),
                             PulseEvent(PulseKind.DELAY, 100.0)))
        inverted = invert_sequence(seq.with_readout())
        assert [e.kind for e in inverted] == [PulseKind.DELAY, PulseKind.MW_PULSE]
        assert inverted.events[1].phase == pytest.approx(np.pi)

    def test_total_duration(self):
        seq = PulseSequence((PulseEvent(PulseKind.DELAY, 100.0), PulseEvent(PulseKind.DELAY, 50.0)))
        assert seq.total_duration == pytest.approx(150.0)


# ═══════════════════════════════════════════════════════════════════
# Simulation
# ═══════════════════════════════════════════════════════════════════


def pi_pulse(rabi):
    return PulseEvent(PulseKind.MW_PULSE, 1e3 / (2.0 * rabi), LOWER_LINE, rabi, 0.0)


class TestSimulation:

    def test_pi_pulse_inverts(self):
        seq = parse_sequence(f"pulse mw f={LOWER_LINE}MHz rabi=140MHz phase=0 dur=3.571ns")
        rho, trace = simulate_sequence(seq, AXIAL)
        assert trace["ms0"][0] == pytest.approx(1.0)
        assert trace["ms0"][-1] < 1e-3
        assert rho.trace == pytest.approx(1.0)

    def test_off_resonant_pulse_does_nothing(self):
        seq = PulseSequence((PulseEvent(PulseKind.MW_PULSE, 50.0, 2000.0, 10.0),))
        _, trace = simulate_sequence(seq, AXIAL)
        assert trace["ms0"][-1] == pytest.approx(1.0)

    def test_readout_recorded(self):
        seq = PulseSequence((pi_pulse(20.0), PulseEvent(PulseKind.LASER_READOUT, 300.0)))
        rho, trace = simulate_sequence(seq, AXIAL)
        assert trace.metadata["readouts"][0] < 1e-3
        # readout repolarizes
        assert trace["ms0"][-1] == pytest.approx(1.0)

    def test_lab_frame_agrees_with_rotating_frame(self):
        seq = PulseSequence((pi_pulse(10.0),))
        _, rotating = simulate_sequence(seq, AXIAL, frame=Frame.ROTATING)
        _, lab = simulate_sequence(seq, AXIAL, frame=Frame.LAB)
        assert abs(rotating["ms0"][-1] - lab["ms0"][-1]) < 1e-3

    def test_half_pulses_compose(self):
        half = PulseEvent(PulseKind.MW_PULSE, 25.0, None, 10.0, 0.3, ("1", "2"))
        full = PulseEvent(PulseKind.MW_PULSE, 50.0, None, 10.0, 0.3, ("1", "2"))
        first = pulse_propagator(half, AXIAL, t0=0.0).data
        second = pulse_propagator(half, AXIAL, t0=25e-9).data
        np.testing.assert_allclose(second @ first, pulse_propagator(full, AXIAL).data, atol=1e-9)

    def test_dephasing_damps_coherence(self):
        seq = PulseSequence((PulseEvent(PulseKind.MW_PULSE, 25.0, LOWER_LINE, 10.0),
                             PulseEvent(PulseKind.DELAY, 1000.0)))
        clean, _ = simulate_sequence(seq, AXIAL)
        noisy, _ = simulate_sequence(seq, AXIAL, dephasing=1e6)
        assert abs(noisy[0, 1]) < abs(clean[0, 1])
        np.testing.assert_allclose(noisy.populations, clean.populations, atol=1e-12)

    def test_initial_state_dimension(self):
        with pytest.raises(ValidationError):
            simulate_sequence(PulseSequence((pi_pulse(10.0),)), AXIAL, initial=SpinSystem.bell().level_state("3"))


class TestRabi:

    @pytest.mark.parametrize("rabi,t_max,n_points", [(40.0, 1000.0, 8001), (140.0, 200.0, 4001)])
    def test_fitted_frequency(self, rabi, t_max, n_points):
        trace = rabi_trace(AXIAL, rabi, t_max, n_points)
        fitted = Util.dominantFrequency(trace.times, trace["p_start"]) / 1e6
        assert fitted == pytest.approx(rabi, rel=0.01)

    def test_pi_time(self):
        trace = rabi_trace(AXIAL, 40.0, 100.0, 1001)
        k = int(np.argmin(np.abs(trace.times - 12.5e-9)))
        assert trace["p_target"][k] == pytest.approx(1.0, abs=1e-6)

    def test_undamped_amplitude(self):
        trace = rabi_trace(AXIAL, 40.0, 1000.0, 8001)
        assert trace["p_start"][-200:].max() == pytest.approx(1.0, abs=1e-3)

    def test_many_cycles_before_decay(self):
        trace = rabi_trace(AXIAL, 40.0, 250_000.0, 100_001, dephasing_rate=1.0 / 300e-6)
        tail = np.abs(trace["p_start"][-10:] - 0.5).max()
        assert tail > 0.5 / np.e

    def test_aliasing_guard(self):
        with pytest.raises(ValidationError) as excinfo:
            rabi_trace(AXIAL, 40.0, 1000.0, 100)
        assert excinfo.value.field == "n_points"

    def test_rejects_non_positive_rabi(self):
        with pytest.raises(ValidationError):
            rabi_trace(AXIAL, 0.0, 100.0, 101)


class TestEcho:

    def test_no_nucleus_flat(self):
        trace = hahn_echo_trace(SpinHamiltonianParams(B0=(0.0, 0.0, 5.0)), (0.0, 4000.0, 401))
        assert np.ptp(trace["echo"]) < 1e-9
        assert trace["echo"][0] == pytest.approx(1.0)

    def test_isotropic_zero_field_unmodulated(self):
        params = SpinHamiltonianParams(nuclei=(NucleusSpec.nitrogen14(a=2.0),))
        trace = hahn_echo_trace(params, (0.0, 4000.0, 401))
        assert np.ptp(trace["echo"]) < 1e-9

    def test_modulation_matches_hyperfine_splittings(self):
        params = SpinHamiltonianParams(B0=(3.0, 0.0, 3.0), nuclei=(NucleusSpec.nitrogen14(a=2.0, a_perp=1.5),))
        trace = hahn_echo_trace(params, (0.0, 20000.0, 8001))
        echo = trace["echo"]
        assert np.ptp(echo) > 0.01
        expected = np.array(echo_frequencies(params, min_freq=1e-3))
        dominant = Util.dominantFrequency(trace.times, echo) / 1e6
        nearest = expected[np.argmin(np.abs(expected - dominant))]
        assert abs(dominant - nearest) <= max(0.02 * nearest, 0.02)

    def test_slow_pulses_lose_modulation(self):
        params = SpinHamiltonianParams(B0=(3.0, 0.0, 3.0), nuclei=(NucleusSpec.nitrogen14(a=2.0, a_perp=1.5),))
        hard = hahn_echo_trace(params, (0.0, 20000.0, 8001))
        slow = hahn_echo_trace(params, (0.0, 20000.0, 8001), rabi=0.1)
        assert slow.metadata["pulse"] == "finite"
        assert np.ptp(slow["echo"]) < 0.5 * np.ptp(hard["echo"])

    def test_finite_pulses_without_nucleus(self):
        trace = hahn_echo_trace(SpinHamiltonianParams(B0=(0.0, 0.0, 5.0)), (0.0, 4000.0, 401), rabi=50.0)
        assert np.ptp(trace["echo"]) < 1e-9
        assert trace["echo"][0] == pytest.approx(1.0, abs=1e-6)

    def test_non_positive_rabi_rejected(self):
        with pytest.raises(ValidationError):
            hahn_echo_trace(AXIAL, (0.0, 100.0, 11), rabi=0.0)

    def test_negative_tau_rejected(self):
        with pytest.raises(ValidationError):
            hahn_echo_trace(AXIAL, (-10.0, 100.0, 11))


# ═══════════════════════════════════════════════════════════════════
# Bell states and tomography
# ═══════════════════════════════════════════════════════════════════


class TestBell:

    @pytest.mark.parametrize("which", list(BellState))
    def test_preparation(self, which):
        system = SpinSystem.bell()
        rho, _ = simulate_sequence(prepare_bell(which), system, system.level_state("3"))
        assert fidelity(rho, bell_vector(which)) > 0.999

    @pytest.mark.parametrize("which", list(BellState))
    def test_inverse_returns_to_start(self, which):
        system = SpinSystem.bell()
        seq = prepare_bell(which)
        rho, _ = simulate_sequence(seq + seq.inverted(), system, system.level_state("3"))
        assert rho.populations[2] > 0.999

    def test_bell_density_is_pure(self):
        rho = bell_density(BellState.PSI_MINUS)
        assert rho.purity == pytest.approx(1.0)
        assert rho[1, 2].real == pytest.approx(-0.5)

    def test_bell_subspace_needs_spin_half(self):
        with pytest.raises(ValidationError):
            SpinSystem.bell(SpinHamiltonianParams(nuclei=(NucleusSpec.nitrogen14(),)))


class TestTomography:

    def test_psi_minus(self):
        result = tomography_reconstruct(prepare_bell(BellState.PSI_MINUS))
        rho = result.rho.data
        np.testing.assert_allclose(np.real(np.diag(rho)), [0.0, 0.5, 0.5, 0.0], atol=0.01)
        assert rho[1, 2].real == pytest.approx(-0.5, abs=0.01)
        assert result.hermitian_ok and result.trace_ok and result.physical

    @pytest.mark.parametrize("which", list(BellState))
    def test_all_bell_states(self, which):
        result = tomography_reconstruct(prepare_bell(which))
        assert result.fidelity > 0.99
        assert fidelity(result.rho, bell_vector(which)) > 0.99

    def test_coherence_signs(self):
        psi_minus = tomography_reconstruct(prepare_bell(BellState.PSI_MINUS)).rho.data[1, 2].real
        phi_plus = tomography_reconstruct(prepare_bell(BellState.PHI_PLUS)).rho.data[0, 3].real
        assert np.sign(psi_minus) == -np.sign(phi_plus)

    def test_idle_preparation(self):
        idle = PulseSequence((PulseEvent(PulseKind.DELAY, 10.0),))
        result = tomography_reconstruct(idle)
        np.testing.assert_allclose(np.real(np.diag(result.rho.data)), [0.0, 0.0, 1.0, 0.0], atol=0.01)
        assert result.max_error < 0.01

    def test_noise_shrinks_coherence_but_keeps_sign(self):
        clean = tomography_reconstruct(prepare_bell(BellState.PSI_MINUS)).rho.data[1, 2].real
        noisy = tomography_reconstruct(prepare_bell(BellState.PSI_MINUS), noise=1e6).rho.data[1, 2].real
        assert noisy < 0
        assert abs(noisy) < abs(clean) - 0.01

    def test_every_element_has_provenance(self):
        result = tomography_reconstruct(prepare_bell(BellState.PHI_MINUS))
        assert len(result.provenance) == 16

    @pytest.mark.parametrize("a, b", [("3", "1"), ("4", "2"), ("1", "2"), ("3", "4")])
    def test_probe_reads_coherence(self, a, b):
        system = SpinSystem.bell()
        rng = np.random.default_rng(17)
        i, j = system.index(a), system.index(b)
        for _ in range(20):
            m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            rho = 0.5 * (m + m.conj().T)
            for quadrature in (0.0, np.pi / 2, rng.uniform(0, 2 * np.pi)):
                u = pulse_propagator(probe_pulse(a, b, quadrature), system).data
                out = u @ rho @ u.conj().T
                expected = 2.0 * np.real(rho[i, j] * np.exp(1j * quadrature))
                assert abs((out[i, i] - out[j, j]).real - expected) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_random_preparation_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        events = []
        for _ in range(4):
            (a, b), kind = [(("3", "1"), PulseKind.MW_PULSE), (("4", "2"), PulseKind.MW_PULSE),
                            (("1", "2"), PulseKind.RF_PULSE), (("3", "4"), PulseKind.RF_PULSE)][rng.integers(4)]
            rabi = 10.0 if kind == PulseKind.MW_PULSE else 1.0
            angle = rng.uniform(0.1, 2 * np.pi)
            events.append(PulseEvent(kind, angle / (2 * np.pi * rabi) * 1e3, None, rabi,
                                     rng.uniform(0, 2 * np.pi), (a, b), angle))
        result = tomography_reconstruct(PulseSequence(tuple(events)))
        assert result.max_error < 1e-9
        assert result.hermitian_ok and result.trace_ok
