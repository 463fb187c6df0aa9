"""Optimizer tests: closed-form phase steps, MRT, block-coordinate loop.

Brute-force oracles: for tiny surfaces the optimum over quantized phases
is found by joint enumeration; per-element continuous alignment can lose
at most the per-level quantization factor against it.  Grid comparisons
run in the LOS-dominated regime (huge Rician factor) where the closed
form is exact up to that slack.
"""

import itertools
import math

import numpy as np
import pytest

from ris_hst_sim.channel import draw_drop, geometric_angles, stochastic_angles
from ris_hst_sim.numerics import RngStream
from ris_hst_sim.optimizer import (
    AlignmentScalars,
    BeamformingState,
    DegenerateChannelError,
    alignment_phase_step,
    baseline_no_ris,
    baseline_random_phase,
    bcd_frame,
    bcd_optimize,
    channel_gain,
    doppler_phase_step,
    effective_scalars,
    mrt_beamformer,
    no_ris_frame,
    optimize_phases,
    random_phase_frame,
)

from conftest import random_realization, small_scenario


def naive_gain(state, ch):
    """Scalar triple-loop evaluation of |(h_r^H Phi G + h_d^H) w|^2."""
    n, m = ch.bs_ris.shape
    total = 0.0 + 0.0j
    for j in range(m):
        row_j = complex(np.conj(ch.direct[j]))
        for i in range(n):
            row_j += np.conj(ch.ris_ap[i]) * np.exp(1j * state.phases[i]) * ch.bs_ris[i, j]
        total += row_j * state.tx_beam[j]
    return abs(total) ** 2


def grid_search_gain(ch, power, levels):
    """Joint enumeration over quantized phases with per-candidate MRT."""
    n = ch.bs_ris.shape[0]
    grid = 2.0 * np.pi * np.arange(levels) / levels
    combos = np.array(list(itertools.product(grid, repeat=n)))
    factors = np.exp(1j * combos)  # (levels^n, n)
    cascade = ch.ris_ap.conj()[None, :] * factors
    rows = cascade @ ch.bs_ris + ch.direct.conj()[None, :]
    best = float(np.max(np.sum(np.abs(rows) ** 2, axis=1)))
    return power * best


class TestChannelGain:
    def test_direct_only_unit_channel(self):
        ch, p = random_realization(seed=1)
        ch.ris_ap = np.zeros_like(ch.ris_ap)
        ch.direct = np.array([1.0 + 0.0j, 0.0j])
        state = BeamformingState(np.zeros(p.num_ris), np.array([math.sqrt(5.0), 0.0j]))
        assert abs(channel_gain(state, ch) - 5.0) < 1e-12

    def test_global_beam_rotation_invariance(self):
        ch, p = random_realization(seed=2)
        w = RngStream(2, 5).generator.standard_normal(p.num_tx) + 0.5j
        phases = RngStream(2, 6).generator.uniform(0, 2 * np.pi, p.num_ris)
        g1 = channel_gain(BeamformingState(phases, w), ch)
        g2 = channel_gain(BeamformingState(phases, w * np.exp(1j * 1.234)), ch)
        assert abs(g1 - g2) < 1e-9 * g1

    def test_matches_naive_loop(self):
        for seed in range(6):
            ch, p = random_realization(seed=seed + 10)
            gen = RngStream(seed, 50).generator
            w = gen.standard_normal(p.num_tx) + 1j * gen.standard_normal(p.num_tx)
            phases = gen.uniform(0, 2 * np.pi, p.num_ris)
            state = BeamformingState(phases, w)
            g = channel_gain(state, ch)
            assert abs(g - naive_gain(state, ch)) < 1e-12 * max(g, 1.0)

    def test_dimension_mismatch_rejected(self):
        ch, p = random_realization(seed=3)
        with pytest.raises(ValueError):
            channel_gain(BeamformingState(np.zeros(p.num_ris + 1),
                                          np.zeros(p.num_tx, complex)), ch)


class TestDopplerPhaseStep:
    def test_cascaded_argument_slot_invariant(self):
        p = small_scenario(ris_side=3, num_slots=6)
        drop = draw_drop(p, geometric_angles(p), RngStream(30, 0))
        w = RngStream(30, 1).generator.standard_normal(p.num_tx) + 0.3j
        args = []
        for k in range(1, p.num_slots + 1):
            ch = drop.realization(k)
            phases = doppler_phase_step(ch, w)
            scalar = complex((ch.ris_ap_los.conj() * np.exp(1j * phases)) @ (ch.bs_ris @ w))
            args.append(np.angle(scalar))
        assert np.ptp(args) < 1e-9

    def test_modulus_is_coherent_sum(self):
        ch, p = random_realization(seed=31)
        w = RngStream(31, 1).generator.standard_normal(p.num_tx) + 0.7j
        u = ch.ris_ap_los.conj() * (ch.bs_ris @ w)
        phases = doppler_phase_step(ch, w)
        scalar = complex((ch.ris_ap_los.conj() * np.exp(1j * phases)) @ (ch.bs_ris @ w))
        assert abs(abs(scalar) - np.sum(np.abs(u))) < 1e-9 * np.sum(np.abs(u))

    def test_matches_grid_search_on_los_modulus(self):
        # 16-level joint enumeration over the 4 element phases
        ch, p = random_realization(seed=32, kappa=3.0)
        w = RngStream(32, 1).generator.standard_normal(p.num_tx) + 0.1j
        gw = ch.bs_ris @ w
        phases = doppler_phase_step(ch, w)
        impl = abs(complex((ch.ris_ap_los.conj() * np.exp(1j * phases)) @ gw))
        grid = 2 * np.pi * np.arange(16) / 16
        best = 0.0
        for combo in itertools.product(grid, repeat=p.num_ris):
            val = abs(complex((ch.ris_ap_los.conj() * np.exp(1j * np.array(combo))) @ gw))
            best = max(best, val)
        assert impl >= best - 1e-12
        assert best >= impl * math.cos(math.pi / 16) - 1e-12

    def test_zero_beam_rejected(self):
        ch, p = random_realization(seed=33)
        with pytest.raises(DegenerateChannelError):
            doppler_phase_step(ch, np.zeros(p.num_tx, complex))

    def test_phase_range(self):
        ch, p = random_realization(seed=34)
        w = np.ones(p.num_tx, complex)
        phases = doppler_phase_step(ch, w)
        assert np.all(phases >= 0.0) and np.all(phases < 2 * np.pi)


class TestAlignmentPhaseStep:
    def test_antipodal(self):
        eps = alignment_phase_step(1.0 + 0.0j, -1.0 + 0.0j)
        assert abs(abs(1.0 * np.exp(1j * eps) + (-1.0)) - 2.0) < 1e-12
        assert abs(abs(eps) - math.pi) < 1e-12

    def test_degenerate_cascade(self):
        eps = alignment_phase_step(0.0j, 0.3 - 0.4j)
        assert abs(0.0j * np.exp(1j * eps) + (0.3 - 0.4j)) == abs(0.3 - 0.4j)

    def test_tightness(self):
        gen = np.random.default_rng(35)
        for _ in range(300):
            a = complex(gen.standard_normal(), gen.standard_normal())
            b = complex(gen.standard_normal(), gen.standard_normal())
            eps = alignment_phase_step(a, b)
            assert abs(abs(a * np.exp(1j * eps) + b) - (abs(a) + abs(b))) < 1e-12

    def test_beats_random_rotations(self):
        gen = np.random.default_rng(36)
        a = complex(gen.standard_normal(), gen.standard_normal())
        b = complex(gen.standard_normal(), gen.standard_normal())
        eps = alignment_phase_step(a, b)
        best = abs(a * np.exp(1j * eps) + b)
        for e in gen.uniform(0, 2 * np.pi, 10_000):
            assert abs(a * np.exp(1j * e) + b) <= best + 1e-12


class TestOptimizePhases:
    def test_pure_los_no_direct_gain(self):
        ch, p = random_realization(seed=40, kappa=float("inf"))
        ch.direct = np.zeros_like(ch.direct)
        w = RngStream(40, 1).generator.standard_normal(p.num_tx) + 0.2j
        phases = optimize_phases(ch, w)
        u = ch.ris_ap_los.conj() * (ch.bs_ris @ w)
        gain = channel_gain(BeamformingState(phases, w), ch)
        assert abs(gain - np.sum(np.abs(u)) ** 2) < 1e-9 * gain

    def test_global_offset_invariance_without_direct(self):
        ch, p = random_realization(seed=41)
        ch.direct = np.zeros_like(ch.direct)
        w = np.ones(p.num_tx, complex)
        phases = optimize_phases(ch, w)
        g1 = channel_gain(BeamformingState(phases, w), ch)
        g2 = channel_gain(BeamformingState(np.mod(phases + 0.81, 2 * np.pi), w), ch)
        assert abs(g1 - g2) < 1e-9 * g1

    def test_within_quantization_slack_of_grid(self):
        # LOS-dominated instances: the closed form is the continuous optimum
        for seed in range(5):
            ch, p = random_realization(seed=50 + seed, kappa=1e8, num_tx=1)
            w = np.array([math.sqrt(p.tx_power_w)], dtype=complex)
            phases = optimize_phases(ch, w)
            impl = channel_gain(BeamformingState(phases, w), ch)
            grid = grid_search_gain_fixed_w(ch, w, 32)
            assert impl >= grid * (1.0 - 1e-6)

    def test_output_in_range(self):
        ch, p = random_realization(seed=42)
        phases = optimize_phases(ch, np.ones(p.num_tx, complex))
        assert np.all(phases >= 0.0) and np.all(phases < 2 * np.pi)


def grid_search_gain_fixed_w(ch, w, levels):
    """Quantized-phase enumeration with the beam held fixed."""
    coeff = ch.ris_ap.conj() * (ch.bs_ris @ w)
    direct = complex(ch.direct.conj() @ w)
    grid = 2.0 * np.pi * np.arange(levels) / levels
    best = 0.0
    for combo in itertools.product(grid, repeat=len(coeff)):
        val = abs(np.sum(coeff * np.exp(1j * np.array(combo))) + direct) ** 2
        best = max(best, val)
    return best


class TestMrtBeamformer:
    def test_scalar_case(self):
        ch, p = random_realization(seed=60, num_tx=1, ris_side=2)
        phases = np.zeros(p.num_ris)
        w = mrt_beamformer(ch, phases, 4.0)
        row = (ch.ris_ap.conj() * np.exp(1j * phases)) @ ch.bs_ris + ch.direct.conj()
        assert abs(w[0] - 2.0 * np.exp(-1j * np.angle(row[0]))) < 1e-12
        gain = channel_gain(BeamformingState(phases, w), ch)
        assert abs(gain - 4.0 * abs(row[0]) ** 2) < 1e-9 * gain

    def test_exact_power(self):
        for seed in range(8):
            ch, p = random_realization(seed=70 + seed)
            phases = RngStream(seed, 3).generator.uniform(0, 2 * np.pi, p.num_ris)
            w = mrt_beamformer(ch, phases, p.tx_power_w)
            assert abs(np.linalg.norm(w) ** 2 - p.tx_power_w) < 1e-12 * p.tx_power_w

    def test_beats_random_beams(self):
        ch, p = random_realization(seed=80)
        phases = np.zeros(p.num_ris)
        w = mrt_beamformer(ch, phases, p.tx_power_w)
        best = channel_gain(BeamformingState(phases, w), ch)
        gen = np.random.default_rng(81)
        for _ in range(1000):
            v = gen.standard_normal(p.num_tx) + 1j * gen.standard_normal(p.num_tx)
            v *= math.sqrt(p.tx_power_w) / np.linalg.norm(v)
            assert channel_gain(BeamformingState(phases, v), ch) <= best * (1 + 1e-12)

    def test_zero_channel_rejected(self):
        ch, p = random_realization(seed=82)
        ch.ris_ap = np.zeros_like(ch.ris_ap)
        ch.direct = np.zeros_like(ch.direct)
        with pytest.raises(DegenerateChannelError):
            mrt_beamformer(ch, np.zeros(p.num_ris), 1.0)


class TestBcdOptimize:
    def test_direct_only_converges_immediately(self):
        ch, p = random_realization(seed=90)
        ch.ris_ap = np.zeros_like(ch.ris_ap)
        ch.ris_ap_los = np.zeros_like(ch.ris_ap_los)
        state, trace = bcd_optimize(ch, p.tx_power_w)
        expected = p.tx_power_w * np.linalg.norm(ch.direct) ** 2
        assert abs(trace.objective_per_iteration[-1] - expected) < 1e-9 * expected
        assert trace.iterations_used <= 2

    def test_traces_monotone(self):
        for seed in range(1000):
            ch, p = random_realization(seed=seed, k=1 + seed % 3)
            _, trace = bcd_optimize(ch, p.tx_power_w)
            obj = trace.objective_per_iteration
            assert all(b >= a for a, b in zip(obj, obj[1:]))
            assert trace.converged

    def test_feasible_state(self):
        for seed in range(20):
            ch, p = random_realization(seed=200 + seed)
            state, _ = bcd_optimize(ch, p.tx_power_w)
            assert np.linalg.norm(state.tx_beam) ** 2 <= p.tx_power_w * (1 + 1e-12)
            assert np.all(state.phases >= 0) and np.all(state.phases < 2 * np.pi)

    def test_objective_bounded_by_cauchy_schwarz(self):
        for seed in range(50):
            ch, p = random_realization(seed=300 + seed)
            _, trace = bcd_optimize(ch, p.tx_power_w)
            spectral = np.linalg.norm(ch.path_gain_bs_ris) * math.sqrt(p.num_ris * p.num_tx)
            bound = p.tx_power_w * (np.linalg.norm(ch.direct)
                                    + np.linalg.norm(ch.ris_ap) * spectral) ** 2
            assert trace.objective_per_iteration[-1] <= bound * (1 + 1e-9)

    def test_beats_both_baselines(self):
        for seed in range(200):
            ch, p = random_realization(seed=400 + seed, ris_side=4)
            state, trace = bcd_optimize(ch, p.tx_power_w)
            gain = trace.objective_per_iteration[-1]
            rnd = baseline_random_phase(ch, p.tx_power_w, RngStream(seed, 12))
            assert gain >= channel_gain(rnd, ch) * (1 - 1e-9)
            nor = baseline_no_ris(ch, p.tx_power_w)
            assert gain >= p.tx_power_w * np.linalg.norm(ch.direct) ** 2 * (1 - 1e-9)
            assert np.linalg.norm(nor.tx_beam) ** 2 == pytest.approx(p.tx_power_w)

    def test_matches_grid_search_tiny_instances(self):
        # joint 32-level search over 4 phases, LOS-dominated regime
        for seed in range(10):
            ch, p = random_realization(seed=500 + seed, kappa=1e8)
            state, trace = bcd_optimize(ch, p.tx_power_w)
            grid = grid_search_gain(ch, p.tx_power_w, 32)
            slack = 1.0 - math.cos(math.pi / 32) ** 2
            assert trace.objective_per_iteration[-1] >= grid * (1.0 - slack)

    def test_invalid_arguments(self):
        ch, p = random_realization(seed=91)
        with pytest.raises(ValueError):
            bcd_optimize(ch, 0.0)
        with pytest.raises(ValueError):
            bcd_optimize(ch, 1.0, tol=-1.0)


class TestBaselines:
    def test_random_phase_feasible(self):
        ch, p = random_realization(seed=600)
        state = baseline_random_phase(ch, p.tx_power_w, RngStream(600, 1))
        assert np.linalg.norm(state.tx_beam) ** 2 == pytest.approx(p.tx_power_w)
        assert np.all(state.phases >= 0) and np.all(state.phases < 2 * np.pi)

    def test_no_ris_gain_identity(self):
        ch, p = random_realization(seed=601)
        state = baseline_no_ris(ch, p.tx_power_w)
        direct_gain = p.tx_power_w * np.linalg.norm(ch.direct) ** 2
        assert abs(abs(ch.direct.conj() @ state.tx_beam) ** 2 - direct_gain) \
            < 1e-9 * direct_gain

    def test_consistent_when_cascade_vanishes(self):
        ch, p = random_realization(seed=602)
        ch.bs_ris = np.zeros_like(ch.bs_ris)
        state_b, trace = bcd_optimize(ch, p.tx_power_w)
        state_n = baseline_no_ris(ch, p.tx_power_w)
        g_n = channel_gain(BeamformingState(state_n.phases, state_n.tx_beam), ch)
        assert abs(trace.objective_per_iteration[-1] - g_n) < 1e-9 * g_n

    def test_no_ris_zero_direct_rejected(self):
        ch, p = random_realization(seed=603)
        ch.direct = np.zeros_like(ch.direct)
        with pytest.raises(DegenerateChannelError):
            baseline_no_ris(ch, p.tx_power_w)


class TestEffectiveScalars:
    def test_decomposition(self):
        ch, p = random_realization(seed=700)
        state, _ = bcd_optimize(ch, p.tx_power_w)
        sc = effective_scalars(state, ch)
        assert abs(sc.effective_channel - (sc.cascaded_scalar + sc.direct_scalar)) < 1e-12
        gain = channel_gain(state, ch)
        assert abs(abs(sc.effective_channel) ** 2 - gain) < 1e-9 * gain

    def test_coherent_combining_dominates_parts(self):
        ch, p = random_realization(seed=701)
        state, _ = bcd_optimize(ch, p.tx_power_w)
        sc = effective_scalars(state, ch)
        assert abs(sc.effective_channel) >= max(abs(sc.cascaded_scalar),
                                                abs(sc.direct_scalar)) - 1e-12


class TestFrameRunners:
    def test_bcd_frame_matches_scalar_path(self):
        p = small_scenario(ris_side=3, num_slots=5)
        drop = draw_drop(p, geometric_angles(p), RngStream(800, 0))
        sol = bcd_frame(drop, p.tx_power_w)
        for k in range(1, p.num_slots + 1):
            ch = drop.realization(k)
            _, trace = bcd_optimize(ch, p.tx_power_w)
            assert sol.gain[k - 1] == pytest.approx(trace.objective_per_iteration[-1],
                                                    rel=1e-9)

    def test_random_frame_matches_scalar_path(self):
        p = small_scenario(ris_side=3, num_slots=4)
        drop = draw_drop(p, geometric_angles(p), RngStream(801, 0))
        phases = RngStream(801, 1).generator.uniform(0, 2 * np.pi, p.num_ris)
        sol = random_phase_frame(drop, p.tx_power_w, phases)
        for k in (1, 4):
            ch = drop.realization(k)
            w = mrt_beamformer(ch, phases, p.tx_power_w)
            g = channel_gain(BeamformingState(phases, w), ch)
            assert sol.gain[k - 1] == pytest.approx(g, rel=1e-9)

    def test_no_ris_frame_gain(self):
        p = small_scenario(num_slots=4)
        drop = draw_drop(p, geometric_angles(p), RngStream(802, 0))
        sol = no_ris_frame(drop, p.tx_power_w)
        h_d = drop.direct_all()
        expected = p.tx_power_w * np.sum(np.abs(h_d) ** 2, axis=0)
        assert np.allclose(sol.gain, expected, rtol=1e-9)
        assert np.allclose(sol.cascaded, 0.0)

    def test_identity_phase_mode(self):
        p = small_scenario(num_slots=3)
        drop = draw_drop(p, geometric_angles(p), RngStream(803, 0))
        sol = no_ris_frame(drop, p.tx_power_w, mode="identity_phase")
        ref = random_phase_frame(drop, p.tx_power_w, np.zeros(p.num_ris))
        assert np.allclose(sol.gain, ref.gain)
