"""Joint RIS-phase / transmit-beamforming optimization.

The per-slot objective is the end-to-end channel gain
``F = |(h_r^H Phi G + h_d^H) w|^2`` under a transmit power cap and
unit-modulus RIS phases.  Both blocks admit closed forms: the phase block
first cancels the Doppler rotation of the line-of-sight cascaded term and
coherently combines the RIS elements, then rotates the whole surface so
the cascaded and direct scalars align; the beamforming block is maximal
ratio transmission on the composite channel.  Alternating the two blocks
converges in a handful of iterations.

Scalar per-slot entry points operate on :class:`ChannelRealization`
objects; ``bcd_frame`` runs the same arithmetic vectorized over all slots
of a drop for the Monte Carlo harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import ChannelRealization, Drop

__all__ = [
    "DegenerateChannelError",
    "BeamformingState",
    "BcdTrace",
    "AlignmentScalars",
    "channel_gain",
    "doppler_phase_step",
    "alignment_phase_step",
    "optimize_phases",
    "mrt_beamformer",
    "bcd_optimize",
    "baseline_random_phase",
    "baseline_no_ris",
    "effective_scalars",
    "bcd_frame",
    "FrameSolution",
]

_TWO_PI = 2.0 * math.pi


class DegenerateChannelError(RuntimeError):
    """Raised when a scheme needs a direction from an all-zero channel."""


@dataclass
class BeamformingState:
    """RIS phases (radians, in [0, 2pi)) and transmit beamformer of one slot."""

    phases: np.ndarray
    tx_beam: np.ndarray


@dataclass
class BcdTrace:
    """Objective values of one block-coordinate run, non-decreasing."""

    objective_per_iteration: list
    iterations_used: int
    converged: bool


@dataclass
class AlignmentScalars:
    """Cascaded scalar, its alignment rotation, and the effective channel.

    ``effective_channel`` is the scalar whose squared modulus is the slot
    gain: cascaded * exp(j alignment_phase) + direct.
    """

    cascaded_scalar: complex
    alignment_phase: float
    effective_channel: complex

    @property
    def direct_scalar(self) -> complex:
        return self.effective_channel - self.cascaded_scalar * np.exp(1j * self.alignment_phase)


def _phase_matrix_apply(ris_ap, phases, bs_ris):
    """Row vector h_r^H Phi G without materializing the diagonal matrix."""
    return (ris_ap.conj() * np.exp(1j * phases)) @ bs_ris


def channel_gain(state: BeamformingState, ch: ChannelRealization) -> float:
    """Linear received power |(h_r^H Phi G + h_d^H) w|^2."""
    n_ris, m = ch.bs_ris.shape
    if state.phases.shape != (n_ris,) or state.tx_beam.shape != (m,):
        raise ValueError(
            f"state dimensions {state.phases.shape}/{state.tx_beam.shape} "
            f"do not match channel {ch.bs_ris.shape}"
        )
    row = _phase_matrix_apply(ch.ris_ap, state.phases, ch.bs_ris) + ch.direct.conj()
    return float(abs(row @ state.tx_beam) ** 2)


def doppler_phase_step(ch: ChannelRealization, w: np.ndarray) -> np.ndarray:
    """Per-element phases cancelling the LOS Doppler and combining coherently.

    Conjugate-phase combining of u = diag(h_los^H) G w: with these phases
    the LOS cascaded scalar equals sum_n |u_n| for every slot, so its
    argument no longer moves with the slot index.
    """
    if not np.any(w):
        raise DegenerateChannelError("phase step needs a nonzero beam")
    u = ch.ris_ap_los.conj() * (ch.bs_ris @ w)
    return np.mod(-np.angle(u), _TWO_PI)


def alignment_phase_step(cascaded: complex, direct: complex) -> float:
    """Rotation making |cascaded e^{j eps} + direct| = |cascaded| + |direct|.

    The argument of zero is taken as zero, so degenerate inputs stay finite.
    """
    return float(np.angle(direct) - np.angle(cascaded))


def optimize_phases(ch: ChannelRealization, w: np.ndarray) -> np.ndarray:
    """Closed-form RIS phases for a fixed beam: Doppler step plus alignment.

    The global alignment rotation is computed against the full Rician
    cascaded scalar (diffuse part included), then folded into every element
    phase; outputs are wrapped to [0, 2pi).
    """
    phases = doppler_phase_step(ch, w)
    cascaded = complex(_phase_matrix_apply(ch.ris_ap, phases, ch.bs_ris) @ w)
    eps = alignment_phase_step(cascaded, complex(ch.direct.conj() @ w))
    return np.mod(phases + eps, _TWO_PI)


def mrt_beamformer(ch: ChannelRealization, phases: np.ndarray, power: float) -> np.ndarray:
    """Maximal ratio transmission on the composite channel, ||w||^2 = power."""
    row = _phase_matrix_apply(ch.ris_ap, phases, ch.bs_ris) + ch.direct.conj()
    norm = np.linalg.norm(row)
    if norm == 0.0:
        raise DegenerateChannelError("composite channel is zero; MRT undefined")
    return math.sqrt(power) * row.conj() / norm


def _initial_beam(ch: ChannelRealization, power: float) -> np.ndarray:
    norm = np.linalg.norm(ch.direct)
    if norm == 0.0:
        w = np.zeros(ch.direct.shape[0], dtype=complex)
        w[0] = math.sqrt(power)
        return w
    return math.sqrt(power) * ch.direct / norm


def bcd_optimize(ch: ChannelRealization, power: float, tol: float = 1e-8,
                 max_iter: int = 50):
    """Alternate the phase and beamforming blocks until the gain settles.

    Starts from MRT on the direct link (first canonical beam if it is zero).
    The returned trace records the objective after each full iteration and
    never decreases: if an iterate fails to improve, the previous best state
    is kept and the run stops.
    """
    if power <= 0.0:
        raise ValueError("power must be strictly positive")
    if tol <= 0.0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    w = _initial_beam(ch, power)
    best_state = None
    best_obj = -math.inf
    trace: list = []
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        phases = optimize_phases(ch, w)
        w_new = mrt_beamformer(ch, phases, power)
        obj = channel_gain(BeamformingState(phases, w_new), ch)
        if obj <= best_obj:
            converged = True
            break
        trace.append(obj)
        improved_by = (obj - best_obj) / obj if best_obj > 0 else math.inf
        best_state = BeamformingState(phases, w_new)
        best_obj = obj
        w = w_new
        if improved_by < tol:
            converged = True
            break
    return best_state, BcdTrace(trace, iterations, converged)


def baseline_random_phase(ch: ChannelRealization, power: float, rng) -> BeamformingState:
    """Uniform random RIS phases held fixed, MRT on the resulting composite."""
    phases = rng.generator.uniform(0.0, _TWO_PI, size=ch.bs_ris.shape[0])
    return BeamformingState(phases, mrt_beamformer(ch, phases, power))


def baseline_no_ris(ch: ChannelRealization, power: float) -> BeamformingState:
    """MRT on the direct link alone; the cascaded path is excluded."""
    norm = np.linalg.norm(ch.direct)
    if norm == 0.0:
        raise DegenerateChannelError("direct channel is zero; no-RIS MRT undefined")
    w = math.sqrt(power) * ch.direct / norm
    return BeamformingState(np.zeros(ch.bs_ris.shape[0]), w)


def effective_scalars(state: BeamformingState, ch: ChannelRealization,
                      include_ris: bool = True) -> AlignmentScalars:
    """Cascaded/direct decomposition of the effective scalar channel."""
    direct = complex(ch.direct.conj() @ state.tx_beam)
    if include_ris:
        cascaded = complex(_phase_matrix_apply(ch.ris_ap, state.phases, ch.bs_ris) @ state.tx_beam)
    else:
        cascaded = 0.0 + 0.0j
    return AlignmentScalars(cascaded, 0.0, cascaded + direct)


# ---------------------------------------------------------------------------
# Whole-frame vectorized runner
# ---------------------------------------------------------------------------

class FrameSolution(NamedTuple):
    """Per-slot results of one scheme over a frame."""

    effective: np.ndarray   # complex effective scalar channel, (K,)
    direct: np.ndarray      # direct scalar h_d^H w, (K,)
    cascaded: np.ndarray    # cascaded scalar (h_r^H Phi G) w, (K,)
    gain: np.ndarray        # |effective|^2, (K,)


def _unit(z):
    """z / |z| with the zero argument mapped to 1 (arg 0 taken as 0)."""
    mag = np.abs(z)
    return np.where(mag > 0, z / np.where(mag == 0, 1.0, mag), 1.0 + 0.0j)


def _unit_conj(z):
    return np.conj(_unit(z))


def _frame_solution(row, w_t, h_d):
    eff = np.einsum("km,km->k", row, w_t)
    direct = np.einsum("mk,km->k", h_d.conj(), w_t)
    return FrameSolution(eff, direct, eff - direct, np.abs(eff) ** 2)


def bcd_frame(drop: Drop, power: float, tol: float = 1e-8, max_iter: int = 50) -> FrameSolution:
    """Vectorized block-coordinate optimization of every slot in a drop.

    Same arithmetic as the per-slot path, batched over the frame.  The
    rank-one BS-RIS channel makes the optimally phased cascade separable:
    with s_k = a_bs^H w_k and q_k = sum_n conj(h_r[n,k]) a2[n], the phased
    cascade scalar is |alpha| |s_k| unit(beta) d_k q_k and the cascade row
    is rank one in (slot, antenna), so each iteration costs O(K M) after a
    one-time O(N K) reduction.  Slots converge independently and freeze
    once their relative gain change drops below ``tol`` (or would decrease).
    """
    p = drop.params
    h_d = drop.direct_all()                       # (M, K)
    h_r = drop.ris_ap_all()                       # (N, K)
    n_slots = p.num_slots
    h_dc_t = h_d.conj().T                         # (K, M)

    a_bs_c = drop.bs_steering.conj()
    d_k = drop.doppler_factors()                  # (K,)
    q = h_r.conj().T @ drop.ris_steering          # (K,)
    amp = abs(drop.alpha)
    u_beta = complex(_unit(np.asarray(drop.beta)))

    norms = np.linalg.norm(h_d, axis=0)
    w_t = np.zeros((n_slots, p.num_tx), dtype=complex)  # beams, one row per slot
    nz = norms > 0
    w_t[nz] = math.sqrt(power) * (h_d[:, nz] / norms[nz]).T
    w_t[~nz, 0] = math.sqrt(power)

    best_row = np.zeros((n_slots, p.num_tx), dtype=complex)
    best_gain = np.full(n_slots, -np.inf)
    best_w = w_t.copy()
    active = np.ones(n_slots, dtype=bool)

    for _ in range(max_iter):
        s = w_t @ a_bs_c                                     # a_bs^H w per slot
        cascaded = (amp * u_beta) * np.abs(s) * d_k * q      # after the Doppler step
        direct = np.einsum("mk,km->k", h_d.conj(), w_t)
        align = _unit(direct) * _unit_conj(cascaded)         # exp(j eps)
        g1 = align * d_k * _unit_conj(s) * (amp * u_beta) * q
        row = g1[:, None] * a_bs_c[None, :] + h_dc_t         # (K, M)
        row_norm = np.linalg.norm(row, axis=1)
        gain = power * row_norm ** 2
        w_new = np.where(
            row_norm[:, None] > 0,
            math.sqrt(power) * row.conj() / np.where(row_norm == 0, 1.0, row_norm)[:, None],
            w_t,
        )

        improved = active & (gain > best_gain)
        small_step = np.zeros(n_slots, dtype=bool)
        with np.errstate(invalid="ignore"):
            prev = np.where(best_gain > 0, best_gain, np.nan)
            rel = (gain - prev) / gain
            small_step[improved] = rel[improved] < tol
        best_gain[improved] = gain[improved]
        best_w[improved] = w_new[improved]
        best_row[improved] = row[improved]
        active = improved & ~small_step
        if not np.any(active):
            break
        w_t = np.where(improved[:, None], w_new, w_t)

    return _frame_solution(best_row, best_w, h_d)


def random_phase_frame(drop: Drop, power: float, phases: np.ndarray) -> FrameSolution:
    """Fixed random RIS phases across the frame, per-slot MRT beams."""
    h_d = drop.direct_all()
    h_r = drop.ris_ap_all()
    factor = np.exp(1j * phases)
    row = np.einsum("nk,nm->km", h_r.conj() * factor[:, None], drop.bs_ris) + h_d.conj().T
    row_norm = np.linalg.norm(row, axis=1)
    if np.any(row_norm == 0.0):
        raise DegenerateChannelError("composite channel is zero; MRT undefined")
    w_t = math.sqrt(power) * row.conj() / row_norm[:, None]
    return _frame_solution(row, w_t, h_d)


def no_ris_frame(drop: Drop, power: float, mode: str = "remove") -> FrameSolution:
    """Direct-only MRT; ``identity_phase`` keeps the unphased cascade instead."""
    h_d = drop.direct_all()
    if mode == "identity_phase":
        return random_phase_frame(drop, power, np.zeros(drop.params.num_ris))
    if mode != "remove":
        raise ValueError(f"unknown no_ris_mode {mode!r}")
    norms = np.linalg.norm(h_d, axis=0)
    if np.any(norms == 0.0):
        raise DegenerateChannelError("direct channel is zero; no-RIS MRT undefined")
    w_t = math.sqrt(power) * (h_d / norms).T
    eff = np.einsum("mk,km->k", h_d.conj(), w_t)
    return FrameSolution(eff, eff, np.zeros_like(eff), np.abs(eff) ** 2)
