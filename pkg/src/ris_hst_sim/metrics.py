"""Performance metrics of the optimized link: rate, capacity, outage, BER.

The analytic outage treats the effective scalar channel, conditioned on
the optimized per-slot state, as complex Gaussian with first and second
moments assembled from the direct and cascaded scalars and the Rician
weights.  Its squared magnitude is then noncentral chi-square with two
degrees of freedom, giving the outage through the first-order Marcum Q.

Two outage conventions are provided: ``standard`` carries the factor of
two of the Rician-envelope CDF and is the one the Monte Carlo validates;
``unscaled`` omits it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import ScenarioParams
from .numerics import gaussian_q, marcum_q1, marcum_q1_array
from .optimizer import AlignmentScalars

__all__ = [
    "OUTAGE_CONVENTIONS",
    "CompositeMoments",
    "OutageParams",
    "MetricRecord",
    "achievable_rate",
    "channel_capacity",
    "composite_moments",
    "outage_params",
    "outage_analytic",
    "outage_empirical",
    "ber_bpsk",
    "ber_bpsk_array",
    "outage_analytic_array",
    "records_from_frame",
]

OUTAGE_CONVENTIONS = ("standard", "unscaled")


@dataclass(frozen=True)
class CompositeMoments:
    """Mean and variance of the effective scalar channel plus Rician weights."""

    mean: complex
    variance: float
    rician_weight_los: float
    rician_weight_nlos: float

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError("variance must be >= 0")


@dataclass(frozen=True)
class OutageParams:
    """Noncentral chi-square parameters feeding the Marcum evaluation."""

    noncentrality: float
    threshold_norm: float
    dof: int = 2
    convention: str = "standard"

    def __post_init__(self):
        if self.dof != 2:
            raise ValueError("only two degrees of freedom are supported")
        if self.noncentrality < 0.0 or self.threshold_norm < 0.0:
            raise ValueError("noncentrality and threshold must be >= 0")
        if self.convention not in OUTAGE_CONVENTIONS:
            raise ValueError(f"unknown outage convention {self.convention!r}")


@dataclass
class MetricRecord:
    """Per-slot metric bundle of one scheme, serializable as a CSV row."""

    slot: int
    gain_linear: float
    rate_bps_hz: float
    capacity_bps: float
    outage_prob: float
    ber: float
    scheme: str

    def __post_init__(self):
        if not 0.0 <= self.outage_prob <= 1.0 or not 0.0 <= self.ber <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.rate_bps_hz < 0.0 or self.capacity_bps < 0.0:
            raise ValueError("rate and capacity must be >= 0")

    HEADER = ("slot", "scheme", "gain_linear", "rate_bps_hz", "capacity_bps",
              "outage_prob", "ber")

    def csv_row(self) -> tuple:
        return (self.slot, self.scheme, self.gain_linear, self.rate_bps_hz,
                self.capacity_bps, self.outage_prob, self.ber)


def achievable_rate(effective, params: ScenarioParams) -> float:
    """Average spectral efficiency with the capacity-gap penalty (bits/s/Hz)."""
    eff = np.asarray(effective)
    if eff.size == 0:
        raise ValueError("need at least one slot")
    snr = np.abs(eff) ** 2 / (params.cap_gap * params.noise_power_w)
    return float(np.mean(np.log2(1.0 + snr)))


def channel_capacity(effective, params: ScenarioParams) -> float:
    """Average per-slot Shannon capacity over the frame (bits/s)."""
    eff = np.asarray(effective)
    if eff.size == 0:
        raise ValueError("need at least one slot")
    snr = np.abs(eff) ** 2 / params.noise_power_w
    return float(np.mean(params.bandwidth_hz * np.log2(1.0 + snr)))


def composite_moments(scalars: AlignmentScalars, params: ScenarioParams) -> CompositeMoments:
    """Moments of the effective channel conditioned on the optimized state.

    mean = rho * direct + rho^2 * aligned cascade,
    variance = (1-rho^2) |direct|^2 + (1-rho^2)^2 |aligned cascade|^2,
    with rho^2 = kappa/(1+kappa).
    """
    rho = params.los_weight
    varrho = params.nlos_weight
    aligned = scalars.cascaded_scalar * np.exp(1j * scalars.alignment_phase)
    direct = scalars.direct_scalar
    mean = rho * direct + rho ** 2 * aligned
    variance = varrho ** 2 * abs(direct) ** 2 + varrho ** 4 * abs(aligned) ** 2
    return CompositeMoments(complex(mean), float(variance), rho, varrho)


def _outage_args(mu2, variance, threshold, convention):
    scale = 2.0 if convention == "standard" else 1.0
    a = np.sqrt(scale * mu2 / variance)
    b = np.sqrt(scale * threshold / variance)
    return a, b


def outage_params(m: CompositeMoments, params: ScenarioParams,
                  convention: str = "standard") -> OutageParams:
    """Noncentrality and normalized threshold of the effective-gain law."""
    if m.variance <= 0.0:
        raise ValueError("outage parameters need a strictly positive variance")
    threshold = params.noise_power_w * params.snr_threshold
    return OutageParams(
        noncentrality=abs(m.mean) ** 2 / m.variance,
        threshold_norm=threshold / m.variance,
        convention=convention,
    )


def outage_analytic(m: CompositeMoments, params: ScenarioParams,
                    convention: str = "standard") -> float:
    """P(|effective channel|^2 < noise * snr_threshold) via Marcum Q."""
    if convention not in OUTAGE_CONVENTIONS:
        raise ValueError(f"unknown outage convention {convention!r}")
    threshold = params.noise_power_w * params.snr_threshold
    if m.variance == 0.0:
        return 1.0 if abs(m.mean) ** 2 < threshold else 0.0
    op = outage_params(m, params, convention)
    scale = 2.0 if op.convention == "standard" else 1.0
    q = marcum_q1(math.sqrt(scale * op.noncentrality), math.sqrt(scale * op.threshold_norm))
    return min(1.0, max(0.0, 1.0 - q))


def outage_analytic_array(mean, variance, params: ScenarioParams,
                          convention: str = "standard") -> np.ndarray:
    """Vectorized analytic outage over arrays of moments."""
    if convention not in OUTAGE_CONVENTIONS:
        raise ValueError(f"unknown outage convention {convention!r}")
    mu2 = np.abs(np.asarray(mean)) ** 2
    var = np.asarray(variance, dtype=float)
    threshold = params.noise_power_w * params.snr_threshold
    out = np.where(mu2 < threshold, 1.0, 0.0)
    pos = var > 0.0
    if np.any(pos):
        a, b = _outage_args(mu2[pos], var[pos], threshold, convention)
        out[pos] = 1.0 - marcum_q1_array(a, b)
    return np.clip(out, 0.0, 1.0)


def outage_empirical(gain_samples, params: ScenarioParams) -> float:
    """Fraction of gain samples below the SNR threshold."""
    g = np.asarray(gain_samples, dtype=float)
    if g.size == 0:
        raise ValueError("need at least one sample")
    return float(np.mean(g < params.noise_power_w * params.snr_threshold))


def ber_bpsk(snr_per_bit: float) -> float:
    """Uncoded BPSK bit error probability Q(sqrt(2 * snr_per_bit))."""
    if not (snr_per_bit >= 0.0):
        raise ValueError(f"snr_per_bit must be >= 0, got {snr_per_bit}")
    return min(1.0, max(0.0, gaussian_q(math.sqrt(2.0 * snr_per_bit))))


def ber_bpsk_array(snr_per_bit) -> np.ndarray:
    """Vectorized BPSK error probability."""
    snr = np.asarray(snr_per_bit, dtype=float)
    if np.any(snr < 0.0):
        raise ValueError("snr_per_bit must be >= 0")
    return np.clip(0.5 * erfc(np.sqrt(snr)), 0.0, 1.0)


def records_from_frame(solution, params: ScenarioParams, scheme: str,
                       convention: str = "standard"):
    """Per-slot :class:`MetricRecord` list for one optimized frame."""
    snr = solution.gain / params.noise_power_w
    rate = np.log2(1.0 + snr / params.cap_gap)
    capacity = params.bandwidth_hz * np.log2(1.0 + snr)
    rho, varrho = params.los_weight, params.nlos_weight
    mu = rho * solution.direct + rho ** 2 * solution.cascaded
    var = (varrho ** 2 * np.abs(solution.direct) ** 2
           + varrho ** 4 * np.abs(solution.cascaded) ** 2)
    outage = outage_analytic_array(mu, var, params, convention)
    ber = ber_bpsk_array(snr)
    return [
        MetricRecord(k + 1, float(solution.gain[k]), float(rate[k]), float(capacity[k]),
                     float(outage[k]), float(ber[k]), scheme)
        for k in range(len(snr))
    ]
