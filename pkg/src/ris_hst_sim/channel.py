"""Geometry, steering vectors and Rician channel construction.

A "drop" is one random realization of the scenario: path gains for the
static base-station/RIS link, a path gain for the RIS/access-point link,
and per-element fading sequences spanning one frame of ``num_slots``
slots.  Within a frame the array geometry is frozen; train motion enters
only through the Doppler phase ramp on the line-of-sight terms and the
Jakes spectrum of the diffuse terms.

Array conventions: the base station is a uniform linear array along the
global x axis, the RIS a uniform planar array in the y-z plane, so both
broadsides point along +x.  Azimuth is measured from broadside in the
x-y plane, elevation from the horizontal plane.  Geometric angle
derivation raises on back-lobe placements (|azimuth| > pi/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .numerics import JakesProcess, RngStream, jakes_block, sample_cn

__all__ = [
    "SPEED_OF_LIGHT",
    "ScenarioParams",
    "AngleSet",
    "ChannelRealization",
    "Drop",
    "FadingDraws",
    "doppler_frequency",
    "steering_ula",
    "steering_upa",
    "path_loss",
    "angles_from_geometry",
    "ula_angle_from_geometry",
    "geometric_angles",
    "stochastic_angles",
    "draw_fading",
    "assemble_drop",
    "draw_drop",
    "bs_ris_channel",
    "ris_ap_channel",
    "direct_channel",
]

SPEED_OF_LIGHT = 299_792_458.0

_HALF_PI = 0.5 * math.pi
_ANGLE_TOL = 1e-9


@dataclass(frozen=True)
class ScenarioParams:
    """Physical constants and geometry of one simulation scenario.

    Powers and gains are linear (watts / ratios); use the harness loader
    to convert dB-valued configuration fields.
    """

    train_speed_mps: float = 100.0
    carrier_hz: float = 5.0e9
    bandwidth_hz: float = 100.0e3
    noise_power_w: float = 1.0e-12
    tx_power_w: float = 10.0
    num_tx: int = 2
    ris_side: int = 40
    frame_s: float = 3.0e-3
    num_slots: int = 100
    rician_k: float = 3.0
    ref_loss: float = 1.0e-3
    pl_exp_direct: float = 3.8
    pl_exp_bs_ris: float = 2.2
    pl_exp_ris_ap: float = 2.8
    bs_pos: tuple = (0.0, 0.0, 30.0)
    ris_pos: tuple = (0.0, 300.0, 30.0)
    ap_pos: tuple = (20.0, 300.0, 0.0)
    cap_gap: float = 1.25
    snr_threshold: float = 10.0
    angle_mode: str = "geometric"
    num_sinusoids: int = 64
    literal_ris_pathloss_exponent: bool = False

    def __post_init__(self):
        if self.num_tx < 1:
            raise ValueError("num_tx must be >= 1")
        if self.ris_side < 1:
            raise ValueError("ris_side must be >= 1")
        if not self.rician_k >= 0.0:
            raise ValueError("rician_k must be >= 0")
        if self.cap_gap < 1.0:
            raise ValueError("cap_gap must be >= 1")
        if self.num_slots < 1 or self.frame_s <= 0.0:
            raise ValueError("frame_s and num_slots must be positive")
        for name in ("noise_power_w", "tx_power_w", "ref_loss", "carrier_hz", "bandwidth_hz"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.train_speed_mps < 0.0:
            raise ValueError("train_speed_mps must be >= 0")
        if self.angle_mode not in ("geometric", "stochastic"):
            raise ValueError(f"unknown angle_mode {self.angle_mode!r}")
        object.__setattr__(self, "bs_pos", tuple(float(v) for v in self.bs_pos))
        object.__setattr__(self, "ris_pos", tuple(float(v) for v in self.ris_pos))
        object.__setattr__(self, "ap_pos", tuple(float(v) for v in self.ap_pos))

    @property
    def slot_duration_s(self) -> float:
        return self.frame_s / self.num_slots

    @property
    def num_ris(self) -> int:
        return self.ris_side ** 2

    @property
    def los_weight(self) -> float:
        """sqrt(kappa / (1 + kappa)); 1 in the pure line-of-sight limit."""
        if math.isinf(self.rician_k):
            return 1.0
        return math.sqrt(self.rician_k / (1.0 + self.rician_k))

    @property
    def nlos_weight(self) -> float:
        """sqrt(1 / (1 + kappa)); 0 in the pure line-of-sight limit."""
        if math.isinf(self.rician_k):
            return 0.0
        return math.sqrt(1.0 / (1.0 + self.rician_k))

    def distance_bs_ap(self) -> float:
        return _dist(self.bs_pos, self.ap_pos)

    def distance_bs_ris(self) -> float:
        return _dist(self.bs_pos, self.ris_pos)

    def distance_ris_ap(self) -> float:
        return _dist(self.ris_pos, self.ap_pos)


def _dist(a, b) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


@dataclass(frozen=True)
class AngleSet:
    """Azimuth/elevation pairs of the three links plus the BS transmit angles.

    ``bs_ris_*`` are seen from the RIS toward the BS, ``ris_ap_*`` from the
    RIS toward the AP.  ``bs_transmit`` steers the BS array toward the RIS,
    ``bs_transmit_direct`` toward the AP (the direct-link line of sight).
    """

    bs_ris_azimuth: float
    bs_ris_elevation: float
    ris_ap_azimuth: float
    ris_ap_elevation: float
    bs_transmit: float
    bs_transmit_direct: float = 0.0

    def __post_init__(self):
        for name in ("bs_ris_azimuth", "bs_ris_elevation", "ris_ap_azimuth",
                     "ris_ap_elevation", "bs_transmit", "bs_transmit_direct"):
            v = getattr(self, name)
            if abs(v) > _HALF_PI + _ANGLE_TOL:
                raise ValueError(f"{name}={v} outside [-pi/2, pi/2]")


@dataclass
class ChannelRealization:
    """All channel objects of one time slot, LOS/NLOS parts kept separate.

    ``direct`` and ``ris_ap`` already combine their parts with the Rician
    weights; the stored ``*_los`` / ``*_nlos`` arrays are unweighted.
    """

    slot_index: int
    direct: np.ndarray
    direct_los: np.ndarray
    direct_nlos: np.ndarray
    bs_ris: np.ndarray
    ris_ap: np.ndarray
    ris_ap_los: np.ndarray
    ris_ap_nlos: np.ndarray
    path_gain_bs_ris: complex
    path_gain_ris_ap: complex
    doppler_hz: float


# ---------------------------------------------------------------------------
# Elementary building blocks
# ---------------------------------------------------------------------------

def doppler_frequency(params: ScenarioParams) -> float:
    """Doppler shift v * f_c / c for the configured train speed."""
    return params.train_speed_mps * params.carrier_hz / SPEED_OF_LIGHT


def steering_ula(angle: float, m: int) -> np.ndarray:
    """Half-wavelength ULA steering vector, entry i = exp(j pi i sin(angle))."""
    if m < 1:
        raise ValueError("ULA size must be >= 1")
    return np.exp(1j * np.pi * np.arange(m) * math.sin(angle))


def steering_upa(azimuth: float, elevation: float, n: int) -> np.ndarray:
    """n x n UPA steering vector a_y(az, el) kron a_z(el), length n**2."""
    if n < 1:
        raise ValueError("UPA side must be >= 1")
    idx = np.arange(n)
    a_y = np.exp(1j * np.pi * idx * math.sin(azimuth) * math.cos(elevation))
    a_z = np.exp(1j * np.pi * idx * math.sin(elevation))
    return np.kron(a_y, a_z)


def path_loss(distance_m: float, exponent: float, params: ScenarioParams) -> float:
    """Linear power gain ref_loss * (d / 1 m)^-exponent; invalid below 1 m."""
    if distance_m < 1.0:
        raise ValueError(f"path loss model invalid below the 1 m reference, got {distance_m}")
    return params.ref_loss * distance_m ** (-exponent)


def _ris_ap_path_gain(params: ScenarioParams, distance_m: float) -> float:
    # the literal flag flips the RIS-AP exponent sign (growth with distance),
    # kept only for side-by-side comparison
    exp = -params.pl_exp_ris_ap if params.literal_ris_pathloss_exponent else params.pl_exp_ris_ap
    return path_loss(distance_m, exp, params)


def angles_from_geometry(a, b) -> tuple:
    """Azimuth/elevation of the displacement from point a to point b.

    Azimuth is atan2 over the horizontal displacement measured from the +x
    broadside, elevation the angle of the displacement above the horizontal
    plane.  Raises for coincident points.
    """
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(d))
    if norm < 1e-12:
        raise ValueError("coincident points have no defined direction")
    azimuth = math.atan2(d[1], d[0]) if (abs(d[0]) > 0 or abs(d[1]) > 0) else 0.0
    elevation = math.asin(max(-1.0, min(1.0, d[2] / norm)))
    return azimuth, elevation


def ula_angle_from_geometry(a, b) -> float:
    """BS transmit angle: arcsine of the x-direction cosine of b - a."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(d))
    if norm < 1e-12:
        raise ValueError("coincident points have no defined direction")
    return math.asin(max(-1.0, min(1.0, d[0] / norm)))


def _check_front_lobe(name: str, azimuth: float):
    if abs(azimuth) > _HALF_PI + _ANGLE_TOL:
        raise ValueError(
            f"{name} azimuth {azimuth:.4f} rad lies behind the array broadside; "
            "reposition the nodes or use stochastic angles"
        )


def geometric_angles(params: ScenarioParams) -> AngleSet:
    """Derive every link angle from the scenario coordinates."""
    az1, el1 = angles_from_geometry(params.ris_pos, params.bs_pos)
    az2, el2 = angles_from_geometry(params.ris_pos, params.ap_pos)
    _check_front_lobe("BS-RIS", az1)
    _check_front_lobe("RIS-AP", az2)
    phi = ula_angle_from_geometry(params.bs_pos, params.ris_pos)
    phi_d = ula_angle_from_geometry(params.bs_pos, params.ap_pos)
    return AngleSet(az1, el1, az2, el2, phi, phi_d)


def stochastic_angles(rng: RngStream) -> AngleSet:
    """Draw all six angles uniformly over [-pi/2, pi/2]."""
    vals = rng.generator.uniform(-_HALF_PI, _HALF_PI, size=6)
    return AngleSet(*vals)


# ---------------------------------------------------------------------------
# Drop construction
# ---------------------------------------------------------------------------

class FadingDraws(NamedTuple):
    """Scale-free random draws of one drop, reusable across sweep positions."""

    alpha_unit: complex
    beta_unit: complex
    direct_fading: np.ndarray  # (num_tx, num_slots), unit power
    ris_fading: np.ndarray     # (num_ris, num_slots), unit power


def draw_fading(params: ScenarioParams, rng: RngStream) -> FadingDraws:
    """Consume one stream in fixed order: alpha, beta, direct block, RIS block.

    The order matters for matched-seed sweeps: quantities whose shape does
    not depend on the RIS size come first, so they are identical across an
    element sweep driven by the same (seed, trial) stream.
    """
    alpha_unit = sample_cn(0.0, 1.0, rng)
    beta_unit = sample_cn(0.0, 1.0, rng)
    fd = doppler_frequency(params)
    proc = JakesProcess(fd, params.slot_duration_s, params.num_slots, params.num_sinusoids)
    direct_fading = jakes_block(proc, rng, params.num_tx)
    ris_fading = jakes_block(proc, rng, params.num_ris)
    return FadingDraws(alpha_unit, beta_unit, direct_fading, ris_fading)


@dataclass
class Drop:
    """One realized drop: static gains plus per-slot channel factories."""

    params: ScenarioParams
    angles: AngleSet
    alpha: complex
    beta: complex
    bs_ris: np.ndarray          # (num_ris, num_tx), rank one
    ris_arrival: np.ndarray     # arrival steering from the BS, (num_ris,)
    ris_steering: np.ndarray    # departure steering toward the AP, (num_ris,)
    bs_steering: np.ndarray     # BS steering toward the RIS, (num_tx,)
    direct_steering: np.ndarray  # BS steering toward the AP, (num_tx,)
    direct_scale: float          # sqrt of the direct-link path gain
    direct_fading: np.ndarray    # (num_tx, num_slots)
    ris_fading: np.ndarray       # (num_ris, num_slots)
    doppler_hz: float
    _doppler_phase: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = np.arange(1, self.params.num_slots + 1)
        self._doppler_phase = np.exp(
            1j * 2.0 * np.pi * k * self.doppler_hz * self.params.slot_duration_s
        )

    def doppler_factors(self) -> np.ndarray:
        """Per-slot LOS rotation exp(j 2 pi k fd Tc), k = 1..num_slots."""
        return self._doppler_phase

    # -- per-slot pieces (slot index k runs from 1 to num_slots) ------------

    def _check_slot(self, k: int):
        if not 1 <= k <= self.params.num_slots:
            raise ValueError(f"slot index {k} outside 1..{self.params.num_slots}")

    def direct_los(self, k: int) -> np.ndarray:
        self._check_slot(k)
        return self.direct_scale * self.direct_steering * self._doppler_phase[k - 1]

    def direct_nlos(self, k: int) -> np.ndarray:
        self._check_slot(k)
        return self.direct_scale * self.direct_fading[:, k - 1]

    def direct(self, k: int) -> np.ndarray:
        p = self.params
        return p.los_weight * self.direct_los(k) + p.nlos_weight * self.direct_nlos(k)

    def ris_ap_los(self, k: int) -> np.ndarray:
        self._check_slot(k)
        return self.beta * self.ris_steering * self._doppler_phase[k - 1]

    def ris_ap_nlos(self, k: int) -> np.ndarray:
        self._check_slot(k)
        scale = math.sqrt(_ris_ap_path_gain(self.params, self.params.distance_ris_ap()))
        return scale * self.ris_fading[:, k - 1]

    def ris_ap(self, k: int) -> np.ndarray:
        p = self.params
        return p.los_weight * self.ris_ap_los(k) + p.nlos_weight * self.ris_ap_nlos(k)

    def realization(self, k: int) -> ChannelRealization:
        return ChannelRealization(
            slot_index=k,
            direct=self.direct(k),
            direct_los=self.direct_los(k),
            direct_nlos=self.direct_nlos(k),
            bs_ris=self.bs_ris,
            ris_ap=self.ris_ap(k),
            ris_ap_los=self.ris_ap_los(k),
            ris_ap_nlos=self.ris_ap_nlos(k),
            path_gain_bs_ris=self.alpha,
            path_gain_ris_ap=self.beta,
            doppler_hz=self.doppler_hz,
        )

    # -- whole-frame arrays used by the experiment harness ------------------

    def direct_all(self) -> np.ndarray:
        """(num_tx, num_slots) combined direct channel for every slot."""
        p = self.params
        los = self.direct_scale * np.outer(self.direct_steering, self._doppler_phase)
        return p.los_weight * los + p.nlos_weight * self.direct_scale * self.direct_fading

    def ris_ap_los_all(self) -> np.ndarray:
        return self.beta * np.outer(self.ris_steering, self._doppler_phase)

    def ris_ap_all(self) -> np.ndarray:
        p = self.params
        scale = math.sqrt(_ris_ap_path_gain(p, p.distance_ris_ap()))
        return p.los_weight * self.ris_ap_los_all() + p.nlos_weight * scale * self.ris_fading


def assemble_drop(params: ScenarioParams, angles: AngleSet, draws: FadingDraws) -> Drop:
    """Scale unit draws by the geometry-dependent gains of this scenario."""
    rho_r2 = path_loss(params.distance_bs_ris(), params.pl_exp_bs_ris, params)
    rho_k2 = _ris_ap_path_gain(params, params.distance_ris_ap())
    pl_ba = path_loss(params.distance_bs_ap(), params.pl_exp_direct, params)

    alpha = math.sqrt(rho_r2) * draws.alpha_unit
    beta = math.sqrt(rho_k2) * draws.beta_unit

    a_arrival = steering_upa(angles.bs_ris_azimuth, angles.bs_ris_elevation, params.ris_side)
    a_departure = steering_upa(angles.ris_ap_azimuth, angles.ris_ap_elevation, params.ris_side)
    a_bs = steering_ula(angles.bs_transmit, params.num_tx)
    a_bs_direct = steering_ula(angles.bs_transmit_direct, params.num_tx)

    return Drop(
        params=params,
        angles=angles,
        alpha=alpha,
        beta=beta,
        bs_ris=alpha * np.outer(a_arrival, a_bs.conj()),
        ris_arrival=a_arrival,
        ris_steering=a_departure,
        bs_steering=a_bs,
        direct_steering=a_bs_direct,
        direct_scale=math.sqrt(pl_ba),
        direct_fading=draws.direct_fading,
        ris_fading=draws.ris_fading,
        doppler_hz=doppler_frequency(params),
    )


def draw_drop(params: ScenarioParams, angles: AngleSet, rng: RngStream) -> Drop:
    """Draw a fresh drop for the given angles from one random stream."""
    return assemble_drop(params, angles, draw_fading(params, rng))


# ---------------------------------------------------------------------------
# Contract-level single-link constructors
# ---------------------------------------------------------------------------

class RicianLink(NamedTuple):
    channel: np.ndarray
    los: np.ndarray
    nlos: np.ndarray
    path_gain: complex


def bs_ris_channel(params: ScenarioParams, angles: AngleSet, rng: RngStream):
    """Static rank-one BS-RIS channel and its complex path gain alpha."""
    rho_r2 = path_loss(params.distance_bs_ris(), params.pl_exp_bs_ris, params)
    alpha = sample_cn(0.0, rho_r2, rng)
    a_arrival = steering_upa(angles.bs_ris_azimuth, angles.bs_ris_elevation, params.ris_side)
    a_bs = steering_ula(angles.bs_transmit, params.num_tx)
    return alpha * np.outer(a_arrival, a_bs.conj()), alpha


def ris_ap_channel(k: int, params: ScenarioParams, angles: AngleSet,
                   nlos: np.ndarray, rng: RngStream) -> RicianLink:
    """Rician RIS-AP channel at slot k with a Doppler-rotated LOS part.

    ``nlos`` is a precomputed unit-power fading block of shape
    (num_ris, num_slots); beta is drawn from ``rng`` once per call.
    """
    if not 1 <= k <= params.num_slots:
        raise ValueError(f"slot index {k} outside 1..{params.num_slots}")
    rho_k2 = _ris_ap_path_gain(params, params.distance_ris_ap())
    beta = sample_cn(0.0, rho_k2, rng)
    steering = steering_upa(angles.ris_ap_azimuth, angles.ris_ap_elevation, params.ris_side)
    phase = np.exp(1j * 2.0 * np.pi * k * doppler_frequency(params) * params.slot_duration_s)
    los = beta * steering * phase
    nlos_k = math.sqrt(rho_k2) * nlos[:, k - 1]
    combined = params.los_weight * los + params.nlos_weight * nlos_k
    return RicianLink(combined, los, nlos_k, beta)


def direct_channel(k: int, params: ScenarioParams, rng: RngStream) -> np.ndarray:
    """Rician direct BS-AP channel at slot k.

    Consumes the stream in fixed order (angles when stochastic, then the
    fading block), so equal streams and slots give identical vectors.
    """
    if not 1 <= k <= params.num_slots:
        raise ValueError(f"slot index {k} outside 1..{params.num_slots}")
    if params.angle_mode == "stochastic":
        angles = stochastic_angles(rng)
    else:
        angles = geometric_angles(params)
    pl_ba = path_loss(params.distance_bs_ap(), params.pl_exp_direct, params)
    fd = doppler_frequency(params)
    proc = JakesProcess(fd, params.slot_duration_s, params.num_slots, params.num_sinusoids)
    fading = jakes_block(proc, rng, params.num_tx)
    steering = steering_ula(angles.bs_transmit_direct, params.num_tx)
    phase = np.exp(1j * 2.0 * np.pi * k * fd * params.slot_duration_s)
    los = math.sqrt(pl_ba) * steering * phase
    nlos = math.sqrt(pl_ba) * fading[:, k - 1]
    return params.los_weight * los + params.nlos_weight * nlos


def scenario_at_ap(params: ScenarioParams, ap_pos) -> ScenarioParams:
    """Copy of the scenario with the access point moved to ``ap_pos``."""
    return replace(params, ap_pos=tuple(float(v) for v in ap_pos))
