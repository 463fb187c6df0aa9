"""Experiment orchestration: configuration, Monte Carlo sweeps, CSV output.

Reproducibility contract
------------------------
Every trial owns the counter-based stream ``(seed, trial_index)`` and
consumes it in a fixed order: link angles (stochastic mode only), the
fading draws of the drop (alpha, beta, direct block, RIS block), the
held random baseline phases, then any per-sweep-point noise draws.  For
the element sweep each sweep point restarts the trial stream, so draws
whose shape does not depend on the RIS size are matched across points.
Aggregation reduces per-trial arrays in trial order, which makes results
identical for any parallel degree.

Power-like configuration fields are dB/dBm valued in the JSON file and
converted to linear on load.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__
from .channel import (
    ScenarioParams,
    assemble_drop,
    draw_fading,
    geometric_angles,
    scenario_at_ap,
    stochastic_angles,
)
from .metrics import OUTAGE_CONVENTIONS, ber_bpsk_array, outage_analytic_array
from .numerics import RngStream
from .optimizer import (
    DegenerateChannelError,
    bcd_frame,
    no_ris_frame,
    random_phase_frame,
)

__all__ = [
    "ConfigurationError",
    "ExperimentConfig",
    "ResultTable",
    "EXPERIMENTS",
    "SCHEMES",
    "load_config",
    "config_from_dict",
    "run_experiment",
    "emit_csv",
    "db_to_linear",
    "dbm_to_watts",
]

EXPERIMENTS = (
    "gain_vs_time",
    "rate_vs_elements",
    "capacity_vs_time",
    "ber_vs_position",
    "outage_vs_time",
)

SCHEMES = ("bcd", "random_phase", "no_ris")

_HEADERS = {
    "gain_vs_time": ("slot", "scheme", "gain_db_mean", "gain_db_stderr", "failures"),
    "rate_vs_elements": ("n_elements", "scheme", "rate_bps_hz_mean", "rate_bps_hz_stderr", "failures"),
    "capacity_vs_time": ("slot", "scheme", "capacity_bps_mean", "capacity_bps_stderr", "failures"),
    "ber_vs_position": ("ap_y_m", "scheme", "ber_analytic_mean", "ber_analytic_stderr",
                        "ber_empirical", "failures"),
    "outage_vs_time": ("slot", "scheme", "outage_analytic_mean", "outage_empirical", "failures"),
}


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration; message names the field."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioParams
    experiment: str
    schemes: tuple = SCHEMES
    trials: int = 500
    seed: int = 1
    sweep: tuple = ()
    output_path: str = ""
    outage_convention: str = "standard"
    no_ris_mode: str = "remove"
    rate_model: str = "gap"
    bcd_tol: float = 1e-8
    bcd_max_iter: int = 50
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"experiment: {self.experiment!r} is not one of {EXPERIMENTS}")
        if self.trials < 1:
            raise ConfigurationError("trials: must be >= 1")
        if not self.schemes or any(s not in SCHEMES for s in self.schemes):
            raise ConfigurationError(f"schemes: must be a non-empty subset of {SCHEMES}")
        if self.outage_convention not in OUTAGE_CONVENTIONS:
            raise ConfigurationError(
                f"flags.outage_convention: {self.outage_convention!r} not in {OUTAGE_CONVENTIONS}")
        if self.no_ris_mode not in ("remove", "identity_phase"):
            raise ConfigurationError(f"flags.no_ris_mode: {self.no_ris_mode!r} invalid")
        if self.rate_model not in ("gap", "multiplier"):
            raise ConfigurationError(f"flags.rate_model: {self.rate_model!r} invalid")
        if self.jobs < 1:
            raise ConfigurationError("jobs: must be >= 1")
        if self.experiment in ("rate_vs_elements", "ber_vs_position") and not self.sweep:
            raise ConfigurationError(f"sweep: required for {self.experiment}")
        if self.experiment == "rate_vs_elements":
            for v in self.sweep:
                side = math.isqrt(int(v))
                if side * side != int(v) or v < 1:
                    raise ConfigurationError(
                        f"sweep: RIS element count {v} is not a perfect square")


@dataclass
class ResultTable:
    experiment: str
    header: tuple
    rows: list
    seed: int
    trials: int
    config_hash: str
    failures_total: int = 0


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------

_SCENARIO_DEFAULTS = {
    "train_speed_kmh": 360.0,
    "carrier_hz": 5.0e9,
    "bandwidth_hz": 100.0e3,
    "noise_power_dbm": -90.0,
    "transmit_power_dbm": 40.0,
    "num_tx": 2,
    "ris_elements": 1600,
    "frame_ms": 3.0,
    "num_slots": 100,
    "rician_k": 3.0,
    "ref_loss_db": 30.0,
    "pl_exp_direct": 3.8,
    "pl_exp_bs_ris": 2.2,
    "pl_exp_ris_ap": 2.8,
    "bs_pos": (0.0, 0.0, 30.0),
    "ris_pos": (0.0, 300.0, 30.0),
    "ap_pos": (20.0, 300.0, 0.0),
    "modulation_efficiency": 0.8,
    "snr_threshold_db": 10.0,
    "num_sinusoids": 64,
}

_FLAG_DEFAULTS = {
    "outage_convention": "standard",
    "no_ris_mode": "remove",
    "rate_model": "gap",
    "literal_ris_pathloss_exponent": False,
    "angle_mode": "geometric",
}

_DEFAULT_SWEEPS = {
    "rate_vs_elements": (100, 400, 900, 1600),
    "ber_vs_position": tuple(float(y) for y in range(0, 301, 20)),
}

_DEFAULT_TRIALS = {"ber_vs_position": 2000}


def _build_scenario(raw: dict, angle_mode: str, literal_exp: bool) -> ScenarioParams:
    unknown = set(raw) - set(_SCENARIO_DEFAULTS) - {"train_speed_mps", "frame_s"}
    if unknown:
        raise ConfigurationError(f"scenario.{sorted(unknown)[0]}: unknown field")
    merged = dict(_SCENARIO_DEFAULTS, **raw)
    if "train_speed_mps" in raw:
        speed = float(raw["train_speed_mps"])
    else:
        speed = float(merged["train_speed_kmh"]) / 3.6
    frame_s = float(raw["frame_s"]) if "frame_s" in raw else float(merged["frame_ms"]) * 1e-3

    n_elements = int(merged["ris_elements"])
    side = math.isqrt(n_elements)
    if side * side != n_elements or n_elements < 1:
        raise ConfigurationError(
            f"scenario.ris_elements: {n_elements} is not a perfect square")
    eff = float(merged["modulation_efficiency"])
    if not 0.0 < eff <= 1.0:
        raise ConfigurationError("scenario.modulation_efficiency: must be in (0, 1]")

    try:
        return ScenarioParams(
            train_speed_mps=speed,
            carrier_hz=float(merged["carrier_hz"]),
            bandwidth_hz=float(merged["bandwidth_hz"]),
            noise_power_w=dbm_to_watts(float(merged["noise_power_dbm"])),
            tx_power_w=dbm_to_watts(float(merged["transmit_power_dbm"])),
            num_tx=int(merged["num_tx"]),
            ris_side=side,
            frame_s=frame_s,
            num_slots=int(merged["num_slots"]),
            rician_k=float(merged["rician_k"]),
            ref_loss=db_to_linear(-float(merged["ref_loss_db"])),
            pl_exp_direct=float(merged["pl_exp_direct"]),
            pl_exp_bs_ris=float(merged["pl_exp_bs_ris"]),
            pl_exp_ris_ap=float(merged["pl_exp_ris_ap"]),
            bs_pos=tuple(merged["bs_pos"]),
            ris_pos=tuple(merged["ris_pos"]),
            ap_pos=tuple(merged["ap_pos"]),
            cap_gap=1.0 / eff,
            snr_threshold=db_to_linear(float(merged["snr_threshold_db"])),
            angle_mode=angle_mode,
            num_sinusoids=int(merged["num_sinusoids"]),
            literal_ris_pathloss_exponent=bool(literal_exp),
        )
    except ValueError as exc:
        raise ConfigurationError(f"scenario: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed configuration mapping and apply defaults."""
    known = {"experiment", "trials", "seed", "schemes", "sweep", "output_path",
             "scenario", "flags", "jobs", "bcd_tol", "bcd_max_iter"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"{sorted(unknown)[0]}: unknown field")
    if "experiment" not in raw:
        raise ConfigurationError("experiment: required field is missing")

    flags = dict(_FLAG_DEFAULTS)
    user_flags = raw.get("flags", {})
    bad = set(user_flags) - set(_FLAG_DEFAULTS)
    if bad:
        raise ConfigurationError(f"flags.{sorted(bad)[0]}: unknown flag")
    flags.update(user_flags)
    if flags["angle_mode"] not in ("geometric", "stochastic"):
        raise ConfigurationError(f"flags.angle_mode: {flags['angle_mode']!r} invalid")

    scenario = _build_scenario(raw.get("scenario", {}), flags["angle_mode"],
                               flags["literal_ris_pathloss_exponent"])

    experiment = raw["experiment"]
    sweep = tuple(raw.get("sweep", _DEFAULT_SWEEPS.get(experiment, ())))
    trials = int(raw.get("trials", _DEFAULT_TRIALS.get(experiment, 500)))
    cfg = ExperimentConfig(
        scenario=scenario,
        experiment=experiment,
        schemes=tuple(raw.get("schemes", SCHEMES)),
        trials=trials,
        seed=int(raw.get("seed", 1)),
        sweep=sweep,
        output_path=str(raw.get("output_path", "")),
        outage_convention=flags["outage_convention"],
        no_ris_mode=flags["no_ris_mode"],
        rate_model=flags["rate_model"],
        bcd_tol=float(raw.get("bcd_tol", 1e-8)),
        bcd_max_iter=int(raw.get("bcd_max_iter", 50)),
        jobs=int(raw.get("jobs", 1)),
    )
    _validate_geometry(cfg)
    return cfg


def _validate_geometry(cfg: ExperimentConfig):
    if cfg.scenario.angle_mode != "geometric":
        return
    try:
        geometric_angles(cfg.scenario)
        if cfg.experiment == "ber_vs_position":
            x, _, z = cfg.scenario.ap_pos
            for y in cfg.sweep:
                geometric_angles(scenario_at_ap(cfg.scenario, (x, y, z)))
    except ValueError as exc:
        raise ConfigurationError(f"scenario geometry: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    """Load and validate a JSON experiment configuration."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    raw = json.loads(text) if text.strip() else {}
    if not isinstance(raw, dict):
        raise ConfigurationError("top level: configuration must be a JSON object")
    return config_from_dict(raw)


def config_digest(cfg: ExperimentConfig) -> str:
    doc = asdict(cfg)
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Per-trial simulation
# ---------------------------------------------------------------------------

def _frame_metrics(cfg, scenario, sol, ber_noise=None):
    """Per-slot metric channels of one scheme: stacked (K, n_channels)."""
    p = scenario
    gain = sol.gain
    snr = gain / p.noise_power_w
    mu = p.los_weight * sol.direct + p.los_weight ** 2 * sol.cascaded
    var = (p.nlos_weight ** 2 * np.abs(sol.direct) ** 2
           + p.nlos_weight ** 4 * np.abs(sol.cascaded) ** 2)
    out_an = outage_analytic_array(mu, var, p, cfg.outage_convention)
    out_emp = (gain < p.noise_power_w * p.snr_threshold).astype(float)
    capacity = p.bandwidth_hz * np.log2(1.0 + snr)
    if cfg.rate_model == "gap":
        rate = np.log2(1.0 + snr / p.cap_gap)
    else:
        rate = (1.0 / p.cap_gap) * np.log2(1.0 + snr)
    ber_an = ber_bpsk_array(snr)
    cols = [gain, rate, capacity, out_an, out_emp, ber_an]
    if ber_noise is not None:
        cols.append((ber_noise > np.sqrt(2.0 * snr)).astype(float))
    return np.column_stack(cols)

# channel indices inside the per-slot metric stack
_GAIN, _RATE, _CAP, _OUT_AN, _OUT_EMP, _BER_AN, _BER_EMP = range(7)


def _run_schemes(cfg, scenario, drop, random_phases, ber_noise_by_scheme=None):
    """(K, n_schemes, n_channels) metric block for one drop; NaN on failure."""
    n_ch = 7 if ber_noise_by_scheme is not None else 6
    out = np.full((scenario.num_slots, len(cfg.schemes), n_ch), np.nan)
    power = scenario.tx_power_w
    for j, scheme in enumerate(cfg.schemes):
        try:
            if scheme == "bcd":
                sol = bcd_frame(drop, power, cfg.bcd_tol, cfg.bcd_max_iter)
            elif scheme == "random_phase":
                sol = random_phase_frame(drop, power, random_phases)
            else:
                sol = no_ris_frame(drop, power, cfg.no_ris_mode)
        except DegenerateChannelError:
            continue
        noise = ber_noise_by_scheme[scheme] if ber_noise_by_scheme is not None else None
        out[:, j, :] = _frame_metrics(cfg, scenario, sol, noise)
    return out


def _simulate_trial(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    """One Monte Carlo trial; see the module docstring for the draw order."""
    scenario = cfg.scenario
    if cfg.experiment == "rate_vs_elements":
        blocks = []
        for n_elements in cfg.sweep:
            sc = replace(scenario, ris_side=math.isqrt(int(n_elements)))
            rng = RngStream(cfg.seed, trial)
            angles = (stochastic_angles(rng) if sc.angle_mode == "stochastic"
                      else geometric_angles(sc))
            draws = draw_fading(sc, rng)
            phases = rng.generator.uniform(0.0, 2.0 * np.pi, sc.num_ris)
            drop = assemble_drop(sc, angles, draws)
            block = _run_schemes(cfg, sc, drop, phases)
            # one rate value per (point, scheme): average the slot rates
            blocks.append(block[:, :, [_RATE]].mean(axis=0))
        return np.stack(blocks)  # (n_points, n_schemes, 1)

    rng = RngStream(cfg.seed, trial)
    angles = (stochastic_angles(rng) if scenario.angle_mode == "stochastic"
              else geometric_angles(scenario))
    draws = draw_fading(scenario, rng)
    phases = rng.generator.uniform(0.0, 2.0 * np.pi, scenario.num_ris)

    if cfg.experiment == "ber_vs_position":
        x, _, z = scenario.ap_pos
        blocks = []
        for y in cfg.sweep:
            sc = scenario_at_ap(scenario, (x, float(y), z))
            pos_angles = angles if sc.angle_mode == "stochastic" else geometric_angles(sc)
            drop = assemble_drop(sc, pos_angles, draws)
            noise = {s: rng.generator.standard_normal(sc.num_slots) for s in SCHEMES}
            block = _run_schemes(cfg, sc, drop, phases, noise)
            # slot-averaged analytic and empirical BER per (point, scheme)
            blocks.append(block[:, :, [_BER_AN, _BER_EMP]].mean(axis=0))
        return np.stack(blocks)  # (n_points, n_schemes, 2)

    drop = assemble_drop(scenario, angles, draws)
    block = _run_schemes(cfg, scenario, drop, phases)  # (K, n_schemes, 6)
    if cfg.experiment == "gain_vs_time":
        return block[:, :, [_GAIN]]
    if cfg.experiment == "capacity_vs_time":
        return block[:, :, [_CAP]]
    return block[:, :, [_OUT_AN, _OUT_EMP]]  # outage_vs_time


def _trial_worker(args):
    cfg, trial = args
    return _simulate_trial(cfg, trial)


# ---------------------------------------------------------------------------
# Aggregation and table assembly
# ---------------------------------------------------------------------------

def _aggregate(stacks):
    """NaN-aware mean/stderr over the trial axis, plus failure counts."""
    data = np.stack(stacks)  # (trials, points, schemes, channels)
    valid = ~np.isnan(data[..., 0])
    n = valid.sum(axis=0)  # (points, schemes)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.nanmean(data, axis=0)
        std = np.nanstd(data, axis=0, ddof=1)
    stderr = np.where(n[..., None] > 1, std / np.sqrt(np.maximum(n[..., None], 1)), 0.0)
    failures = data.shape[0] - n
    return mean, stderr, failures


def _db(x):
    return 10.0 * math.log10(x) if x > 0 else float("nan")


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Run the configured Monte Carlo experiment and aggregate over trials."""
    _validate_geometry(cfg)
    tasks = [(cfg, t) for t in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            chunk = max(1, cfg.trials // (cfg.jobs * 4))
            stacks = list(pool.map(_trial_worker, tasks, chunksize=chunk))
    else:
        stacks = [_trial_worker(t) for t in tasks]
    mean, stderr, failures = _aggregate(stacks)

    experiment = cfg.experiment
    if experiment in ("gain_vs_time", "capacity_vs_time", "outage_vs_time"):
        points = list(range(1, cfg.scenario.num_slots + 1))
    elif experiment == "rate_vs_elements":
        points = [int(v) for v in cfg.sweep]
    else:
        points = [float(v) for v in cfg.sweep]

    rows = []
    for i, point in enumerate(points):
        for j, scheme in enumerate(cfg.schemes):
            fail = int(failures[i, j])
            if experiment == "gain_vs_time":
                m = mean[i, j, 0]
                se = stderr[i, j, 0]
                se_db = (10.0 / math.log(10.0)) * se / m if m > 0 else float("nan")
                rows.append((point, scheme, _db(m), se_db, fail))
            elif experiment == "capacity_vs_time":
                rows.append((point, scheme, mean[i, j, 0], stderr[i, j, 0], fail))
            elif experiment == "rate_vs_elements":
                rows.append((point, scheme, mean[i, j, 0], stderr[i, j, 0], fail))
            elif experiment == "ber_vs_position":
                rows.append((point, scheme, mean[i, j, 0], stderr[i, j, 0],
                             mean[i, j, 1], fail))
            else:
                rows.append((point, scheme, mean[i, j, 0], mean[i, j, 1], fail))

    return ResultTable(
        experiment=experiment,
        header=_HEADERS[experiment],
        rows=rows,
        seed=cfg.seed,
        trials=cfg.trials,
        config_hash=config_digest(cfg),
        failures_total=int(failures.sum()),
    )


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _format_value(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def emit_csv(table: ResultTable, path: str) -> None:
    """Write the table as CSV plus a sibling ``.meta.json`` provenance file."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(table.header)
            for row in table.rows:
                writer.writerow([_format_value(v) for v in row])
        meta = {
            "experiment": table.experiment,
            "config_hash": table.config_hash,
            "seed": table.seed,
            "trials": table.trials,
            "failures_total": table.failures_total,
            "tool_version": __version__,
        }
        meta_path = _meta_path(path)
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IOError(f"cannot write results to {path}: {exc}") from exc


def _meta_path(path: str) -> str:
    return (path[:-4] if path.endswith(".csv") else path) + ".meta.json"
