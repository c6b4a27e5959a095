"""Experiment orchestration: configs, seeded campaigns, result persistence.

A campaign is fully determined by its configuration, including the seed:
randomness is drawn from substreams keyed by purpose and separation
index (and, inside the estimation loop, repetition index), so results
are bit-identical for any worker count.

Two named regimes carry the reference defaults: ``low_flux`` (faint
sources counted with single-photon detectors, normalized by the
fundamental-mode output) and ``high_flux`` (bright sources on
photodiodes, normalized by an exact external pick-off).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .errors import ConfigurationError
from .instrument import (
    DemuxModel,
    InstrumentModel,
    PhotodiodeModel,
    QuadrantDetectorModel,
    SpadModel,
)
from .pipeline import (
    CalibrationCurve,
    TwoSourceCurve,
    default_scan_grid,
    estimate_separation,
    fit_calibration,
    run_calibration_scan,
    symmetrize,
)
from .scene import GaussianBeam, Scene
from .units import flux_from_watts

CSV_HEADER = (
    "d_set_um,d_ref_um,d_ref_err_um,d_hat_um,d_sens_um,"
    "qcrb_um,di_crb_um,spade_model_um,clamp_frac,n_photons_hg01"
)

# Substream tags; every random draw in a campaign descends from
# (seed, tag, index...) so execution order cannot change the sampling.
STREAM_CALIBRATION = 0
STREAM_ESTIMATION = 1
STREAM_DIFFERENTIAL = 2

#: Anchor for the auto-calibrated photodiode noise: the error-propagation
#: model is pinned to this sensitivity at this separation, then frozen.
NOISE_ANCHOR_SENS_UM = 0.02
NOISE_ANCHOR_D_UM = 120.0

#: Dark-count default for the faint-source regime, fitted once so the
#: modelled sensitivity sits 10-30% above the quantum bound over the
#: default separations.
LOW_FLUX_DARK_CPS = 150.0

_REGIME_DEFAULTS = {
    "low_flux": dict(
        t_int_s=0.1,
        detected_photons=3500.0,
        detector="spad",
        dark_count_rate_cps=LOW_FLUX_DARK_CPS,
        normalization="hg00",
        separations_um=(400.0, 500.0, 600.0, 700.0, 800.0, 860.0),
        # The calibrated range must reach half the largest separation,
        # with margin so estimates are not squeezed against the branch end.
        cal_grid_min_um=-480.0,
        cal_grid_max_um=480.0,
    ),
    "high_flux": dict(
        t_int_s=0.005,
        detected_photons=1e13,
        detector="photodiode",
        dark_count_rate_cps=0.0,
        normalization="external",
        separations_um=(20.0, 40.0, 60.0, 80.0, 100.0, 120.0, 140.0, 160.0),
        cal_grid_min_um=-100.0,
        cal_grid_max_um=100.0,
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated campaign configuration (lengths um, times s, flux photons/s)."""

    regime: str
    seed: int
    wavelength_um: float = 1.55
    waist_um: float = 1135.0
    waist_mismatch_a: float = 1.0
    waist_mismatch_b: float = 1.0
    power_fraction_a: float = 0.5
    separations_um: tuple[float, ...] = ()
    t_int_s: float = 0.1
    repetitions: int = 200
    reference_repetitions: int = 200
    detected_photons: float = 3500.0
    source_power_w: float | None = None
    detector: str = "spad"
    quantum_efficiency: float = 0.25
    dark_count_rate_cps: float = 0.0
    electronic_noise_std: float | None = None
    offset_drift_std: float = 0.0
    include_shot_noise: bool = True
    transmission: float = 0.41
    crosstalk_leak: float = 0.0
    qd_waist_um: float | None = None
    qd_position_noise_um: float = 0.035
    cal_grid_min_um: float = -100.0
    cal_grid_max_um: float = 100.0
    cal_grid_step_um: float = 6.0
    cal_dwell_s: float = 10.0
    cal_degree: int = 6
    centroid_offset_um: float = 0.0
    normalization: str = "external"
    output_dir: str | None = None

    def __post_init__(self) -> None:
        _validate(self)

    # -- derived quantities -------------------------------------------------

    @property
    def detection_efficiency(self) -> float:
        """Quantum efficiency applied when counting detected photons."""
        return self.quantum_efficiency if self.detector == "spad" else 1.0

    @property
    def scene_flux(self) -> float:
        """Total photon flux (photons/s) entering the demultiplexer."""
        if self.source_power_w is not None:
            return flux_from_watts(self.source_power_w, self.wavelength_um)
        return self.detected_photons / (
            self.transmission * self.detection_efficiency * self.t_int_s
        )

    @property
    def detected_photon_budget(self) -> float:
        """Photons detected per window over the full mode basis."""
        if self.source_power_w is not None:
            return self.scene_flux * self.transmission * self.detection_efficiency * self.t_int_s
        return self.detected_photons

    @property
    def detector_plane_flux(self) -> float:
        """Total flux arriving at the detectors (photons/s), after loss."""
        return self.scene_flux * self.transmission


def _named_error(name: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{name}: {message}")


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.regime not in _REGIME_DEFAULTS:
        raise _named_error("regime", f"must be one of {sorted(_REGIME_DEFAULTS)}, got {cfg.regime!r}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise _named_error("seed", f"must be an integer, got {cfg.seed!r}")
    for name in ("wavelength_um", "waist_um", "t_int_s", "cal_dwell_s", "cal_grid_step_um"):
        if getattr(cfg, name) <= 0:
            raise _named_error(name, f"must be positive, got {getattr(cfg, name)}")
    for name in ("waist_mismatch_a", "waist_mismatch_b"):
        if getattr(cfg, name) <= 0:
            raise _named_error(name, f"must be positive, got {getattr(cfg, name)}")
    if not 0.0 < cfg.power_fraction_a < 1.0:
        raise _named_error("power_fraction_a", f"must lie in (0, 1), got {cfg.power_fraction_a}")
    if cfg.source_power_w is None and cfg.detected_photons <= 0:
        raise _named_error("detected_photons", f"must be positive, got {cfg.detected_photons}")
    if cfg.source_power_w is not None and cfg.source_power_w <= 0:
        raise _named_error("source_power_w", f"must be positive, got {cfg.source_power_w}")
    if cfg.detector not in ("spad", "photodiode"):
        raise _named_error("detector", f"must be 'spad' or 'photodiode', got {cfg.detector!r}")
    if not 0.0 <= cfg.quantum_efficiency <= 1.0:
        raise _named_error("quantum_efficiency", f"must lie in [0, 1], got {cfg.quantum_efficiency}")
    for name in ("dark_count_rate_cps", "offset_drift_std", "qd_position_noise_um",
                 "crosstalk_leak"):
        if getattr(cfg, name) < 0:
            raise _named_error(name, f"must be non-negative, got {getattr(cfg, name)}")
    if cfg.electronic_noise_std is not None and cfg.electronic_noise_std < 0:
        raise _named_error("electronic_noise_std", "must be non-negative")
    if not 0.0 < cfg.transmission <= 1.0:
        raise _named_error("transmission", f"must lie in (0, 1], got {cfg.transmission}")
    if cfg.qd_waist_um is not None and cfg.qd_waist_um <= 0:
        raise _named_error("qd_waist_um", f"must be positive, got {cfg.qd_waist_um}")
    if cfg.repetitions < 2 or cfg.reference_repetitions < 2:
        raise _named_error("repetitions", "need at least 2 repetitions")
    if cfg.cal_degree < 2:
        raise _named_error("cal_degree", f"must be at least 2, got {cfg.cal_degree}")
    if not cfg.cal_grid_min_um < 0 < cfg.cal_grid_max_um:
        raise _named_error("cal_grid_min_um", "calibration grid must straddle the axis")
    if not cfg.separations_um:
        raise _named_error("separations_um", "must list at least one separation")
    # Reach of the grid actually generated (the step may not divide the span).
    grid = default_scan_grid(cfg.cal_grid_min_um, cfg.cal_grid_max_um, cfg.cal_grid_step_um)
    reach = 2.0 * min(-grid[0], grid[-1])
    for d in cfg.separations_um:
        if d < 0:
            raise _named_error("separations_um", f"separations must be non-negative, got {d}")
        if d > reach:
            raise _named_error(
                "separations_um",
                f"separation {d} um exceeds the calibrated reach {reach} um; "
                "widen the calibration grid",
            )
    if cfg.normalization not in ("external", "hg00"):
        raise _named_error("normalization", f"must be 'external' or 'hg00', got {cfg.normalization!r}")


def default_config(regime: str, seed: int, **overrides) -> ExperimentConfig:
    """Reference configuration for a named regime, with overrides applied."""
    if regime not in _REGIME_DEFAULTS:
        raise _named_error("regime", f"must be one of {sorted(_REGIME_DEFAULTS)}, got {regime!r}")
    values = dict(_REGIME_DEFAULTS[regime])
    values.update(overrides)
    values["regime"] = regime
    values["seed"] = seed
    if "separations_um" in values:
        values["separations_um"] = tuple(float(d) for d in values["separations_um"])
    return ExperimentConfig(**values)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    """Load and validate a JSON configuration file.

    The file must name its ``regime``; every other field falls back to
    that regime's defaults.  ``seed`` (keyword) overrides any seed in
    the file; one of the two must be present.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise _named_error(unknown[0], "unknown configuration field")
    if "regime" not in raw:
        raise _named_error("regime", "required field is missing")
    regime = raw.pop("regime")
    file_seed = raw.pop("seed", None)
    use_seed = seed if seed is not None else file_seed
    if use_seed is None:
        raise _named_error("seed", "required (in the file or as an override); "
                                   "wall-clock seeding is not supported")
    if "separations_um" in raw:
        raw["separations_um"] = tuple(float(d) for d in raw["separations_um"])
    return default_config(regime, int(use_seed), **raw)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the (seed, *key) substream."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_instrument(config: ExperimentConfig) -> InstrumentModel:
    demux_model = DemuxModel.with_uniform_leak(
        config.crosstalk_leak, transmission=config.transmission
    )
    if config.detector == "spad":
        detector = SpadModel(
            quantum_efficiency=config.quantum_efficiency,
            dark_count_rate=config.dark_count_rate_cps,
        )
    else:
        sigma_e = config.electronic_noise_std
        if sigma_e is None:
            sigma_e = bounds_mod.electronic_noise_for_target(
                NOISE_ANCHOR_SENS_UM,
                NOISE_ANCHOR_D_UM,
                config.waist_um,
                config.detector_plane_flux,
                config.t_int_s,
                include_shot_noise=config.include_shot_noise,
            )
        detector = PhotodiodeModel(
            electronic_noise_std=sigma_e,
            offset_drift_std=config.offset_drift_std,
            include_shot_noise=config.include_shot_noise,
        )
    quadrant = QuadrantDetectorModel(
        beam_waist_at_qd=config.qd_waist_um or config.waist_um,
        position_noise_std=config.qd_position_noise_um,
    )
    return InstrumentModel(
        demux=demux_model,
        detector=detector,
        quadrant=quadrant,
        normalization=config.normalization,
    )


def build_beams(config: ExperimentConfig) -> tuple[GaussianBeam, GaussianBeam]:
    """The two source beams, centered on the axis (separation applied later)."""
    flux = config.scene_flux
    beam_a = GaussianBeam(
        center_x=0.0,
        waist=config.waist_um,
        power=config.power_fraction_a * flux,
        waist_mismatch=config.waist_mismatch_a,
    )
    beam_b = GaussianBeam(
        center_x=0.0,
        waist=config.waist_um,
        power=(1.0 - config.power_fraction_a) * flux,
        waist_mismatch=config.waist_mismatch_b,
    )
    return beam_a, beam_b


def make_scene(config: ExperimentConfig, separation: float) -> Scene:
    """Symmetric two-beam scene at the given separation (um)."""
    beam_a, beam_b = build_beams(config)
    center = config.centroid_offset_um
    return Scene(
        beam_a=replace(beam_a, center_x=center - separation / 2.0),
        beam_b=replace(beam_b, center_x=center + separation / 2.0),
    )


def calibrate(config: ExperimentConfig) -> tuple[TwoSourceCurve, CalibrationCurve]:
    """Run the single-source calibration for this configuration.

    Calibration uses beam A alone (the reference source), scanning the
    configured grid; the returned two-source curve is weighted by the
    configured power split.
    """
    instrument = build_instrument(config)
    beam_a, beam_b = build_beams(config)
    grid = default_scan_grid(
        config.cal_grid_min_um, config.cal_grid_max_um, config.cal_grid_step_um
    )
    scan = run_calibration_scan(
        instrument,
        beam_a,
        grid,
        config.t_int_s,
        substream(config.seed, STREAM_CALIBRATION),
        dwell_s=config.cal_dwell_s,
    )
    curve = fit_calibration(scan, config.cal_degree)
    return symmetrize(curve, beam_a.power, beam_b.power), curve


# ---------------------------------------------------------------------------
# Campaign
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    """One campaign row: estimate, reference, and bounds at one separation (um)."""

    d_set_um: float
    d_ref_um: float
    d_ref_err_um: float
    d_hat_um: float
    d_sens_um: float
    qcrb_um: float
    di_crb_um: float
    spade_model_um: float
    clamp_frac: float
    n_photons_hg01: int


def _estimate_one(
    config: ExperimentConfig,
    instrument: InstrumentModel,
    curve: TwoSourceCurve,
    index: int,
    separation: float,
) -> RunRecord:
    scene = make_scene(config, separation)
    rng = substream(config.seed, STREAM_ESTIMATION, index)
    result = estimate_separation(
        scene,
        instrument,
        curve,
        config.t_int_s,
        repetitions=config.repetitions,
        rng=rng,
        reference_repetitions=config.reference_repetitions,
    )
    photons = config.detected_photon_budget
    w0 = config.waist_um
    detected_flux = photons / config.t_int_s
    qcrb_um = bounds_mod.qcrb(photons, w0)
    di_crb_um = bounds_mod.crb_direct_imaging(
        separation,
        w0,
        config.power_fraction_a * detected_flux,
        (1.0 - config.power_fraction_a) * detected_flux,
        config.t_int_s,
    )
    spade_um = bounds_mod.spade_sensitivity_model(
        separation,
        w0,
        config.detector_plane_flux,
        config.t_int_s,
        instrument.detector,
    )
    return RunRecord(
        d_set_um=separation,
        d_ref_um=result.d_ref,
        d_ref_err_um=result.d_ref_err,
        d_hat_um=result.d_hat,
        d_sens_um=result.d_sensitivity,
        qcrb_um=qcrb_um,
        di_crb_um=di_crb_um,
        spade_model_um=spade_um,
        clamp_frac=result.clamp_fraction,
        n_photons_hg01=bounds_mod.photons_in_mode(separation, w0, photons),
    )


def run_campaign(config: ExperimentConfig, workers: int = 1) -> list[RunRecord]:
    """Calibrate once, then estimate every configured separation.

    Deterministic for a given config: all randomness descends from
    ``config.seed`` through substreams keyed by purpose, separation
    index, and repetition index, so any ``workers`` count produces
    bit-identical records.
    """
    if workers < 1:
        raise ConfigurationError(f"workers: must be at least 1, got {workers}")
    curve, _ = calibrate(config)
    instrument = build_instrument(config)
    tasks = list(enumerate(config.separations_um))
    if workers == 1:
        return [_estimate_one(config, instrument, curve, i, d) for i, d in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_estimate_one, config, instrument, curve, i, d) for i, d in tasks
        ]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _format_value(value) -> str:
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def record_row(record: RunRecord) -> str:
    values = (
        record.d_set_um,
        record.d_ref_um,
        record.d_ref_err_um,
        record.d_hat_um,
        record.d_sens_um,
        record.qcrb_um,
        record.di_crb_um,
        record.spade_model_um,
        record.clamp_frac,
        record.n_photons_hg01,
    )
    return ",".join(_format_value(v) for v in values)


def write_results(records, path) -> None:
    """Write campaign records as CSV (9 significant digits, inf as 'inf')."""
    path = Path(path)
    lines = [CSV_HEADER] + [record_row(r) for r in records]
    path.write_text("\n".join(lines) + "\n")


def read_results(path) -> list[RunRecord]:
    """Parse a results CSV back into records."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigurationError(f"{path} does not carry the expected results header")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 10:
            raise ConfigurationError(f"malformed results row: {line!r}")
        records.append(
            RunRecord(
                d_set_um=float(parts[0]),
                d_ref_um=float(parts[1]),
                d_ref_err_um=float(parts[2]),
                d_hat_um=float(parts[3]),
                d_sens_um=float(parts[4]),
                qcrb_um=float(parts[5]),
                di_crb_um=float(parts[6]),
                spade_model_um=float(parts[7]),
                clamp_frac=float(parts[8]),
                n_photons_hg01=int(parts[9]),
            )
        )
    return records
