"""Stochastic instrument models.

Demultiplexer loss/crosstalk, photodiode and single-photon-detector
readout over one integration window, and the quadrant-detector position
reference used to establish reference separations.

All models are immutable value objects.  Readout operations take an
explicit numpy ``Generator``; concurrent simulation should hand each
worker its own seeded stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfinv

from .errors import ConfigurationError, SaturationError
from .scene import (
    DEFAULT_MODES,
    FUNDAMENTAL_MODE,
    SIGNAL_MODE,
    GaussianBeam,
    ModalPowers,
    ModeIndex,
    Scene,
)

_COLUMN_SUM_TOL = 1e-9


def uniform_leak_matrix(n_modes: int, leak: float) -> np.ndarray:
    """Crosstalk matrix leaking a fraction ``leak`` of each mode uniformly."""
    if not 0.0 <= leak < 1.0:
        raise ConfigurationError(f"crosstalk leak must be within [0, 1), got {leak}")
    if n_modes == 1 or leak == 0.0:
        return np.eye(n_modes)
    x = np.full((n_modes, n_modes), leak / (n_modes - 1))
    np.fill_diagonal(x, 1.0 - leak)
    return x


@dataclass(frozen=True)
class DemuxModel:
    """Mode demultiplexer: ordered mode set, crosstalk mixing, and loss.

    ``crosstalk[k, m]`` is the fraction of mode m's power routed to
    output k; columns must not sum above one (passive device).  The
    default is the identity — measured crosstalk is negligible against
    detection noise.  ``transmission`` is the overall device throughput
    (default 0.41, i.e. -3.9 dB insertion loss).  ``intrinsic_waist``
    records the device's own mode waist (um); couplings in this package
    are computed in the image plane, so it is descriptive only.
    """

    modes: tuple[ModeIndex, ...] = DEFAULT_MODES
    crosstalk: np.ndarray | None = None
    transmission: float = 0.41
    intrinsic_waist: float = 320.0

    def __post_init__(self) -> None:
        if not self.modes:
            raise ConfigurationError("demultiplexer needs at least one mode")
        if not 0.0 < self.transmission <= 1.0:
            raise ConfigurationError(
                f"transmission must be within (0, 1], got {self.transmission}"
            )
        n = len(self.modes)
        x = np.eye(n) if self.crosstalk is None else np.asarray(self.crosstalk, dtype=float)
        if x.shape != (n, n):
            raise ConfigurationError(
                f"crosstalk matrix shape {x.shape} does not match {n} modes"
            )
        if np.any(x < 0):
            raise ConfigurationError("crosstalk entries must be non-negative")
        if np.any(x.sum(axis=0) > 1.0 + _COLUMN_SUM_TOL):
            raise ConfigurationError("crosstalk columns must sum to at most 1")
        object.__setattr__(self, "crosstalk", x)

    @classmethod
    def with_uniform_leak(cls, leak: float, **kwargs) -> "DemuxModel":
        modes = kwargs.pop("modes", DEFAULT_MODES)
        return cls(modes=modes, crosstalk=uniform_leak_matrix(len(modes), leak), **kwargs)


@dataclass(frozen=True)
class PhotodiodeModel:
    """Photodiode chain read noise, in photon-flux-equivalent units.

    ``electronic_noise_std`` is the RMS read noise of one integration
    window expressed as an equivalent photon flux (photons/s), which
    lets error propagation treat shot and detection noise uniformly.
    """

    electronic_noise_std: float = 0.0
    offset_drift_std: float = 0.0
    include_shot_noise: bool = True

    def __post_init__(self) -> None:
        if self.electronic_noise_std < 0 or self.offset_drift_std < 0:
            raise ConfigurationError("noise parameters must be non-negative")


@dataclass(frozen=True)
class SpadModel:
    """Single-photon avalanche diode: quantum efficiency and dark counts."""

    quantum_efficiency: float = 0.25
    dark_count_rate: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ConfigurationError(
                f"quantum efficiency must be within [0, 1], got {self.quantum_efficiency}"
            )
        if self.dark_count_rate < 0:
            raise ConfigurationError(
                f"dark count rate must be non-negative, got {self.dark_count_rate}"
            )


@dataclass(frozen=True)
class QuadrantDetectorModel:
    """Split-photodiode position sensor.

    The noiseless normalized difference signal for a Gaussian beam
    centered at b is S = erf(sqrt(2) b / w); position readings add
    Gaussian noise of ``position_noise_std`` (um) on the inverted
    position.  Default noise sits in the 20-50 nm per-reading band.
    """

    beam_waist_at_qd: float = 1135.0
    position_noise_std: float = 0.035

    def __post_init__(self) -> None:
        if self.beam_waist_at_qd <= 0:
            raise ConfigurationError(
                f"beam waist at quadrant detector must be positive, got {self.beam_waist_at_qd}"
            )
        if self.position_noise_std < 0:
            raise ConfigurationError(
                f"position noise must be non-negative, got {self.position_noise_std}"
            )


@dataclass(frozen=True)
class InstrumentModel:
    """Demultiplexer plus detector plus quadrant-detector reference.

    ``normalization`` selects the channel the signal power is divided
    by: ``"external"`` (pick-off photodiode reading the total scene
    flux, treated as exact) or ``"hg00"`` (the fundamental-mode output,
    read with the same detector model as the signal).
    """

    demux: DemuxModel = field(default_factory=DemuxModel)
    detector: PhotodiodeModel | SpadModel = field(default_factory=PhotodiodeModel)
    quadrant: QuadrantDetectorModel = field(default_factory=QuadrantDetectorModel)
    normalization: str = "external"

    def __post_init__(self) -> None:
        if self.normalization not in ("external", "hg00"):
            raise ConfigurationError(
                f"normalization must be 'external' or 'hg00', got {self.normalization!r}"
            )
        if self.normalization == "hg00" and FUNDAMENTAL_MODE not in self.demux.modes:
            raise ConfigurationError("hg00 normalization requires the fundamental mode output")
        if SIGNAL_MODE not in self.demux.modes:
            raise ConfigurationError("instrument must measure the first-order signal mode")


def demux(input_powers: ModalPowers, model: DemuxModel) -> ModalPowers:
    """Apply transmission and crosstalk mixing to per-mode powers."""
    unknown = [m for m in input_powers.modes if m not in model.modes]
    if unknown:
        raise ConfigurationError(
            f"input modes {unknown} are not demultiplexer outputs {list(model.modes)}"
        )
    vec = np.array([input_powers.entries.get(m, 0.0) for m in model.modes])
    out = model.transmission * (model.crosstalk @ vec)
    return ModalPowers(dict(zip(model.modes, out.tolist())))


def read_photodiode(
    flux: float, t_int: float, model: PhotodiodeModel, rng: np.random.Generator
) -> float:
    """One photodiode reading (photons/s equivalent); may be negative."""
    if flux < 0:
        raise ValueError(f"flux must be non-negative, got {flux}")
    if t_int <= 0:
        raise ValueError(f"integration time must be positive, got {t_int}")
    reading = flux
    if model.include_shot_noise and flux > 0:
        reading += rng.normal(0.0, math.sqrt(flux / t_int))
    if model.electronic_noise_std > 0:
        reading += rng.normal(0.0, model.electronic_noise_std)
    if model.offset_drift_std > 0:
        reading += rng.normal(0.0, model.offset_drift_std)
    return float(reading)


def read_spad(flux: float, t_int: float, model: SpadModel, rng: np.random.Generator) -> int:
    """Photon counts over one integration window (Poisson)."""
    if flux < 0:
        raise ValueError(f"flux must be non-negative, got {flux}")
    if t_int <= 0:
        raise ValueError(f"integration time must be positive, got {t_int}")
    mean = (model.quantum_efficiency * flux + model.dark_count_rate) * t_int
    if mean == 0.0:
        return 0
    return int(rng.poisson(mean))


def read_detector(
    flux: float,
    t_int: float,
    model: PhotodiodeModel | SpadModel,
    rng: np.random.Generator,
) -> float:
    """Read one channel with whichever detector the instrument carries."""
    if isinstance(model, SpadModel):
        return float(read_spad(flux, t_int, model, rng))
    return read_photodiode(flux, t_int, model, rng)


def expected_offset(model: PhotodiodeModel | SpadModel, t_int: float) -> float:
    """Known mean offset of one reading, as measured without incident light.

    Dark counts contribute a calibratable mean to photon-counting
    readings; the photodiode noise terms are zero-mean by construction.
    The pipeline subtracts this offset before normalizing, the way
    offset measurements are used in practice (the noise they carry
    remains).
    """
    if isinstance(model, SpadModel):
        return model.dark_count_rate * t_int
    return 0.0


def quadrant_signal(center_x: float, waist: float) -> float:
    """Noiseless normalized difference signal for one Gaussian beam."""
    if waist <= 0:
        raise ValueError(f"waist must be positive, got {waist}")
    return float(erf(math.sqrt(2.0) * center_x / waist))


def scene_quadrant_signal(scene: Scene, model: QuadrantDetectorModel) -> float:
    """Combined noiseless difference signal for a two-beam scene.

    Power-weighted sum of the per-beam signals; identically zero for an
    equal-power symmetric pair, which is why the quadrant detector
    cannot measure a symmetric separation.
    """
    total = scene.total_power
    if total == 0:
        return 0.0
    w = model.beam_waist_at_qd
    return (
        scene.beam_a.power * quadrant_signal(scene.beam_a.center_x, w)
        + scene.beam_b.power * quadrant_signal(scene.beam_b.center_x, w)
    ) / total


def quadrant_position(
    beam: GaussianBeam, model: QuadrantDetectorModel, rng: np.random.Generator
) -> float:
    """One position reading (um) of a single beam on the quadrant detector."""
    s = quadrant_signal(beam.center_x, model.beam_waist_at_qd)
    if abs(s) >= 1.0:
        raise SaturationError(
            f"quadrant signal saturated (|S| >= 1) for beam at {beam.center_x} um"
        )
    position = model.beam_waist_at_qd / math.sqrt(2.0) * float(erfinv(s))
    if model.position_noise_std > 0:
        position += rng.normal(0.0, model.position_noise_std)
    return float(position)


def reference_separation(
    scene: Scene,
    model: QuadrantDetectorModel,
    rng: np.random.Generator,
    repetitions: int = 200,
) -> tuple[float, float]:
    """Reference separation |x1 - x2| from one-beam-at-a-time readings.

    Each beam's position is measured ``repetitions`` times with the
    other source turned off; returns the absolute difference of the two
    means and the combined standard error.
    """
    if scene.beam_a.power <= 0 or scene.beam_b.power <= 0:
        raise ValueError("reference separation needs both beams powered")
    if repetitions < 2:
        raise ValueError(f"need at least 2 repetitions, got {repetitions}")
    readings = []
    for beam in (scene.beam_a, scene.beam_b):
        samples = np.array([quadrant_position(beam, model, rng) for _ in range(repetitions)])
        readings.append(samples)
    mean_a, mean_b = (float(s.mean()) for s in readings)
    sem_sq = sum(float(s.std(ddof=1)) ** 2 / repetitions for s in readings)
    return abs(mean_a - mean_b), math.sqrt(sem_sq)
