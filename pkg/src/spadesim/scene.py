"""Analytic optical model of a two-beam scene.

A scene is two displaced Gaussian beams with a tunable degree of mutual
coherence.  This module computes how much of each beam couples into each
Hermite-Gauss (HG) analysis mode, the resulting per-mode optical powers,
and the transverse intensity profile of the incoherent scene.

Conventions
-----------
* The separation axis is x.  ``ModeIndex.n`` is the HG order along x,
  ``ModeIndex.m`` the order along y.  The first-order mode along the
  separation axis, ``ModeIndex(1, 0)``, is the channel conventionally
  labelled HG01 on the demultiplexer outputs.
* ``GaussianBeam.waist`` is the nominal waist, which also defines the
  waist of the HG analysis basis.  ``waist_mismatch`` scales the actual
  beam waist relative to that basis (1.0 = perfectly mode-matched).
* Displacements are measured from the instrument axis at x = 0.

For a mode-matched beam displaced by b the coupling amplitude onto HG_n
is c_n(beta) = beta^n exp(-beta^2/2) / sqrt(n!) with beta = b/w0, the
displaced-Gaussian analogue of coherent-state amplitudes.  For a beam
whose waist differs from the basis waist the amplitude is the exact
Gaussian overlap integral, evaluated in closed form (see
``gaussian_mode_overlap``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UnsupportedSceneError


@dataclass(frozen=True, order=True)
class ModeIndex:
    """HG mode order (n along the separation axis x, m along y)."""

    n: int
    m: int

    def __post_init__(self) -> None:
        if self.n < 0 or self.m < 0:
            raise ValueError(f"mode orders must be non-negative, got ({self.n}, {self.m})")

    def __str__(self) -> str:
        return f"HG({self.n},{self.m})"


#: Measured demultiplexer outputs: fundamental, first orders, second orders.
SIGNAL_MODE = ModeIndex(1, 0)
FUNDAMENTAL_MODE = ModeIndex(0, 0)
DEFAULT_MODES: tuple[ModeIndex, ...] = (
    ModeIndex(0, 0),
    ModeIndex(1, 0),
    ModeIndex(0, 1),
    ModeIndex(2, 0),
    ModeIndex(0, 2),
)


@dataclass(frozen=True)
class GaussianBeam:
    """One source image in the demultiplexer input plane.

    Parameters
    ----------
    center_x : float
        Transverse position (um) relative to the instrument axis.
    waist : float
        Nominal waist w0 (um); also the waist of the analysis basis.
    power : float
        Optical power as photon flux (photons/s).
    waist_mismatch : float
        Actual-to-nominal waist ratio (> 0, 1.0 = mode-matched).
    """

    center_x: float
    waist: float
    power: float
    waist_mismatch: float = 1.0

    def __post_init__(self) -> None:
        if self.waist <= 0:
            raise ValueError(f"waist must be positive, got {self.waist}")
        if self.power < 0:
            raise ValueError(f"power must be non-negative, got {self.power}")
        if self.waist_mismatch <= 0:
            raise ValueError(f"waist_mismatch must be positive, got {self.waist_mismatch}")

    @property
    def actual_waist(self) -> float:
        """Physical beam waist (um) after applying the mismatch factor."""
        return self.waist * self.waist_mismatch

    def displaced(self, dx: float) -> "GaussianBeam":
        """Copy of this beam translated by dx (um)."""
        return replace(self, center_x=self.center_x + dx)


@dataclass(frozen=True)
class Scene:
    """Two beams plus their degree of mutual coherence.

    ``coherence`` interpolates between fully incoherent (0, powers add)
    and fully coherent (1, amplitudes add with ``relative_phase``).
    Intermediate values blend the two intensity patterns linearly.
    """

    beam_a: GaussianBeam
    beam_b: GaussianBeam
    coherence: float = 0.0
    relative_phase: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.coherence <= 1.0:
            raise ValueError(f"coherence must be within [0, 1], got {self.coherence}")

    def separation(self) -> float:
        """Transverse separation |x_a - x_b| (um)."""
        return abs(self.beam_a.center_x - self.beam_b.center_x)

    @property
    def total_power(self) -> float:
        return self.beam_a.power + self.beam_b.power

    @property
    def centroid(self) -> float:
        """Power-weighted mean transverse position (um)."""
        total = self.total_power
        if total == 0:
            return 0.5 * (self.beam_a.center_x + self.beam_b.center_x)
        return (
            self.beam_a.power * self.beam_a.center_x
            + self.beam_b.power * self.beam_b.center_x
        ) / total


@dataclass(frozen=True)
class ModalPowers:
    """Per-mode optical powers (photons/s)."""

    entries: dict[ModeIndex, float] = field(default_factory=dict)

    def __getitem__(self, mode: ModeIndex | tuple[int, int]) -> float:
        if isinstance(mode, tuple):
            mode = ModeIndex(*mode)
        return self.entries[mode]

    def __contains__(self, mode: ModeIndex) -> bool:
        return mode in self.entries

    def items(self):
        return self.entries.items()

    @property
    def modes(self) -> tuple[ModeIndex, ...]:
        return tuple(self.entries.keys())

    def total(self) -> float:
        """Sum over the tabulated modes (photons/s)."""
        return float(sum(self.entries.values()))


def coupling_amplitude(displacement: float, waist: float, order_n: int) -> float:
    """Amplitude of a displaced, mode-matched Gaussian on 1D mode HG_n.

    c_n(beta) = beta^n exp(-beta^2 / 2) / sqrt(n!),  beta = displacement/waist.

    The sign of beta follows the sign of the displacement, so amplitudes
    for odd n are odd functions of the displacement.
    """
    if waist <= 0:
        raise ValueError(f"waist must be positive, got {waist}")
    if order_n < 0:
        raise ValueError(f"mode order must be non-negative, got {order_n}")
    beta = displacement / waist
    if order_n == 0:
        return math.exp(-0.5 * beta * beta)
    if beta == 0.0:
        return 0.0
    return beta**order_n * math.exp(-0.5 * beta * beta) / math.sqrt(math.factorial(order_n))


def gaussian_mode_overlap(
    displacement: float, beam_waist: float, order_n: int, basis_waist: float
) -> float:
    """1D overlap of a displaced Gaussian of waist w with basis mode HG_n of waist w0.

    Exact closed form from the Hermite generating function.  With
    a = w^2 + w0^2:

        K     = sqrt(2 w w0 / a) * exp(-b^2 / a)
        sigma = (w^2 - w0^2) / a
        mu    = 2 sqrt(2) b w0 / a
        <HG_n | G(w, b)> = K * n! * P_n / sqrt(2^n n!),
        P_n   = sum_j sigma^j mu^(n-2j) / (j! (n-2j)!)

    Reduces to ``coupling_amplitude`` when the waists match.
    """
    if beam_waist <= 0 or basis_waist <= 0:
        raise ValueError("waists must be positive")
    if order_n < 0:
        raise ValueError(f"mode order must be non-negative, got {order_n}")
    if beam_waist == basis_waist:
        return coupling_amplitude(displacement, basis_waist, order_n)
    w2, w02 = beam_waist**2, basis_waist**2
    a = w2 + w02
    k = math.sqrt(2.0 * beam_waist * basis_waist / a) * math.exp(-(displacement**2) / a)
    sigma = (w2 - w02) / a
    mu = 2.0 * math.sqrt(2.0) * displacement * basis_waist / a
    p = sum(
        sigma**j * mu ** (order_n - 2 * j) / (math.factorial(j) * math.factorial(order_n - 2 * j))
        for j in range(order_n // 2 + 1)
    )
    return k * math.factorial(order_n) * p / math.sqrt(2.0**order_n * math.factorial(order_n))


def beam_mode_amplitude(beam: GaussianBeam, mode: ModeIndex) -> float:
    """2D coupling amplitude of one beam onto an HG mode of the analysis basis.

    Separable product of a displaced x-axis overlap and a centered
    y-axis overlap; the y factor differs from a Kronecker delta only
    when the beam waist is mismatched.
    """
    ax = gaussian_mode_overlap(beam.center_x, beam.actual_waist, mode.n, beam.waist)
    if mode.m == 0 and beam.waist_mismatch == 1.0:
        return ax
    ay = gaussian_mode_overlap(0.0, beam.actual_waist, mode.m, beam.waist)
    return ax * ay


def beam_mode_powers(beam: GaussianBeam, modes) -> ModalPowers:
    """Per-mode powers for a single beam (photons/s)."""
    return ModalPowers(
        {mode: beam.power * beam_mode_amplitude(beam, mode) ** 2 for mode in modes}
    )


def mode_powers(scene: Scene, modes) -> ModalPowers:
    """Per-mode powers of the two-beam scene (photons/s).

    Fully incoherent scenes add the per-beam mode powers; fully coherent
    scenes add amplitudes with the scene's relative phase; intermediate
    coherence blends the two linearly.
    """
    modes = tuple(modes)
    if not modes:
        raise ValueError("modes must be non-empty")
    sqrt_pa = math.sqrt(scene.beam_a.power)
    sqrt_pb = math.sqrt(scene.beam_b.power)
    phase = complex(math.cos(scene.relative_phase), math.sin(scene.relative_phase))
    entries: dict[ModeIndex, float] = {}
    for mode in modes:
        amp_a = beam_mode_amplitude(scene.beam_a, mode)
        amp_b = beam_mode_amplitude(scene.beam_b, mode)
        incoherent = scene.beam_a.power * amp_a**2 + scene.beam_b.power * amp_b**2
        if scene.coherence == 0.0:
            entries[mode] = incoherent
            continue
        coherent = abs(sqrt_pa * amp_a + phase * sqrt_pb * amp_b) ** 2
        entries[mode] = scene.coherence * coherent + (1.0 - scene.coherence) * incoherent
    return ModalPowers(entries)


def intensity_profile(scene: Scene, x, y):
    """Transverse intensity of the incoherent scene (photons/s/um^2).

    I(x, y) = sum_i P_i u_i^2(x - c_i, y) with each u_i^2 normalized to
    unit integral.  Only defined for fully incoherent scenes; the
    coherent intensity is interference-laden and not used here.
    """
    if scene.coherence != 0.0:
        raise UnsupportedSceneError(
            "intensity_profile is defined for incoherent scenes only "
            f"(coherence={scene.coherence})"
        )
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for beam in (scene.beam_a, scene.beam_b):
        w = beam.actual_waist
        norm = 2.0 / (math.pi * w * w)
        out = out + beam.power * norm * np.exp(
            -2.0 * ((x - beam.center_x) ** 2 + y**2) / (w * w)
        )
    if out.ndim == 0:
        return float(out)
    return out


def i01_analytic(separation: float, waist: float, total_power: float) -> float:
    """Power coupled into the first-order separation-axis mode (photons/s).

    For two equal, mode-matched, incoherent beams symmetric about the
    axis:  I01 = P_tot * (d^2 / 4 w0^2) * exp(-d^2 / 4 w0^2).
    """
    if waist <= 0:
        raise ValueError(f"waist must be positive, got {waist}")
    if separation < 0:
        raise ValueError(f"separation must be non-negative, got {separation}")
    q = separation**2 / (4.0 * waist**2)
    return total_power * q * math.exp(-q)


def hermite_gauss_profile(x, order: int, waist: float):
    """Normalized 1D HG profile u_n(x) with unit L2 norm (validation aid)."""
    if waist <= 0:
        raise ValueError(f"waist must be positive, got {waist}")
    x = np.asarray(x, dtype=float)
    t = math.sqrt(2.0) * x / waist
    coeff = (2.0 / math.pi) ** 0.25 / math.sqrt(waist * 2.0**order * math.factorial(order))
    return coeff * np.polynomial.hermite.hermval(t, [0.0] * order + [1.0]) * np.exp(
        -(x**2) / waist**2
    )
