"""Estimation-theory reference values.

Classical Fisher information and Cramér-Rao bound for ideal direct
imaging (noiseless, infinitely fine camera) by adaptive quadrature, the
quantum Cramér-Rao bound for two incoherent point sources, and the
error-propagation sensitivity model for the demultiplexed first-order
mode including detector noise.

All fluxes are photon fluxes (photons/s); pass detected fluxes (after
losses, and after quantum efficiency if the caller wants bounds "for the
same number of detected photons").  Lengths are micrometers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from .errors import NumericalError
from .instrument import PhotodiodeModel, SpadModel
from .scene import i01_analytic

#: Relative accuracy requested from the Fisher-integral quadrature.
QUADRATURE_RTOL = 1e-8
#: Intensity floor, relative to the on-axis peak, below which the
#: Fisher integrand is treated as zero.
INTENSITY_FLOOR = 1e-30
#: Slope floor (in units of flux/waist) below which the error-propagation
#: model returns the +inf sentinel instead of dividing by ~0.
SLOPE_FLOOR = 1e-18


@dataclass(frozen=True)
class BoundResult:
    """One evaluated bound: sensitivity (um std dev) plus its inputs."""

    separation: float
    sensitivity: float
    fisher_per_photon: float
    photons: float
    kind: str  # "QCRB" | "DI_CRB" | "SPADE_MODEL"


def _marginal_intensity_terms(d: float, w0: float, p1: float, p2: float):
    """1D marginal intensity I(x) and dI/dd for beams at -d/2 and +d/2.

    The y dependence of the two-Gaussian scene factors out of the Fisher
    integrand (it carries no separation information), so the bound
    reduces to a single-axis integral over the x marginal.
    """
    norm = math.sqrt(2.0 / math.pi) / w0
    c = 2.0 / (w0 * w0)

    def intensity(x: float) -> float:
        return p1 * norm * math.exp(-c * (x + d / 2.0) ** 2) + p2 * norm * math.exp(
            -c * (x - d / 2.0) ** 2
        )

    def d_intensity_dd(x: float) -> float:
        ga = norm * math.exp(-c * (x + d / 2.0) ** 2)
        gb = norm * math.exp(-c * (x - d / 2.0) ** 2)
        return p1 * (-c * (x + d / 2.0)) * ga - p2 * (-c * (x - d / 2.0)) * gb

    return intensity, d_intensity_dd


def fisher_direct_imaging(d: float, w0: float, p1: float, p2: float) -> float:
    """Fisher information per unit time for ideal direct imaging (1/(um^2 s)).

    F = integral (dI/dd)^2 / I over the image plane, with I the photon-flux
    intensity of the incoherent two-beam scene.  Evaluated by adaptive
    quadrature on [-L, L], L = 8 w0 + d, with the integrand zeroed where
    the intensity falls below ``INTENSITY_FLOOR`` of its peak.
    """
    if w0 <= 0:
        raise ValueError(f"waist must be positive, got {w0}")
    if d < 0:
        raise ValueError(f"separation must be non-negative, got {d}")
    if p1 + p2 <= 0:
        raise ValueError("total flux must be positive")
    intensity, d_intensity = _marginal_intensity_terms(d, w0, p1, p2)
    peak = max(intensity(-d / 2.0), intensity(0.0), intensity(d / 2.0))
    floor = INTENSITY_FLOOR * peak

    def integrand(x: float) -> float:
        ix = intensity(x)
        if ix <= floor:
            return 0.0
        slope = d_intensity(x)
        return slope * slope / ix

    half_width = 8.0 * w0 + d
    value, abserr = integrate.quad(
        integrand,
        -half_width,
        half_width,
        points=[-d / 2.0, 0.0, d / 2.0],
        limit=400,
        epsabs=0.0,
        epsrel=QUADRATURE_RTOL,
    )
    if value != 0.0 and abserr > QUADRATURE_RTOL * abs(value) * 10.0:
        raise NumericalError(
            "Fisher quadrature did not reach relative tolerance "
            f"{QUADRATURE_RTOL:g} (d={d}, w0={w0}, estimate={value:g}, abserr={abserr:g})"
        )
    return float(value)


def crb_direct_imaging(d: float, w0: float, p1: float, p2: float, t_int: float) -> float:
    """Cramér-Rao sensitivity (um) for ideal direct imaging over ``t_int``.

    Returns ``inf`` where the Fisher information vanishes (coincident
    equal sources), so bound curves stay plottable across sweeps.
    """
    if t_int <= 0:
        raise ValueError(f"integration time must be positive, got {t_int}")
    fisher = fisher_direct_imaging(d, w0, p1, p2)
    if fisher <= 0.0:
        return math.inf
    return 1.0 / math.sqrt(fisher * t_int)


def qcrb(photons: float, w0: float) -> float:
    """Quantum Cramér-Rao sensitivity (um): w0 / sqrt(N detected photons)."""
    if photons <= 0:
        raise ValueError(f"photon number must be positive, got {photons}")
    if w0 <= 0:
        raise ValueError(f"waist must be positive, got {w0}")
    return w0 / math.sqrt(photons)


def hg01_flux_derivative(d: float, w0: float, total_flux: float) -> float:
    """Analytic d(I01)/dd (photons/s per um) of the first-order mode power."""
    if w0 <= 0:
        raise ValueError(f"waist must be positive, got {w0}")
    beta = d / (2.0 * w0)
    return total_flux * (beta / w0) * (1.0 - beta * beta) * math.exp(-beta * beta)


def spade_sensitivity_model(
    d: float,
    w0: float,
    total_flux: float,
    t_int: float,
    noise: PhotodiodeModel | SpadModel,
) -> float:
    """Error-propagation sensitivity (um) of the demultiplexed measurement.

    Delta d = sqrt(Var I01) / |dI01/dd| with I01 the first-order-mode
    power of the symmetric scene and Var I01 the shot plus detection
    noise of the given detector over one integration window.

    ``total_flux`` is the total flux arriving at the detector plane
    (photons/s).  For a ``SpadModel`` the variance is evaluated in
    counts, so the detected photon number is quantum_efficiency *
    total_flux * t_int; for a ``PhotodiodeModel`` every photon is
    assumed converted.  Returns ``inf`` near stationary points of I01
    (d = 0 and d = 2 w0) where the slope is below ``SLOPE_FLOOR``.
    """
    if d < 0:
        raise ValueError(f"separation must be non-negative, got {d}")
    if total_flux <= 0:
        raise ValueError(f"total flux must be positive, got {total_flux}")
    if t_int <= 0:
        raise ValueError(f"integration time must be positive, got {t_int}")
    i01 = i01_analytic(d, w0, total_flux)
    slope = hg01_flux_derivative(d, w0, total_flux)
    if abs(slope) < SLOPE_FLOOR * total_flux / w0:
        return math.inf
    if isinstance(noise, SpadModel):
        eta = noise.quantum_efficiency
        if eta <= 0:
            return math.inf
        var_counts = (eta * i01 + noise.dark_count_rate) * t_int
        return math.sqrt(var_counts) / (eta * t_int * abs(slope))
    variance = noise.electronic_noise_std**2 + noise.offset_drift_std**2
    if noise.include_shot_noise:
        variance += i01 / t_int
    return math.sqrt(variance) / abs(slope)


def electronic_noise_for_target(
    target_sensitivity: float,
    d: float,
    w0: float,
    total_flux: float,
    t_int: float,
    include_shot_noise: bool = True,
) -> float:
    """Electronic noise std (photons/s) so the model hits a target sensitivity.

    Inverts ``spade_sensitivity_model`` for a photodiode at one anchor
    separation; raises ``ValueError`` if the target sits below the shot
    limit there.
    """
    if target_sensitivity <= 0:
        raise ValueError(f"target sensitivity must be positive, got {target_sensitivity}")
    slope = abs(hg01_flux_derivative(d, w0, total_flux))
    if slope == 0.0:
        raise ValueError("anchor separation sits at a stationary point of the mode power")
    total_var = (target_sensitivity * slope) ** 2
    shot_var = i01_analytic(d, w0, total_flux) / t_int if include_shot_noise else 0.0
    if total_var <= shot_var:
        raise ValueError(
            f"target {target_sensitivity} um is below the shot limit "
            f"{math.sqrt(shot_var) / slope:.3g} um at d={d} um"
        )
    return math.sqrt(total_var - shot_var)


def photons_in_mode(d: float, w0: float, photons: float) -> int:
    """Detected photons routed into the first-order mode, rounded to int."""
    if d < 0 or w0 <= 0 or photons < 0:
        raise ValueError("inputs must be positive (separation may be zero)")
    fraction = i01_analytic(d, w0, 1.0)
    return int(round(photons * fraction))


def qcrb_bound(d: float, photons: float, w0: float) -> BoundResult:
    return BoundResult(d, qcrb(photons, w0), 1.0 / (w0 * w0), photons, "QCRB")


def di_bound(d: float, photons: float, w0: float, t_int: float = 1.0) -> BoundResult:
    """Direct-imaging bound for ``photons`` detected during ``t_int``."""
    flux = photons / t_int
    fisher = fisher_direct_imaging(d, w0, flux / 2.0, flux / 2.0)
    sens = math.inf if fisher <= 0 else 1.0 / math.sqrt(fisher * t_int)
    return BoundResult(d, sens, fisher / flux, photons, "DI_CRB")


def spade_bound(
    d: float,
    photons: float,
    w0: float,
    t_int: float,
    noise: PhotodiodeModel | SpadModel,
) -> BoundResult:
    """Error-propagation bound for ``photons`` detected during ``t_int``."""
    if isinstance(noise, SpadModel) and noise.quantum_efficiency > 0:
        flux = photons / t_int / noise.quantum_efficiency
    else:
        flux = photons / t_int
    sens = spade_sensitivity_model(d, w0, flux, t_int, noise)
    fisher_pp = 0.0 if not math.isfinite(sens) else 1.0 / (sens * sens * photons)
    return BoundResult(d, sens, fisher_pp, photons, "SPADE_MODEL")
