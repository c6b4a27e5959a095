"""Unit conventions and photon-energy conversions.

Internal units everywhere in this package: micrometers for transverse
lengths, seconds for time, photons/s for optical power.  Conversions to
and from watts happen only at configuration boundaries, using the photon
energy at the configured wavelength.
"""

PLANCK_J_S = 6.62607015e-34
SPEED_OF_LIGHT_M_S = 299792458.0

#: Telecom-band default; most configurations do not override it.
DEFAULT_WAVELENGTH_UM = 1.55


def photon_energy_j(wavelength_um: float = DEFAULT_WAVELENGTH_UM) -> float:
    """Energy of one photon (J) at the given vacuum wavelength (um)."""
    if wavelength_um <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_um}")
    return PLANCK_J_S * SPEED_OF_LIGHT_M_S / (wavelength_um * 1e-6)


def flux_from_watts(power_w: float, wavelength_um: float = DEFAULT_WAVELENGTH_UM) -> float:
    """Convert optical power (W) to photon flux (photons/s)."""
    if power_w < 0:
        raise ValueError(f"optical power must be non-negative, got {power_w}")
    return power_w / photon_energy_j(wavelength_um)


def watts_from_flux(flux: float, wavelength_um: float = DEFAULT_WAVELENGTH_UM) -> float:
    """Convert photon flux (photons/s) to optical power (W)."""
    return flux * photon_energy_j(wavelength_um)
