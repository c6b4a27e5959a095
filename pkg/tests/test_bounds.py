"""Bounds tests: QCRB point values, the direct-imaging Fisher integral
against a fixed-grid Riemann oracle, and the error-propagation model."""

import math

import numpy as np
import pytest

from spadesim.bounds import (
    BoundResult,
    crb_direct_imaging,
    di_bound,
    electronic_noise_for_target,
    fisher_direct_imaging,
    hg01_flux_derivative,
    photons_in_mode,
    qcrb,
    qcrb_bound,
    spade_bound,
    spade_sensitivity_model,
)
from spadesim.instrument import PhotodiodeModel, SpadModel
from spadesim.scene import i01_analytic

W0 = 1135.0


def riemann_fisher_oracle(d, w0, p1, p2, n_points=100_000):
    """Brute-force midpoint Riemann sum of the 1D Fisher integrand."""
    half = 8.0 * w0 + d
    edges = np.linspace(-half, half, n_points + 1)
    x = 0.5 * (edges[:-1] + edges[1:])
    dx = edges[1] - edges[0]
    norm = math.sqrt(2.0 / math.pi) / w0
    c = 2.0 / w0**2
    ga = norm * np.exp(-c * (x + d / 2) ** 2)
    gb = norm * np.exp(-c * (x - d / 2) ** 2)
    intensity = p1 * ga + p2 * gb
    slope = p1 * (-c * (x + d / 2)) * ga - p2 * (-c * (x - d / 2)) * gb
    mask = intensity > 1e-300
    return float(np.sum(slope[mask] ** 2 / intensity[mask]) * dx)


class TestQcrb:
    def test_low_flux_point_value(self):
        value = qcrb(3500, W0)
        assert value == pytest.approx(W0 / math.sqrt(3500), rel=1e-15)
        assert abs(value - 19.0) / 19.0 < 0.02

    def test_high_flux_point_value_one_sig_fig(self):
        value_nm = qcrb(1e13, W0) * 1e3
        assert f"{value_nm:.1g}" == "0.4"

    def test_single_photon(self):
        assert qcrb(1, W0) == W0

    def test_domain(self):
        with pytest.raises(ValueError):
            qcrb(0, W0)
        with pytest.raises(ValueError):
            qcrb(10, -1.0)


class TestFisherDirectImaging:
    def test_far_separated_sources_reach_localization_limit(self):
        per_photon = fisher_direct_imaging(20 * W0, W0, 0.5, 0.5)
        assert per_photon * W0**2 == pytest.approx(1.0, rel=5e-3)

    def test_rayleigh_curse_at_zero_separation(self):
        assert abs(fisher_direct_imaging(0.0, W0, 0.5, 0.5)) < 1e-6 / W0**2

    @pytest.mark.parametrize("d_over_w", [0.1, 0.5, 1.0, 2.0])
    def test_agrees_with_riemann_oracle(self, d_over_w):
        d = d_over_w * W0
        got = fisher_direct_imaging(d, W0, 0.5, 0.5)
        assert got == pytest.approx(riemann_fisher_oracle(d, W0, 0.5, 0.5), rel=1e-4)

    def test_scales_linearly_with_flux(self):
        base = fisher_direct_imaging(500.0, W0, 0.5, 0.5)
        assert fisher_direct_imaging(500.0, W0, 5.0, 5.0) == pytest.approx(10 * base, rel=1e-9)

    def test_unequal_powers_keep_information_at_zero_separation(self):
        assert fisher_direct_imaging(0.0, W0, 0.9, 0.1) > 0.0


class TestCrbDirectImaging:
    def test_zero_fisher_gives_inf_sentinel(self):
        assert crb_direct_imaging(0.0, W0, 0.5, 0.5, 1.0) == math.inf

    def test_large_separation_limit(self):
        n = 3500.0
        value = crb_direct_imaging(20 * W0, W0, n / 2, n / 2, 1.0)
        assert value == pytest.approx(W0 / math.sqrt(n), rel=5e-3)

    def test_monotone_decreasing_below_one_waist(self):
        n = 3500.0
        grid = np.linspace(50.0, W0, 12)
        values = [crb_direct_imaging(d, W0, n / 2, n / 2, 1.0) for d in grid]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestSpadeSensitivityModel:
    def test_shot_limited_small_separation_approaches_qcrb(self):
        flux, t = 1e9, 0.1
        noise = PhotodiodeModel(electronic_noise_std=0.0, include_shot_noise=True)
        got = spade_sensitivity_model(0.01 * W0, W0, flux, t, noise)
        assert got == pytest.approx(qcrb(flux * t, W0), rel=0.01)

    def test_stationary_point_returns_inf(self):
        noise = PhotodiodeModel(electronic_noise_std=0.0)
        assert spade_sensitivity_model(2 * W0, W0, 1e9, 0.1, noise) == math.inf

    def test_never_beats_qcrb_when_shot_limited(self):
        flux, t = 1e9, 0.1
        noise = PhotodiodeModel(electronic_noise_std=0.0, include_shot_noise=True)
        n = flux * t
        for d in np.linspace(0.05 * W0, 1.95 * W0, 25):
            assert spade_sensitivity_model(d, W0, flux, t, noise) >= qcrb(n, W0) * (1 - 1e-9)

    def test_spad_dark_counts_raise_and_qe_rescales(self):
        flux, t = 140_000.0, 0.1
        clean = spade_sensitivity_model(500.0, W0, flux, t, SpadModel(0.25, 0.0))
        dark = spade_sensitivity_model(500.0, W0, flux, t, SpadModel(0.25, 150.0))
        assert dark > clean
        # detected photons: eta * flux * t; shot-limited value tracks them
        n_det = 0.25 * flux * t
        beta2 = (500.0 / (2 * W0)) ** 2
        expected = qcrb(n_det, W0) * math.exp(beta2 / 2) / (1 - beta2)
        assert clean == pytest.approx(expected, rel=1e-9)

    def test_electronic_noise_calibration_round_trip(self):
        flux, t = 2e15, 0.005
        sigma = electronic_noise_for_target(0.02, 120.0, W0, flux, t)
        noise = PhotodiodeModel(electronic_noise_std=sigma, include_shot_noise=True)
        assert spade_sensitivity_model(120.0, W0, flux, t, noise) == pytest.approx(0.02, rel=1e-12)

    def test_calibrated_highflux_shape(self):
        flux, t = 2e15, 0.005
        sigma = electronic_noise_for_target(0.02, 120.0, W0, flux, t)
        noise = PhotodiodeModel(electronic_noise_std=sigma, include_shot_noise=True)
        values = [spade_sensitivity_model(d, W0, flux, t, noise) for d in (20, 60, 120, 160)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[0] / values[2] >= 3.0

    def test_target_below_shot_limit_rejected(self):
        with pytest.raises(ValueError):
            electronic_noise_for_target(1e-9, 120.0, W0, 2e15, 0.005)


class TestDerivative:
    @pytest.mark.parametrize("d", [30.0, 300.0, 900.0, 3000.0])
    def test_analytic_derivative_matches_finite_differences(self, d):
        flux = 1e6
        h = 1e-3
        numeric = (i01_analytic(d + h, W0, flux) - i01_analytic(d - h, W0, flux)) / (2 * h)
        assert hg01_flux_derivative(d, W0, flux) == pytest.approx(numeric, rel=1e-6)


class TestPhotonsInMode:
    def test_reference_point(self):
        assert photons_in_mode(500.0, W0, 3500) == 162

    def test_zero_separation(self):
        assert photons_in_mode(0.0, W0, 3500) == 0

    def test_peak_fraction(self):
        assert photons_in_mode(2 * W0, W0, 3500) == round(3500 * math.exp(-1.0))


class TestBoundSummaries:
    def test_di_inferiority_near_zero_separation(self):
        n = 3500.0
        ratio = crb_direct_imaging(0.01 * W0, W0, n / 2, n / 2, 1.0) / qcrb(n, W0)
        assert ratio > 10.0

    def test_bound_result_consistency(self):
        for result in (
            qcrb_bound(500.0, 3500.0, W0),
            di_bound(500.0, 3500.0, W0),
            spade_bound(500.0, 3500.0, W0, 0.1, SpadModel(0.25, 0.0)),
        ):
            assert isinstance(result, BoundResult)
            if math.isfinite(result.sensitivity):
                product = result.sensitivity * math.sqrt(
                    result.photons * result.fisher_per_photon
                )
                assert product >= 1.0 - 1e-6
