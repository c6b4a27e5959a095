"""Instrument model tests: demultiplexer arithmetic, detector statistics,
and the quadrant-detector reference including its blindness property."""

import math

import numpy as np
import pytest
from scipy import integrate

from spadesim.errors import ConfigurationError, SaturationError
from spadesim.instrument import (
    DemuxModel,
    InstrumentModel,
    PhotodiodeModel,
    QuadrantDetectorModel,
    SpadModel,
    demux,
    expected_offset,
    quadrant_position,
    quadrant_signal,
    read_photodiode,
    read_spad,
    reference_separation,
    scene_quadrant_signal,
    uniform_leak_matrix,
)
from spadesim.scene import DEFAULT_MODES, GaussianBeam, ModalPowers, ModeIndex, Scene

W0 = 1135.0


def modal(**orders):
    """ModalPowers from keyword pairs like nm10=100."""
    entries = {}
    for key, value in orders.items():
        n, m = int(key[-2]), int(key[-1])
        entries[ModeIndex(n, m)] = float(value)
    return ModalPowers(entries)


class TestDemux:
    def test_identity_unit_transmission_is_passthrough(self):
        model = DemuxModel(transmission=1.0)
        powers = modal(nm00=100.0, nm10=25.0)
        out = demux(powers, model)
        assert out[(0, 0)] == pytest.approx(100.0)
        assert out[(1, 0)] == pytest.approx(25.0)

    def test_default_transmission_matches_insertion_loss(self):
        out = demux(modal(nm10=100.0), DemuxModel())
        assert out[(1, 0)] == pytest.approx(41.0)

    def test_symmetric_percent_leak(self):
        modes = (ModeIndex(0, 0), ModeIndex(1, 0))
        x = uniform_leak_matrix(2, 0.01)
        model = DemuxModel(modes=modes, crosstalk=x, transmission=1.0)
        out = demux(modal(nm00=100.0, nm10=0.0), model)
        assert out[(0, 0)] == pytest.approx(99.0)
        assert out[(1, 0)] == pytest.approx(1.0)

    def test_never_amplifies(self):
        model = DemuxModel.with_uniform_leak(0.07)
        powers = modal(nm00=11.0, nm10=5.0, nm01=2.0, nm20=1.0, nm02=0.5)
        out = demux(powers, model)
        assert all(v >= 0 for _, v in out.items())
        assert out.total() <= model.transmission * powers.total() + 1e-12

    def test_unknown_mode_rejected(self):
        model = DemuxModel(modes=(ModeIndex(0, 0), ModeIndex(1, 0)))
        with pytest.raises(ConfigurationError):
            demux(modal(nm20=1.0), model)

    def test_bad_matrices_rejected(self):
        with pytest.raises(ConfigurationError):
            DemuxModel(crosstalk=np.eye(3))
        bad = np.eye(len(DEFAULT_MODES))
        bad[0, 0] = -0.1
        with pytest.raises(ConfigurationError):
            DemuxModel(crosstalk=bad)
        heavy = np.eye(len(DEFAULT_MODES)) * 1.2
        with pytest.raises(ConfigurationError):
            DemuxModel(crosstalk=heavy)
        with pytest.raises(ConfigurationError):
            DemuxModel(transmission=0.0)


class TestPhotodiode:
    def test_noiseless_reading_is_exact(self):
        model = PhotodiodeModel(electronic_noise_std=0.0, include_shot_noise=False)
        rng = np.random.default_rng(0)
        assert read_photodiode(1234.5, 0.005, model, rng) == 1234.5

    def test_zero_flux_readings_average_to_zero(self):
        sigma = 50.0
        model = PhotodiodeModel(electronic_noise_std=sigma, include_shot_noise=True)
        rng = np.random.default_rng(1)
        reads = [read_photodiode(0.0, 0.005, model, rng) for _ in range(10_000)]
        assert abs(np.mean(reads)) < 3 * sigma / 100.0

    def test_shot_variance_matches_flux_over_time(self):
        flux, t = 2e6, 0.01
        model = PhotodiodeModel(electronic_noise_std=0.0, include_shot_noise=True)
        rng = np.random.default_rng(2)
        reads = np.array([read_photodiode(flux, t, model, rng) for _ in range(10_000)])
        assert reads.var(ddof=1) == pytest.approx(flux / t, rel=0.05)

    def test_readings_may_be_negative(self):
        model = PhotodiodeModel(electronic_noise_std=10.0)
        rng = np.random.default_rng(3)
        reads = [read_photodiode(1.0, 0.005, model, rng) for _ in range(200)]
        assert min(reads) < 0

    def test_invariants(self):
        with pytest.raises(ConfigurationError):
            PhotodiodeModel(electronic_noise_std=-1.0)


class TestSpad:
    def test_dark_and_flux_zero_never_clicks(self):
        model = SpadModel(quantum_efficiency=0.25, dark_count_rate=0.0)
        rng = np.random.default_rng(4)
        assert all(read_spad(0.0, 0.1, model, rng) == 0 for _ in range(100))

    def test_mean_counts_match_reference_configuration(self):
        # eta 0.25, 140 000 photons/s over 100 ms -> mean 3500 counts.
        model = SpadModel(quantum_efficiency=0.25, dark_count_rate=0.0)
        rng = np.random.default_rng(5)
        draws = np.array([read_spad(140_000.0, 0.1, model, rng) for _ in range(10_000)])
        assert draws.mean() == pytest.approx(3500.0, abs=3 * math.sqrt(3500 / 10_000) * 10)
        assert draws.mean() == pytest.approx(3500.0, rel=0.01)

    def test_poisson_variance_equals_mean(self):
        model = SpadModel(quantum_efficiency=1.0, dark_count_rate=0.0)
        rng = np.random.default_rng(6)
        draws = np.array([read_spad(2000.0, 0.1, model, rng) for _ in range(10_000)])
        assert draws.var(ddof=1) / draws.mean() == pytest.approx(1.0, abs=0.05)

    def test_outputs_integral_and_nonnegative(self):
        model = SpadModel(dark_count_rate=30.0)
        rng = np.random.default_rng(7)
        draws = [read_spad(1000.0, 0.05, model, rng) for _ in range(500)]
        assert all(isinstance(v, int) and v >= 0 for v in draws)

    def test_expected_offset_is_dark_mean(self):
        assert expected_offset(SpadModel(dark_count_rate=150.0), 0.1) == pytest.approx(15.0)
        assert expected_offset(PhotodiodeModel(electronic_noise_std=5.0), 0.1) == 0.0

    def test_invariants(self):
        with pytest.raises(ConfigurationError):
            SpadModel(quantum_efficiency=1.5)
        with pytest.raises(ConfigurationError):
            SpadModel(dark_count_rate=-1.0)


def half_plane_signal_oracle(center, waist):
    """Normalized difference signal by direct half-plane quadrature."""
    intensity = lambda x: math.exp(-2 * (x - center) ** 2 / waist**2)
    span = 10 * waist + abs(center)
    pos, _ = integrate.quad(intensity, 0.0, span, limit=200)
    neg, _ = integrate.quad(intensity, -span, 0.0, limit=200)
    return (pos - neg) / (pos + neg)


class TestQuadrantDetector:
    def test_centered_beam_reads_zero(self):
        model = QuadrantDetectorModel(beam_waist_at_qd=W0, position_noise_std=0.0)
        beam = GaussianBeam(center_x=0.0, waist=W0, power=1.0)
        rng = np.random.default_rng(8)
        assert quadrant_position(beam, model, rng) == 0.0

    @pytest.mark.parametrize("b_over_w", [0.1, 0.5, 1.0, 1.7])
    def test_signal_matches_half_plane_oracle(self, b_over_w):
        b = b_over_w * W0
        assert quadrant_signal(b, W0) == pytest.approx(
            half_plane_signal_oracle(b, W0), abs=1e-10
        )

    def test_one_waist_displacement_signal(self):
        assert quadrant_signal(W0, W0) == pytest.approx(0.9544997361036416, rel=1e-12)

    @pytest.mark.parametrize("b_over_w", [-1.9, -0.6, 0.0, 0.25, 1.2, 1.99])
    def test_noiseless_inversion_round_trip(self, b_over_w):
        b = b_over_w * W0
        model = QuadrantDetectorModel(beam_waist_at_qd=W0, position_noise_std=0.0)
        beam = GaussianBeam(center_x=b, waist=W0, power=1.0)
        rng = np.random.default_rng(9)
        assert quadrant_position(beam, model, rng) == pytest.approx(b, abs=1e-9 * W0)

    def test_blind_to_symmetric_pair(self):
        model = QuadrantDetectorModel(beam_waist_at_qd=W0)
        scene = Scene(
            GaussianBeam(center_x=-200.0, waist=W0, power=3.0),
            GaussianBeam(center_x=200.0, waist=W0, power=3.0),
        )
        assert scene_quadrant_signal(scene, model) == 0.0

    def test_saturation_raises(self):
        model = QuadrantDetectorModel(beam_waist_at_qd=10.0, position_noise_std=0.0)
        beam = GaussianBeam(center_x=100.0, waist=10.0, power=1.0)
        with pytest.raises(SaturationError):
            quadrant_position(beam, model, np.random.default_rng(10))


class TestReferenceSeparation:
    def scene(self, half, power=1.0):
        return Scene(
            GaussianBeam(center_x=-half, waist=W0, power=power),
            GaussianBeam(center_x=half, waist=W0, power=power),
        )

    def test_noiseless_separation_is_exact(self):
        model = QuadrantDetectorModel(beam_waist_at_qd=W0, position_noise_std=0.0)
        d_ref, err = reference_separation(self.scene(30.0), model, np.random.default_rng(11))
        assert d_ref == pytest.approx(60.0, abs=1e-9)
        assert err == 0.0

    def test_standard_error_matches_formula(self):
        sigma = 0.05
        model = QuadrantDetectorModel(beam_waist_at_qd=W0, position_noise_std=sigma)
        _, err = reference_separation(
            self.scene(200.0), model, np.random.default_rng(12), repetitions=200
        )
        assert err == pytest.approx(sigma * math.sqrt(2.0 / 200.0), rel=0.15)

    def test_consistent_at_fig3_smallest_separation(self):
        model = QuadrantDetectorModel(beam_waist_at_qd=W0, position_noise_std=0.05)
        d_ref, err = reference_separation(
            self.scene(200.0), model, np.random.default_rng(13), repetitions=200
        )
        assert abs(d_ref - 400.0) < 3 * err

    def test_requires_powered_beams(self):
        model = QuadrantDetectorModel()
        scene = Scene(
            GaussianBeam(center_x=-10.0, waist=W0, power=0.0),
            GaussianBeam(center_x=10.0, waist=W0, power=1.0),
        )
        with pytest.raises(ValueError):
            reference_separation(scene, model, np.random.default_rng(14))


class TestInstrumentModel:
    def test_normalization_choices(self):
        InstrumentModel(normalization="external")
        InstrumentModel(normalization="hg00")
        with pytest.raises(ConfigurationError):
            InstrumentModel(normalization="bogus")

    def test_signal_mode_required(self):
        with pytest.raises(ConfigurationError):
            InstrumentModel(demux=DemuxModel(modes=(ModeIndex(0, 0),)))
