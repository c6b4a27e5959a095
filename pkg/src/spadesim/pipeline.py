"""Measurement protocol: calibration, curve inversion, repetition statistics.

The protocol mirrors the apparatus procedure: a single-source scan of
the first-order-mode response against transverse position, a polynomial
fit producing the one-source calibration curve f(x), its symmetrization
into the two-source curve g(d) weighted by the per-source powers, and
separation estimation by inverting measured power ratios through g on
its monotone branch, repeated over consecutive integration windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import FitError, SymmetrizationError
from .instrument import (
    InstrumentModel,
    demux,
    expected_offset,
    read_detector,
    reference_separation,
)
from .scene import (
    FUNDAMENTAL_MODE,
    SIGNAL_MODE,
    GaussianBeam,
    Scene,
    beam_mode_powers,
    mode_powers,
)

#: Bisection tolerance (um) for curve inversion.
INVERSION_TOL_UM = 1e-4
#: Condition-number ceiling for the calibration design matrix.
FIT_CONDITION_LIMIT = 1e12
#: Fraction of clamped repetitions above which an estimate is flagged.
DEGRADED_CLAMP_FRACTION = 0.10


def default_scan_grid(start: float = -100.0, stop: float = 100.0, step: float = 6.0) -> np.ndarray:
    """Scan positions (um), inclusive of both endpoints when step divides."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if stop <= start:
        raise ValueError("stop must exceed start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


@dataclass(frozen=True)
class CalibrationScan:
    """Recorded single-source scan: positions vs normalized signal power."""

    positions: np.ndarray
    normalized_powers: np.ndarray
    repetitions_per_point: int
    excluded_positions: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        val = np.asarray(self.normalized_powers, dtype=float)
        if pos.shape != val.shape or pos.ndim != 1:
            raise ValueError("positions and normalized_powers must be equal-length 1D arrays")
        if pos.size >= 2 and not np.all(np.diff(pos) > 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "normalized_powers", val)


@dataclass(frozen=True)
class CalibrationCurve:
    """Fitted one-source calibration polynomial f(x), x in um."""

    poly: np.polynomial.Polynomial
    valid_range: tuple[float, float]
    fit_residual_rms: float

    @property
    def degree(self) -> int:
        return len(self.poly.coef) - 1

    @property
    def coefficients(self) -> np.ndarray:
        """Power-basis coefficients in raw x (um), ascending order."""
        return self.poly.convert().coef

    def __call__(self, x):
        return self.poly(x)

    def derivative(self, x):
        return self.poly.deriv()(x)


@dataclass(frozen=True)
class TwoSourceCurve:
    """Symmetrized two-source curve g(d) with its monotone branch.

    g(d) = w_a f(d/2) + w_b f(-d/2), with the weights given by the
    relative source powers.  Inversion is only meaningful on
    ``monotone_branch`` = [0, d_turn], d_turn capped at the calibrated
    range.
    """

    base: CalibrationCurve
    weight_a: float
    weight_b: float
    monotone_branch: tuple[float, float]

    @property
    def branch_end(self) -> float:
        return self.monotone_branch[1]

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        val = self.weight_a * self.base(d / 2.0) + self.weight_b * self.base(-d / 2.0)
        return float(val) if val.ndim == 0 else val

    def derivative(self, d):
        d = np.asarray(d, dtype=float)
        val = 0.5 * (
            self.weight_a * self.base.derivative(d / 2.0)
            - self.weight_b * self.base.derivative(-d / 2.0)
        )
        return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class EstimationResult:
    """Separation estimate with repetition statistics and its reference."""

    d_hat: float
    d_sensitivity: float
    d_ref: float
    d_ref_err: float
    repetitions: int
    per_bin_estimates: np.ndarray
    clamp_fraction: float = 0.0
    degraded: bool = False
    #: Alternative estimator: inversion of the mean ratio instead of the
    #: mean of per-bin inversions (exposed for comparison).
    d_hat_mean_ratio: float = math.nan


@dataclass(frozen=True)
class DifferentialResult:
    """Per-step estimates of a differential displacement sweep."""

    results: tuple[EstimationResult, ...]
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    step: float


def _channel_fluxes(scene_or_beam, instrument: InstrumentModel):
    """Detector-plane fluxes of the signal and normalization channels."""
    if isinstance(scene_or_beam, Scene):
        modal = mode_powers(scene_or_beam, instrument.demux.modes)
        total = scene_or_beam.total_power
    else:
        modal = beam_mode_powers(scene_or_beam, instrument.demux.modes)
        total = scene_or_beam.power
    at_detectors = demux(modal, instrument.demux)
    signal = at_detectors[SIGNAL_MODE]
    if instrument.normalization == "hg00":
        norm = at_detectors[FUNDAMENTAL_MODE]
    else:
        norm = total  # exact pick-off reading of the incident flux
    return signal, norm


def _read_ratio(
    signal_flux: float,
    norm_flux: float,
    instrument: InstrumentModel,
    t_int: float,
    rng: np.random.Generator,
) -> tuple[float, float] | None:
    """One window: (signal reading, normalization reading), or None if unusable.

    The detector's known mean offset (dark counts per window, measured
    without light) is subtracted from both channels; its noise remains.
    """
    offset = expected_offset(instrument.detector, t_int)
    signal = read_detector(signal_flux, t_int, instrument.detector, rng) - offset
    if instrument.normalization == "hg00":
        norm = read_detector(norm_flux, t_int, instrument.detector, rng) - offset
    else:
        norm = norm_flux
    if norm <= 0:
        return None
    return signal, norm


def run_calibration_scan(
    instrument: InstrumentModel,
    beam: GaussianBeam,
    grid,
    t_int: float,
    rng: np.random.Generator,
    dwell_s: float = 10.0,
) -> CalibrationScan:
    """Single-source scan of the normalized first-order-mode power.

    For each grid position the beam is placed there and the signal and
    normalization channels are read over ``dwell_s`` worth of
    integration windows; the recorded value is the ratio of the two
    window means.  Points whose mean normalization power is not
    positive are excluded and reported in ``excluded_positions``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1D array of positions")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid positions must be strictly increasing")
    if t_int <= 0 or dwell_s < t_int:
        raise ValueError("need a positive t_int no longer than the dwell")
    n_windows = max(1, int(round(dwell_s / t_int)))
    positions, values, excluded = [], [], []
    for x in grid:
        signal_flux, norm_flux = _channel_fluxes(beam.displaced(x - beam.center_x), instrument)
        signal_sum = 0.0
        norm_sum = 0.0
        for _ in range(n_windows):
            reading = _read_ratio(signal_flux, norm_flux, instrument, t_int, rng)
            if reading is None:
                continue
            signal_sum += reading[0]
            norm_sum += reading[1]
        if norm_sum <= 0:
            excluded.append(float(x))
            continue
        positions.append(float(x))
        values.append(signal_sum / norm_sum)
    if not positions:
        raise FitError("every scan point was excluded (no usable normalization power)")
    return CalibrationScan(
        positions=np.array(positions),
        normalized_powers=np.array(values),
        repetitions_per_point=n_windows,
        excluded_positions=tuple(excluded),
    )


def fit_calibration(scan: CalibrationScan, degree: int = 6) -> CalibrationCurve:
    """Ordinary least-squares polynomial fit of the calibration scan.

    The fit runs on an internally rescaled abscissa (numpy's mapped
    domain), so raw micrometer positions are safe to pass; the reported
    ``coefficients`` are converted back to plain powers of x.
    """
    if degree < 2:
        raise ValueError(f"degree must be at least 2, got {degree}")
    n = scan.positions.size
    if n <= degree + 1:
        raise FitError(
            f"{n} scan points cannot constrain a degree-{degree} polynomial "
            f"(need at least {degree + 2})"
        )
    poly, diagnostics = np.polynomial.Polynomial.fit(
        scan.positions, scan.normalized_powers, degree, full=True
    )
    _resid, rank, sv, _rcond = diagnostics
    if rank < degree + 1:
        raise FitError(
            f"calibration fit is rank deficient (rank {rank} < {degree + 1}); "
            "rescale positions or add scan points"
        )
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if cond > FIT_CONDITION_LIMIT:
        raise FitError(
            f"calibration design matrix is ill-conditioned (cond ~ {cond:.3g}); "
            "rescale positions or reduce the degree"
        )
    fitted = poly(scan.positions)
    rms = float(np.sqrt(np.mean((scan.normalized_powers - fitted) ** 2)))
    return CalibrationCurve(
        poly=poly,
        valid_range=(float(scan.positions[0]), float(scan.positions[-1])),
        fit_residual_rms=rms,
    )


def symmetrize(curve: CalibrationCurve, p1: float, p2: float) -> TwoSourceCurve:
    """Build the two-source curve g(d) from f(x) and the source powers.

    The monotone branch ends at the smallest separation where g' falls
    through zero (the physical turning point), capped at the calibrated
    range; a curve that fails to increase away from d = 0 is rejected.
    """
    if p1 < 0 or p2 < 0 or p1 + p2 <= 0:
        raise ValueError("source powers must be non-negative with a positive sum")
    x_min, x_max = curve.valid_range
    reach = min(x_max, -x_min)
    if reach <= 0:
        raise SymmetrizationError(
            f"calibrated range [{x_min}, {x_max}] um must straddle the axis"
        )
    w_a = p1 / (p1 + p2)
    w_b = p2 / (p1 + p2)
    d_max = 2.0 * reach
    probe = TwoSourceCurve(curve, w_a, w_b, (0.0, d_max))
    d_grid = np.linspace(0.0, d_max, 4097)[1:]
    g_vals = probe(d_grid)
    slopes = probe.derivative(d_grid)
    # A genuine turning point must drop materially past the crossing;
    # fit-noise wiggles must not truncate the branch.
    drop_floor = 3.0 * curve.fit_residual_rms + 1e-15
    d_turn = d_max
    for idx in np.nonzero((slopes[:-1] > 0) & (slopes[1:] <= 0))[0]:
        if g_vals[idx] - g_vals[idx:].min() <= drop_floor:
            continue
        lo, hi = d_grid[idx], d_grid[idx + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if probe.derivative(mid) > 0:
                lo = mid
            else:
                hi = mid
        d_turn = 0.5 * (lo + hi)
        break
    branch_end = min(d_turn, d_max)
    result = TwoSourceCurve(curve, w_a, w_b, (0.0, branch_end))
    if result(0.05 * branch_end) <= result(0.0):
        raise SymmetrizationError(
            "two-source curve does not increase away from zero separation; "
            "the calibration fit looks pathological"
        )
    return result


def invert_with_flag(
    curve: TwoSourceCurve, ratio: float, tol: float = INVERSION_TOL_UM
) -> tuple[float, bool]:
    """Invert g(d) = ratio on the monotone branch by bisection.

    Returns (separation, clamped).  Ratios below g(0) clamp to zero;
    ratios above the branch maximum clamp to the branch end.  Both
    clamps are flagged so downstream statistics can observe them.
    """
    if math.isnan(ratio):
        raise ValueError("ratio must not be NaN")
    lo, hi = curve.monotone_branch
    g_lo = curve(lo)
    g_hi = curve(hi)
    if ratio < g_lo:
        return lo, True
    if ratio >= g_hi:
        return (hi, False) if ratio == g_hi else (hi, True)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if curve(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def invert(curve: TwoSourceCurve, ratio: float, tol: float = INVERSION_TOL_UM) -> float:
    """Separation (um) whose two-source curve value equals ``ratio``."""
    return invert_with_flag(curve, ratio, tol)[0]


def estimate_separation(
    scene: Scene,
    instrument: InstrumentModel,
    curve: TwoSourceCurve,
    t_int: float,
    repetitions: int = 200,
    rng: np.random.Generator | None = None,
    reference_repetitions: int = 200,
) -> EstimationResult:
    """Repeated single-window estimation of the scene separation.

    Each repetition simulates one integration window, forms the
    normalized signal ratio, and inverts it through the two-source
    curve; the estimate and its sensitivity are the mean and standard
    deviation over the per-bin inversions.  The quadrant-detector
    reference separation is measured alongside.  The curve must come
    from a calibration of the same instrument configuration.
    """
    if repetitions < 2:
        raise ValueError(f"need at least 2 repetitions, got {repetitions}")
    if rng is None:
        raise ValueError("an explicit rng is required for reproducibility")
    signal_flux, norm_flux = _channel_fluxes(scene, instrument)
    streams = rng.spawn(repetitions + 1)
    estimates = np.empty(repetitions)
    ratios = np.empty(repetitions)
    clamped = 0
    for i in range(repetitions):
        reading = _read_ratio(signal_flux, norm_flux, instrument, t_int, streams[i])
        if reading is None:
            # Normalization lost for this window: record a floor estimate.
            estimates[i] = curve.monotone_branch[0]
            ratios[i] = math.nan
            clamped += 1
            continue
        ratio = reading[0] / reading[1]
        ratios[i] = ratio
        d_i, was_clamped = invert_with_flag(curve, ratio)
        estimates[i] = d_i
        clamped += was_clamped
    d_ref, d_ref_err = reference_separation(
        scene, instrument.quadrant, streams[-1], reference_repetitions
    )
    clamp_fraction = clamped / repetitions
    mean_ratio = float(np.nanmean(ratios)) if np.any(np.isfinite(ratios)) else math.nan
    d_mean_ratio = invert(curve, mean_ratio) if math.isfinite(mean_ratio) else math.nan
    return EstimationResult(
        d_hat=float(estimates.mean()),
        d_sensitivity=float(estimates.std(ddof=1)),
        d_ref=d_ref,
        d_ref_err=d_ref_err,
        repetitions=repetitions,
        per_bin_estimates=estimates,
        clamp_fraction=clamp_fraction,
        degraded=clamp_fraction > DEGRADED_CLAMP_FRACTION,
        d_hat_mean_ratio=d_mean_ratio,
    )


def differential_measurement(
    scene: Scene,
    instrument: InstrumentModel,
    curve: TwoSourceCurve,
    step: float = 0.2,
    n_steps: int = 10,
    t_int: float = 0.005,
    repetitions: int = 200,
    rng: np.random.Generator | None = None,
) -> DifferentialResult:
    """Step one source outward in sub-waist increments and estimate each scene.

    The stepped source moves by ``step`` (um) per increment; the pair is
    re-centered on the instrument axis after each step, mirroring the
    alignment procedure that pins the centroid during acquisition.  The
    estimated-vs-reference pairs are fit with an ordinary least-squares
    line; the slope is the differential response of the estimator.
    """
    if n_steps < 2:
        raise ValueError(f"need at least 2 steps for a line fit, got {n_steps}")
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if rng is None:
        raise ValueError("an explicit rng is required for reproducibility")
    d0 = scene.separation()
    center = scene.centroid
    streams = rng.spawn(n_steps + 1)
    results = []
    for i in range(n_steps + 1):
        d_i = d0 + i * step
        stepped = Scene(
            beam_a=replace(scene.beam_a, center_x=center - d_i / 2.0),
            beam_b=replace(scene.beam_b, center_x=center + d_i / 2.0),
            coherence=scene.coherence,
            relative_phase=scene.relative_phase,
        )
        results.append(
            estimate_separation(
                stepped, instrument, curve, t_int, repetitions, rng=streams[i]
            )
        )
    x = np.array([r.d_ref for r in results])
    y = np.array([r.d_hat for r in results])
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = len(x) - 2
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope_stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 and sxx > 0 else math.nan
    return DifferentialResult(
        results=tuple(results),
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        slope_stderr=slope_stderr,
        step=step,
    )
