"""Separation estimation of two incoherent sources by spatial-mode demultiplexing.

Simulates the full measurement chain at desk scale: displaced Gaussian
beams decomposed on the Hermite-Gauss basis, lossy demultiplexing,
photon-counting or photodiode readout, single-source calibration with
polynomial fitting, two-source curve inversion, and the quantum /
direct-imaging Cramér-Rao reference bounds.
"""

from .bounds import (
    BoundResult,
    crb_direct_imaging,
    electronic_noise_for_target,
    fisher_direct_imaging,
    photons_in_mode,
    qcrb,
    spade_sensitivity_model,
)
from .errors import (
    ConfigurationError,
    FitError,
    NumericalError,
    SaturationError,
    SimulationError,
    SymmetrizationError,
    UnsupportedSceneError,
)
from .harness import (
    ExperimentConfig,
    RunRecord,
    default_config,
    load_config,
    read_results,
    run_campaign,
    write_results,
)
from .instrument import (
    DemuxModel,
    InstrumentModel,
    PhotodiodeModel,
    QuadrantDetectorModel,
    SpadModel,
    demux,
    quadrant_position,
    read_photodiode,
    read_spad,
    reference_separation,
)
from .pipeline import (
    CalibrationCurve,
    CalibrationScan,
    EstimationResult,
    TwoSourceCurve,
    differential_measurement,
    estimate_separation,
    fit_calibration,
    invert,
    run_calibration_scan,
    symmetrize,
)
from .scene import (
    DEFAULT_MODES,
    GaussianBeam,
    ModalPowers,
    ModeIndex,
    Scene,
    coupling_amplitude,
    i01_analytic,
    intensity_profile,
    mode_powers,
)

__version__ = "0.1.0"
