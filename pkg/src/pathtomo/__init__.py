"""Tomography of path-encoded photonic qudits with a rotating cylindrical lens."""

from .errors import *  # noqa: F401,F403
from .experiment import (
    calibrate_from_simulation,
    hidden_offsets,
    reference_states,
    round_trip,
    simulate_frameset,
    sweep,
)
from .geometry import (
    MeasurementPlan,
    PathGeometry,
    ResourceReport,
    ValidityReport,
    angle_set,
    golomb_ruler,
    grid_geometry,
    is_nonredundant_rectangle,
    nyquist_limit,
    eight_path_geometry,
    grid_2x3,
    plan_measurements,
    resource_report,
    ruler_geometry,
    segment_table,
    square_geometry,
    validate_geometry,
)
from .optics import (
    CameraImage,
    NoiseModel,
    OpticalConfig,
    direct_image,
    oft_image,
    pixel_to_momentum,
    to_lab_frame,
)
from .prep import PrepSettings, prepare_paper_state, prepare_square_state, theory_purity
from .quantum import (
    DensityMatrix,
    fidelity,
    hermitize,
    maximally_mixed,
    nearest_physical,
    psd_violation,
    pure_state,
    purity,
    random_state,
)
from .reconstruct import (
    Calibration,
    FrameSet,
    PeakReading,
    ReconstructionResult,
    calibrate,
    diagonals_from_direct,
    extract_slice,
    measure_angle,
    peak_at_frequency,
    reconstruct_state,
    rotate_image,
)

__version__ = "0.1.0"
