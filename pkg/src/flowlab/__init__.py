"""Flow-matching inversion and two-stage exemplar-guided editing on toy velocity fields."""

__version__ = "0.1.0"

from flowlab.core import (
    Condition,
    GridShape,
    LatentState,
    Mask,
    PriorSampler,
    TimeGrid,
    sample_prior,
    uniform_grid,
)
from flowlab.errors import (
    CapabilityError,
    ConfigError,
    DegenerateSplitError,
    DivergenceError,
    FlowlabError,
)
from flowlab.fields import (
    AffineFieldSpec,
    SmoothRandomFieldSpec,
    VelocityField,
    affine_field,
    constant_field,
    deterministic_target_field,
    smooth_random_field,
)
from flowlab.solver import (
    Trajectory,
    closed_form_affine_solve,
    euler_sample,
    euler_sample_partial,
    oracle_solve,
)
from flowlab.inversion import (
    InversionReport,
    error_identity_gap,
    ideal_invert_affine,
    recon_invert,
    vanilla_invert,
)
from flowlab.reinversion import (
    EditConfig,
    EditOutcome,
    nfe_speedup,
    recon_inv_edit,
    reinversion_edit,
    transition_index,
)
from flowlab.msd import msd_edit, msd_velocity
from flowlab.metrics import drift_curve, l2, mean_abs
from flowlab.data import make_blob_grid, make_box_mask, make_reconstructable_source
