"""spikelab: desk-scale numerics for boundary spikes of -eps^2 Δu + u = u^(p-1)."""

__version__ = "0.1.0"

from . import errors  # noqa: F401
from .geometry import (  # noqa: F401
    BoundaryManifold,
    CriticalPoint,
    CurvatureReport,
    FermiChart,
    PlanarCurve,
    SurfaceOfRevolution,
    ball,
    boundary_exponential,
    disk,
    ellipse,
    fermi_map,
    find_critical_points,
    manifold_from_spec,
    metric_in_fermi,
    second_fundamental_form,
    transition_derivatives,
    verify_metric_expansion,
)
from .linearized_spectrum import (  # noqa: F401
    HalfBoxGrid,
    LinearizedOperator,
    SpectrumReport,
    assemble_linearized,
    coercivity_gap,
    kernel_report,
)
from .pde import (  # noqa: F401
    DiscreteDomain,
    DiscreteField,
    SolveReport,
    apply_istar,
    continuation,
    discrete_norm,
    discretize,
    newton_solve,
    remainder_norm,
)
from .profile import (  # noqa: F401
    GroundStateProfile,
    MomentReport,
    Parameters,
    check_pohozaev_zn,
    compute_constants,
    eval_profile,
    halfspace_angular_moment,
    solve_ground_state,
)
from .reduction import (  # noqa: F401
    ExpansionFit,
    PeakAnsatz,
    ReducedEnergySample,
    basis_function,
    eval_ansatz,
    fit_expansion,
    gradient_check,
    predict_peaks,
    reduced_energy,
)
