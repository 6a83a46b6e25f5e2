"""wqflow: a numerical laboratory for geodesic, Langevin and p-heat flows
on the L^q-Wasserstein space over flat domains, with entropy diagnostics
that verify the W-entropy and W-entropy-information identities along
simulated trajectories."""

__version__ = "0.1.0"

from .closedform import (
    ScaleTrajectory,
    c_np,
    eta_weight,
    scale_trajectory,
    solve_beta_ode,
    solve_scale_ode,
    special_geodesic,
    special_langevin,
    special_pheat,
    suggest_box_halfwidth,
)
from .diagnostics import (
    DiagnosticsRecord,
    compute_record,
    entropy,
    relative_entropy_np,
    wq_distance_1d,
    write_diagnostics_csv,
)
from .fields import (
    Grid,
    ModelParams,
    anisotropy,
    a_inner,
    a_norm2,
    curl2d,
    divergence,
    gradient,
    hessian,
    jacobian,
    linearized_p_laplacian,
    p_laplacian,
    quadrature,
    read_field,
    regularized_speed,
    write_field,
)
from .flows import FlowError, FlowState, MonitorBreach, RunConfig, RunResult, cfl_dt, rk4_step, run
