"""Contact-process experiments on sparse random graphs.

Simulation engines (event-driven and graphical-representation), graph
generators with heavy-tailed geometric families, local-neighborhood
convergence measurement, and seeded Monte Carlo estimators, all built for
exact reproducibility: every random quantity descends from one master seed
through named derivation paths.
"""

__version__ = "0.1.0"

from .contact_process import (
    Timeline,
    Trajectory,
    ctmc_exact_expected_extinction,
    evolve,
    first_passage_radius,
    restrict_timeline,
    reverse_timeline,
    run_direct,
    sample_density,
    sample_extinction_times,
    sample_first_passage,
    sample_timeline,
    sample_timeline_extinction_times,
    shift_timeline,
    thin_timeline,
    timelines_equal,
)
from .errors import (
    BallTooLarge,
    ConfigError,
    CpLabError,
    EdgeListFormatError,
    EmptyGraphError,
    StateSpaceTooLarge,
)
from .estimators import (
    Estimate,
    almostlocal_diagnostic,
    bootstrap_log_median_slope,
    estimate_density,
    estimate_eta_geq_R,
    estimate_star_extinction,
    estimate_Z_geq_R,
    tightness_diagnostic,
    wilson_interval,
)
from .graphs import (
    DegreeDistribution,
    Graph,
    RadiusLaw,
    generate_configuration_model,
    generate_cycle,
    generate_lattice_box,
    generate_random_regular,
    generate_spatial_torus_graph,
    generate_star,
    generate_ubgw_ball,
    giant_component,
    read_edge_list,
    top_eps_degree_sum,
    write_edge_list,
)
from .local_convergence import (
    BallDistribution,
    RootedBall,
    canonical_key,
    convergence_report,
    d_star_from_tvs,
    empirical_ball_distribution,
    extract_ball,
    limit_ball_distribution,
    make_ubgw_sampler,
    tv_distance,
)
from .rng import derive_rng, derive_seeds
