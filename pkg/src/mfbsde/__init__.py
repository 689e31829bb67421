"""Particle solvers for multi-dimensional mean-field BSDE systems whose
generators are diagonally quadratic in their own volatility row."""

from .condexp import ProjectionInfo, RegressionBasis, RegressionEngine
from .constants import (
    GlobalConstants,
    LocalConstants,
    ThetaConstants,
    global_ode,
    kappa_local_certificate,
    local_radii,
    local_window,
    m_const,
    picard_ratio_bound,
    theta_consts,
    volterra_weight,
)
from .diagnostics import (
    bmo_norm,
    bmo_profile,
    check_apriori_local,
    check_envelope,
    contraction_trace,
    john_nirenberg,
    theta_gap,
)
from .generators import (
    CertificateConvex,
    CertificateGlobal,
    CertificateLocal,
    CertificateVolterra,
    FixtureBundle,
    GeneratorSpec,
    check_growth,
    fixture,
    fixture_names,
    freeze_rows,
)
from .measures import MeasureView, ParticleCloud, exp_moment, wasserstein_to_delta
from .oracles import (
    OracleRefusal,
    OracleResult,
    cole_hopf,
    cole_hopf_path,
    dense_reference,
    linear_mf_oracle,
)
from .paths import (
    PathEnsemble,
    TimeGrid,
    build_grid,
    coarsen,
    dump_ensemble,
    load_ensemble,
    sample_brownian,
)
from .solvers import (
    PicardTrace,
    Solution,
    SolverDivergence,
    SolverOptions,
    dump_solution,
    load_solution,
    psi_map,
    run_scheme,
    solve_global,
    solve_local,
    solve_scalar,
    solve_theta,
    solve_volterra,
)

__version__ = "0.1.0"

__all__ = [
    "CertificateConvex",
    "CertificateGlobal",
    "CertificateLocal",
    "CertificateVolterra",
    "FixtureBundle",
    "GeneratorSpec",
    "GlobalConstants",
    "LocalConstants",
    "MeasureView",
    "OracleRefusal",
    "OracleResult",
    "ParticleCloud",
    "PathEnsemble",
    "PicardTrace",
    "ProjectionInfo",
    "RegressionBasis",
    "RegressionEngine",
    "Solution",
    "SolverDivergence",
    "SolverOptions",
    "ThetaConstants",
    "TimeGrid",
    "bmo_norm",
    "bmo_profile",
    "build_grid",
    "check_apriori_local",
    "check_envelope",
    "check_growth",
    "coarsen",
    "cole_hopf",
    "cole_hopf_path",
    "contraction_trace",
    "dense_reference",
    "dump_ensemble",
    "dump_solution",
    "exp_moment",
    "fixture",
    "fixture_names",
    "freeze_rows",
    "global_ode",
    "john_nirenberg",
    "kappa_local_certificate",
    "linear_mf_oracle",
    "load_ensemble",
    "load_solution",
    "local_radii",
    "local_window",
    "m_const",
    "picard_ratio_bound",
    "psi_map",
    "run_scheme",
    "sample_brownian",
    "solve_global",
    "solve_local",
    "solve_scalar",
    "solve_theta",
    "solve_volterra",
    "theta_consts",
    "theta_gap",
    "volterra_weight",
    "wasserstein_to_delta",
]
