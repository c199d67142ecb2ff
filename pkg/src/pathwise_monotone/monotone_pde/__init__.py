"""Discrete Gelfand triples, driver operators and the semi-implicit solver."""

from .drivers import (
    AbstractYoung,
    Additive,
    DriverError,
    DriverOperator,
    LinearMultiplicative,
    RegularizedDrift,
    additive_driver,
    driver_increment,
    driver_integral,
    dyadic_windows,
    h5_diagnostic,
    h6_diagnostic,
    left_point_integral,
    zero_driver,
)
from .operators import (
    AssumptionConstants,
    AuditReport,
    GelfandDiscretization,
    PsiSpec,
    audit_assumptions,
    cubic_psi,
    identity_psi,
    p_laplace_apply,
    p_laplace_flux_pairing,
    p_laplace_triple,
    porous_medium_apply,
    porous_medium_triple,
    power_psi,
    stiffness_matrix,
    zero_triple,
)
from .solver import (
    ContractionReport,
    SolveReport,
    SolverError,
    bound_audit,
    contraction_audit,
    heat_reference,
    implicit_step,
    solve,
)
