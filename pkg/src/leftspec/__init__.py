"""Spectral engines for periodic left-definite pencils with measure coefficients.

Two independent routes to the same generalized eigenvalues: a quasi-derivative
Floquet engine (monodromy, discriminant, bands, quasi-periodic eigenvalues)
and a Fourier-Galerkin Birman-Schwinger engine on the theta fibers, plus the
supersymmetric factorization layer connecting first-order fields to partner
potentials.
"""

from ._piecewise import PiecewisePoly, fit_callable
from .birman_schwinger import (
    BSOperator,
    BSpectrum,
    CrossValidation,
    GalerkinBasis,
    assemble_stiffness,
    assemble_weight_matrix,
    bs_operator,
    bs_spectrum,
    cross_validate,
    sign_count_trend,
)
from .coefficients import (
    MiuraField,
    ModelSpec,
    PeriodicPotential,
    SignedWeight,
    build_model,
    jordan_decompose,
    loc_unif_seminorm,
    miura_forward,
    step_field,
    yafaev_check,
)
from .errors import (
    ConfigError,
    EngineError,
    IntegrationError,
    LeftspecError,
    PositivityError,
)
from .floquet import (
    BandSet,
    Monodromy,
    ThetaEigenvalues,
    discriminant,
    monodromy,
    stability_intervals,
    theta_eigenvalues,
)
from .quasi_ode import (
    QuasiState,
    SystemSlice,
    Trajectory,
    assemble_system,
    integrate,
    solution_basis,
    wronskian,
)
from .susy import (
    DiracDiscretization,
    dirac_spectrum,
    dirac_square_check,
    eigvec_transfer_check,
    isospectral_check,
    point_interaction_check,
    schrodinger_pair_spectra,
)

__version__ = "0.1.0"
