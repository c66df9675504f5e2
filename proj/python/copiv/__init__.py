"""Python interface to the copiv C++ core."""

from ._core import (
    CopivError,
    Phi2,
    __version__,
    copula,
    fit,
    run,
    simulate,
    solve_binary,
    solve_continuous,
    solve_ordered,
    solve_rho,
    true_cdf,
    true_qsf,
)

__all__ = [
    "CopivError",
    "Phi2",
    "__version__",
    "copula",
    "fit",
    "run",
    "simulate",
    "solve_binary",
    "solve_continuous",
    "solve_ordered",
    "solve_rho",
    "true_cdf",
    "true_qsf",
]
