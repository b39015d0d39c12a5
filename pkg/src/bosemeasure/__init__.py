"""Empirical measures of quantum measurements on small Bose gases.

Submodules: ``ot1d`` (optimal transport on the line), ``scattering``
(scattering length), ``bogoliubov`` (momentum lattice and covariances),
``fockspace`` (bosonic occupation bases and operators), ``quantum_sim``
(exact small systems and measurement sampling), ``experiments`` (Monte
Carlo harness) and ``cli``.
"""
from ._backend import ENV_FLAG, HAVE_NUMBA, use_numba

__version__ = "0.1.0"

__all__ = ["ENV_FLAG", "HAVE_NUMBA", "use_numba", "__version__"]
