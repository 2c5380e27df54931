"""Exact and approximate thermal-state computations for local lattice Hamiltonians."""

__version__ = "0.1.0"

from .lattice import (DenseOperator, Hamiltonian, Lattice, LocalTerm, build_model, classical_ising,  # noqa: F401
                      heisenberg_chain, load_model, random_chain, tfim_chain, tfim_grid)
from .oracle import GibbsState, gibbs, log_partition, marginal  # noqa: F401
