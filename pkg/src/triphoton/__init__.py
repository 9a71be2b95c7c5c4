"""Simulation and higher-order entanglement analysis of triple-photon states."""

from .criteria import GainVector, optimize_gain, uncertainty_check, witness_F, witness_F_all, witness_W
from .dynamics import EvolutionConfig, HamiltonianSpec, Integrator, PumpTreatment, evolve, sweep_xi
from .fock import ModeLayout, QuantumState, SparseOperator, annihilation, coherent, creation, number, vacuum
from .moments import MomentTable, build_quadrature_set, moment_table
from .stdform import (
    Separability,
    StandardForm,
    covariance_matrix,
    gaussian_analog,
    reduce_to_standard_form,
    simon_ppt_oracle,
    theorem2_decide,
)

__all__ = [
    "EvolutionConfig", "GainVector", "HamiltonianSpec", "Integrator", "ModeLayout", "MomentTable",
    "PumpTreatment", "QuantumState", "Separability", "SparseOperator", "StandardForm", "annihilation",
    "build_quadrature_set", "coherent", "covariance_matrix", "creation", "evolve", "gaussian_analog",
    "moment_table", "number", "optimize_gain", "reduce_to_standard_form", "simon_ppt_oracle", "sweep_xi",
    "theorem2_decide", "uncertainty_check", "vacuum", "witness_F", "witness_F_all", "witness_W",
]
__version__ = "0.1.0"
