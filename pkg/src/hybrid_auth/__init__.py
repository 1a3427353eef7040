"""Simulation of entanglement-based hybrid PUF authentication protocols."""

from .adversaries import ForgerySubmission, StrategyParams, optimal_forgery
from .analysis import OptimizationResult, SecurityRow, optimize_grid, pr_win_closed_form
from .hepuf import HepufDevice
from .protocol import Decision, SourceMode, SourceModel, Transcript, run_offline_round, run_online_round
from .puf import BiasedCpuf, CrpDatabase, build_crp_database
from .quantum import BellKind, DensityMatrix, MeasBasis, Subsystem

__all__ = [
    "BellKind",
    "BiasedCpuf",
    "CrpDatabase",
    "Decision",
    "DensityMatrix",
    "ForgerySubmission",
    "HepufDevice",
    "MeasBasis",
    "OptimizationResult",
    "SecurityRow",
    "SourceMode",
    "SourceModel",
    "StrategyParams",
    "Subsystem",
    "Transcript",
    "build_crp_database",
    "optimal_forgery",
    "optimize_grid",
    "pr_win_closed_form",
    "run_offline_round",
    "run_online_round",
]
