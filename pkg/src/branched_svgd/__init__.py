"""Stein variational gradient descent with a branching particle system."""

from .branching import IntegerLaw, OffspringLaws, branch_step, paper_laws
from .bsvgd import BsvgdConfig, BsvgdTrace, initial_cloud, precision_default, run_bsvgd
from .core import Color, Particle, ParticleCloud, SeededRng, TraceEntry
from .kernels import GaussianKernel
from .metrics import atom_diagnostic, mode_coverage, solve_assignment, trajectory_report, wasserstein2
from .svgd import DivergenceError, StepSchedule, SvgdConfig, svgd_iterate
from .targets import BananaTMixture, GaussianMixture, paper_banana3, paper_gauss25

__version__ = "0.1.0"

__all__ = [
    "BananaTMixture", "BsvgdConfig", "BsvgdTrace", "Color", "DivergenceError", "GaussianKernel",
    "GaussianMixture", "IntegerLaw", "OffspringLaws", "Particle", "ParticleCloud", "SeededRng",
    "StepSchedule", "SvgdConfig", "TraceEntry", "atom_diagnostic", "branch_step", "initial_cloud",
    "mode_coverage", "paper_banana3", "paper_gauss25", "paper_laws", "precision_default",
    "run_bsvgd", "solve_assignment", "svgd_iterate", "trajectory_report", "wasserstein2",
]
