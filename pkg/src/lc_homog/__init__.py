"""Periodic homogenisation of nematic liquid-crystal flow through perforated domains."""
from .cell_problems import EffectiveTensors, compute_effective_tensors
from .expr import VectorExpr, evaluate, parse
from .geometry import GridSpec, ObstacleShape, build_perforated_grid, build_unit_cell_grid
from .harness import SweepConfig, SweepReport, run_sweep
from .limit import darcy_solve, run_effective_director
from .linalg import SolveConfig, cg_solve, stokes_saddle_solve
from .perforated import SimConfig, run_simulation

__version__ = "0.1.0"

__all__ = [
    "EffectiveTensors", "GridSpec", "ObstacleShape", "SimConfig", "SolveConfig", "SweepConfig",
    "SweepReport", "VectorExpr", "build_perforated_grid", "build_unit_cell_grid", "cg_solve",
    "compute_effective_tensors", "darcy_solve", "evaluate", "parse", "run_effective_director",
    "run_simulation", "run_sweep", "stokes_saddle_solve",
]
