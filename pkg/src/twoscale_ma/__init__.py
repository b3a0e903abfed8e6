"""Two-scale wide-stencil solver for det(D^2u - A(x, Du)) = f on convex 2-D domains."""
from .directions import build_direction_net, build_frame_set, nearest_direction
from .errors import TwoScaleError
from .expr import Expression, parse_expression
from .fe_field import EpsilonParams, NodalField, evaluate, extend_to_domain, interpolate
from .harness import load_config, manufactured_f, run_convergence, run_single
from .mesh import Disc, Polygon, UnitSquare, build_disc_mesh, build_polygon_mesh, build_square_mesh
from .operator import CostModel, DiscreteOperator, apply_T, is_discretely_Q_convex
from .solver import PerronSolver, SolveParams, SolveReport, make_frames, solve

__all__ = [
    "CostModel", "Disc", "DiscreteOperator", "EpsilonParams", "Expression", "NodalField",
    "PerronSolver", "Polygon", "SolveParams", "SolveReport", "TwoScaleError", "UnitSquare",
    "apply_T", "build_direction_net", "build_disc_mesh", "build_frame_set",
    "build_polygon_mesh", "build_square_mesh", "evaluate", "extend_to_domain",
    "interpolate", "is_discretely_Q_convex", "load_config", "make_frames",
    "manufactured_f", "nearest_direction", "parse_expression", "run_convergence",
    "run_single", "solve",
]
