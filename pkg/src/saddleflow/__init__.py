"""Saddle-point and projected saddle-point dynamics for nonsmooth convex programs."""
from . import kernels
from .errors import SaddleflowError
from .problem import (
    AbsValue, AffineHalfspace, ConvexProgram, LinearCombination, PiecewiseQuadratic,
    Quadratic, Quartic, SmoothConvex, SparseMatrix, UpperBound, example1, example2,
)
from .lagrangian import LagrangianParams, PrimalDualState, ReferenceSaddle
from .dynamics import IntegratorConfig, Trajectory, integrate, reference_saddle

__version__ = "0.1.0"
