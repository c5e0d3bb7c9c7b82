"""Unfitted (cut) P1 finite elements for distributed optimal control on level-set domains."""

from .control import ControlProblem, OptimalTriple, StepRule, errors, multilevel_optimize, optimize
from .fem import Norm, P1Space, Penalties, assemble_system
from .geometry import ElementClass, LevelSet, classify_elements, gasket, unit_circle
from .mesh import BackgroundMesh, MeshHierarchy, build_hierarchy, build_structured_mesh, refine_uniform
from .multilevel import Discretization

__version__ = "0.1.0"

__all__ = [
    "BackgroundMesh", "ControlProblem", "Discretization", "ElementClass", "LevelSet",
    "MeshHierarchy", "Norm", "OptimalTriple", "P1Space", "Penalties", "StepRule",
    "assemble_system", "build_hierarchy", "build_structured_mesh", "classify_elements", "errors",
    "gasket", "multilevel_optimize", "optimize", "refine_uniform", "unit_circle",
]
