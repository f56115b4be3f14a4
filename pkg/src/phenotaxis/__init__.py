"""Radially symmetric chemotaxis with phenotype switching: finite volumes, stiff time stepping, diagnostics."""
from .mesh import Mesh, build_mesh, integrate
from .model import ModelSpec, State, critical_gamma, initial_state, stability_scan
from .spatial import DiscreteSystem
from .integrator import IntegratorConfig, RunOutcome, integrate as integrate_ode

__version__ = "0.1.0"
