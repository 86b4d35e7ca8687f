"""Numerical experiments on approximate flows and their shadowing orbits.

Modules
-------
spaces, fields, flow   state spaces, vector fields and the flow integrator
ubconst                uniform-bound constants Q1..Q4 and the modulus g1
repar                  piecewise-linear time changes
methods, defect        the constructed methods and their defect
frames, linsys         orbit frames and bounded solutions of linear systems
replay                 shadow search and the replay identity
config, cli            experiment configuration and command-line driver
"""

from .flow import FlowEngine, FlowError
from .fields import RestPointError, VectorFieldSpec, builtin_field, load_field
from .methods import MethodConfig, MethodError, build_method
from .repar import Reparam, compose, rep_membership, rep_random
from .spaces import ChartError, Euclidean, FlatTorus, Space

__version__ = "0.1.0"

__all__ = [
    "ChartError", "Euclidean", "FlatTorus", "FlowEngine", "FlowError", "MethodConfig",
    "MethodError", "Reparam", "RestPointError", "Space", "VectorFieldSpec", "build_method",
    "builtin_field", "compose", "load_field", "rep_membership", "rep_random",
]
