"""An optimizing compiler for a functional data-parallel array language.

Programs are optimized by strategy-driven rewriting on a purely functional
IR, translated into a hybrid functional-imperative IR whose type system
enforces that every memory and address-space choice was made, and emitted as
C, OpenMP, or OpenCL source text.  A reference interpreter for both IRs
serves as the semantic oracle for the test suite.
"""

from . import nat
from .expr import alpha_equivalent, substitute
from .parser import parse, parse_expr
from .primitives import PrimitiveSignature, Registry, default_registry
from .printer import print_expr, print_typed
from .typecheck import infer

__all__ = [
    "nat",
    "alpha_equivalent",
    "substitute",
    "parse",
    "parse_expr",
    "PrimitiveSignature",
    "Registry",
    "default_registry",
    "print_expr",
    "print_typed",
    "infer",
]
