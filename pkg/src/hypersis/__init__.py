"""Mean-field SIS contagion on weighted directed hypergraphs."""

from .analysis import (
    Classification,
    DomainOfAttraction,
    RegimeReport,
    classify,
    prop1_healthy_global,
    prop2_bistability,
    prop3_endemic,
    reproduction_number,
)
from .dynamics import (
    BiVirusParams,
    GeneralParams,
    SisParams,
    Trajectory,
    find_equilibrium,
    simulate,
    step,
    step_bivirus,
    step_general,
    validate_assumptions,
)
from .hypergraph import DirectedHypergraph, Hyperedge, adjacency_tensors
from .tensor import SparseCubicalTensor, perron

__version__ = "0.1.0"

__all__ = [
    "BiVirusParams",
    "Classification",
    "DirectedHypergraph",
    "DomainOfAttraction",
    "GeneralParams",
    "Hyperedge",
    "RegimeReport",
    "SisParams",
    "SparseCubicalTensor",
    "Trajectory",
    "adjacency_tensors",
    "classify",
    "find_equilibrium",
    "perron",
    "prop1_healthy_global",
    "prop2_bistability",
    "prop3_endemic",
    "reproduction_number",
    "simulate",
    "step",
    "step_bivirus",
    "step_general",
    "validate_assumptions",
]
