"""Discrete p-energies on p.c.f. self-similar sets: traces, resistances,
the renormalization map and its eigenforms."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateFormError,
    DomainError,
    GuardError,
    PEnergyError,
    SolverError,
    StructureError,
)
from .forms import StandardForm, TraceForm, VertexSet  # noqa: E402
from .solver import SolverConfig, p_harmonic_extend, resistance, resistance_matrix  # noqa: E402
from .fractal import PcfStructure, load_structure, preset  # noqa: E402
from .renorm import eigen_solve, iterate, kz_average, renorm_step  # noqa: E402
from .criteria import EquivRelation, sabot_test, sg_closed_forms  # noqa: E402

__all__ = [
    "DegenerateFormError",
    "DomainError",
    "EquivRelation",
    "GuardError",
    "PEnergyError",
    "PcfStructure",
    "SolverConfig",
    "SolverError",
    "StandardForm",
    "StructureError",
    "TraceForm",
    "VertexSet",
    "eigen_solve",
    "iterate",
    "kz_average",
    "load_structure",
    "p_harmonic_extend",
    "preset",
    "renorm_step",
    "resistance",
    "resistance_matrix",
    "sabot_test",
    "sg_closed_forms",
]
