"""Deterministic micro-world engine, story/QA benchmark generator, breakpoint
annotator, evaluation metrics, and interactive annotation session service."""

__version__ = "0.1.0"

from .world import (  # noqa: F401
    Action,
    At,
    Carry,
    CoMove,
    Drop,
    Give,
    Grab,
    Holds,
    Label,
    LocationFact,
    Move,
    Negation,
    ObjAt,
    PreconditionViolation,
    Proposition,
    Statement,
    World,
    WorldState,
)
from .belief import BeliefState, Contradiction, label, update_belief  # noqa: F401
from .oracle import EnumerationBound, InstanceTooLarge, enumerate_worlds  # noqa: F401
