"""Valence-checked molecular graphs, canonical ranking and linear notation."""

from latentmol.molgraph.canon import canonical_ranking
from latentmol.molgraph.graph import (
    BOND_ORDERS,
    ELEMENTS,
    MAX_VALENCE,
    Atom,
    Bond,
    Descriptors,
    MolGraph,
    ValidityReport,
    descriptors,
    require_valid,
    validate,
)
from latentmol.molgraph.notation import canonical_form, canonical_string, parse, to_string

__all__ = [
    "BOND_ORDERS",
    "ELEMENTS",
    "MAX_VALENCE",
    "Atom",
    "Bond",
    "Descriptors",
    "MolGraph",
    "ValidityReport",
    "canonical_form",
    "canonical_ranking",
    "canonical_string",
    "descriptors",
    "parse",
    "require_valid",
    "to_string",
    "validate",
]
