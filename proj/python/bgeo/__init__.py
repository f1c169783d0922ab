"""b-symplectic geometry toolkit: Python front end to the C++ core."""

import json

from . import _bgeo
from ._bgeo import (
    CohomologyError,
    ExtensionError,
    InputError,
    NormalFormError,
    ParseError,
    SCHEMA,
    SurfaceError,
    b_betti,
    normalize,
    poisson_betti,
    set_seed,
    surface_poisson_cohomology,
)

__all__ = [
    "SCHEMA",
    "CohomologyError",
    "ExtensionError",
    "InputError",
    "NormalFormError",
    "ParseError",
    "SurfaceError",
    "b_betti",
    "classify",
    "darboux",
    "defining_checks",
    "extend",
    "invariants",
    "moser_relative",
    "normalize",
    "poisson_betti",
    "set_seed",
    "surface_poisson_cohomology",
    "witness",
]


def _text(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def invariants(surface, grid=64):
    return json.loads(_bgeo.invariants(_text(surface), grid))


def classify(a, b, tol=1e-4):
    return json.loads(_bgeo.classify(_text(a), _text(b), tol))


def darboux(form, grid=64):
    return json.loads(_bgeo.darboux(_text(form), grid))


def moser_relative(w0, w1, grid=64, steps=256):
    return json.loads(_bgeo.moser_relative(_text(w0), _text(w1), grid, steps))


def defining_checks(zdata, grid=32):
    return json.loads(_bgeo.defining_checks(_text(zdata), grid))


def extend(zdata, eps=1.0, sine=""):
    return json.loads(_bgeo.extend(_text(zdata), eps, sine))


def witness(betti_m, components):
    return json.loads(_bgeo.witness(list(betti_m), [list(c) for c in components]))
