import math
import pathlib

import pytest

import bgeo

DATA = pathlib.Path(__file__).resolve().parents[2] / "data"


def sphere(P):
    return {"schema": bgeo.SCHEMA, "topology": "sphere", "P": P, "V": "1"}


def test_sphere_invariants():
    inv = bgeo.invariants(sphere("h"))
    assert inv["n"] == 1
    assert abs(inv["periods"][0] - 2 * math.pi) < 1e-6
    assert abs(inv["volume"]) < 1e-6
    assert inv["schema"] == "bgeo/1"


def test_asymmetric_volume():
    inv = bgeo.invariants(sphere("h*(2 + h)/2"))
    assert abs(inv["volume"] - 2 * math.pi * math.log(3)) < 1e-4


def test_classify_witness():
    v = bgeo.classify(sphere("h"), sphere("2*h"))
    assert not v["equivalent"]
    assert v["witness"].startswith("period")


def test_cohomology():
    assert list(bgeo.surface_poisson_cohomology(1, 2)) == [1, 4, 3]
    assert bgeo.poisson_betti([1, 2, 1], [[1, 1], [1, 1]]) == [1, 4, 3]
    assert not bgeo.witness([1, 4, 6, 4, 1], [[1, 0, 0, 1]])["consistent"]
    with pytest.raises(ValueError):
        bgeo.b_betti([1, 0], [[1, 1, 1]])


def test_normalize_and_parse_error():
    assert bgeo.normalize("sin(x)^2 + cos(x)^2", ["x"]) == "1"
    with pytest.raises(ValueError):
        bgeo.normalize("x +", ["x"])


def test_darboux_from_file():
    r = bgeo.darboux((DATA / "darboux_plane.json").read_text())
    assert r["symbolic_identity"]
    assert r["max_residual"] < 1e-9


def test_moser_small():
    r = bgeo.moser_relative((DATA / "plane_w0.json").read_text(), (DATA / "plane_w1.json").read_text(), grid=16, steps=32)
    assert r["max_residual"] < 1e-5


def test_extension():
    z = (DATA / "zdata_t3.json").read_text()
    assert bgeo.defining_checks(z, grid=12)["all_pass"]
    m = bgeo.extend(z, eps=1.0)
    assert m["kind"] == "collar"
