import json

import numpy as np
import pytest

from pregularity.errors import ProblemDefinitionError
from pregularity.problems import get_builtin, load_problem_file, load_registry, problem_from_dict


def test_registry_has_six_problems():
    reg = load_registry()
    assert sorted(reg) == ["eq20a", "ex1", "ex_9", "phi3", "planar", "reddien"]


@pytest.mark.parametrize("name, h, p", [
    ("ex1", (1, -1), 2),
    ("phi3", (1, 1), 3),
    ("eq20a", (1, 1, 0), 2),
])
def test_declared_directions(name, h, p):
    pr = get_builtin(name)
    assert pr.h == h and pr.p == p
    assert not np.any(pr.root())


def test_phi3_is_the_gradient_system():
    model = get_builtin("phi3").equation_model()
    x = np.array([0.3, -0.7])
    # grad of x1^2 + x1^2 x2 + x2^4
    expected = [2 * x[0] + 2 * x[0] * x[1], x[0] ** 2 + 4 * x[1] ** 3]
    np.testing.assert_allclose(model.evaluate(x), expected, rtol=1e-15)


def test_alias():
    assert get_builtin("eq20a_F") is not None
    assert get_builtin("eq20a_F").name == "eq20a"


def test_unknown_builtin():
    with pytest.raises(ProblemDefinitionError):
        get_builtin("nope")


def test_kinds():
    reg = load_registry()
    assert reg["ex_9"].kind != reg["ex1"].kind
    assert reg["eq20a"].objective == "x2^2 + x3"


def test_dict_round_trip():
    for pr in load_registry().values():
        again = problem_from_dict(dict(pr.to_dict(), name=pr.name))
        assert again.to_dict() == pr.to_dict()


@pytest.mark.parametrize("data", [
    [],
    {"variables": "x1"},
    {"variables": ["x1"], "equations": "x1"},
    {"variables": ["x1"], "equations": ["x1"], "point": [0, "a"]},
    {"variables": ["x1"], "equations": ["x1"], "p": 1.5},
    {"variables": ["x1"], "equations": ["x1"], "seed": True},
    {"variables": ["x1"], "constraints": [{"sense": "<="}], "objective": "x1"},
    {"variables": ["x1"], "equations": ["x1"], "tolerances": [1]},
])
def test_malformed_dicts(data):
    with pytest.raises(ProblemDefinitionError):
        problem_from_dict(data)


def test_problem_file(tmp_path):
    path = tmp_path / "line.json"
    path.write_text(json.dumps({"name": "line", "variables": ["x1", "x2"], "equations": ["x1 + 2*x2"],
                                "point": [0, 0], "x0": [0.3, 0.1], "seed": 5}))
    pr = load_problem_file(path)
    assert pr.name == "line" and pr.seed == 5 and pr.x0 == (0.3, 0.1)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ProblemDefinitionError):
        load_problem_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ProblemDefinitionError):
        load_problem_file(bad)
