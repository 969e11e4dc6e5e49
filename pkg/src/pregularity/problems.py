"""Built-in problem registry and JSON problem files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conlag import ConstrainedProblem, ModLagSystem, build_system
from .errors import DimensionError, ParseError, ProblemDefinitionError
from .expr import parse_expression
from .mapping import MappingModel
from .optimality import EqualityProblem

EQUATIONS = "equations"
EQUALITY = "equality-constrained"
INEQUALITY = "inequality-constrained"


@dataclass(frozen=True)
class Problem:
    """A system or optimization problem with its declared root and direction.

    For inequality-constrained problems ``h`` and ``x0`` live in the
    ``(x, lambda)`` space of the modified-Lagrangian system.
    """

    name: str
    variables: tuple
    equations: tuple = ()
    objective: str | None = None
    constraints: tuple = ()  # (expr, sense) pairs
    point: tuple | None = None
    multipliers: tuple | None = None
    p: int | None = None
    h: tuple | None = None
    x0: tuple | None = None
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    description: str = ""
    aliases: tuple = ()

    @property
    def kind(self):
        if self.constraints:
            return INEQUALITY
        if self.objective is not None:
            return EQUALITY
        return EQUATIONS

    @property
    def n(self):
        return len(self.variables)

    def validate(self) -> "Problem":
        names = list(self.variables)
        if not names:
            raise ProblemDefinitionError(f"{self.name}: no variables declared")
        if len(set(names)) != len(names):
            raise ProblemDefinitionError(f"{self.name}: duplicate variable names")
        if not self.equations and self.objective is None:
            raise ProblemDefinitionError(f"{self.name}: needs equations or an objective")
        if self.constraints and self.equations:
            raise ProblemDefinitionError(f"{self.name}: mixed equality and inequality constraints are not supported")
        texts = list(self.equations) + ([self.objective] if self.objective else []) + [c[0] for c in self.constraints]
        for t in texts:
            try:
                parse_expression(t, names)
            except ParseError as exc:
                raise ProblemDefinitionError(f"{self.name}: {exc}") from exc
        for expr, sense in self.constraints:
            if sense not in ("<=", ">="):
                raise ProblemDefinitionError(f"{self.name}: constraint sense must be '<=' or '>=', got {sense!r}")
        if self.point is not None and len(self.point) != self.n:
            raise ProblemDefinitionError(f"{self.name}: point has {len(self.point)} entries, expected {self.n}")
        if self.multipliers is not None and len(self.multipliers) != len(self.constraints):
            raise ProblemDefinitionError(f"{self.name}: multipliers must match the constraint count")
        size = self.n + len(self.constraints) if self.constraints else self.n
        for label, vec in (("h", self.h), ("x0", self.x0)):
            if vec is not None and len(vec) != size:
                raise ProblemDefinitionError(f"{self.name}: {label} has {len(vec)} entries, expected {size}")
        if self.p is not None and not 1 <= self.p <= 4:
            raise ProblemDefinitionError(f"{self.name}: p must be between 1 and 4")
        return self

    # builders -------------------------------------------------------------

    def equation_model(self, p_max: int = 4) -> MappingModel:
        if not self.equations:
            raise ProblemDefinitionError(f"{self.name}: has no equations")
        return MappingModel.from_strings(list(self.equations), self.variables, p_max)

    def equality_problem(self) -> EqualityProblem:
        if self.objective is None or self.constraints:
            raise ProblemDefinitionError(f"{self.name}: not an equality-constrained optimization problem")
        return EqualityProblem.from_strings(self.objective, list(self.equations), self.variables,
                                            self.root())

    def constrained_problem(self) -> ConstrainedProblem:
        if not self.constraints:
            raise ProblemDefinitionError(f"{self.name}: has no inequality constraints")
        return ConstrainedProblem.from_strings(self.objective or "0", list(self.constraints), self.variables)

    def modlag_system(self) -> ModLagSystem:
        return build_system(self.constrained_problem())

    def root(self) -> np.ndarray:
        if self.point is None:
            raise ProblemDefinitionError(f"{self.name}: no candidate point declared")
        return np.asarray(self.point, dtype=float)

    def mapping(self):
        """``(model, point)`` for the map studied by analyze/newton/tangent."""
        if self.constraints:
            lam = self.multipliers if self.multipliers is not None else (0.0,) * len(self.constraints)
            return self.modlag_system().model, np.concatenate([self.root(), np.asarray(lam, float)])
        return self.equation_model(), self.root()

    def to_dict(self) -> dict:
        out = {"name": self.name, "variables": list(self.variables)}
        if self.equations:
            out["equations"] = list(self.equations)
        if self.objective is not None:
            out["objective"] = self.objective
        if self.constraints:
            out["constraints"] = [{"expr": e, "sense": s} for e, s in self.constraints]
        for key in ("point", "multipliers", "h", "x0"):
            val = getattr(self, key)
            if val is not None:
                out[key] = [float(v) for v in val]
        if self.p is not None:
            out["p"] = self.p
        if self.tolerances:
            out["tolerances"] = dict(self.tolerances)
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def _gradient_strings(expr: str, names) -> tuple:
    poly = parse_expression(expr, names).to_polynomial(len(names))
    return tuple(poly.diff(i).to_string(names) for i in range(len(names)))


def load_registry() -> dict:
    """The six built-in problems keyed by name."""
    x2 = ("x1", "x2")
    x3 = ("x1", "x2", "x3")
    eq20a = ("x1^2 - x2^2 + x3^2", "x1^2 - x2^2 + x3^2 + x2*x3")
    problems = [
        Problem("ex1", x2, ("x1 + x2", "x1*x2"), point=(0, 0), p=2, h=(1, -1), x0=(0.05, 0.03),
                description="x1 + x2 = 0, x1*x2 = 0; 2-regular along h with h1 != h2"),
        Problem("reddien", x2, ("x1 + x1*x2 + x2^2", "x1^2 - 2*x1 + x2^2"), point=(0, 0), p=2,
                h=(0, 1), x0=(0.03, 0.04),
                description="two equations with a one-dimensional Jacobian image at the origin"),
        Problem("phi3", x2, _gradient_strings("x1^2 + x1^2*x2 + x2^4", x2), point=(0, 0), p=3,
                h=(1, 1), x0=(0.03, 0.02),
                description="gradient system of x1^2 + x1^2*x2 + x2^4; 3-regular along (1, 1)"),
        Problem("eq20a", x3, eq20a, objective="x2^2 + x3", point=(0, 0, 0), p=2, h=(1, 1, 0),
                x0=(0.03, 0.02, 0.01), aliases=("eq20a_F",),
                description="min x2^2 + x3 subject to two quadratic equations; F' vanishes at the origin"),
        Problem("planar", x2, ("x1^2 - x2^2",), point=(0, 0), p=2, h=(1, 1), x0=(0.03, 0.02),
                description="single equation x1^2 - x2^2 = 0; solution set is two crossing lines"),
        Problem("ex_9", x2, objective="x1^2 + x2^2 + 4*x1*x2", constraints=(("x1", ">="), ("x2", ">=")),
                point=(0, 0), multipliers=(0, 0), p=2, h=(0, 0, 1, 1), x0=(0.03, 0.02, 0.04, 0.01),
                description="min x1^2 + x2^2 + 4*x1*x2 over x >= 0; both constraints weakly active"),
    ]
    return {pr.name: pr.validate() for pr in problems}


def get_builtin(name: str) -> Problem:
    reg = load_registry()
    if name in reg:
        return reg[name]
    for pr in reg.values():
        if name in pr.aliases:
            return pr
    raise ProblemDefinitionError(f"unknown built-in problem {name!r}; known: {', '.join(reg)}")


def _vector(data, key, name):
    val = data.get(key)
    if val is None:
        return None
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise ProblemDefinitionError(f"{name}: {key} must be a list of numbers")
    return tuple(float(v) for v in val)


def problem_from_dict(data: dict) -> Problem:
    if not isinstance(data, dict):
        raise ProblemDefinitionError("problem file must contain a JSON object")
    name = data.get("name", "problem")
    variables = data.get("variables")
    if not isinstance(variables, list) or not all(isinstance(v, str) for v in variables):
        raise ProblemDefinitionError(f"{name}: variables must be a list of names")
    equations = data.get("equations", [])
    if not isinstance(equations, list) or not all(isinstance(e, str) for e in equations):
        raise ProblemDefinitionError(f"{name}: equations must be a list of strings")
    constraints = []
    for c in data.get("constraints", []) or []:
        if not isinstance(c, dict) or "expr" not in c:
            raise ProblemDefinitionError(f"{name}: each constraint needs an 'expr' field")
        constraints.append((c["expr"], c.get("sense", "<=")))
    tolerances = data.get("tolerances", {}) or {}
    if not isinstance(tolerances, dict):
        raise ProblemDefinitionError(f"{name}: tolerances must be an object")
    p = data.get("p")
    if p is not None and (not isinstance(p, int) or isinstance(p, bool)):
        raise ProblemDefinitionError(f"{name}: p must be an integer")
    seed = data.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ProblemDefinitionError(f"{name}: seed must be an integer")
    pr = Problem(
        name=name, variables=tuple(variables), equations=tuple(equations),
        objective=data.get("objective"), constraints=tuple(constraints),
        point=_vector(data, "point", name), multipliers=_vector(data, "multipliers", name),
        p=p, h=_vector(data, "h", name), x0=_vector(data, "x0", name),
        tolerances=dict(tolerances), seed=seed,
    )
    return pr.validate()


def load_problem_file(path) -> Problem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemDefinitionError(f"cannot read problem file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemDefinitionError(f"malformed problem file {path}: {exc}") from exc
    return problem_from_dict(data)
