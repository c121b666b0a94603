"""Scenario description, validation and the plain-text (YAML) file format.

A scenario fixes everything a run needs: the object's convex parts and
inertia, the ground, friction, gravity, step size and horizon, the initial
state, a wrench schedule and solver overrides. ``load_scenario`` and
``dump_scenario`` round-trip exactly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from . import mncp
from .geom import (ConvexBody, GeometryError, InertialParams, box_body, finite_cylinder, ground,
                   sphere_body)
from .stepper import AppliedWrench, ContactPatch, FrictionParams, RigidState

MODES = ("single", "analytic-compare", "uniqueness")
SHAPES = ("cylinder", "sphere", "box")


class ScenarioError(ValueError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"parse error{where}: {message}")
        self.line = line
        self.column = column


class ValidationError(ScenarioError):
    pass


@dataclass
class PartSpec:
    """One convex part of the object, in the object's body frame."""

    shape: str
    name: str = ""
    offset: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    radius: float = 0.0
    z_bottom: float = 0.0
    z_top: float = 0.0
    half_sizes: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def body(self) -> ConvexBody:
        if self.shape == "cylinder":
            return finite_cylinder(self.radius, self.z_bottom, self.z_top, self.offset, self.name)
        if self.shape == "sphere":
            return sphere_body(self.radius, self.offset, self.name)
        return box_body(self.half_sizes, self.offset, self.name)


@dataclass
class WrenchEntry:
    """Force and moment held over the half-open time interval [start, end)."""

    start: float
    end: float
    force: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    moment: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class Scenario:
    name: str
    mass: float
    inertia: list
    parts: list
    ground_normal: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    ground_offset: float = 0.0
    mu: float = 0.0
    e_t: float = 1.0
    e_o: float = 1.0
    e_r: float = 1.0
    gravity: float = 9.8
    h: float = 0.01
    steps: int = 0
    position: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    orientation: list = field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0])
    velocity: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    angular_velocity: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    wrenches: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    mode: str = "single"
    runs: int = 5
    seed: int = 0

    # -- derived objects -------------------------------------------------

    def params(self) -> InertialParams:
        return InertialParams(self.mass, np.array(self.inertia, dtype=float))

    def friction(self) -> FrictionParams:
        return FrictionParams(self.mu, self.e_t, self.e_o, self.e_r)

    def environment(self) -> ConvexBody:
        return ground(tuple(float(c) for c in self.ground_normal), self.ground_offset)

    def patches(self) -> list[ContactPatch]:
        env, fr = self.environment(), self.friction()
        return [ContactPatch(p.body(), env, fr) for p in self.parts]

    def initial_state(self) -> RigidState:
        return RigidState(self.position, self.orientation, self.velocity, self.angular_velocity)

    def solver_config(self) -> mncp.SolverConfig:
        return mncp.SolverConfig(**self.solver)

    def wrench_at(self, k: int) -> AppliedWrench:
        """Applied load for step k, which starts at t = k h.

        An entry is active when its interval [start, end) contains the step's
        start time; the comparison allows a 1e-9 h slack against round-off.
        """
        t = k * self.h
        slack = 1e-9 * self.h
        force, moment = np.zeros(3), np.zeros(3)
        for w in self.wrenches:
            if w.start - slack <= t < w.end - slack:
                force += w.force
                moment += w.moment
        return AppliedWrench(force=force, moment=moment, gravity=self.gravity)

    # -- checks ----------------------------------------------------------

    def validate(self) -> "Scenario":
        def need(cond, msg):
            if not cond:
                raise ValidationError(msg)

        need(self.h > 0 and math.isfinite(self.h), f"step size h must be positive, got {self.h!r}")
        need(isinstance(self.steps, int) and self.steps >= 0,
             f"horizon steps must be a non-negative integer, got {self.steps!r}")
        need(self.mu >= 0, f"friction coefficient mu must be non-negative, got {self.mu!r}")
        for name in ("e_t", "e_o", "e_r"):
            need(getattr(self, name) > 0, f"friction constant {name} must be positive")
        need(self.gravity >= 0, "gravity must be non-negative")
        need(self.mode in MODES, f"mode must be one of {MODES}, got {self.mode!r}")
        need(self.runs >= 1, "runs must be at least 1")
        for name, n in (("position", 3), ("velocity", 3), ("angular_velocity", 3),
                        ("orientation", 4), ("ground_normal", 3)):
            v = np.asarray(getattr(self, name), dtype=float)
            need(v.shape == (n,) and np.all(np.isfinite(v)), f"{name} must be {n} finite numbers")
        need(abs(np.linalg.norm(self.orientation) - 1.0) <= 1e-9,
             "initial orientation must be a unit quaternion")
        need(len(self.parts) >= 1, "the object needs at least one part")
        for p in self.parts:
            need(p.shape in SHAPES, f"part {p.name!r}: shape must be one of {SHAPES}")
            if p.shape in ("cylinder", "sphere"):
                need(p.radius > 0, f"part {p.name!r}: radius must be positive")
            if p.shape == "cylinder":
                need(p.z_top > p.z_bottom, f"part {p.name!r}: z_top must exceed z_bottom")
            if p.shape == "box":
                need(min(p.half_sizes) > 0, f"part {p.name!r}: half sizes must be positive")
        for w in self.wrenches:
            need(w.end > w.start, f"wrench interval [{w.start}, {w.end}) is empty")
            need(np.all(np.isfinite(w.force)) and np.all(np.isfinite(w.moment)),
                 "wrench entries must be finite")
        unknown = set(self.solver) - {f.name for f in fields(mncp.SolverConfig)}
        need(not unknown, f"unknown solver settings {sorted(unknown)}")
        try:
            self.params()
            self.environment()
            self.patches()
            self.solver_config()
        except (GeometryError, ValueError, TypeError) as exc:
            raise ValidationError(str(exc)) from exc
        return self


# ---------------------------------------------------------------------------
# file format

def _floats(v, n=None, where=""):
    try:
        out = [float(x) for x in v]
    except TypeError:
        raise ValidationError(f"{where} must be a list of numbers") from None
    if n is not None and len(out) != n:
        raise ValidationError(f"{where} must have {n} entries, got {len(out)}")
    return out


def _take(tree, key, default=None, required=False, where="scenario"):
    if not isinstance(tree, dict):
        raise ValidationError(f"{where} must be a mapping")
    if key not in tree:
        if required:
            raise ValidationError(f"{where}: missing required key {key!r}")
        return default
    return tree[key]


def _inertia(obj):
    if "inertia" in obj:
        I = obj["inertia"]
        if not isinstance(I, list) or len(I) != 3:
            raise ValidationError("object.inertia must be a 3x3 nested list")
        return [_floats(row, 3, "object.inertia row") for row in I]
    d = _floats(_take(obj, "inertia_diagonal", required=True, where="object"), 3,
                "object.inertia_diagonal")
    return np.diag(d).tolist()


def scenario_from_tree(tree) -> Scenario:
    if not isinstance(tree, dict):
        raise ValidationError("the scenario file must hold a mapping at top level")
    known = {"name", "object", "environment", "friction", "gravity", "step", "steps", "initial",
             "wrenches", "solver", "experiment"}
    extra = set(tree) - known
    if extra:
        raise ValidationError(f"unknown top-level keys {sorted(extra)}")
    obj = _take(tree, "object", required=True)
    parts = []
    for i, raw in enumerate(_take(obj, "parts", required=True, where="object") or []):
        where = f"object.parts[{i}]"
        shape = _take(raw, "shape", required=True, where=where)
        part = PartSpec(shape=str(shape), name=str(raw.get("name", f"part{i + 1}")),
                        offset=_floats(raw.get("offset", [0, 0, 0]), 3, where + ".offset"))
        if shape in ("cylinder", "sphere"):
            part.radius = float(_take(raw, "radius", required=True, where=where))
        if shape == "cylinder":
            part.z_bottom = float(_take(raw, "z_bottom", required=True, where=where))
            part.z_top = float(_take(raw, "z_top", required=True, where=where))
        if shape == "box":
            part.half_sizes = _floats(_take(raw, "half_sizes", required=True, where=where), 3,
                                      where + ".half_sizes")
        parts.append(part)
    env = _take(tree, "environment", default={}) or {}
    fr = _take(tree, "friction", default={}) or {}
    ini = _take(tree, "initial", default={}) or {}
    exp = _take(tree, "experiment", default={}) or {}
    wrenches = []
    for i, raw in enumerate(_take(tree, "wrenches", default=[]) or []):
        where = f"wrenches[{i}]"
        wrenches.append(WrenchEntry(
            start=float(_take(raw, "start", required=True, where=where)),
            end=float(_take(raw, "end", required=True, where=where)),
            force=_floats(raw.get("force", [0, 0, 0]), 3, where + ".force"),
            moment=_floats(raw.get("moment", [0, 0, 0]), 3, where + ".moment")))
    steps = _take(tree, "steps", default=0)
    if isinstance(steps, bool) or not isinstance(steps, int):
        raise ValidationError(f"steps must be an integer, got {steps!r}")
    try:
        sc = Scenario(
            name=str(tree.get("name", "scenario")),
            mass=float(_take(obj, "mass", required=True, where="object")),
            inertia=_inertia(obj),
            parts=parts,
            ground_normal=_floats(env.get("normal", [0, 0, 1]), 3, "environment.normal"),
            ground_offset=float(env.get("offset", 0.0)),
            mu=float(_take(fr, "mu", required=True, where="friction")),
            e_t=float(fr.get("e_t", 1.0)), e_o=float(fr.get("e_o", 1.0)),
            e_r=float(fr.get("e_r", 1.0)),
            gravity=float(tree.get("gravity", 9.8)),
            h=float(_take(tree, "step", required=True)),
            steps=steps,
            position=_floats(ini.get("position", [0, 0, 0]), 3, "initial.position"),
            orientation=_floats(ini.get("orientation", [1, 0, 0, 0]), 4, "initial.orientation"),
            velocity=_floats(ini.get("velocity", [0, 0, 0]), 3, "initial.velocity"),
            angular_velocity=_floats(ini.get("angular_velocity", [0, 0, 0]), 3,
                                     "initial.angular_velocity"),
            wrenches=wrenches,
            solver=dict(_take(tree, "solver", default={}) or {}),
            mode=str(exp.get("mode", "single")),
            runs=int(exp.get("runs", 5)),
            seed=int(exp.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from exc
    return sc.validate()


def scenario_to_tree(sc: Scenario) -> dict:
    parts = []
    for p in sc.parts:
        d = {"name": p.name, "shape": p.shape, "offset": list(p.offset)}
        if p.shape in ("cylinder", "sphere"):
            d["radius"] = p.radius
        if p.shape == "cylinder":
            d["z_bottom"], d["z_top"] = p.z_bottom, p.z_top
        if p.shape == "box":
            d["half_sizes"] = list(p.half_sizes)
        parts.append(d)
    return {
        "name": sc.name,
        "object": {"mass": sc.mass, "inertia": [list(r) for r in sc.inertia], "parts": parts},
        "environment": {"normal": list(sc.ground_normal), "offset": sc.ground_offset},
        "friction": {"mu": sc.mu, "e_t": sc.e_t, "e_o": sc.e_o, "e_r": sc.e_r},
        "gravity": sc.gravity,
        "step": sc.h,
        "steps": sc.steps,
        "initial": {"position": list(sc.position), "orientation": list(sc.orientation),
                    "velocity": list(sc.velocity), "angular_velocity": list(sc.angular_velocity)},
        "wrenches": [asdict(w) for w in sc.wrenches],
        "solver": dict(sc.solver),
        "experiment": {"mode": sc.mode, "runs": sc.runs, "seed": sc.seed},
    }


def parse_scenario(text: str) -> Scenario:
    try:
        tree = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(exc.problem or str(exc),
                         mark.line + 1 if mark else None, mark.column + 1 if mark else None) from exc
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from exc
    if tree is None:
        raise ParseError("the file is empty", 1, 1)
    return scenario_from_tree(tree)


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text: {exc}") from exc
    return parse_scenario(text)


def dump_scenario(sc: Scenario) -> str:
    # repr-exact floats survive the round trip through the YAML float syntax
    return yaml.safe_dump(scenario_to_tree(sc), sort_keys=False, default_flow_style=None)


def save_scenario(sc: Scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scenario(sc))


def bundled(name: str) -> str:
    """Path of a scenario file shipped with the package."""
    from importlib import resources
    return str(resources.files("patchsim") / "scenarios" / f"{name}.yaml")
