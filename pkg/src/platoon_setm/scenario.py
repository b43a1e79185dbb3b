"""Scenario files: YAML documents validated into :class:`Scenario` objects.

Vehicles are numbered from 1 in files and reports and from 0 in code.
Every rejected document yields at least one :class:`Diagnostic` carrying a
rule identifier; see ``docs/scenario_schema.md`` for the full list.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from platoon_setm.constraint_map import ConstraintBox
from platoon_setm.controller import ControllerGains, k2_floor
from platoon_setm.engine import InfeasibleScenario, LeaderProfile, RbfConfig, Scenario
from platoon_setm.graph import FormationGraph, is_connected
from platoon_setm.plant import Disturbance, PlantModel, VehicleState
from platoon_setm.setm import SetmConfig

SCHEMA_VERSION = 1
SHIPPED = ("square_platoon",)


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    path: str
    message: str
    line: int | None = None
    column: int | None = None

    def __str__(self):
        where = f" (line {self.line}, column {self.column})" if self.line is not None else ""
        loc = f"{self.path}: " if self.path else ""
        return f"[{self.rule}] {loc}{self.message}{where}"


class ScenarioError(ValueError):
    """Raised with the full diagnostic list when a document does not validate."""

    def __init__(self, diagnostics: list[Diagnostic], parse: bool = False):
        self.diagnostics = diagnostics
        self.parse = parse
        super().__init__("\n".join(str(d) for d in diagnostics))


# ---------------------------------------------------------------- schema

_NUM = "number"
_INT = "integer"
_BOOL = "boolean"
_STR = "string"
_NULLABLE_NUM = "number-or-null"
_NULLABLE_INT = "integer-or-null"


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


_CHECK: dict[str, Callable[[Any], bool]] = {
    _NUM: _is_number,
    _INT: lambda x: isinstance(x, int) and not isinstance(x, bool),
    _BOOL: lambda x: isinstance(x, bool),
    _STR: lambda x: isinstance(x, str),
    _NULLABLE_NUM: lambda x: x is None or _is_number(x),
    _NULLABLE_INT: lambda x: x is None or (isinstance(x, int) and not isinstance(x, bool)),
}


def _vec(length=None, kind=_NUM):
    return ("list", kind, length)


_BOX = {"min": (True, _NUM), "max": (True, _NUM), "margin": (False, _NUM)}

SCHEMA = {
    "schema_version": (True, _INT),
    "name": (False, _STR),
    "description": (False, _STR),
    "simulation": (True, {"duration_s": (True, _NUM), "step_s": (True, _NUM)}),
    "graph": (True, {
        "adjacency": (True, ("list", _vec(), None)),
        "desired_offsets_m": (True, ("list", _vec(2), None)),
    }),
    "leader": (True, {
        "vehicle": (True, _INT),
        "mode": (False, _STR),
        "profile": (True, {"times_s": (True, _vec()), "speeds_mps": (True, _vec())}),
    }),
    "constraints": (True, {
        "spacing_m": (True, _BOX),
        "velocity_lon_mps": (True, _BOX),
        "velocity_lat_mps": (True, _BOX),
    }),
    "controller": (True, {
        "k1": (True, _NUM),
        "k2": (True, _NUM),
        "spacing_weighted": (False, _BOOL),
    }),
    "setm": (True, {"delta1": (True, _NUM), "delta2": (True, _NUM), "epsilon": (True, _NUM)}),
    "rbf": (True, {
        "centers_per_axis": (True, _INT),
        "width": (False, _NULLABLE_NUM),
        "adapt_gain": (True, _NUM),
        "leakage": (True, _NUM),
    }),
    "vehicles": (True, ("list", {
        "mass_kg": (True, _NUM),
        "drag_coeff": (False, _NUM),
        "roll_coeff": (False, _NUM),
        "predecessor": (False, _NULLABLE_INT),
        "initial": (True, {"position_m": (True, _vec(2)), "velocity_mps": (True, _vec(2))}),
        "disturbance": (False, {
            "amplitude_n": (True, _vec(2)),
            "frequency_radps": (False, _NUM),
            "phase_rad": (False, _vec(2)),
        }),
        "gains": (False, {"k1": (False, _NUM), "k2": (False, _NUM)}),
    }, None)),
}


def _check_schema(node, shape, path: str, out: list[Diagnostic]):
    if isinstance(shape, dict):
        if not isinstance(node, dict):
            out.append(Diagnostic("schema.type", path, "expected a mapping"))
            return
        for key in node:
            if key not in shape:
                out.append(Diagnostic("schema.unknown-key", f"{path}.{key}".lstrip("."), f"unknown key {key!r}"))
        for key, (required, sub) in shape.items():
            sub_path = f"{path}.{key}".lstrip(".")
            if key not in node:
                if required:
                    out.append(Diagnostic("schema.missing-key", sub_path, "required key is missing"))
                continue
            _check_schema(node[key], sub, sub_path, out)
    elif isinstance(shape, tuple) and shape[0] == "list":
        _, item, length = shape
        if not isinstance(node, list):
            out.append(Diagnostic("schema.type", path, "expected a list"))
            return
        if length is not None and len(node) != length:
            out.append(Diagnostic("schema.type", path, f"expected {length} entries, got {len(node)}"))
        for i, x in enumerate(node):
            _check_schema(x, item, f"{path}[{i}]", out)
    else:
        if not _CHECK[shape](node):
            out.append(Diagnostic("schema.type", path, f"expected {shape}, got {type(node).__name__}"))
        elif shape in (_NUM, _NULLABLE_NUM) and node is not None and not math.isfinite(node):
            out.append(Diagnostic("schema.type", path, "value must be finite"))


# ---------------------------------------------------------------- semantics

def _semantic_checks(doc: dict, out: list[Diagnostic]):
    sim = doc["simulation"]
    if not sim["step_s"] > 0:
        out.append(Diagnostic("simulation.step-positive", "simulation.step_s", "step must be positive"))
    elif not sim["duration_s"] >= sim["step_s"]:
        out.append(Diagnostic("simulation.duration", "simulation.duration_s", "duration shorter than one step"))
    elif abs(sim["duration_s"] / sim["step_s"] - round(sim["duration_s"] / sim["step_s"])) > 1e-6:
        out.append(Diagnostic("simulation.duration", "simulation.duration_s",
                              "duration must be an integer number of steps"))

    vehicles = doc["vehicles"]
    n = len(vehicles)
    adj = doc["graph"]["adjacency"]
    offsets = doc["graph"]["desired_offsets_m"]
    if n < 2:
        out.append(Diagnostic("vehicles.count", "vehicles", "need at least two vehicles"))
    if len(adj) != n or any(len(row) != n for row in adj):
        out.append(Diagnostic("graph.shape", "graph.adjacency", f"adjacency must be {n} x {n}"))
    else:
        a = np.array(adj, dtype=float)
        if np.any(a < 0):
            out.append(Diagnostic("graph.nonnegative", "graph.adjacency", "weights must be nonnegative"))
        if not np.array_equal(a, a.T):
            out.append(Diagnostic("graph.symmetric", "graph.adjacency", "adjacency must be symmetric"))
        if np.any(np.diag(a) != 0):
            out.append(Diagnostic("graph.no-self-loops", "graph.adjacency", "diagonal must be zero"))
        if not is_connected(a):
            out.append(Diagnostic("graph.connected", "graph.adjacency", "communication graph is not connected"))
    if len(offsets) != n:
        out.append(Diagnostic("graph.shape", "graph.desired_offsets_m", f"need {n} offsets, got {len(offsets)}"))

    leader = doc["leader"]
    if not 1 <= leader["vehicle"] <= n:
        out.append(Diagnostic("leader.vehicle", "leader.vehicle", f"must be a vehicle id in 1..{n}"))
    if leader.get("mode", "exogenous") not in ("exogenous", "tracking"):
        out.append(Diagnostic("leader.mode", "leader.mode", "mode must be 'exogenous' or 'tracking'"))
    prof = leader["profile"]
    if len(prof["times_s"]) != len(prof["speeds_mps"]) or not prof["times_s"]:
        out.append(Diagnostic("leader.profile", "leader.profile", "times and speeds must have equal nonzero length"))
    elif any(b <= a for a, b in zip(prof["times_s"], prof["times_s"][1:])):
        out.append(Diagnostic("leader.profile", "leader.profile.times_s", "times must be strictly increasing"))

    for key in ("spacing_m", "velocity_lon_mps", "velocity_lat_mps"):
        box = doc["constraints"][key]
        margin = box.get("margin", 0.0)
        if margin < 0:
            out.append(Diagnostic("constraints.margin", f"constraints.{key}.margin", "margin must be nonnegative"))
        if not box["min"] + 2 * margin < box["max"]:
            out.append(Diagnostic("constraints.box-nonempty", f"constraints.{key}",
                                  "need min + 2*margin < max"))

    setm = doc["setm"]
    d1, d2 = setm["delta1"], setm["delta2"]
    if not (0 < d1 < d2 < 1):
        out.append(Diagnostic("setm.delta-order", "setm", f"need 0 < delta1 < delta2 < 1, got {d1}, {d2}"))
    if not setm["epsilon"] > 0:
        out.append(Diagnostic("setm.epsilon-positive", "setm.epsilon", "epsilon must be positive"))
    sigma = max(d1, d2)

    for i, veh in enumerate(vehicles):
        g = {"k1": doc["controller"]["k1"], "k2": doc["controller"]["k2"], **veh.get("gains", {})}
        path = f"vehicles[{i}].gains" if "gains" in veh else "controller"
        if not g["k1"] > 0:
            out.append(Diagnostic("gains.k1-positive", path, f"vehicle {i + 1}: k1 = {g['k1']} must be positive"))
        if not g["k2"] > k2_floor(sigma):
            out.append(Diagnostic("gains.k2-theorem1", path,
                                  f"vehicle {i + 1}: k2 = {g['k2']} must exceed 1/2 + sigma/2 = {k2_floor(sigma):g} "
                                  f"with sigma = max(delta1, delta2) = {sigma:g}"))
        if not veh["mass_kg"] > 0:
            out.append(Diagnostic("plant.mass-positive", f"vehicles[{i}].mass_kg", "mass must be positive"))
        for c in ("drag_coeff", "roll_coeff"):
            if veh.get(c, 0.0) < 0:
                out.append(Diagnostic("plant.resistance-nonnegative", f"vehicles[{i}].{c}", "must be nonnegative"))
        dist = veh.get("disturbance")
        if dist is not None and any(a < 0 for a in dist["amplitude_n"]):
            out.append(Diagnostic("plant.disturbance", f"vehicles[{i}].disturbance.amplitude_n",
                                  "amplitudes must be nonnegative"))
        pred = veh.get("predecessor")
        if pred is not None and not (1 <= pred <= n and pred != i + 1):
            out.append(Diagnostic("vehicles.predecessor", f"vehicles[{i}].predecessor",
                                  f"predecessor must be another vehicle id in 1..{n}"))

    rbf = doc["rbf"]
    if rbf["centers_per_axis"] < 2:
        out.append(Diagnostic("rbf.centers", "rbf.centers_per_axis", "need at least 2 centers per axis"))
    if rbf.get("width") is not None and not rbf["width"] > 0:
        out.append(Diagnostic("rbf.width-positive", "rbf.width", "width must be positive"))
    if not rbf["adapt_gain"] > 0:
        out.append(Diagnostic("rbf.adapt-gain-positive", "rbf.adapt_gain", "adaptation gain must be positive"))
    if not rbf["leakage"] > 0:
        out.append(Diagnostic("rbf.leakage-positive", "rbf.leakage", "leakage must be positive"))
    elif sim["step_s"] > 0 and not sim["step_s"] * rbf["leakage"] < 1:
        out.append(Diagnostic("rbf.leakage-step", "rbf.leakage", "step * leakage must be below 1"))


def _feasibility_rule(message: str) -> str:
    if "velocity" in message:
        return "feasibility.initial-velocity"
    if "spacing" in message:
        return "feasibility.initial-spacing"
    if "leader profile" in message:
        return "feasibility.leader-profile"
    return "feasibility"


# ---------------------------------------------------------------- build

def build_scenario(doc: dict) -> Scenario:
    """Construct a Scenario from a document that already passed the schema and semantic checks."""
    sim = doc["simulation"]
    setm = SetmConfig(**doc["setm"])
    vehicles = doc["vehicles"]
    graph = FormationGraph(np.array(doc["graph"]["adjacency"], dtype=float),
                           np.array(doc["graph"]["desired_offsets_m"], dtype=float))
    plants, gains, states, preds = [], [], [], []
    for veh in vehicles:
        d = veh.get("disturbance")
        dist = Disturbance() if d is None else Disturbance(
            tuple(d["amplitude_n"]), d.get("frequency_radps", 1.0), tuple(d.get("phase_rad", (0.0, 0.0))))
        plants.append(PlantModel(veh["mass_kg"], veh.get("drag_coeff", 0.0), veh.get("roll_coeff", 0.0), dist))
        g = {"k1": doc["controller"]["k1"], "k2": doc["controller"]["k2"], **veh.get("gains", {})}
        gains.append(ControllerGains(g["k1"], g["k2"], setm.sigma_max))
        states.append(VehicleState(veh["initial"]["position_m"], veh["initial"]["velocity_mps"]))
        pred = veh.get("predecessor")
        preds.append(None if pred is None else pred - 1)

    def box(key):
        b = doc["constraints"][key]
        return ConstraintBox(b["min"], b["max"], b.get("margin", 0.0))

    rbf = doc["rbf"]
    return Scenario(
        duration=sim["duration_s"], step=sim["step_s"], graph=graph, plants=plants,
        spacing_box=box("spacing_m"), velocity_boxes=(box("velocity_lon_mps"), box("velocity_lat_mps")),
        gains=gains, setm=setm,
        rbf=RbfConfig(rbf["centers_per_axis"], rbf.get("width"), rbf["adapt_gain"], rbf["leakage"]),
        initial_states=states, predecessors=preds, leader=doc["leader"]["vehicle"] - 1,
        leader_profile=LeaderProfile(tuple(doc["leader"]["profile"]["times_s"]),
                                     tuple(doc["leader"]["profile"]["speeds_mps"])),
        leader_mode=doc["leader"].get("mode", "exogenous"),
        spacing_weighted=doc["controller"].get("spacing_weighted", False),
        name=doc.get("name", "scenario"),
    )


def check_document(doc) -> tuple[Scenario | None, list[Diagnostic]]:
    """Validate a parsed document.  Returns (scenario, []) or (None, diagnostics)."""
    out: list[Diagnostic] = []
    if not isinstance(doc, dict):
        return None, [Diagnostic("schema.type", "", "top level must be a mapping")]
    version = doc.get("schema_version")
    if version is not None and version != SCHEMA_VERSION:
        return None, [Diagnostic("schema.version", "schema_version",
                                 f"unsupported schema version {version!r}, expected {SCHEMA_VERSION}")]
    _check_schema(doc, SCHEMA, "", out)
    if out:
        return None, out
    _semantic_checks(doc, out)
    if out:
        return None, out
    try:
        sc = build_scenario(doc)
    except (ValueError, InfeasibleScenario) as exc:
        return None, [Diagnostic("scenario.construct", "", str(exc))]
    problems = sc.feasibility_violations()
    if problems:
        return None, [Diagnostic(_feasibility_rule(p), "vehicles", p) for p in problems]
    return sc, []


def parse_text(text: str, source: str = "<string>") -> dict:
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ScenarioError([Diagnostic("parse", source, str(exc.problem or exc), line, col)], parse=True) from exc
    except yaml.YAMLError as exc:
        raise ScenarioError([Diagnostic("parse", source, str(exc))], parse=True) from exc


def validate_document(doc) -> Scenario:
    sc, diags = check_document(doc)
    if diags:
        raise ScenarioError(diags)
    return sc


def load_document(path) -> dict:
    path = Path(path)
    return parse_text(path.read_text(encoding="utf-8"), str(path))


def load_scenario(path) -> Scenario:
    return validate_document(load_document(path))


def shipped_path(name: str = "square_platoon") -> Path:
    return Path(str(resources.files("platoon_setm") / "scenarios" / f"{name}.yaml"))


def shipped_document(name: str = "square_platoon") -> dict:
    return load_document(shipped_path(name))


def dump_document(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def scenario_to_document(sc: Scenario) -> dict:
    """Inverse of :func:`build_scenario` (per-vehicle gains are always written out)."""
    def box(b: ConstraintBox):
        return {"min": b.lower, "max": b.upper, "margin": b.margin}

    vehicles = []
    for i in range(sc.n):
        pl, g, st, pred = sc.plants[i], sc.gains[i], sc.initial_states[i], sc.predecessors[i]
        vehicles.append({
            "mass_kg": pl.mass, "drag_coeff": pl.drag_coeff, "roll_coeff": pl.roll_coeff,
            "predecessor": None if pred is None else pred + 1,
            "initial": {"position_m": st.p.tolist(), "velocity_mps": st.v.tolist()},
            "disturbance": {"amplitude_n": list(pl.disturbance.amplitude),
                            "frequency_radps": pl.disturbance.frequency,
                            "phase_rad": list(pl.disturbance.phase)},
            "gains": {"k1": g.k1, "k2": g.k2},
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "simulation": {"duration_s": sc.duration, "step_s": sc.step},
        "graph": {"adjacency": sc.graph.adjacency.tolist(),
                  "desired_offsets_m": sc.graph.desired_offsets.tolist()},
        "leader": {"vehicle": sc.leader + 1, "mode": sc.leader_mode,
                   "profile": {"times_s": list(sc.leader_profile.times),
                               "speeds_mps": list(sc.leader_profile.speeds)}},
        "constraints": {"spacing_m": box(sc.spacing_box), "velocity_lon_mps": box(sc.velocity_boxes[0]),
                        "velocity_lat_mps": box(sc.velocity_boxes[1])},
        "controller": {"k1": sc.gains[0].k1, "k2": sc.gains[0].k2, "spacing_weighted": sc.spacing_weighted},
        "setm": {"delta1": sc.setm.delta1, "delta2": sc.setm.delta2, "epsilon": sc.setm.epsilon},
        "rbf": {"centers_per_axis": sc.rbf.count, "width": sc.rbf.width,
                "adapt_gain": sc.rbf.adapt_gain, "leakage": sc.rbf.leakage},
        "vehicles": vehicles,
    }


SWEEPABLE = ("delta1", "delta2", "epsilon", "k1", "k2")


def with_parameter(doc: dict, name: str, value: float) -> dict:
    """Copy of ``doc`` with one tunable replaced; k1/k2 overrides on vehicles are replaced too."""
    if name not in SWEEPABLE:
        raise KeyError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEPABLE)}")
    out = copy.deepcopy(doc)
    if name in ("k1", "k2"):
        out["controller"][name] = value
        for veh in out.get("vehicles", []):
            if isinstance(veh.get("gains"), dict):
                veh["gains"].pop(name, None)
    else:
        out["setm"][name] = value
    return out
