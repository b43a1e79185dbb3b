"""Switched event-triggered, full-state-constrained formation control for vehicle platoons."""

from platoon_setm.constraint_map import ConstraintBox, ConstraintDomainError, MappedValue
from platoon_setm.graph import FormationGraph, GraphError, LaplacianView
from platoon_setm.plant import Disturbance, PlantModel, VehicleState
from platoon_setm.rbfnn import RbfNetwork
from platoon_setm.controller import ControlFrame, ControllerGains
from platoon_setm.setm import SetmConfig, SetmState
from platoon_setm.engine import LeaderProfile, RunLog, Scenario, SimulationFault, run

__version__ = "0.1.0"

__all__ = [
    "ConstraintBox",
    "ConstraintDomainError",
    "ControlFrame",
    "ControllerGains",
    "Disturbance",
    "FormationGraph",
    "GraphError",
    "LaplacianView",
    "LeaderProfile",
    "MappedValue",
    "PlantModel",
    "RbfNetwork",
    "RunLog",
    "Scenario",
    "SetmConfig",
    "SetmState",
    "SimulationFault",
    "VehicleState",
    "run",
]
