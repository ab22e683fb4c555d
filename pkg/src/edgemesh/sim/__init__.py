"""Discrete-time multi-node simulation harness."""

from .export import export_results, report
from .harness import Event, MetricsRecord, MetricsRow, Simulation, processed_input_ratio, run_scenario
from .scenario import NodeSpec, Scenario, ScenarioInvalid, Topology, case_study, load_scenario, scenario_from_dict

__all__ = [
    "Event",
    "MetricsRecord",
    "MetricsRow",
    "NodeSpec",
    "Scenario",
    "ScenarioInvalid",
    "Simulation",
    "Topology",
    "case_study",
    "export_results",
    "load_scenario",
    "processed_input_ratio",
    "report",
    "run_scenario",
    "scenario_from_dict",
]
