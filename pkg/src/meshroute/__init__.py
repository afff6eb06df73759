"""Discrete-event simulator for congestion-aware routing over 802.11 mesh networks.

Quick start::

    from meshroute import builtin_scenario, simulate
    run = simulate(builtin_scenario("diamond"), "CDP", seed=1)
    print(run.summary().flow("A").mean_delay_ms)
"""

from .experiments import alpha_sweep, decision_agreement, run_compare, sweep
from .kernels import BACKEND
from .network import Network, RunResult, protocol_id, simulate
from .scenario import (
    Params,
    Scenario,
    ScenarioError,
    builtin_names,
    builtin_scenario,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Network",
    "Params",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "alpha_sweep",
    "builtin_names",
    "builtin_scenario",
    "decision_agreement",
    "load_scenario",
    "parse_scenario",
    "protocol_id",
    "run_compare",
    "serialize_scenario",
    "simulate",
    "sweep",
]
