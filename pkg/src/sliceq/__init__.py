"""Multi-queue network-slice admission control toolkit.

Simulates a preference-driven admission controller over typed request
queues with impatient tenants, provides the matching single-queue
stationary analytics, embedded-chain strategy evaluation, fitting helpers
and reproducible experiment presets.
"""

__version__ = "0.1.0"

from .core import (
    Scenario,
    SliceType,
    Strategy,
    assigned_resources,
    demo_scenario,
    enumerate_regions,
    is_feasible,
    naive_strategy,
    random_strategy,
    tiny_scenario,
)
from .controller import ControllerState, Disposition, PendingRequest
from .engine import (
    RunMetrics,
    SimConfig,
    greedy_single_queue_baseline,
    isolated_queue_sim,
    run_monte_carlo,
    run_replication,
)
from .queueing import QueueParams, TruncationConfig
from .tenants import KnowledgeRegime, LifetimeDistribution

__all__ = [
    "ControllerState",
    "Disposition",
    "KnowledgeRegime",
    "LifetimeDistribution",
    "PendingRequest",
    "QueueParams",
    "RunMetrics",
    "Scenario",
    "SimConfig",
    "SliceType",
    "Strategy",
    "TruncationConfig",
    "assigned_resources",
    "demo_scenario",
    "enumerate_regions",
    "greedy_single_queue_baseline",
    "is_feasible",
    "isolated_queue_sim",
    "naive_strategy",
    "random_strategy",
    "run_monte_carlo",
    "run_replication",
    "tiny_scenario",
]
