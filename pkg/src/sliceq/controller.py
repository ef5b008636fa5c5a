"""Heterogeneous multi-queue FCFS admission controller.

One FIFO queue per slice type. After every release or arrival the controller
walks the preference vector of its current state, accepting the head of each
non-empty queue whose slice still fits, and repeats until a full pass changes
nothing or the state leaves the admissibility region. The reserve element 0
cuts the walk short: types ranked after it are never served.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .core import RegionIndex, Strategy
from .errors import InvalidInputError, ProtocolViolationError
from .tenants import KnowledgeRegime


class Disposition(Enum):
    QUEUED = "queued"
    BALKED = "balked"
    ACCEPTED_IMMEDIATELY = "accepted_immediately"
    CAP_REJECTED = "cap_rejected"


@dataclass
class PendingRequest:
    """One queued slice request with its realized lifetime and economics."""

    request_id: int
    slice_type: int  # 1-based, matching preference-vector entries
    enter_time: float
    lifetime: float
    issue_cost: float
    waiting_cost_rate: float
    profit_rate: float
    regime: KnowledgeRegime | None = None
    entry_queue_length: int = 0
    # engine bookkeeping: invalidates stale renege-deadline events
    deadline_token: int = field(default=0, repr=False)
    done: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.lifetime <= 0:
            raise InvalidInputError("lifetime must be positive")
        if self.enter_time < 0:
            raise InvalidInputError("enter_time must be non-negative")


@dataclass
class ControllerState:
    """Mutable controller state: active-slice vector plus the request queues.

    Owned by a single simulation replication; the region index provides O(1)
    state-transition lookups.
    """

    region: RegionIndex
    state_index: int = 0
    queues: list[deque] = field(default_factory=list)
    queue_cap: int | None = None

    def __post_init__(self):
        n = len(self.region.feasible[0])
        if not self.queues:
            self.queues = [deque() for _ in range(n)]
        if self.queue_cap is not None and self.queue_cap < 1:
            raise InvalidInputError("queue cap must be positive when set")

    @property
    def state(self) -> tuple[int, ...]:
        return self.region.state(self.state_index)

    def queue_lengths(self) -> list[int]:
        return [len(q) for q in self.queues]


def serve_queues(ctrl: ControllerState, strategy: Strategy) -> list[PendingRequest]:
    """Serve the queues to quiescence and return the accepted requests.

    Each pass reads the preference column of the state at pass start; within
    the pass, feasibility is checked against the live state after every
    acceptance. The pass walk stops at the reserve element. Passes repeat
    until nothing changes or the state leaves the admissibility region.
    """
    region = ctrl.region
    accepted: list[PendingRequest] = []
    while region.is_admissible_index(ctrl.state_index):
        column = strategy.column(ctrl.state_index)
        changed = False
        for pref in column:
            if pref == 0:
                break
            queue = ctrl.queues[pref - 1]
            if not queue:
                continue
            target = region.next_feasible[ctrl.state_index][pref - 1]
            if target < 0:
                continue
            req = queue.popleft()
            req.done = True
            ctrl.state_index = target
            accepted.append(req)
            changed = True
        if not changed:
            break
    return accepted


def on_release(ctrl: ControllerState, strategy: Strategy,
               slice_type: int) -> list[PendingRequest]:
    """Release one active slice of the given type, then serve the queues."""
    t = slice_type - 1
    prev = ctrl.region.prev_feasible[ctrl.state_index][t]
    if prev < 0:
        raise ProtocolViolationError(
            f"no active type-{slice_type} slice to release in state {ctrl.state}"
        )
    ctrl.state_index = prev
    return serve_queues(ctrl, strategy)


def on_request(ctrl: ControllerState, strategy: Strategy, req: PendingRequest,
               join_decision=None) -> tuple[Disposition, list[PendingRequest]]:
    """Handle one arriving request.

    ``join_decision(req, queue)`` implements the tenant's balking rule; when
    omitted the tenant always joins. A request admitted within the same event
    (zero waiting time) is reported as accepted immediately.
    """
    t = req.slice_type - 1
    if t < 0 or t >= len(ctrl.queues):
        raise InvalidInputError(f"slice type {req.slice_type} out of range")
    queue = ctrl.queues[t]
    if join_decision is not None and not join_decision(req, queue):
        return Disposition.BALKED, []
    if ctrl.queue_cap is not None and len(queue) >= ctrl.queue_cap:
        return Disposition.CAP_REJECTED, []
    req.entry_queue_length = len(queue) + 1
    queue.append(req)
    accepted = serve_queues(ctrl, strategy)
    if any(a is req for a in accepted):
        return Disposition.ACCEPTED_IMMEDIATELY, accepted
    return Disposition.QUEUED, accepted
