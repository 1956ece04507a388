"""Exact offline optimum: minimum total startup cost of a schedule whose
makespan stays within the budget L.

Two routes are provided. ``optimal_exhaustive`` enumerates every assignment
and is the ground truth on tiny instances; ``optimal_bnb`` is a
branch-and-bound over job-to-machine choices that scales to desk-size
instances and must agree with the exhaustive route wherever both run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .instances import Instance

EXHAUSTIVE_GUARD = 10**7
DEFAULT_NODE_BUDGET = 10**7


class InfeasibleInstanceError(Exception):
    """No assignment of all jobs meets the makespan budget."""


class OracleTooLargeError(Exception):
    """The instance exceeds the exhaustive-search guard."""


@dataclass(frozen=True)
class OracleResult:
    optimal_cost: float
    witness: tuple[int, ...]
    witness_makespan: float
    nodes_explored: int
    exact: bool


def machine_loads(instance: Instance, assignment: tuple[int, ...] | list[int]) -> list[float]:
    loads = [0.0] * instance.m
    for j, i in enumerate(assignment):
        loads[i] += instance.jobs[j].processing_times[i]
    return loads


def feasible(instance: Instance, assignment: tuple[int, ...] | list[int]) -> bool:
    """True iff every machine load under the assignment is <= L."""
    budget = instance.makespan_budget
    return all(load <= budget for load in machine_loads(instance, assignment))


def _activation_cost(instance: Instance, assignment) -> float:
    # Canonical ascending-id summation so both oracle routes report
    # bitwise-identical costs for the same activated set.
    costs = instance.costs()
    return sum(costs[i] for i in sorted(set(assignment)))


def optimal_exhaustive(instance: Instance, guard: int = EXHAUSTIVE_GUARD) -> OracleResult:
    m, n = instance.m, instance.n
    if n == 0:
        return OracleResult(0.0, (), 0.0, 1, True)
    if m**n > guard:
        raise OracleTooLargeError(f"m^n = {m}**{n} exceeds guard {guard}")
    budget = instance.makespan_budget
    ptimes = instance.ptimes()

    best_cost = None
    best_assign: tuple[int, ...] = ()
    explored = 0
    for assign in itertools.product(range(m), repeat=n):
        explored += 1
        loads = [0.0] * m
        ok = True
        for j, i in enumerate(assign):
            loads[i] += ptimes[j][i]
            if loads[i] > budget:
                ok = False
                break
        if not ok:
            continue
        cost = _activation_cost(instance, assign)
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_assign = assign
    if best_cost is None:
        raise InfeasibleInstanceError("no assignment meets the makespan budget")
    return OracleResult(
        optimal_cost=best_cost,
        witness=best_assign,
        witness_makespan=max(machine_loads(instance, best_assign)),
        nodes_explored=explored,
        exact=True,
    )


def _greedy_incumbent(instance: Instance):
    """Cheapest-feasible-first assignment; returns (cost, assign) or None."""
    m = instance.m
    budget = instance.makespan_budget
    costs = instance.costs()
    loads = [0.0] * m
    active = [False] * m
    assign = []
    for job in instance.jobs:
        p = job.processing_times
        choices = [
            (0.0 if active[i] else costs[i], p[i], i)
            for i in range(m)
            if loads[i] + p[i] <= budget
        ]
        if not choices:
            return None
        _, _, i = min(choices)
        loads[i] += p[i]
        active[i] = True
        assign.append(i)
    return _activation_cost(instance, assign), tuple(assign)


def optimal_bnb(instance: Instance, node_budget: int = DEFAULT_NODE_BUDGET) -> OracleResult:
    """Branch-and-bound over job-to-machine choices.

    Lower bound at a node: cost of machines already activated, plus (for
    jobs that no activated machine can still take) the single cheapest extra
    activation any of them would force. Taking the max over such jobs keeps
    the bound admissible even when one new machine could serve them all.
    """
    m, n = instance.m, instance.n
    if n == 0:
        return OracleResult(0.0, (), 0.0, 1, True)
    budget = instance.makespan_budget
    costs = instance.costs()
    ptimes = instance.ptimes()

    for j in range(n):
        if min(ptimes[j]) > budget:
            raise InfeasibleInstanceError(f"job {j} does not fit on any machine")

    incumbent = _greedy_incumbent(instance)
    best_cost = incumbent[0] if incumbent else None
    best_assign = incumbent[1] if incumbent else None

    loads = [0.0] * m
    active = [False] * m
    assign: list[int] = []
    state = {"nodes": 0, "exhausted": False, "best_cost": best_cost, "best_assign": best_assign}

    def lower_bound(t: int, cost: float):
        extra = 0.0
        for j in range(t, n):
            p = ptimes[j]
            if any(active[i] and loads[i] + p[i] <= budget for i in range(m)):
                continue
            fresh = [costs[i] for i in range(m) if not active[i] and p[i] <= budget]
            if not fresh:
                return None  # job j cannot be placed anywhere from here
            extra = max(extra, min(fresh))
        return cost + extra

    def visit(t: int, cost: float):
        state["nodes"] += 1
        if state["nodes"] > node_budget:
            state["exhausted"] = True
            return
        if t == n:
            if state["best_cost"] is None or cost < state["best_cost"]:
                state["best_cost"] = _activation_cost(instance, assign)
                state["best_assign"] = tuple(assign)
            return
        bound = lower_bound(t, cost)
        if bound is None:
            return
        if state["best_cost"] is not None and bound >= state["best_cost"]:
            return
        p = ptimes[t]
        order = sorted(range(m), key=lambda i: (0.0 if active[i] else costs[i], i))
        for i in order:
            if state["exhausted"]:
                return
            if loads[i] + p[i] > budget:
                continue
            was_active = active[i]
            loads[i] += p[i]
            active[i] = True
            assign.append(i)
            visit(t + 1, cost if was_active else cost + costs[i])
            assign.pop()
            active[i] = was_active
            loads[i] -= p[i]

    visit(0, 0.0)

    if state["best_cost"] is None:
        if state["exhausted"]:
            return OracleResult(float("inf"), (), float("inf"), state["nodes"], False)
        raise InfeasibleInstanceError("no assignment meets the makespan budget")
    witness = state["best_assign"]
    return OracleResult(
        optimal_cost=state["best_cost"],
        witness=witness,
        witness_makespan=max(machine_loads(instance, witness)),
        nodes_explored=state["nodes"],
        exact=not state["exhausted"],
    )
