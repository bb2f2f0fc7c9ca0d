"""Average process running time over a DAG or a task ordering.

The metric charges each task its cost per input token: the expected running
time is the sum over vertices of ``cost * input_rate``, where the input rate
is the product of the selectivities on the way to the vertex (generalized to
DAGs via token-rate propagation).
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

from .dag import TokenFlowDag, token_rates, validate_dag

if TYPE_CHECKING:
    from .optimize import OrderingInstance

__all__ = ["evaluate_plan_cost", "evaluate_ordering_cost"]


def evaluate_plan_cost(dag: TokenFlowDag) -> float:
    """Expected running time of the plan encoded by ``dag``."""
    report = validate_dag(dag)
    if report:
        raise ValueError("cannot evaluate an invalid DAG: " + "; ".join(report))
    rates = token_rates(dag)
    return sum(vertex.cost * rates[vertex.id] for vertex in dag.vertices)


def evaluate_ordering_cost(instance: "OrderingInstance", order: Sequence[int]) -> float:
    """Chain metric for ``order``: sum of cost times prefix selectivity.

    ``order`` must be a permutation of ``range(len(instance.task_ids))``.
    """
    n = len(instance.task_ids)
    if sorted(order) != list(range(n)):
        raise ValueError(f"order {tuple(order)} is not a permutation of 0..{n - 1}")
    costs = instance.costs
    sels = instance.selectivities
    total = 0.0
    rate = 1.0
    for task in order:
        total += rate * costs[task]
        rate *= sels[task]
    return total
