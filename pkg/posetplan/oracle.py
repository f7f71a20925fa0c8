"""Exhaustive reference solvers for small instances."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from .errors import InfeasibleSchedule, InstanceTooLarge
from .model import Coalition, Scenario
from .planner import PlanningContext, Schedule, SearchNode, _group_satisfied, _makespan, earliest_starts
from .poset import Poset


logger = logging.getLogger(__name__)

MAX_AGENTS = 3
MAX_SUBTASKS = 5
MAX_ARITY = 3


@dataclass
class ExactInstance:
    poset: Poset
    scenario: Scenario
    ready_times: Dict[str, float] = field(default_factory=dict)
    release_times: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.scenario.agents) > MAX_AGENTS:
            raise InstanceTooLarge(f"{len(self.scenario.agents)} agents exceed the cap of {MAX_AGENTS}")
        if len(self.poset.subtasks) > MAX_SUBTASKS:
            raise InstanceTooLarge(f"{len(self.poset.subtasks)} subtasks exceed the cap of {MAX_SUBTASKS}")
        if any(len(g) > MAX_ARITY for g in self.poset.opposed):
            raise InstanceTooLarge(f"Opposed sets larger than {MAX_ARITY} are not supported")

    def context(self) -> PlanningContext:
        return PlanningContext(self.poset, self.scenario,
                               ready_times=self.ready_times, release_times=self.release_times)

    @property
    def horizon(self) -> float:
        """Bound above every feasible makespan's optimum: serve everything back to back."""
        ctx = self.context()
        finite = [
            ctx.travel(a, r1, r2)
            for a in ctx.agents
            for r1 in self.scenario.workspace.regions
            for r2 in self.scenario.workspace.regions
            if not math.isinf(ctx.travel(a, r1, r2))
        ]
        longest = max(finite, default=0.0)
        return (max(list(ctx.ready.values()) + list(ctx.release.values()) + [0.0])
                + sum(ctx.duration.values()) + longest * (len(ctx.indices) + 1))

    def to_dict(self) -> Dict:
        return {
            'scenario': self.scenario.to_dict(),
            'poset': self.poset.to_dict(),
            'ready_times': dict(self.ready_times),
            'release_times': {str(k): v for k, v in self.release_times.items()},
        }


def exact_schedule(ctx: PlanningContext, sequences: Mapping[str, Sequence[int]],
                   coalition_of: Mapping[int, Coalition]) -> Schedule:
    """Best schedule of a complete assignment over every opposed-set resolution.

    Every combination of one ordered pair per opposed set is tried; the
    earliest starts of each combination are optimal for it.

    Raises:
        InfeasibleSchedule: When no combination is feasible
    """
    groups = [g for g in ctx.opposed]
    choices = [list(itertools.permutations(g, 2)) for g in groups]
    best_starts, best_makespan = None, math.inf
    for pairs in itertools.product(*choices):
        try:
            starts = earliest_starts(ctx, sequences, pairs)
        except InfeasibleSchedule:
            continue
        makespan = _makespan(ctx, starts)
        if makespan < best_makespan - 1e-9:
            best_starts, best_makespan = starts, makespan
    if best_starts is None:
        raise InfeasibleSchedule("Assignment has no feasible schedule")

    resolution = {}
    for group in groups:
        for a, b in itertools.permutations(group, 2):
            if _group_satisfied((a, b), best_starts, ctx.duration):
                resolution[frozenset(group)] = (a, b)
                break
    return Schedule(
        coalition_of=dict(coalition_of),
        starts=best_starts,
        durations={i: ctx.duration[i] for i in best_starts},
        regions={i: ctx.region[i] for i in best_starts},
        sequences={a: tuple(s) for a, s in sequences.items()},
        makespan=best_makespan,
        opposed_resolution=resolution,
        poset_id=ctx.poset.id,
    )


def _sequence_options(prefix: Tuple[int, ...], tail: List[int]) -> Iterator[Tuple[int, ...]]:
    for order in itertools.permutations(tail):
        yield prefix + order


def exact_optimum(instance: ExactInstance, node: Optional[SearchNode] = None) -> Tuple[Schedule, float]:
    """Global optimum by enumerating coalitions, agent orders and resolutions.

    Args:
        instance: Instance within the size caps
        node: Partial assignment to complete; its sequences become fixed prefixes

    Raises:
        InfeasibleSchedule: When no completion is feasible
    """
    ctx = instance.context()
    fixed = dict(node.coalition_of) if node is not None else {}
    prefixes = {a: tuple(node.sequences[a]) if node is not None else () for a in ctx.agents}
    free = [i for i in ctx.indices if i not in fixed]

    best: Optional[Schedule] = None
    for picks in itertools.product(*(ctx.coalitions[i] for i in free)):
        coalition_of = dict(fixed)
        coalition_of.update(zip(free, picks))

        tails: Dict[str, List[int]] = {a: [] for a in ctx.agents}
        for index, coalition in zip(free, picks):
            for member in coalition.members:
                tails[member].append(index)

        per_agent = [list(_sequence_options(prefixes[a], tails[a])) for a in ctx.agents]
        for combo in itertools.product(*per_agent):
            sequences = dict(zip(ctx.agents, combo))
            try:
                candidate = exact_schedule(ctx, sequences, coalition_of)
            except InfeasibleSchedule:
                continue
            if best is None or candidate.makespan < best.makespan - 1e-9:
                best = candidate

    if best is None:
        raise InfeasibleSchedule("Instance has no feasible assignment")
    logger.debug("Exact optimum %.3f over %d subtasks", best.makespan, len(ctx.indices))
    return best, best.makespan
