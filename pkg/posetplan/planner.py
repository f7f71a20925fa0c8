"""Task assignment over a poset: schedules, bounds, anytime branch and bound,
and the full planning pipeline."""

import csv
import heapq
import itertools
import json
import logging
import math
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx

from . import hoa, ltl
from .automaton import Nba, translate
from .errors import (InfeasibleForTeam, InfeasibleSchedule, MultiRegionSubtask, NoSolution,
                     UnknownBehavior)
from .model import Coalition, Scenario, coalitions_for, ground
from .poset import Poset, PosetStats, PosetWord, iter_posets, word_satisfies
from .pruning import PruneReport, prune


logger = logging.getLogger(__name__)

TOLERANCE = 1e-9
SOURCE = '__source__'
LB_MODES = ('min', 'max', 'alt')


@dataclass
class Schedule:
    """Coalitions, agent sequences and start times for every subtask."""

    coalition_of: Dict[int, Coalition]
    starts: Dict[int, float]
    durations: Dict[int, float]
    regions: Dict[int, str]
    sequences: Dict[str, Tuple[int, ...]]
    makespan: float
    opposed_resolution: Dict[FrozenSet[int], Tuple[int, int]] = field(default_factory=dict)
    poset_id: int = 0

    def finish(self, index: int) -> float:
        return self.starts[index] + self.durations[index]

    def order(self) -> List[int]:
        return sorted(self.starts, key=lambda i: (self.starts[i], i))

    def word(self) -> PosetWord:
        return PosetWord.from_starts(self.starts)

    def to_dict(self) -> Dict:
        return {
            'poset_id': self.poset_id,
            'makespan': self.makespan,
            'subtasks': [
                {
                    'id': i,
                    'region': self.regions[i],
                    'coalition': list(self.coalition_of[i].members),
                    'assignment': [list(p) for p in self.coalition_of[i].assignment],
                    'start': self.starts[i],
                    'duration': self.durations[i],
                }
                for i in self.order()
            ],
            'sequences': {agent: list(seq) for agent, seq in self.sequences.items()},
            'opposed_resolution': [
                {'set': sorted(group), 'pair': list(pair)}
                for group, pair in sorted(self.opposed_resolution.items(), key=lambda kv: sorted(kv[0]))
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Schedule':
        rows = data['subtasks']
        return cls(
            coalition_of={
                r['id']: Coalition(tuple(r['coalition']), tuple(tuple(p) for p in r.get('assignment', [])))
                for r in rows
            },
            starts={r['id']: float(r['start']) for r in rows},
            durations={r['id']: float(r['duration']) for r in rows},
            regions={r['id']: r['region'] for r in rows},
            sequences={agent: tuple(seq) for agent, seq in data.get('sequences', {}).items()},
            makespan=float(data['makespan']),
            opposed_resolution={
                frozenset(item['set']): tuple(item['pair']) for item in data.get('opposed_resolution', [])
            },
            poset_id=int(data.get('poset_id', 0)),
        )


@dataclass
class SearchNode:
    """Partial assignment: per-agent sequences plus earliest starts that ignore
    opposed sets (a lower bound on every completion's starts)."""

    sequences: Dict[str, Tuple[int, ...]]
    coalition_of: Dict[int, Coalition]
    starts: Dict[int, float]
    order: Tuple[int, ...] = ()

    @property
    def assigned(self) -> Set[int]:
        return set(self.coalition_of)


@dataclass
class Incumbent:
    schedule: Optional[Schedule] = None
    history: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        return self.schedule.makespan if self.schedule is not None else math.inf

    def update(self, schedule: Schedule, elapsed: float) -> bool:
        if schedule.makespan >= self.makespan - TOLERANCE:
            return False
        self.schedule = schedule
        self.history.append((round(elapsed, 6), schedule.makespan))
        return True


@dataclass
class BnbStats:
    expanded: int = 0
    generated: int = 0
    pruned: int = 0
    exhausted: bool = False
    elapsed: float = 0.0

    @property
    def pruned_percentage(self) -> float:
        return 100.0 * self.pruned / self.generated if self.generated else 0.0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['pruned_percentage'] = round(self.pruned_percentage, 1)
        return data


class PlanningContext:
    """Everything the search needs about one poset and one team."""

    def __init__(self, poset: Poset, scenario: Scenario, lb_mode: str = 'min',
                 ready_times: Optional[Mapping[str, float]] = None,
                 release_times: Optional[Mapping[int, float]] = None):
        """Initialize context.

        Args:
            poset: Poset whose subtasks are assigned
            scenario: Team and workspace
            lb_mode: 'min', 'max' or 'alt' lower bound
            ready_times: Earliest time each agent may leave its initial region
            release_times: Earliest start of each subtask

        Raises:
            InfeasibleForTeam: When some subtask has no capable coalition
        """
        if lb_mode not in LB_MODES:
            raise ValueError(f"Unknown lower-bound mode: {lb_mode}")
        self.poset = poset
        self.scenario = scenario
        self.lb_mode = lb_mode
        self.agents = scenario.agent_ids
        self.ready = {a: float((ready_times or {}).get(a, 0.0)) for a in self.agents}
        self.location = {a.id: a.initial_region for a in scenario.agents}
        self.indices = sorted(poset.indices)
        self.release = {i: float((release_times or {}).get(i, 0.0)) for i in self.indices}

        self.requirements = {s.index: ground(s, scenario) for s in poset.subtasks}
        self.coalitions = {i: coalitions_for(req, scenario) for i, req in self.requirements.items()}
        uncovered = [i for i in self.indices if not self.coalitions[i]]
        if uncovered:
            raise InfeasibleForTeam(f"No coalition can serve subtasks {uncovered}")

        self.duration = {i: req.duration for i, req in self.requirements.items()}
        self.region = {i: req.region for i, req in self.requirements.items()}
        self.work = {i: req.work for i, req in self.requirements.items()}
        self.preds = {i: poset.predecessors(i) for i in self.indices}
        self.opposed = sorted(tuple(sorted(g)) for g in poset.opposed)
        self.opposed_of = {i: [g for g in self.opposed if i in g] for i in self.indices}
        self.chain = {
            (a, b) for a, b in poset.leq
            if frozenset((a, b)) in poset.opposed and self.duration[b] > 0
        }

        graph = nx.DiGraph()
        graph.add_nodes_from(self.indices)
        graph.add_edges_from(poset.leq)
        self.topo = list(nx.lexicographical_topological_sort(graph))

    def travel(self, agent: str, origin: str, target: str) -> float:
        return self.scenario.travel_time(agent, origin, target)

    def root(self) -> SearchNode:
        return SearchNode({a: () for a in self.agents}, {}, {})

    def remaining(self, node: SearchNode) -> List[int]:
        return [i for i in self.indices if i not in node.coalition_of]

    def available(self, node: SearchNode) -> List[int]:
        assigned = node.coalition_of
        return [i for i in self.indices if i not in assigned and self.preds[i] <= assigned.keys()]


def _agent_state(ctx: PlanningContext, sequences: Mapping[str, Tuple[int, ...]],
                 starts: Mapping[int, float], agent: str) -> Tuple[float, str]:
    seq = sequences[agent]
    if not seq:
        return ctx.ready[agent], ctx.location[agent]
    last = seq[-1]
    return starts[last] + ctx.duration[last], ctx.region[last]


def _earliest_append(ctx: PlanningContext, sequences, starts, index: int, coalition: Coalition) -> float:
    t = ctx.release[index]
    for member in coalition.members:
        free, location = _agent_state(ctx, sequences, starts, member)
        t = max(t, free + ctx.travel(member, location, ctx.region[index]))
    for p in ctx.preds[index]:
        if p in starts:
            t = max(t, starts[p])
    return t


def _group_satisfied(group: Sequence[int], starts: Mapping[int, float],
                     durations: Mapping[int, float]) -> bool:
    return any(starts[a] + durations[a] <= starts[b] + TOLERANCE
               for a, b in itertools.permutations(group, 2))


def _delay_for_opposed(ctx: PlanningContext, starts: Mapping[int, float], index: int, t: float) -> float:
    """Delay a new subtask until every completed opposed set it closes holds."""
    while True:
        bumped = None
        for group in ctx.opposed_of[index]:
            if not all(m == index or m in starts for m in group):
                continue
            trial = {m: (t if m == index else starts[m]) for m in group}
            if _group_satisfied(group, trial, ctx.duration):
                continue
            bumped = min(starts[m] + ctx.duration[m] for m in group if m != index)
            break
        if bumped is None:
            return t
        t = max(t, bumped)


def _append(ctx: PlanningContext, node: SearchNode, index: int, coalition: Coalition,
            start: float) -> SearchNode:
    sequences = dict(node.sequences)
    for member in coalition.members:
        sequences[member] = sequences[member] + (index,)
    coalition_of = dict(node.coalition_of)
    coalition_of[index] = coalition
    starts = dict(node.starts)
    starts[index] = start
    return SearchNode(sequences, coalition_of, starts, node.order + (index,))


def expand(ctx: PlanningContext, node: SearchNode) -> List[SearchNode]:
    """Children assigning one available subtask to one of its coalitions.

    A subtask is available once all its predecessors are assigned. Children
    come in (subtask index, coalition order) order.
    """
    children = []
    for index in ctx.available(node):
        for coalition in ctx.coalitions[index]:
            start = _earliest_append(ctx, node.sequences, node.starts, index, coalition)
            children.append(_append(ctx, node, index, coalition, start))
    return children


def earliest_starts(ctx: PlanningContext, sequences: Mapping[str, Sequence[int]],
                    pairs: Sequence[Tuple[int, int]] = ()) -> Dict[int, float]:
    """Earliest start times under sequence, ordering, release and resolution constraints.

    Each constraint start(v) >= start(u) + w is an edge u->v of weight -w;
    the starts are the negated shortest distances from a source node.

    Args:
        ctx: Planning context
        sequences: Subtasks of each agent in service order
        pairs: Ordered pairs (a, b) meaning a finishes before b starts

    Raises:
        InfeasibleSchedule: When the constraints form a positive cycle
    """
    graph = nx.DiGraph()
    graph.add_node(SOURCE)
    assigned = {i for seq in sequences.values() for i in seq}

    def require(u, v, gap):
        if math.isinf(gap):
            raise InfeasibleSchedule(f"Subtask {v} is unreachable for its coalition")
        if graph.has_edge(u, v):
            graph[u][v]['weight'] = min(graph[u][v]['weight'], -gap)
        else:
            graph.add_edge(u, v, weight=-gap)

    for index in sorted(assigned):
        require(SOURCE, index, ctx.release[index])
    for agent, seq in sequences.items():
        location, prev = ctx.location[agent], None
        for index in seq:
            if prev is None:
                require(SOURCE, index, ctx.ready[agent] + ctx.travel(agent, location, ctx.region[index]))
            else:
                require(prev, index, ctx.duration[prev] + ctx.travel(agent, ctx.region[prev], ctx.region[index]))
            prev = index
    for a, b in ctx.poset.leq:
        if a in assigned and b in assigned:
            require(a, b, 0.0)
    for a, b in pairs:
        require(a, b, ctx.duration[a])

    try:
        distances = nx.single_source_bellman_ford_path_length(graph, SOURCE, weight='weight')
    except nx.NetworkXUnbounded:
        raise InfeasibleSchedule("Schedule constraints contain a positive cycle")
    return {i: max(0.0, -distances[i]) for i in assigned}


def _makespan(ctx: PlanningContext, starts: Mapping[int, float]) -> float:
    return max((s + ctx.duration[i] for i, s in starts.items()), default=0.0)


def schedule(ctx: PlanningContext, node: SearchNode) -> Schedule:
    """Minimum-makespan schedule of a node's sequences.

    Violated opposed sets are resolved lazily: each branch adds one ordered
    finish-before-start pair of the first violated set.

    Raises:
        InfeasibleSchedule: When no resolution is feasible
    """
    best: Dict[str, object] = {'makespan': math.inf, 'starts': None, 'pairs': ()}
    assigned = node.assigned
    groups = [g for g in ctx.opposed if all(m in assigned for m in g)]

    def search(pairs: Tuple[Tuple[int, int], ...]):
        try:
            starts = earliest_starts(ctx, node.sequences, pairs)
        except InfeasibleSchedule:
            return
        makespan = _makespan(ctx, starts)
        if makespan >= best['makespan'] - TOLERANCE:
            return
        violated = next((g for g in groups if not _group_satisfied(g, starts, ctx.duration)), None)
        if violated is None:
            best.update(makespan=makespan, starts=starts, pairs=pairs)
            return
        for a, b in itertools.permutations(violated, 2):
            search(pairs + ((a, b),))

    search(())
    if best['starts'] is None:
        raise InfeasibleSchedule("No opposed-set resolution yields a feasible schedule")

    starts = best['starts']
    resolution = {}
    for group in groups:
        for a, b in itertools.permutations(group, 2):
            if starts[a] + ctx.duration[a] <= starts[b] + TOLERANCE:
                resolution[frozenset(group)] = (a, b)
                break

    return Schedule(
        coalition_of=dict(node.coalition_of),
        starts=dict(starts),
        durations={i: ctx.duration[i] for i in starts},
        regions={i: ctx.region[i] for i in starts},
        sequences={a: tuple(seq) for a, seq in node.sequences.items()},
        makespan=best['makespan'],
        opposed_resolution=resolution,
        poset_id=ctx.poset.id,
    )


def upper_bound(ctx: PlanningContext, node: SearchNode) -> Schedule:
    """Greedy completion that favours the highest concurrency level.

    The concurrency level of a partial assignment is its total work
    sum(D * N) over its makespan. Ties go to the lowest subtask index, then
    the earliest coalition.
    """
    current = ctx.root()
    for index in node.order:
        coalition = node.coalition_of[index]
        start = _earliest_append(ctx, current.sequences, current.starts, index, coalition)
        start = _delay_for_opposed(ctx, current.starts, index, start)
        current = _append(ctx, current, index, coalition, start)

    work = sum(ctx.work[i] for i in current.coalition_of)
    makespan = _makespan(ctx, current.starts)
    while len(current.coalition_of) < len(ctx.indices):
        best = None
        for index in ctx.available(current):
            for coalition in ctx.coalitions[index]:
                start = _earliest_append(ctx, current.sequences, current.starts, index, coalition)
                start = _delay_for_opposed(ctx, current.starts, index, start)
                span = max(makespan, start + ctx.duration[index])
                total = work + ctx.work[index]
                eta = total / span if span > 0 else math.inf
                if best is None or eta > best[0] + 1e-12:
                    best = (eta, index, coalition, start)
        if best is None:
            raise InfeasibleSchedule("No subtask can be appended")
        _, index, coalition, start = best
        current = _append(ctx, current, index, coalition, start)
        work += ctx.work[index]
        makespan = max(makespan, start + ctx.duration[index])

    return schedule(ctx, current)


def _committed(ctx: PlanningContext, node: SearchNode) -> float:
    return _makespan(ctx, node.starts)


def _earliest_remaining(ctx: PlanningContext, node: SearchNode) -> Dict[int, float]:
    """Lower bounds on the start of every unassigned subtask."""
    free = {a: _agent_state(ctx, node.sequences, node.starts, a) for a in ctx.agents}
    est: Dict[int, float] = {}
    for index in ctx.topo:
        if index in node.coalition_of:
            continue
        region = ctx.region[index]
        t = ctx.release[index]
        t = max(t, min(
            max(free[m][0] + ctx.travel(m, free[m][1], region) for m in c.members)
            for c in ctx.coalitions[index]
        ))
        for p in ctx.preds[index]:
            t = max(t, node.starts[p] if p in node.starts else est[p])
            if (p, index) in ctx.chain:
                t = max(t, (node.starts[p] if p in node.starts else est[p]) + ctx.duration[p])
        est[index] = t
    return est


def _busy_until(ctx: PlanningContext, node: SearchNode) -> float:
    total = 0.0
    for agent in ctx.agents:
        if node.sequences[agent]:
            total += _agent_state(ctx, node.sequences, node.starts, agent)[0]
    return total


def lower_bound(ctx: PlanningContext, node: SearchNode, mode: Optional[str] = None) -> float:
    """Admissible estimate of the best makespan among the node's completions.

    The chain bound is the latest earliest finish of an unassigned subtask
    along precedence chains. The load bound spreads the busy time of the
    agents plus the remaining work sum(D * N) over the team. Both already
    count the committed part of the node, so the result is
    max(committed, min(chain, load)) rather than committed + min(chain, load).
    Mode 'max' takes the larger of the two bounds, mode 'alt' defers to
    alt_lower_bound.
    """
    mode = mode or ctx.lb_mode
    if mode == 'alt':
        return alt_lower_bound(ctx, node)

    committed = _committed(ctx, node)
    remaining = ctx.remaining(node)
    if not remaining:
        return committed

    est = _earliest_remaining(ctx, node)
    chain_bound = max(est[i] + ctx.duration[i] for i in remaining)
    load_bound = (_busy_until(ctx, node) + sum(ctx.work[i] for i in remaining)) / len(ctx.agents)

    if mode == 'max':
        return max(committed, chain_bound, load_bound)
    return max(committed, min(chain_bound, load_bound))


def _water_level(begin: Sequence[float], total: float) -> float:
    """Smallest level L with sum(max(0, L - b)) >= total over sorted begin times."""
    filled = 0.0
    for k, b in enumerate(begin, start=1):
        filled += b
        level = (total + filled) / k
        if k == len(begin) or level <= begin[k]:
            return level
    return 0.0


def alt_lower_bound(ctx: PlanningContext, node: SearchNode) -> float:
    """Bound from a relaxed assignment of the unassigned subtasks.

    Each agent becomes available when its assigned subtasks are done.
    An unassigned subtask costs its duration plus the cheapest travel any
    agent could make into its region, either from where an agent stands or
    from the region of another unassigned subtask. Ordering and
    synchronization are dropped, leaving the problem of giving every
    subtask its number of agents while minimizing the latest agent finish.
    Its optimum is bounded below by the water level of the total cost
    poured over the agents' availability times (sorted, filled greedily)
    and, per subtask, by the time its required number of capable agents
    could first be free.
    """
    committed = _committed(ctx, node)
    remaining = ctx.remaining(node)
    if not remaining:
        return committed

    state = {a: _agent_state(ctx, node.sequences, node.starts, a) for a in ctx.agents}
    level = 0.0
    total = 0.0
    for index in remaining:
        region = ctx.region[index]
        origins = {(a, state[a][1]) for a in ctx.agents}
        origins |= {(a, ctx.region[j]) for j in remaining if j != index for a in ctx.agents}
        approach = min(ctx.travel(a, src, region) for a, src in origins)
        cost = ctx.duration[index] + (0.0 if math.isinf(approach) else approach)

        need = min(len(c.members) for c in ctx.coalitions[index])
        capable = sorted(state[m][0] for m in {m for c in ctx.coalitions[index] for m in c.members})
        level = max(level, capable[need - 1] + cost, ctx.release[index] + ctx.duration[index])
        total += cost * need

    level = max(level, _water_level(sorted(state[a][0] for a in ctx.agents), total))
    return max(committed, level)


def validate_schedule(ctx: PlanningContext, sched: Schedule) -> List[str]:
    """Constraint violations of a schedule; empty when it is valid."""
    problems = []
    if set(sched.starts) != set(ctx.indices):
        problems.append(f"schedule covers {sorted(sched.starts)} instead of {ctx.indices}")
        return problems

    for index, coalition in sched.coalition_of.items():
        holders = {a for a, seq in sched.sequences.items() if index in seq}
        if holders != set(coalition.members):
            problems.append(f"subtask {index}: coalition {coalition.members} differs from sequences {sorted(holders)}")
        if coalition not in ctx.coalitions[index]:
            problems.append(f"subtask {index}: coalition {coalition.members} cannot serve it")
        if sched.starts[index] < ctx.release[index] - TOLERANCE:
            problems.append(f"subtask {index} starts before its release time")

    for agent, seq in sched.sequences.items():
        free, location = ctx.ready[agent], ctx.location[agent]
        for index in seq:
            arrival = free + ctx.travel(agent, location, ctx.region[index])
            if sched.starts[index] < arrival - 1e-6:
                problems.append(f"{agent} cannot reach subtask {index} by {sched.starts[index]:.2f}")
            free, location = sched.finish(index), ctx.region[index]

    if not word_satisfies(ctx.poset, sched.word(), sched.durations, tolerance=1e-6):
        problems.append("start times violate the poset")

    expected = _makespan(ctx, sched.starts)
    if abs(expected - sched.makespan) > 1e-6:
        problems.append(f"makespan {sched.makespan} differs from last finish {expected}")
    return problems


def bnb(ctx: PlanningContext, budget: float,
        should_stop: Optional[Callable[[], bool]] = None,
        on_improve: Optional[Callable[[float, Schedule], None]] = None,
        stats: Optional[BnbStats] = None) -> Incumbent:
    """Anytime best-first branch and bound over assignments.

    Args:
        ctx: Planning context
        budget: Seconds of search
        should_stop: Polled before each pop; True ends the search
        on_improve: Called with (elapsed seconds, schedule) on every improvement
        stats: Counters filled during the search

    Returns:
        Incumbent with the best schedule and its improvement history
    """
    stats = stats if stats is not None else BnbStats()
    incumbent = Incumbent()
    started = time.monotonic()
    counter = itertools.count()

    root = ctx.root()
    heap = [(lower_bound(ctx, root), next(counter), root)]
    stats.generated += 1

    while heap:
        if time.monotonic() - started > budget or (should_stop and should_stop()):
            break
        bound, _, node = heapq.heappop(heap)
        if bound >= incumbent.makespan - TOLERANCE:
            stats.pruned += 1
            continue
        stats.expanded += 1

        try:
            candidate = upper_bound(ctx, node)
        except InfeasibleSchedule as e:
            logger.debug("Greedy completion failed: %s", e)
            candidate = None

        if candidate is not None and candidate.makespan < incumbent.makespan - TOLERANCE:
            problems = validate_schedule(ctx, candidate)
            if problems:
                raise InfeasibleSchedule("Invalid incumbent: " + "; ".join(problems))
            elapsed = time.monotonic() - started
            incumbent.update(candidate, elapsed)
            logger.info("t=%.3f incumbent=%.2f (poset %d)", elapsed, candidate.makespan, ctx.poset.id)
            if on_improve is not None:
                on_improve(elapsed, candidate)

        for child in expand(ctx, node):
            stats.generated += 1
            child_bound = lower_bound(ctx, child)
            if child_bound <= incumbent.makespan + TOLERANCE:
                heapq.heappush(heap, (child_bound, next(counter), child))
            else:
                stats.pruned += 1
    else:
        stats.exhausted = True

    stats.elapsed = time.monotonic() - started
    logger.debug("BnB on poset %d: expanded %d, generated %d, pruned %.1f%%, exhausted=%s",
                 ctx.poset.id, stats.expanded, stats.generated, stats.pruned_percentage, stats.exhausted)
    return incumbent


# Pipeline

def task_automaton(formula: Optional[str] = None, hoa_text: Optional[str] = None,
                   scenario: Optional[Scenario] = None, atom_cap: int = 64) -> Nba:
    """Automaton of a task given as formula text or HOA text."""
    if (formula is None) == (hoa_text is None):
        raise ValueError("Provide exactly one of formula or HOA text")
    if hoa_text is not None:
        return hoa.import_hoa(hoa_text)
    return translate(ltl.to_pnf(ltl.parse(formula, scenario)), atom_cap)


@dataclass
class PlanResult:
    incumbent: Incumbent
    poset: Optional[Poset]
    report: PruneReport
    posets: List[Poset] = field(default_factory=list)
    per_poset: Dict[int, float] = field(default_factory=dict)
    bnb_stats: Dict[int, BnbStats] = field(default_factory=dict)
    poset_stats: PosetStats = field(default_factory=PosetStats)
    nba: Optional[Nba] = None

    @property
    def schedule(self) -> Optional[Schedule]:
        return self.incumbent.schedule

    @property
    def makespan(self) -> float:
        return self.incumbent.makespan


def plan(scenario: Scenario, formula: Optional[str] = None, hoa_text: Optional[str] = None,
         budget_poset: float = 10.0, budget_bnb: float = 30.0, lb_mode: str = 'min',
         jobs: int = 1, max_posets: int = 4, atom_cap: int = 64, support_cap: int = 20,
         poset_options: Optional[Dict] = None,
         on_improve: Optional[Callable[[float, Schedule], None]] = None) -> PlanResult:
    """Translate, prune, mine posets and assign them, keeping the best plan.

    Posets are produced on a background thread and searched by a pool of
    jobs workers as they arrive.

    Raises:
        UnsatisfiableTask: When pruning leaves no accepting run
        InfeasibleForTeam: When no poset can be served by the team
        NoSolution: When budgets expire before any plan is found
    """
    nba = task_automaton(formula, hoa_text, scenario, atom_cap)
    pruned, report = prune(nba, scenario, support_cap)

    poset_stats = PosetStats()
    channel: 'queue.Queue' = queue.Queue()
    stop = threading.Event()
    failure: List[BaseException] = []

    def produce():
        try:
            for poset in iter_posets(pruned, budget_poset, stats=poset_stats,
                                     should_stop=stop.is_set, **(poset_options or {})):
                channel.put(poset)
        except BaseException as e:
            failure.append(e)
        finally:
            channel.put(None)

    producer = threading.Thread(target=produce, name='posetplan-posets', daemon=True)
    producer.start()

    lock = threading.Lock()
    started = time.monotonic()
    best = Incumbent()
    result = PlanResult(best, None, report, poset_stats=poset_stats, nba=pruned)

    def search(poset: Poset):
        try:
            ctx = PlanningContext(poset, scenario, lb_mode)
        except (InfeasibleForTeam, MultiRegionSubtask, UnknownBehavior) as e:
            logger.info("Poset %d cannot be served: %s", poset.id, e)
            return
        stats = BnbStats()

        def improved(elapsed: float, sched: Schedule):
            with lock:
                if best.update(sched, time.monotonic() - started):
                    result.poset = poset
                    if on_improve is not None:
                        on_improve(time.monotonic() - started, sched)

        incumbent = bnb(ctx, budget_bnb, on_improve=improved, stats=stats)
        with lock:
            result.bnb_stats[poset.id] = stats
            result.per_poset[poset.id] = incumbent.makespan

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = []
        while True:
            poset = channel.get()
            if poset is None:
                break
            result.posets.append(poset)
            if len(futures) < max_posets:
                futures.append(pool.submit(search, poset))
            else:
                stop.set()
        for future in futures:
            future.result()

    producer.join()
    if failure:
        raise failure[0]

    if not result.posets:
        if poset_stats.budget_exhausted:
            raise NoSolution(f"No accepting poset found within {budget_poset}s")
        raise InfeasibleForTeam("No accepting poset exists for this team")
    if best.schedule is None:
        if not result.bnb_stats:
            raise InfeasibleForTeam("No poset can be served by this team")
        raise NoSolution(f"No plan found within {budget_bnb}s")

    logger.info("Best plan: poset %d, makespan %.2f", result.poset.id, best.makespan)
    return result


def plan_to_dict(result: PlanResult) -> Dict:
    sched = result.schedule
    data = sched.to_dict() if sched is not None else {'makespan': None, 'subtasks': []}
    data['history'] = [{'t': t, 'makespan': m} for t, m in result.incumbent.history]
    data['poset'] = result.poset.to_dict() if result.poset is not None else None
    data['prune'] = result.report.to_dict()
    data['posets_found'] = len(result.posets)
    data['bnb'] = {str(pid): stats.to_dict() for pid, stats in sorted(result.bnb_stats.items())}
    return data


def plan_to_json(result: PlanResult) -> str:
    return json.dumps(plan_to_dict(result), indent=2)


def gantt_rows(sched: Schedule, scenario: Scenario,
               ready_times: Optional[Mapping[str, float]] = None) -> List[Dict]:
    """Per-agent travel, wait and serve intervals of a schedule."""
    rows = []
    for agent in scenario.agent_ids:
        t = float((ready_times or {}).get(agent, 0.0))
        location = scenario.agent(agent).initial_region
        for index in sched.sequences.get(agent, ()):
            region = sched.regions[index]
            arrival = t + scenario.travel_time(agent, location, region)
            if arrival > t:
                rows.append({'agent': agent, 'subtask': index, 'start': t, 'end': arrival, 'state': 'travel'})
            if sched.starts[index] > arrival:
                rows.append({'agent': agent, 'subtask': index, 'start': arrival,
                             'end': sched.starts[index], 'state': 'wait'})
            rows.append({'agent': agent, 'subtask': index, 'start': sched.starts[index],
                         'end': sched.finish(index), 'state': 'serve'})
            t, location = sched.finish(index), region
    return rows


def write_gantt_csv(rows: Sequence[Dict], path: str):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=['agent', 'subtask', 'start', 'end', 'state'])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
