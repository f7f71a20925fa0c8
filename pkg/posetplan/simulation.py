"""Discrete-event execution of a plan with start/stop synchronization messages,
duration noise and re-planning after agent failures."""

import heapq
import itertools
import json
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import DeadlockError, InfeasibleForTeam, IrrecoverableFailure
from .model import Scenario, ground
from .planner import BnbStats, PlanningContext, Schedule, bnb
from .poset import Poset, PosetWord


logger = logging.getLogger(__name__)

ARRIVE_AT = 'ArriveAt'
START_MSG = 'StartMsg'
STOP_MSG = 'StopMsg'
BEGIN_EXEC = 'BeginExec'
END_EXEC = 'EndExec'
FAILURE = 'Failure'

KIND_ORDER = {END_EXEC: 0, FAILURE: 1, ARRIVE_AT: 2, STOP_MSG: 3, START_MSG: 4, BEGIN_EXEC: 5}

IDLE = 'idle'
MOVING = 'moving'
HOLDING = 'holding'
WAITING_COLLABORATORS = 'waiting_for_collaborators'
WAITING_PRECEDENCE = 'waiting_for_precedence'
EXECUTING = 'executing'
FAILED = 'failed'
DONE = 'done'


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    agent: str
    subtask: Optional[int] = None

    def sort_key(self) -> Tuple[float, int, str, int]:
        return (self.time, KIND_ORDER[self.kind], self.agent, self.subtask if self.subtask is not None else -1)

    def to_dict(self) -> Dict:
        return {'time': self.time, 'kind': self.kind, 'agent': self.agent, 'subtask': self.subtask}


@dataclass
class AgentState:
    location: Optional[str]
    status: str = IDLE
    cursor: int = 0
    since: float = 0.0
    subtask: Optional[int] = None


@dataclass
class Replan:
    time: float
    failed: Tuple[str, ...]
    schedule: Schedule
    planning_seconds: float


@dataclass
class Trace:
    events: List[SimEvent] = field(default_factory=list)
    windows: Dict[int, Tuple[float, float]] = field(default_factory=dict)
    replans: List[Replan] = field(default_factory=list)
    segments: List[Dict] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        return max((end for _, end in self.windows.values()), default=0.0)

    def induced_word(self) -> PosetWord:
        return PosetWord.from_starts({i: start for i, (start, _) in self.windows.items()})

    def durations(self) -> Dict[int, float]:
        return {i: end - start for i, (start, end) in self.windows.items()}

    def message_count(self) -> int:
        return sum(1 for e in self.events if e.kind in (START_MSG, STOP_MSG))

    def to_dict(self) -> Dict:
        return {
            'makespan': self.makespan,
            'windows': [
                {'subtask': i, 'start': s, 'end': e}
                for i, (s, e) in sorted(self.windows.items(), key=lambda kv: (kv[1][0], kv[0]))
            ],
            'events': [e.to_dict() for e in self.events],
            'messages': self.message_count(),
            'replans': [
                {
                    'time': r.time,
                    'failed': list(r.failed),
                    'makespan': r.schedule.makespan,
                    'planning_seconds': round(r.planning_seconds, 6),
                    'schedule': r.schedule.to_dict(),
                }
                for r in self.replans
            ],
            'segments': self.segments,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class Snapshot:
    """Execution state handed to re-planning at a failure time."""

    time: float
    finished: Set[int]
    in_progress: Dict[int, float]
    agents: Dict[str, Tuple[float, str]]
    failed: Set[str]


def expected_message_count(poset: Poset) -> int:
    """One start message per ordered pair plus one stop message per opposed set."""
    return len(poset.leq) + len(poset.opposed)


def residual_poset(poset: Poset, snapshot: Snapshot) -> Tuple[Poset, Dict[int, float], Dict[FrozenSet, Tuple[int, int]]]:
    """Poset of unfinished subtasks with release times and runtime stop-waits.

    Opposed sets with a finished member are already satisfied. Sets with two
    or more unfinished members are restricted to them. A set left with one
    unfinished member and some running members releases that member when
    the earliest running member is expected to finish.

    Returns:
        Residual poset, release times and stop-wait pairs for single-member sets
    """
    started = snapshot.finished | set(snapshot.in_progress)
    remaining = [s for s in poset.subtasks if s.index not in started]
    keep = {s.index for s in remaining}

    release: Dict[int, float] = {}
    waits: Dict[FrozenSet, Tuple[int, int]] = {}
    opposed = set()
    for group in poset.opposed:
        if group & snapshot.finished:
            continue
        rest = group & keep
        running = group & set(snapshot.in_progress)
        if len(rest) >= 2:
            opposed.add(frozenset(rest))
        elif len(rest) == 1 and running:
            member = next(iter(rest))
            first = min(running, key=lambda i: (snapshot.in_progress[i], i))
            release[member] = max(release.get(member, snapshot.time), snapshot.in_progress[first])
            waits[group] = (first, member)

    residual = Poset(
        subtasks=tuple(remaining),
        leq=frozenset((a, b) for a, b in poset.leq if a in keep and b in keep),
        opposed=frozenset(opposed),
        language_size=0,
        source_run=poset.source_run,
        id=poset.id,
    )
    return residual, release, waits


def adapt_failure(snapshot: Snapshot, poset: Poset, scenario: Scenario, budget: float,
                  lb_mode: str = 'min') -> Tuple[Schedule, Dict[FrozenSet, Tuple[int, int]]]:
    """Re-plan the unfinished subtasks with the surviving agents.

    Surviving agents start from their snapshot regions and ready times; the
    resulting schedule uses absolute times.

    Raises:
        IrrecoverableFailure: When the survivors cannot serve every unfinished subtask
    """
    residual, release, waits = residual_poset(poset, snapshot)
    team = scenario.without(snapshot.failed).relocated({a: loc for a, (_, loc) in snapshot.agents.items()})
    if not team.agents and residual.subtasks:
        raise IrrecoverableFailure("Every agent has failed")
    ready = {a: t for a, (t, _) in snapshot.agents.items()}
    for index in release:
        release[index] = max(release[index], snapshot.time)
    for s in residual.subtasks:
        release.setdefault(s.index, snapshot.time)

    try:
        ctx = PlanningContext(residual, team, lb_mode, ready_times=ready, release_times=release)
    except InfeasibleForTeam as e:
        raise IrrecoverableFailure(f"Surviving agents cannot finish the task: {e}")

    stats = BnbStats()
    incumbent = bnb(ctx, budget, stats=stats)
    if incumbent.schedule is None:
        raise IrrecoverableFailure(f"No residual plan found within {budget}s")
    logger.info("Re-planned %d subtasks after failure of %s: makespan %.2f",
                len(residual.subtasks), sorted(snapshot.failed), incumbent.makespan)
    return incumbent.schedule, waits


class Simulator:
    """Event-driven replay of a schedule by independent agents."""

    def __init__(self, schedule: Schedule, poset: Poset, scenario: Scenario,
                 noise: Tuple[float, float] = (1.0, 1.0), seed: int = 0,
                 failures: Sequence[Tuple[str, float]] = (), replan_budget: float = 5.0,
                 lb_mode: str = 'min'):
        """Initialize simulator.

        Args:
            schedule: Plan to execute
            poset: Poset the plan serves
            scenario: Team and workspace
            noise: Range of the multiplicative factor drawn per travel and execution leg
            seed: Seed of the noise generator
            failures: (agent, time) failure injections
            replan_budget: Seconds of search per re-plan
            lb_mode: Lower-bound mode for re-planning
        """
        low, high = noise
        if low <= 0 or high < low:
            raise ValueError(f"Noise factors must satisfy 0 < low <= high, got {noise}")
        self.poset = poset
        self.scenario = scenario
        self.noise = (low, high)
        self.rng = random.Random(seed)
        self.replan_budget = replan_budget
        self.lb_mode = lb_mode

        self.plan = schedule
        self.requirements = {s.index: ground(s, scenario) for s in poset.subtasks}
        self.sequences = {a: list(schedule.sequences.get(a, ())) for a in scenario.agent_ids}
        self.agents = {a.id: AgentState(location=a.initial_region) for a in scenario.agents}
        self.failed: Set[str] = set()
        self.successors = {i: sorted(b for a, b in poset.leq if a == i) for i in poset.indices}
        self.pred_pairs = {i: sorted(a for a, b in poset.leq if b == i) for i in poset.indices}
        self.stop_waits = self._resolution_pairs(schedule)

        self.started: Set[int] = set()
        self.finished: Set[int] = set()
        self.executing: Dict[int, Tuple[float, float, int]] = {}
        self.start_msgs: Set[Tuple[int, int]] = set()
        self.stop_msgs: Set[Tuple[int, int]] = set()
        self.tokens = itertools.count(1)

        self.now = 0.0
        self.heap: List[Tuple] = []
        self.counter = itertools.count()
        self.trace = Trace()
        for agent, at in sorted(failures, key=lambda f: (f[1], f[0])):
            self._push(float(at), FAILURE, agent, None)

    def _resolution_pairs(self, schedule: Schedule) -> Dict[FrozenSet, Tuple[int, int]]:
        pairs = {}
        for group in self.poset.opposed:
            pair = schedule.opposed_resolution.get(group)
            if pair is None and all(i in schedule.starts for i in group):
                ordered = sorted(group, key=lambda i: (schedule.starts[i], i))
                pair = (ordered[0], ordered[1])
            if pair is not None:
                pairs[group] = pair
        return pairs

    def _factor(self) -> float:
        low, high = self.noise
        return low if low == high else self.rng.uniform(low, high)

    def _push(self, at: float, kind: str, agent: str, subtask: Optional[int], token: int = 0):
        heapq.heappush(self.heap, (at, KIND_ORDER[kind], agent, next(self.counter), kind, subtask, token))

    def _log(self, kind: str, agent: str, subtask: Optional[int] = None):
        self.trace.events.append(SimEvent(self.now, kind, agent, subtask))

    def _set_status(self, agent: str, status: str, subtask: Optional[int] = None):
        state = self.agents[agent]
        if state.status == status and state.subtask == subtask:
            return
        self._close_segment(agent)
        state.status = status
        state.subtask = subtask
        state.since = self.now

    def _close_segment(self, agent: str):
        state = self.agents[agent]
        if self.now > state.since:
            self.trace.segments.append({
                'agent': agent, 'start': state.since, 'end': self.now,
                'state': state.status, 'subtask': state.subtask,
            })
        state.since = self.now

    def _next(self, agent: str) -> Optional[int]:
        state = self.agents[agent]
        seq = self.sequences[agent]
        return seq[state.cursor] if state.cursor < len(seq) else None

    def _waiting_active(self, index: int) -> bool:
        """A waiting constraint holds once every predecessor has started and until its owner starts."""
        if index in self.started:
            return False
        return all((p, index) in self.start_msgs for p in self.pred_pairs[index])

    def _forbidden_regions(self) -> Set[str]:
        regions = set()
        for s in self.poset.subtasks:
            if self._waiting_active(s.index):
                regions |= self.requirements[s.index].waiting_forbidden
        for index in self.executing:
            regions |= self.requirements[index].forbidden_regions
        return regions

    def _members(self, index: int) -> Tuple[str, ...]:
        return self.plan.coalition_of[index].members

    def _blockers(self, index: int) -> Set[str]:
        blockers = set()
        for member in self._members(index):
            state = self.agents[member]
            if member in self.failed:
                blockers.add(f"failed:{member}")
            elif self._next(member) != index or state.status in (MOVING, HOLDING, IDLE) \
                    or state.location != self.requirements[index].region:
                blockers.add(f"agent:{member}")
        for p in self.pred_pairs[index]:
            if (p, index) not in self.start_msgs:
                blockers.add(f"start:{p}")
        for group, (a, b) in self.stop_waits.items():
            if b == index and (a, b) not in self.stop_msgs:
                blockers.add(f"stop:{a}")
        return blockers

    def _advance(self):
        changed = True
        while changed:
            changed = False
            forbidden = self._forbidden_regions()
            for agent in self.scenario.agent_ids:
                state = self.agents[agent]
                if agent in self.failed or state.status in (MOVING, EXECUTING):
                    continue
                index = self._next(agent)
                if index is None:
                    self._set_status(agent, DONE)
                    continue
                region = self.requirements[index].region
                if state.location == region:
                    waiting = any(self.agents[m].location != region or self._next(m) != index
                                  or self.agents[m].status == MOVING for m in self._members(index))
                    self._set_status(agent, WAITING_COLLABORATORS if waiting else WAITING_PRECEDENCE, index)
                    continue
                if region in forbidden:
                    self._set_status(agent, HOLDING, index)
                    continue
                travel = self.scenario.travel_time(agent, state.location, region) * self._factor()
                self._set_status(agent, MOVING, index)
                state.location = None
                self._push(self.now + travel, ARRIVE_AT, agent, index)
                changed = True

            for index in sorted(self.plan.coalition_of):
                if index in self.started or index in self.finished:
                    continue
                if not self._blockers(index):
                    self._begin(index)
                    changed = True

    def _begin(self, index: int):
        members = self._members(index)
        self.started.add(index)
        for member in members:
            self._set_status(member, EXECUTING, index)
            self._log(BEGIN_EXEC, member, index)
        for successor in self.successors[index]:
            self.start_msgs.add((index, successor))
            self._log(START_MSG, members[0], index)
        token = next(self.tokens)
        end = self.now + self.requirements[index].duration * self._factor()
        self.executing[index] = (self.now, end, token)
        self._push(end, END_EXEC, members[0], index, token)

    def _end(self, index: int, token: int):
        if index not in self.executing or self.executing[index][2] != token:
            return
        start, end, _ = self.executing.pop(index)
        self.trace.windows[index] = (start, self.now)
        self.finished.add(index)
        members = self._members(index)
        for member in members:
            self._log(END_EXEC, member, index)
            self.agents[member].cursor += 1
            self._set_status(member, IDLE)
        for group, (a, b) in self.stop_waits.items():
            if a == index:
                self.stop_msgs.add((a, b))
                self._log(STOP_MSG, members[0], index)

    def _fail(self, agents: Iterable[str]):
        newly = [a for a in agents if a not in self.failed and a in self.agents]
        for agent in newly:
            self._log(FAILURE, agent)
            self.failed.add(agent)
            self._set_status(agent, FAILED)
        if not newly:
            return

        interrupted = [i for i in self.executing if set(self._members(i)) & self.failed]
        affected = bool(interrupted) or any(self._next(a) is not None for a in newly)
        if not affected:
            logger.info("Failure of %s at t=%.2f leaves no unfinished work", newly, self.now)
            return

        for index in interrupted:
            self.executing.pop(index)
            self.started.discard(index)
            for member in self._members(index):
                if member not in self.failed:
                    self._set_status(member, IDLE)
            logger.info("Subtask %d interrupted at t=%.2f", index, self.now)

        snapshot = self._snapshot()
        started = time.monotonic()
        residual, waits = adapt_failure(snapshot, self.poset, self.scenario,
                                        self.replan_budget, self.lb_mode)
        planning = time.monotonic() - started
        self._merge(residual, waits, interrupted)
        self.trace.replans.append(Replan(self.now, tuple(sorted(self.failed)), self.plan, planning))

    def _snapshot(self) -> Snapshot:
        in_progress = {i: end for i, (_, end, _) in self.executing.items()}
        agents = {}
        arrivals = {entry[2]: (entry[0], entry[5]) for entry in self.heap if entry[4] == ARRIVE_AT}
        for agent, state in self.agents.items():
            if agent in self.failed:
                continue
            if state.status == EXECUTING:
                index = self._next(agent)
                agents[agent] = (in_progress[index], self.requirements[index].region)
            elif state.status == MOVING and agent in arrivals:
                at, index = arrivals[agent]
                agents[agent] = (at, self.requirements[index].region)
            else:
                agents[agent] = (self.now, state.location)
        return Snapshot(self.now, set(self.finished), in_progress, agents, set(self.failed))

    def _merge(self, residual: Schedule, waits: Dict[FrozenSet, Tuple[int, int]], interrupted: List[int]):
        keep = {i for i in self.plan.coalition_of if i in self.finished or i in self.executing}
        coalition_of = {i: self.plan.coalition_of[i] for i in keep}
        starts = {}
        for i in keep:
            if i in self.finished:
                starts[i] = self.trace.windows[i][0]
            else:
                starts[i] = self.executing[i][0]
        coalition_of.update(residual.coalition_of)
        starts.update(residual.starts)

        for agent, state in self.agents.items():
            done = state.cursor + (1 if state.status == EXECUTING else 0)
            prefix = self.sequences[agent][:done]
            self.sequences[agent] = prefix + (list(residual.sequences.get(agent, ())) if agent not in self.failed else [])

        durations = {i: self.requirements[i].duration for i in coalition_of}
        self.plan = Schedule(
            coalition_of=coalition_of,
            starts=starts,
            durations=durations,
            regions={i: self.requirements[i].region for i in coalition_of},
            sequences={a: tuple(seq) for a, seq in self.sequences.items()},
            makespan=max((starts[i] + durations[i] for i in coalition_of), default=0.0),
            opposed_resolution=dict(residual.opposed_resolution),
            poset_id=self.plan.poset_id,
        )

        pairs = {}
        for group in self.poset.opposed:
            if group & self.finished:
                continue
            if group in waits:
                pairs[group] = waits[group]
                continue
            rest = frozenset(i for i in group if i not in self.finished and i not in self.executing)
            if rest in residual.opposed_resolution:
                pairs[group] = residual.opposed_resolution[rest]
            elif group in self.stop_waits:
                pairs[group] = self.stop_waits[group]
        self.stop_waits = pairs

    def _deadlock(self):
        pending = [i for i in self.poset.indices if i not in self.finished]
        held = {a for a, s in self.agents.items() if s.status == HOLDING}
        forbidden = ','.join(sorted(self._forbidden_regions()))
        wait_for = {}
        for i in pending:
            coalition = self.plan.coalition_of.get(i)
            if coalition is None:
                wait_for[i] = {'unassigned'}
                continue
            reasons = set(self._blockers(i))
            if held & set(coalition.members):
                reasons.add(f"regions:{forbidden}")
            wait_for[i] = reasons
        raise DeadlockError(self.now, wait_for)

    def _close_segments(self):
        for agent in self.agents:
            self._close_segment(agent)

    def run(self) -> Trace:
        """Execute until every subtask finishes.

        Raises:
            DeadlockError: When no event is pending but subtasks remain
            IrrecoverableFailure: When a failure cannot be re-planned
        """
        self._advance()
        while self.heap:
            at, _, agent, _, kind, subtask, token = heapq.heappop(self.heap)
            self.now = at
            if kind == FAILURE:
                batch = [agent]
                while self.heap and self.heap[0][0] == at and self.heap[0][4] == FAILURE:
                    batch.append(heapq.heappop(self.heap)[2])
                self._fail(batch)
            elif kind == ARRIVE_AT:
                if agent in self.failed:
                    continue
                self.agents[agent].location = self.requirements[subtask].region
                self._log(ARRIVE_AT, agent, subtask)
                self._set_status(agent, IDLE)
            elif kind == END_EXEC:
                self._end(subtask, token)
            self._advance()

        if len(self.finished) < len(self.poset.subtasks):
            self._deadlock()

        self._close_segments()
        self.trace.events.sort(key=SimEvent.sort_key)
        logger.info("Simulation finished at t=%.2f with %d messages and %d re-plans",
                    self.trace.makespan, self.trace.message_count(), len(self.trace.replans))
        return self.trace


def simulate(schedule: Schedule, poset: Poset, scenario: Scenario,
             noise: Tuple[float, float] = (1.0, 1.0), failures: Sequence[Tuple[str, float]] = (),
             seed: int = 0, replan_budget: float = 5.0, lb_mode: str = 'min') -> Trace:
    """Run a plan through the execution protocol and return its trace."""
    return Simulator(schedule, poset, scenario, noise, seed, failures, replan_budget, lb_mode).run()


def noise_range(spread: float) -> Tuple[float, float]:
    """Factor range 1 +/- spread."""
    if not 0 <= spread < 1:
        raise ValueError(f"Noise spread must be in [0, 1), got {spread}")
    return (1.0 - spread, 1.0 + spread)
