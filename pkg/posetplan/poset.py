"""Accepting posets: run decomposition, relaxation, languages and poset graphs.

A poset fixes a set of subtasks, a "start no later than" relation between
some of them and a family of opposed sets whose members may not all run at
the same time. Every linear extension of the relation is a word the task
automaton accepts.
"""

import heapq
import itertools
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import (Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional,
                    Sequence, Set, Tuple)

import networkx as nx

from .automaton import Letter, Nba, idle, stutter_step
from .errors import (CyclicRelation, LanguageCapExceeded, MissingDuration, RunNotAccepting,
                     UnsatisfiableTask)


logger = logging.getLogger(__name__)

TOLERANCE = 1e-9


@dataclass(frozen=True)
class Subtask:
    """One service along an accepting run.

    Attributes:
        index: Position of the source edge in the run (1-based)
        positive: Atoms the subtask makes true
        negative: Atoms that must stay false while it executes
        selfloop_pos: Atoms that must hold while waiting to start it
        selfloop_neg: Atoms that must stay false while waiting to start it
    """

    index: int
    positive: FrozenSet[str]
    negative: FrozenSet[str] = frozenset()
    selfloop_pos: FrozenSet[str] = frozenset()
    selfloop_neg: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if self.positive & self.negative:
            raise ValueError(f"Subtask {self.index} asserts and forbids {sorted(self.positive & self.negative)}")
        if self.selfloop_pos & self.selfloop_neg:
            raise ValueError(f"Subtask {self.index} has contradictory waiting constraints")

    @property
    def letter(self) -> Letter:
        return self.positive

    def label(self) -> str:
        parts = sorted(self.positive) + [f"!{a}" for a in sorted(self.negative)]
        return ' & '.join(parts) if parts else 'true'

    def to_dict(self) -> Dict:
        return {
            'index': self.index,
            'positive': sorted(self.positive),
            'negative': sorted(self.negative),
            'selfloop_pos': sorted(self.selfloop_pos),
            'selfloop_neg': sorted(self.selfloop_neg),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Subtask':
        return cls(
            index=int(data['index']),
            positive=frozenset(data['positive']),
            negative=frozenset(data.get('negative', [])),
            selfloop_pos=frozenset(data.get('selfloop_pos', [])),
            selfloop_neg=frozenset(data.get('selfloop_neg', [])),
        )


@dataclass(frozen=True)
class Poset:
    subtasks: Tuple[Subtask, ...]
    leq: FrozenSet[Tuple[int, int]] = frozenset()
    opposed: FrozenSet[FrozenSet[int]] = frozenset()
    language_size: int = 0
    source_run: Tuple[int, ...] = ()
    id: int = 0

    def __post_init__(self):
        indices = {s.index for s in self.subtasks}
        if len(indices) != len(self.subtasks):
            raise ValueError("Subtask indices must be unique")
        for a, b in self.leq:
            if a == b:
                raise CyclicRelation(f"Relation is reflexive on {a}")
            if a not in indices or b not in indices:
                raise ValueError(f"Pair ({a}, {b}) refers to unknown subtasks")
        graph = nx.DiGraph(list(self.leq))
        if not nx.is_directed_acyclic_graph(graph):
            raise CyclicRelation(f"Relation has a cycle: {nx.find_cycle(graph)}")
        for group in self.opposed:
            if len(group) < 2 or not group <= indices:
                raise ValueError(f"Opposed set {sorted(group)} is invalid")

    @property
    def indices(self) -> List[int]:
        return [s.index for s in self.subtasks]

    def subtask(self, index: int) -> Subtask:
        for s in self.subtasks:
            if s.index == index:
                return s
        raise KeyError(index)

    def predecessors(self, index: int) -> Set[int]:
        return {a for a, b in self.leq if b == index}

    def letters(self, order: Sequence[int]) -> Tuple[Letter, ...]:
        by_index = {s.index: s.positive for s in self.subtasks}
        return tuple(by_index[i] for i in order)

    def rank_key(self) -> Tuple[int, int, int]:
        """Largest language first, then fewest ordering pairs."""
        return (-self.language_size, len(self.leq), self.id)

    def to_dict(self) -> Dict:
        return {
            'id': self.id,
            'subtasks': [s.to_dict() for s in self.subtasks],
            'leq': [list(p) for p in sorted(self.leq)],
            'opposed': sorted(sorted(g) for g in self.opposed),
            'language_size': self.language_size,
            'source_run': list(self.source_run),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Poset':
        return cls(
            subtasks=tuple(Subtask.from_dict(s) for s in data['subtasks']),
            leq=frozenset(tuple(p) for p in data.get('leq', [])),
            opposed=frozenset(frozenset(g) for g in data.get('opposed', [])),
            language_size=int(data.get('language_size', 0)),
            source_run=tuple(data.get('source_run', [])),
            id=int(data.get('id', 0)),
        )


@dataclass(frozen=True)
class PosetGraph:
    nodes: Tuple[int, ...]
    edges: FrozenSet[Tuple[int, int]]
    opposed_edges: FrozenSet[FrozenSet[int]]
    roots: FrozenSet[int]
    labels: Mapping[int, str] = field(default_factory=dict, compare=False)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        graph.add_edges_from(sorted(self.edges))
        return graph

    def to_dict(self) -> Dict:
        return {
            'nodes': list(self.nodes),
            'edges': [list(e) for e in sorted(self.edges)],
            'opposed': sorted(sorted(g) for g in self.opposed_edges),
            'roots': sorted(self.roots),
        }

    def to_dot(self) -> str:
        """Graphviz text: black ordering edges, red dashed opposed edges."""
        lines = ['digraph poset {', '  rankdir=LR;', '  node [shape=box];']
        for node in self.nodes:
            label = self.labels.get(node, '')
            text = f"{node}: {label}" if label else str(node)
            lines.append(f'  {node} [label="{text}"];')
        for a, b in sorted(self.edges):
            lines.append(f'  {a} -> {b};')
        for group in sorted(sorted(g) for g in self.opposed_edges):
            for a, b in itertools.combinations(group, 2):
                lines.append(f'  {a} -> {b} [color=red, style=dashed, dir=none];')
        lines.append('}')
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True)
class PosetWord:
    """Timed word: (start time, subtask index) entries."""

    entries: Tuple[Tuple[float, int], ...]

    def __post_init__(self):
        times = [t for t, _ in self.entries]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("Poset word times must be non-decreasing")

    @classmethod
    def from_starts(cls, starts: Mapping[int, float]) -> 'PosetWord':
        return cls(tuple(sorted((t, i) for i, t in starts.items())))


@dataclass
class PosetStats:
    runs_explored: int = 0
    decompositions_tried: int = 0
    posets_found: int = 0
    words_checked: int = 0
    time_to_first: Optional[float] = None
    time_to_best: Optional[float] = None
    budget_exhausted: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class Relaxation:
    leq: FrozenSet[Tuple[int, int]]
    opposed: FrozenSet[FrozenSet[int]]
    waiting: Dict[int, Tuple[FrozenSet[str], FrozenSet[str]]]
    language: List[Tuple[int, ...]]


class WordChecker:
    """Stuttered word acceptance with a cache of waiting-state sets per prefix."""

    MAX_CACHE = 500000

    def __init__(self, nba: Nba):
        self.nba = nba
        self.checks = 0
        self._cache: Dict[Tuple[Letter, ...], FrozenSet[int]] = {}

    def states(self, letters: Tuple[Letter, ...]) -> FrozenSet[int]:
        """Waiting states after reading letters."""
        cached = self._cache.get(letters)
        if cached is not None:
            return cached
        if not letters:
            result = idle(self.nba, self.nba.initial)
        else:
            before = self.states(letters[:-1])
            result = idle(self.nba, stutter_step(self.nba, before, letters[-1])) if before else frozenset()
        if len(self._cache) >= self.MAX_CACHE:
            self._cache.clear()
        self._cache[letters] = result
        return result

    def accepts(self, letters: Sequence[Letter]) -> bool:
        self.checks += 1
        return bool(self.states(tuple(letters)) & self.nba.accepting)


def accepting_runs(nba: Nba) -> Iterator[Tuple[int, ...]]:
    """Simple accepting runs, shortest first, over every (initial, accepting) pair.

    Accepting states are absorbing: a run ends at the first accepting state.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(nba.states)
    for (src, dst) in sorted(nba.edges):
        if src != dst and src not in nba.accepting:
            graph.add_edge(src, dst)

    generators = []
    for q0 in sorted(nba.initial):
        if q0 in nba.accepting:
            generators.append(iter([[q0]]))
            continue
        for qf in sorted(nba.accepting):
            if nx.has_path(graph, q0, qf):
                generators.append(nx.shortest_simple_paths(graph, q0, qf))

    for path in heapq.merge(*generators, key=len):
        yield tuple(path)


def _validate_run(nba: Nba, run: Sequence[int]):
    if not run or run[0] not in nba.initial or run[-1] not in nba.accepting:
        raise RunNotAccepting(f"Run {list(run)} does not go from an initial to an accepting state")
    for src, dst in zip(run, run[1:]):
        if (src, dst) not in nba.edges:
            raise RunNotAccepting(f"Run uses missing edge {src}->{dst}")


def decompose_run(nba: Nba, run: Sequence[int], cap: int = 64
                  ) -> List[Tuple[Tuple[Subtask, ...], Tuple[Letter, ...]]]:
    """Subtask sets of an accepting run with the words they induce.

    Each edge contributes one of its guard's minimal models. An edge whose
    guard holds on the empty letter is idle and yields no subtask. At most
    cap combinations are returned, in lexicographic order of the choices.

    Raises:
        RunNotAccepting: When run is not an accepting run of nba
    """
    _validate_run(nba, run)

    options: List[List[Optional[Subtask]]] = []
    for position, (src, dst) in enumerate(zip(run, run[1:]), start=1):
        guard = nba.edges[(src, dst)]
        models = guard.minimal_models()
        if not models:
            raise RunNotAccepting(f"Edge {src}->{dst} has an unsatisfiable guard")
        if any(not pos for pos, _ in models):
            options.append([None])
            continue

        loop = nba.self_loop(src)
        wait_pos, wait_neg = loop.minimal_models()[0] if loop is not None else (frozenset(), frozenset())
        options.append([
            Subtask(position, pos, neg, wait_pos, wait_neg) for pos, neg in models
        ])

    results = []
    for choice in itertools.islice(itertools.product(*options), cap):
        subtasks = tuple(s for s in choice if s is not None)
        results.append((subtasks, tuple(s.positive for s in subtasks)))
    return results


def linear_extensions(indices: Sequence[int], leq: Iterable[Tuple[int, int]],
                      cap: Optional[int] = None) -> Iterator[Tuple[int, ...]]:
    """Linear extensions of leq, smallest available index first.

    Raises:
        LanguageCapExceeded: When more than cap words exist
    """
    preds = {i: set() for i in indices}
    for a, b in leq:
        preds[b].add(a)
    order = sorted(indices)
    count = 0
    prefix: List[int] = []
    placed: Set[int] = set()

    def extend():
        nonlocal count
        if len(prefix) == len(order):
            count += 1
            if cap is not None and count > cap:
                raise LanguageCapExceeded(cap)
            yield tuple(prefix)
            return
        for i in order:
            if i not in placed and preds[i] <= placed:
                placed.add(i)
                prefix.append(i)
                yield from extend()
                prefix.pop()
                placed.discard(i)

    yield from extend()


def language(poset: Poset, cap: int = 100000) -> List[Tuple[int, ...]]:
    """All words of the poset as subtask index sequences."""
    return list(linear_extensions(poset.indices, poset.leq, cap))


def _first_inversion(word: Sequence[int], rank: Mapping[int, int],
                     relaxed: Set[Tuple[int, int]]) -> Tuple[int, int]:
    for i, j in itertools.combinations(range(len(word)), 2):
        pair = (word[j], word[i])
        if rank[word[j]] < rank[word[i]] and pair in relaxed:
            return pair
    raise RunNotAccepting(f"Word {list(word)} is rejected without any relaxed pair")


def _waiting_model(nba: Nba, states: Iterable[int], letter: Letter
                   ) -> Optional[Tuple[FrozenSet[str], FrozenSet[str]]]:
    """Self-loop model of the first waiting state the letter can leave from."""
    for q in sorted(states):
        loop = nba.self_loop(q)
        if loop is not None and stutter_step(nba, [q], letter):
            return loop.minimal_models()[0]
    return None


def relax(nba: Nba, subtasks: Sequence[Subtask], opposed_arity: int = 3,
          opposed_checks: int = 5000, language_cap: int = 100000,
          deadline: Optional[float] = None, checker: Optional[WordChecker] = None) -> Relaxation:
    """Relax the run's total order into a partial order the automaton accepts.

    Adjacent swaps are explored breadth first from the run word. Pairs whose
    swap was accepted somewhere and rejected nowhere leave the relation. Any
    linear extension the automaton still rejects puts one of its inverted
    pairs back until every extension is accepted.

    Args:
        nba: Pruned task automaton
        subtasks: Subtasks in run order
        opposed_arity: Largest opposed set examined
        opposed_checks: Word checks available for opposed sets; unchecked
            sets stay opposed
        language_cap: Most words enumerated
        deadline: time.monotonic() value after which swap exploration stops
        checker: Shared acceptance cache

    Returns:
        Relaxation with the relation, opposed sets, waiting constraints and language
    """
    checker = checker or WordChecker(nba)
    base = tuple(s.index for s in subtasks)
    letter = {s.index: s.positive for s in subtasks}
    rank = {idx: pos for pos, idx in enumerate(base)}
    to_letters = lambda word: tuple(letter[i] for i in word)

    if not checker.accepts(to_letters(base)):
        raise RunNotAccepting(f"Run word {list(base)} is rejected")

    swappable: Set[Tuple[int, int]] = set()
    blocked: Set[Tuple[int, int]] = set()
    seen = {base}
    queue = deque([base])
    while queue and len(seen) <= language_cap:
        if deadline is not None and time.monotonic() > deadline:
            logger.debug("Swap exploration stopped at %d words", len(seen))
            break
        word = queue.popleft()
        for p in range(len(word) - 1):
            a, b = word[p], word[p + 1]
            if rank[a] > rank[b]:
                continue
            swapped = word[:p] + (b, a) + word[p + 2:]
            if checker.accepts(to_letters(swapped)):
                swappable.add((a, b))
                if swapped not in seen:
                    seen.add(swapped)
                    queue.append(swapped)
            else:
                blocked.add((a, b))

    relaxed = swappable - blocked
    total = set(itertools.combinations(base, 2))

    while True:
        kept = total - relaxed
        words = []
        rejected = None
        for word in linear_extensions(base, kept, language_cap):
            if not checker.accepts(to_letters(word)):
                rejected = word
                break
            words.append(word)
        if rejected is None:
            break
        pair = _first_inversion(rejected, rank, relaxed)
        logger.debug("Restoring order %s after rejected word %s", pair, list(rejected))
        relaxed.discard(pair)

    closure = nx.transitive_closure_dag(nx.DiGraph(list(total - relaxed)))
    closure.add_nodes_from(base)
    leq = frozenset(closure.edges())

    waiting = {s.index: (set(s.selfloop_pos), set(s.selfloop_neg)) for s in subtasks}
    visited: Set[Tuple[int, ...]] = set()
    for word in words:
        for p in range(len(word)):
            prefix = word[:p + 1]
            if prefix in visited:
                continue
            visited.add(prefix)
            model = _waiting_model(nba, checker.states(to_letters(word[:p])), letter[word[p]])
            if model is not None:
                waiting[word[p]][0].update(model[0])
                waiting[word[p]][1].update(model[1])
    constraints = {}
    for idx, (pos, neg) in waiting.items():
        clash = pos & neg
        constraints[idx] = (frozenset(pos - clash), frozenset(neg - clash))

    opposed = _opposed_sets(checker, base, letter, opposed_arity, opposed_checks)
    return Relaxation(leq, opposed, constraints, words)


def _opposed_sets(checker: WordChecker, base: Tuple[int, ...], letter: Mapping[int, Letter],
                  arity: int, budget: int) -> FrozenSet[FrozenSet[int]]:
    """Sets whose members cannot all run at once, checked on the run word."""
    kept: List[FrozenSet[int]] = []
    checks = 0
    for size in range(2, min(arity, len(base)) + 1):
        for members in itertools.combinations(base, size):
            group = frozenset(members)
            if any(k <= group for k in kept):
                continue
            if checks >= budget:
                kept.append(group)
                continue
            checks += 1
            union = frozenset().union(*(letter[i] for i in members))
            word = tuple(union if i == members[0] else letter[i]
                         for i in base if i == members[0] or i not in group)
            if not checker.accepts(word):
                kept.append(group)
    return frozenset(kept)


def check_accepting(nba: Nba, poset: Poset, cap: int = 100000) -> bool:
    """Whether every word of the poset is accepted.

    Raises:
        LanguageCapExceeded: When the language is larger than cap
    """
    checker = WordChecker(nba)
    return all(checker.accepts(poset.letters(word))
               for word in linear_extensions(poset.indices, poset.leq, cap))


def iter_posets(nba: Nba, budget: float, opposed_arity: int = 3, opposed_checks: int = 5000,
                decomposition_cap: int = 64, language_cap: int = 100000,
                stats: Optional[PosetStats] = None,
                should_stop: Optional[Callable[[], bool]] = None) -> Iterator[Poset]:
    """Yield accepting posets with pairwise disjoint languages until the budget runs out.

    Args:
        nba: Pruned task automaton
        budget: Seconds of search
        opposed_arity: Largest opposed set examined
        opposed_checks: Word checks per poset for opposed sets
        decomposition_cap: Subtask sets tried per run
        language_cap: Most words per poset
        stats: Counters filled while searching
        should_stop: Polled between decompositions; True ends the search

    Raises:
        UnsatisfiableTask: When the automaton has no accepting state
    """
    if not nba.accepting or not nba.initial:
        raise UnsatisfiableTask("Automaton has no initial or no accepting state")

    stats = stats if stats is not None else PosetStats()
    started = time.monotonic()
    deadline = started + budget
    checker = WordChecker(nba)
    covered: Set[Tuple[Letter, ...]] = set()

    def out_of_time() -> bool:
        return time.monotonic() > deadline or bool(should_stop and should_stop())

    for run in accepting_runs(nba):
        if out_of_time():
            stats.budget_exhausted = True
            break
        stats.runs_explored += 1

        for subtasks, word in decompose_run(nba, run, decomposition_cap):
            if out_of_time():
                stats.budget_exhausted = True
                break
            stats.decompositions_tried += 1
            if word in covered:
                continue
            try:
                relaxation = relax(nba, subtasks, opposed_arity, opposed_checks,
                                   language_cap, deadline, checker)
            except (RunNotAccepting, LanguageCapExceeded) as e:
                logger.debug("Skipping decomposition of run %s: %s", list(run), e)
                continue

            letter = {s.index: s.positive for s in subtasks}
            words = {tuple(letter[i] for i in w) for w in relaxation.language}
            if words & covered:
                continue
            covered |= words

            stats.posets_found += 1
            elapsed = time.monotonic() - started
            if stats.time_to_first is None:
                stats.time_to_first = elapsed
            stats.time_to_best = elapsed

            poset = Poset(
                subtasks=tuple(
                    replace(s, selfloop_pos=relaxation.waiting[s.index][0],
                            selfloop_neg=relaxation.waiting[s.index][1])
                    for s in subtasks
                ),
                leq=relaxation.leq,
                opposed=relaxation.opposed,
                language_size=len(relaxation.language),
                source_run=tuple(run),
                id=stats.posets_found,
            )
            logger.info("Poset %d: %d subtasks, %d order pairs, %d opposed sets, %d words",
                        poset.id, len(poset.subtasks), len(poset.leq), len(poset.opposed),
                        poset.language_size)
            yield poset
    else:
        logger.info("Accepting runs exhausted after %d runs", stats.runs_explored)

    stats.words_checked = checker.checks


def compute_posets(nba: Nba, budget: float, stats: Optional[PosetStats] = None,
                   **options) -> List[Poset]:
    """All posets found within budget, best first."""
    posets = list(iter_posets(nba, budget, stats=stats, **options))
    return sorted(posets, key=Poset.rank_key)


def poset_graph(poset: Poset) -> PosetGraph:
    """Hasse diagram of the relation plus the opposed sets.

    Raises:
        CyclicRelation: When the relation has a cycle
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(poset.indices)
    graph.add_edges_from(poset.leq)
    if not nx.is_directed_acyclic_graph(graph):
        raise CyclicRelation("Relation has a cycle")
    reduced = nx.transitive_reduction(graph)
    return PosetGraph(
        nodes=tuple(poset.indices),
        edges=frozenset(reduced.edges()),
        opposed_edges=frozenset(poset.opposed),
        roots=frozenset(n for n in reduced.nodes if reduced.in_degree(n) == 0),
        labels={s.index: s.label() for s in poset.subtasks},
    )


def word_satisfies(poset: Poset, word: PosetWord, durations: Mapping[int, float],
                   tolerance: float = TOLERANCE) -> bool:
    """Check a timed word against the relation and the opposed sets.

    Ordered pairs need start(a) <= start(b); each opposed set needs one
    member finishing no later than another member starts.
    """
    starts = {idx: t for t, idx in word.entries}
    if len(starts) != len(word.entries) or set(starts) != set(poset.indices):
        raise ValueError("Word must cover every subtask exactly once")
    missing = [i for i in poset.indices if i not in durations]
    if missing:
        raise MissingDuration(f"No duration for subtasks {missing}")

    for a, b in poset.leq:
        if starts[a] > starts[b] + tolerance:
            return False
    for group in poset.opposed:
        if not any(starts[a] + durations[a] <= starts[b] + tolerance
                   for a, b in itertools.permutations(group, 2)):
            return False
    return True
