"""Büchi automata with symbolic guards, tableau translation and membership."""

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Collection, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from . import ltl
from .errors import AlphabetError, AtomCapExceeded, SupportCapExceeded
from .ltl import And, Atom, Eventually, FalseFormula, Formula, Next, Not, Or, TrueFormula, Until


logger = logging.getLogger(__name__)

Cube = Tuple[FrozenSet[str], FrozenSet[str]]
Letter = FrozenSet[str]

EMPTY_LETTER: Letter = frozenset()
MINTERM_SUPPORT_CAP = 20


def _simplify_cubes(cubes: Iterable[Cube]) -> Tuple[Cube, ...]:
    """Drop inconsistent, duplicate and subsumed cubes; deterministic order."""
    unique = {(pos, neg) for pos, neg in cubes if not pos & neg}
    kept = [
        cube for cube in unique
        if not any(other != cube and other[0] <= cube[0] and other[1] <= cube[1] for other in unique)
    ]
    return tuple(sorted(kept, key=lambda c: (len(c[0]) + len(c[1]), sorted(c[0]), sorted(c[1]))))


def to_dnf(formula: Formula) -> Tuple[Cube, ...]:
    """Disjunctive normal form of a propositional formula as (pos, neg) cubes."""
    formula = ltl.to_pnf(formula)

    def dnf(node):
        if isinstance(node, TrueFormula):
            return [(frozenset(), frozenset())]
        if isinstance(node, FalseFormula):
            return []
        if isinstance(node, Atom):
            return [(frozenset([node.name]), frozenset())]
        if isinstance(node, Not):
            return [(frozenset(), frozenset([node.operand.name]))]
        if isinstance(node, Or):
            return dnf(node.left) + dnf(node.right)
        if isinstance(node, And):
            return [
                (lp | rp, ln | rn)
                for (lp, ln), (rp, rn) in itertools.product(dnf(node.left), dnf(node.right))
                if not (lp | rp) & (ln | rn)
            ]
        raise ValueError(f"Guard must be propositional: {ltl.format_formula(node)}")

    return _simplify_cubes(dnf(formula))


def cube_formula(cube: Cube) -> Formula:
    pos, neg = cube
    literals = [Atom(a) for a in sorted(pos)] + [Not(Atom(a)) for a in sorted(neg)]
    return ltl.conjunction(literals)


@dataclass(frozen=True)
class Guard:
    """Boolean edge label. Letters are sets of true atoms; atoms outside the
    support are don't-care."""

    formula: Formula

    @classmethod
    def from_cubes(cls, cubes: Iterable[Cube]) -> 'Guard':
        simplified = _simplify_cubes(cubes)
        guard = cls(ltl.disjunction(cube_formula(c) for c in simplified))
        guard.__dict__['cubes'] = simplified
        return guard

    @classmethod
    def true(cls) -> 'Guard':
        return cls.from_cubes([(frozenset(), frozenset())])

    @cached_property
    def cubes(self) -> Tuple[Cube, ...]:
        return to_dnf(self.formula)

    @cached_property
    def support(self) -> Tuple[str, ...]:
        return tuple(sorted(ltl.atoms(self.formula)))

    @cached_property
    def minterms(self) -> FrozenSet[Letter]:
        """Satisfying assignments over the support, as sets of true atoms."""
        if len(self.support) > MINTERM_SUPPORT_CAP:
            raise SupportCapExceeded(
                f"Guard support of {len(self.support)} atoms exceeds {MINTERM_SUPPORT_CAP}"
            )
        result = set()
        for values in itertools.product((False, True), repeat=len(self.support)):
            letter = frozenset(a for a, v in zip(self.support, values) if v)
            if self.holds(letter):
                result.add(letter)
        return frozenset(result)

    def holds(self, letter: Collection[str]) -> bool:
        for pos, neg in self.cubes:
            if pos.issubset(letter) and neg.isdisjoint(letter):
                return True
        return False

    def is_satisfiable(self) -> bool:
        return bool(self.cubes)

    def is_true(self) -> bool:
        return any(not pos and not neg for pos, neg in self.cubes)

    def minimal_models(self) -> List[Cube]:
        """Minimal positive sets with the negatives they force.

        A positive set P is minimal when the letter P satisfies the guard and
        no proper subset does. An atom x is forced negative when P plus x
        no longer satisfies the guard.
        """
        candidates = {pos for pos, _ in self.cubes}
        minimal = [p for p in candidates if not any(q < p for q in candidates)]
        models = []
        for pos in sorted(minimal, key=lambda p: (len(p), sorted(p))):
            neg = frozenset(x for x in self.support if x not in pos and not self.holds(pos | {x}))
            models.append((pos, neg))
        return models

    def __or__(self, other: 'Guard') -> 'Guard':
        return Guard.from_cubes(self.cubes + other.cubes)

    def __str__(self) -> str:
        return ltl.format_formula(self.formula)


@dataclass(frozen=True)
class Nba:
    """Labeled nondeterministic Büchi automaton used in co-safe mode:
    a finite word is accepted once a run reaches an accepting state."""

    states: Tuple[int, ...]
    initial: FrozenSet[int]
    accepting: FrozenSet[int]
    edges: Mapping[Tuple[int, int], Guard]
    atoms: Tuple[str, ...]
    labels: Mapping[int, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        state_set = set(self.states)
        if not self.initial <= state_set or not self.accepting <= state_set:
            raise ValueError("Initial and accepting states must be automaton states")
        for (src, dst) in self.edges:
            if src not in state_set or dst not in state_set:
                raise ValueError(f"Edge ({src}, {dst}) leaves the state set")
        live = {key: guard for key, guard in self.edges.items() if guard.is_satisfiable()}
        object.__setattr__(self, 'edges', live)

    @cached_property
    def atom_set(self) -> FrozenSet[str]:
        return frozenset(self.atoms)

    @cached_property
    def _successors(self) -> Dict[int, List[Tuple[int, Guard]]]:
        succ = {q: [] for q in self.states}
        for (src, dst), guard in sorted(self.edges.items()):
            succ[src].append((dst, guard))
        return succ

    def successors(self, state: int) -> List[Tuple[int, Guard]]:
        return self._successors.get(state, [])

    def self_loop(self, state: int) -> Optional[Guard]:
        return self.edges.get((state, state))

    def step(self, current: Iterable[int], letter: Collection[str]) -> FrozenSet[int]:
        return frozenset(
            dst for src in current for dst, guard in self._successors.get(src, ()) if guard.holds(letter)
        )

    def to_networkx(self, self_loops: bool = True) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.states)
        for (src, dst), guard in self.edges.items():
            if self_loops or src != dst:
                graph.add_edge(src, dst, label=guard)
        return graph

    def restrict(self, keep: Iterable[int]) -> 'Nba':
        """Sub-automaton induced by the kept states."""
        keep = set(keep)
        return Nba(
            states=tuple(q for q in self.states if q in keep),
            initial=frozenset(self.initial & keep),
            accepting=frozenset(self.accepting & keep),
            edges={k: g for k, g in self.edges.items() if k[0] in keep and k[1] in keep},
            atoms=self.atoms,
            labels={q: l for q, l in self.labels.items() if q in keep},
        )

    def with_edges(self, edges: Mapping[Tuple[int, int], Guard]) -> 'Nba':
        return Nba(self.states, self.initial, self.accepting, dict(edges), self.atoms, self.labels)

    def stats(self) -> Dict[str, int]:
        return {'states': len(self.states), 'edges': len(self.edges), 'atoms': len(self.atoms)}


def _check_letter(nba: Nba, letter: Collection[str]):
    extra = set(letter) - nba.atom_set
    if extra:
        raise AlphabetError(f"Letter mentions atoms outside the universe: {sorted(extra)}")


def accepts(nba: Nba, word: Sequence[Collection[str]]) -> bool:
    """Finite-word membership by subset propagation."""
    current = frozenset(nba.initial)
    for letter in word:
        _check_letter(nba, letter)
        current = nba.step(current, letter)
        if not current:
            return False
    return bool(current & nba.accepting)


def _closure(nba: Nba, states: Iterable[int], letter: Collection[str]) -> FrozenSet[int]:
    seen = set(states)
    frontier = list(seen)
    while frontier:
        src = frontier.pop()
        for dst, guard in nba.successors(src):
            if dst not in seen and guard.holds(letter):
                seen.add(dst)
                frontier.append(dst)
    return frozenset(seen)


def idle(nba: Nba, states: Iterable[int]) -> FrozenSet[int]:
    """States reachable while nothing is asserted (empty letters)."""
    return _closure(nba, states, EMPTY_LETTER)


def stutter_step(nba: Nba, states: Iterable[int], letter: Collection[str]) -> FrozenSet[int]:
    """States reachable by one or more consecutive transitions on letter."""
    return _closure(nba, nba.step(states, letter), letter)


def reachable_sets(nba: Nba, letters: Sequence[Collection[str]],
                   start: Optional[Iterable[int]] = None) -> List[FrozenSet[int]]:
    """Waiting-state sets before each letter and after the last one."""
    current = idle(nba, nba.initial if start is None else start)
    sets = [current]
    for letter in letters:
        current = idle(nba, stutter_step(nba, current, letter))
        sets.append(current)
        if not current:
            sets.extend(frozenset() for _ in range(len(letters) + 1 - len(sets)))
            break
    return sets


def accepts_stuttered(nba: Nba, letters: Sequence[Collection[str]],
                      start: Optional[Iterable[int]] = None) -> bool:
    """Membership of a subtask word where each letter may be held for several
    steps and agents may idle between letters."""
    for letter in letters:
        _check_letter(nba, letter)
    return bool(reachable_sets(nba, letters, start)[-1] & nba.accepting)


# Tableau translation

def _expand(obligations: FrozenSet[Formula]) -> List[Tuple[Cube, FrozenSet[Formula]]]:
    """Covers of an obligation set: literals required now and obligations next."""
    covers = []

    def expand(todo: Tuple[Formula, ...], pos: FrozenSet[str], neg: FrozenSet[str],
               nxt: FrozenSet[Formula]):
        if pos & neg:
            return
        if not todo:
            covers.append(((pos, neg), nxt))
            return
        head, rest = todo[0], todo[1:]

        if isinstance(head, TrueFormula):
            expand(rest, pos, neg, nxt)
        elif isinstance(head, FalseFormula):
            return
        elif isinstance(head, Atom):
            expand(rest, pos | {head.name}, neg, nxt)
        elif isinstance(head, Not):
            expand(rest, pos, neg | {head.operand.name}, nxt)
        elif isinstance(head, And):
            expand((head.left, head.right) + rest, pos, neg, nxt)
        elif isinstance(head, Or):
            expand((head.left,) + rest, pos, neg, nxt)
            expand((head.right,) + rest, pos, neg, nxt)
        elif isinstance(head, Next):
            expand(rest, pos, neg, nxt | {head.operand})
        elif isinstance(head, Until):
            expand((head.right,) + rest, pos, neg, nxt)
            expand((head.left,) + rest, pos, neg, nxt | {head})
        else:
            expand((head.operand,) + rest, pos, neg, nxt)
            expand(rest, pos, neg, nxt | {head})

    ordered = tuple(sorted(obligations, key=ltl.format_formula))
    expand(ordered, frozenset(), frozenset(), frozenset())
    return covers


def _canonical(obligations: Iterable[Formula]) -> FrozenSet[Formula]:
    """Obligation set with conjunctions split and True dropped; empty once
    every obligation holds on the empty suffix."""
    kept = set()
    stack = list(obligations)
    while stack:
        f = stack.pop()
        if isinstance(f, And):
            stack.extend((f.left, f.right))
        elif not isinstance(f, TrueFormula):
            kept.add(f)
    kept = frozenset(kept)
    if all(ltl.nullable(f) for f in kept):
        return frozenset()
    return kept


def translate(formula: Formula, atom_cap: int = 64) -> Nba:
    """Tableau construction of an automaton accepting the finite words that
    satisfy an sc-LTL formula in positive normal form.

    States are obligation sets merged on equality. The empty set is the single
    accepting state and carries a True self-loop.

    Args:
        formula: sc-LTL formula in positive normal form
        atom_cap: Maximum number of distinct atoms

    Returns:
        Nba over the formula's atoms
    """
    ltl.require_pnf(formula)
    universe = tuple(sorted(ltl.atoms(formula)))
    if len(universe) > atom_cap:
        raise AtomCapExceeded(f"Formula uses {len(universe)} atoms; cap is {atom_cap}")

    start = _canonical([formula])
    index: Dict[FrozenSet[Formula], int] = {start: 0}
    order = [start]
    edge_cubes: Dict[Tuple[int, int], List[Cube]] = {}

    position = 0
    while position < len(order):
        current = order[position]
        src = index[current]
        position += 1

        if not current:
            edge_cubes.setdefault((src, src), []).append((frozenset(), frozenset()))
            continue

        for cube, nxt in _expand(current):
            target = _canonical(nxt)
            if target not in index:
                index[target] = len(order)
                order.append(target)
            edge_cubes.setdefault((src, index[target]), []).append(cube)

    edges = {key: Guard.from_cubes(cubes) for key, cubes in edge_cubes.items()}
    labels = {
        i: '{' + ', '.join(sorted(ltl.format_formula(f) for f in obligations)) + '}'
        for obligations, i in index.items()
    }
    accepting = frozenset(i for obligations, i in index.items() if not obligations)

    nba = Nba(
        states=tuple(range(len(order))),
        initial=frozenset([0]),
        accepting=accepting,
        edges=edges,
        atoms=universe,
        labels=labels,
    )
    logger.info("Translated formula into automaton with %d states and %d edges",
                len(nba.states), len(nba.edges))
    return nba
