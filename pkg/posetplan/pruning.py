"""Automaton pruning: infeasible edges, invalid states, decomposable edges."""

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from types import SimpleNamespace
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .automaton import Guard, Nba
from .errors import EmptyTeam, SupportCapExceeded, UnknownProposition, UnsatisfiableTask
from .model import Scenario, coalitions_for, ground


logger = logging.getLogger(__name__)

SUPPORT_CAP = 20


@dataclass
class PruneReport:
    states_before: int = 0
    states_after: int = 0
    edges_before: int = 0
    edges_after: int = 0
    removed_infeasible_edges: int = 0
    removed_invalid_states: int = 0
    removed_decomposable_edges: int = 0
    restricted_guards: int = 0
    infeasible_atoms: List[str] = field(default_factory=list)

    @staticmethod
    def _reduction(before: int, after: int) -> float:
        return 100.0 * (before - after) / before if before else 0.0

    @property
    def edge_reduction(self) -> float:
        return self._reduction(self.edges_before, self.edges_after)

    @property
    def state_reduction(self) -> float:
        return self._reduction(self.states_before, self.states_after)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['edge_reduction'] = round(self.edge_reduction, 1)
        data['state_reduction'] = round(self.state_reduction, 1)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_lines(self) -> List[str]:
        return [
            f"states: {self.states_before} -> {self.states_after} "
            f"(reduced by {self.state_reduction:.1f}%)",
            f"edges: {self.edges_before} -> {self.edges_after} "
            f"(reduced by {self.edge_reduction:.1f}%)",
        ]


def feasible_atom(atom: str, team: Scenario) -> bool:
    """Whether some agent subgroup can make the atom true on its own."""
    prop = team.resolve(atom)
    if prop is None:
        raise UnknownProposition(f"Atom '{atom}' is not grounded in scenario '{team.name}'")
    single = SimpleNamespace(index=0, positive=frozenset([atom]), negative=frozenset())
    return bool(coalitions_for(ground(single, team), team))


def prune_infeasible(nba: Nba, team: Scenario,
                     report: Optional[PruneReport] = None) -> Nba:
    """Drop guard cubes that assert an atom no agent subgroup can generate.

    Edges left without a cube are removed.
    """
    if not team.agents:
        raise EmptyTeam("Cannot prune against a team with no agents")

    positive_atoms = sorted({a for g in nba.edges.values() for pos, _ in g.cubes for a in pos})
    infeasible = frozenset(a for a in positive_atoms if not feasible_atom(a, team))

    edges = {}
    removed = restricted = 0
    for key, guard in nba.edges.items():
        cubes = [c for c in guard.cubes if not c[0] & infeasible]
        if not cubes:
            removed += 1
        elif len(cubes) < len(guard.cubes):
            restricted += 1
            edges[key] = Guard.from_cubes(cubes)
        else:
            edges[key] = guard

    logger.debug("Feasibility pruning: %d infeasible atoms, %d edges removed, %d restricted",
                 len(infeasible), removed, restricted)
    if report is not None:
        report.removed_infeasible_edges += removed
        report.restricted_guards += restricted
        report.infeasible_atoms = sorted(set(report.infeasible_atoms) | infeasible)
    return nba.with_edges(edges)


def prune_invalid_states(nba: Nba, report: Optional[PruneReport] = None) -> Nba:
    """Keep only states reachable from an initial state that can reach an
    accepting state.

    Raises:
        UnsatisfiableTask: When no initial or no accepting state survives
    """
    graph = nba.to_networkx(self_loops=False)
    forward = set(nba.initial)
    for q in nba.initial:
        forward |= nx.descendants(graph, q)
    backward = set(nba.accepting)
    for q in nba.accepting:
        backward |= nx.ancestors(graph, q)

    pruned = nba.restrict(forward & backward)
    logger.debug("Invalid-state pruning removed %d states", len(nba.states) - len(pruned.states))
    if report is not None:
        report.removed_invalid_states += len(nba.states) - len(pruned.states)

    if not pruned.initial or not pruned.accepting:
        raise UnsatisfiableTask("No accepting state is reachable; the task cannot be satisfied")
    return pruned


def decomposes(ik: Guard, kj: Guard, ij: Guard, support_cap: int = SUPPORT_CAP) -> bool:
    """Whether edge ij can be replaced by the detour through ik then kj.

    Both checks run over the union of the three supports:

    - every union of a letter of ik and a letter of kj satisfies ij;
    - every letter of ij satisfies ik and kj, so a letter that fired ij walks
      the detour when it is held for one extra step.

    For a cube pair (a, b) the unions are exactly the letters containing
    a.pos | b.pos and avoiding a.neg & b.neg; the remaining atoms are free.
    """
    union = sorted(set(ik.support) | set(kj.support) | set(ij.support))
    if len(union) > support_cap:
        raise SupportCapExceeded(f"Decomposability check over {len(union)} atoms exceeds {support_cap}")

    for (a_pos, a_neg), (b_pos, b_neg) in itertools.product(ik.cubes, kj.cubes):
        forced_true = a_pos | b_pos
        forced_false = a_neg & b_neg
        free = [x for x in ij.support if x not in forced_true and x not in forced_false]
        for values in itertools.product((False, True), repeat=len(free)):
            letter = forced_true | {x for x, v in zip(free, values) if v}
            if not ij.holds(letter):
                return False

    for pos, neg in ij.cubes:
        free = [x for x in union if x not in pos and x not in neg]
        for values in itertools.product((False, True), repeat=len(free)):
            letter = pos | {x for x, v in zip(free, values) if v}
            if not (ik.holds(letter) and kj.holds(letter)):
                return False
    return True


def prune_decomposable(nba: Nba, report: Optional[PruneReport] = None,
                       support_cap: int = SUPPORT_CAP) -> Nba:
    """Remove edges that can be replaced by a two-edge detour through another state.

    Edges are visited in sorted order and each check sees the removals made
    before it, so every removed edge is still covered by surviving edges.
    """
    edges = dict(nba.edges)
    removed = 0
    for (i, j) in sorted(nba.edges):
        if i == j:
            continue
        ij = edges[(i, j)]
        for k in sorted({dst for (src, dst) in edges if src == i}):
            if k in (i, j) or (k, j) not in edges:
                continue
            if decomposes(edges[(i, k)], edges[(k, j)], ij, support_cap):
                logger.debug("Edge %d->%d decomposes through %d", i, j, k)
                del edges[(i, j)]
                removed += 1
                break

    if report is not None:
        report.removed_decomposable_edges += removed
    return nba.with_edges(edges)


def prune(nba: Nba, team: Scenario, support_cap: int = SUPPORT_CAP) -> Tuple[Nba, PruneReport]:
    """Run feasibility, validity, decomposability and validity pruning in turn.

    Args:
        nba: Automaton of the task
        team: Scenario whose agents decide feasibility
        support_cap: Atom cap of one decomposability check

    Returns:
        Pruned automaton and the report of what was removed
    """
    report = PruneReport(
        states_before=len(nba.states),
        edges_before=len(nba.edges),
    )
    pruned = prune_infeasible(nba, team, report)
    pruned = prune_invalid_states(pruned, report)
    pruned = prune_decomposable(pruned, report, support_cap)
    pruned = prune_invalid_states(pruned, report)

    report.states_after = len(pruned.states)
    report.edges_after = len(pruned.edges)
    logger.info("Pruned automaton from %d/%d to %d/%d states/edges",
                report.states_before, report.edges_before, report.states_after, report.edges_after)
    return pruned, report
