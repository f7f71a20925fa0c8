"""Tests for automaton pruning."""

import itertools
import random
import unittest

from posetplan.automaton import Guard, Nba, accepts, translate
from posetplan.errors import EmptyTeam, SupportCapExceeded, UnknownProposition, UnsatisfiableTask
from posetplan.fixtures import get_fixture
from posetplan.hoa import import_hoa
from posetplan.ltl import parse
from posetplan.pruning import (PruneReport, decomposes, feasible_atom, prune, prune_decomposable,
                               prune_infeasible, prune_invalid_states)


def guard(text):
    return Guard(parse(text))


class TestFeasibility(unittest.TestCase):
    """Test pruning of edges no subgroup can realize."""

    def setUp(self):
        """Load the fragment automaton and its team."""
        fixture = get_fixture('toy_example3')
        self.nba = import_hoa(fixture.hoa)
        self.team = fixture.scenario

    def test_feasible_atoms(self):
        """Test atom feasibility against the team."""
        self.assertTrue(feasible_atom('scan_p21', self.team))
        self.assertTrue(feasible_atom('p24', self.team))
        self.assertFalse(feasible_atom('scan_p21', self.team.without(['f1'])))

    def test_unknown_atom(self):
        """Test an atom the scenario does not ground."""
        with self.assertRaises(UnknownProposition):
            feasible_atom('dance_p21', self.team)

    def test_full_team_keeps_everything(self):
        """Test nothing is removed when every atom is feasible."""
        report = PruneReport()
        pruned = prune_infeasible(self.nba, self.team, report)
        self.assertEqual(len(pruned.edges), len(self.nba.edges))
        self.assertEqual(report.infeasible_atoms, [])

    def test_scan_infeasible(self):
        """Test edges asserting scan disappear with two flyers."""
        report = PruneReport()
        pruned = prune_infeasible(self.nba, self.team.without(['f1']), report)
        self.assertEqual(report.removed_infeasible_edges, 2)
        self.assertEqual(report.infeasible_atoms, ['scan_p21'])
        self.assertNotIn((1, 2), pruned.edges)
        self.assertNotIn((3, 4), pruned.edges)
        with self.assertRaises(UnsatisfiableTask):
            prune_invalid_states(pruned)

    def test_empty_team(self):
        """Test pruning against no agents."""
        with self.assertRaises(EmptyTeam):
            prune_infeasible(self.nba, self.team.without(self.team.agent_ids))


class TestInvalidStates(unittest.TestCase):
    """Test removal of states off every accepting path."""

    def test_dead_state_removed(self):
        """Test a state that cannot reach acceptance."""
        nba = Nba(
            states=(0, 1, 2),
            initial=frozenset({0}),
            accepting=frozenset({1}),
            edges={(0, 1): guard("a"), (0, 2): guard("b"), (1, 1): Guard.true(), (2, 2): Guard.true()},
            atoms=('a', 'b'),
        )
        report = PruneReport()
        pruned = prune_invalid_states(nba, report)
        self.assertEqual(pruned.states, (0, 1))
        self.assertEqual(report.removed_invalid_states, 1)


class TestDecomposable(unittest.TestCase):
    """Test removal of edges replaceable by two-edge detours."""

    def test_conjunction_decomposes(self):
        """Test a AND b through a then b."""
        self.assertTrue(decomposes(guard("a"), guard("b"), guard("a && b")))

    def test_negation_blocks_decomposition(self):
        """Test a detour whose union violates the direct guard."""
        self.assertFalse(decomposes(guard("a"), guard("b"), guard("a && b && !c")))
        self.assertTrue(decomposes(guard("a && !c"), guard("b && !c"), guard("a && b && !c")))

    def test_support_cap(self):
        """Test the atom cap of one check."""
        with self.assertRaises(SupportCapExceeded):
            decomposes(guard("a"), guard("b"), guard("a && b"), support_cap=1)

    def test_prune_decomposable(self):
        """Test the direct edge of a diamond is removed."""
        nba = Nba(
            states=(0, 1, 2),
            initial=frozenset({0}),
            accepting=frozenset({2}),
            edges={(0, 1): guard("a"), (1, 2): guard("b"), (0, 2): guard("a && b"),
                   (0, 0): Guard.true(), (1, 1): Guard.true(), (2, 2): Guard.true()},
            atoms=('a', 'b'),
        )
        report = PruneReport()
        pruned = prune_decomposable(nba, report)
        self.assertNotIn((0, 2), pruned.edges)
        self.assertEqual(report.removed_decomposable_edges, 1)
        self.assertEqual(set(prune_decomposable(pruned).edges), set(pruned.edges))


class TestPrune(unittest.TestCase):
    """Test the full pruning pipeline."""

    def setUp(self):
        """Translate the two-sweep task."""
        self.team = get_fixture('toy_2x2').scenario
        self.nba = translate(parse("F sweep_p1 && F sweep_p2"))

    def test_report(self):
        """Test counts and percentages."""
        pruned, report = prune(self.nba, self.team)
        self.assertEqual(report.states_before, 4)
        self.assertEqual(report.edges_before, 9)
        self.assertEqual(report.removed_decomposable_edges, 1)
        self.assertEqual(report.edges_after, 8)
        self.assertEqual(report.states_after, 4)
        self.assertAlmostEqual(report.to_dict()['edge_reduction'], 11.1)
        self.assertEqual(len(report.summary_lines()), 2)

    def test_language_shrinks(self):
        """Test every word of the pruned automaton is accepted by the original."""
        pruned, _ = prune(self.nba, self.team)
        letters = [frozenset(s) for s in ([], ['sweep_p1'], ['sweep_p2'], ['sweep_p1', 'sweep_p2'])]
        for length in range(1, 4):
            for word in itertools.product(letters, repeat=length):
                if accepts(pruned, word):
                    self.assertTrue(accepts(self.nba, word))
        self.assertTrue(accepts(pruned, [{'sweep_p1'}, {'sweep_p2'}]))

    def test_unknown_proposition(self):
        """Test a task over atoms outside the scenario."""
        with self.assertRaises(UnknownProposition):
            prune(translate(parse("F zzz")), self.team)


def accepted_words(nba, letters, length):
    """Accepted words up to the given length, by prefix expansion."""
    found = []
    frontier = [((), frozenset(nba.initial))]
    for _ in range(length):
        extended = []
        for word, current in frontier:
            for letter in letters:
                states = nba.step(current, letter)
                if states:
                    extended.append((word + (letter,), states))
                    if states & nba.accepting:
                        found.append(word + (letter,))
        frontier = extended
    return found


def accepts_held(nba, word, limit):
    """Whether holding each letter for one to limit steps gives an accepted word."""
    current = frozenset(nba.initial)
    for letter in word:
        reached = frozenset()
        states = current
        for _ in range(limit):
            states = nba.step(states, letter)
            reached |= states
        current = reached
        if not current:
            return False
    return bool(current & nba.accepting)


class TestPruningProperties(unittest.TestCase):
    """Test soundness, stutter-completeness and idempotence of pruning."""

    POOL = ["true", "sweep_p1", "fix_p2", "p2", "!p2", "sweep_p1 && fix_p2",
            "sweep_p1 && !fix_p2", "fix_p2 || p2", "sweep_p1 && fix_p2 && !p2", "!sweep_p1 && p2"]
    ATOMS = ('fix_p2', 'p2', 'sweep_p1')

    def setUp(self):
        """Use the chain team with and without its second vehicle."""
        chain = get_fixture('toy_chain').scenario
        self.teams = [chain, chain.without(['g2'])]
        self.letters = [frozenset(c) for n in range(len(self.ATOMS) + 1)
                        for c in itertools.combinations(self.ATOMS, n)]

    def random_nba(self, rng):
        n = rng.randint(2, 6)
        edges = {}
        for src in range(n):
            for dst in range(n):
                if rng.random() < 0.4:
                    edges[(src, dst)] = guard(rng.choice(self.POOL))
        if rng.random() < 0.5:
            edges[(n - 1, n - 1)] = Guard.true()
        return Nba(states=tuple(range(n)), initial=frozenset({0}),
                   accepting=frozenset({n - 1}), edges=edges, atoms=self.ATOMS)

    def test_held_letter_keeps_direct_edge(self):
        """Test an edge whose letters cannot walk the detour survives."""
        nba = Nba(
            states=(0, 1, 2),
            initial=frozenset({0}),
            accepting=frozenset({2}),
            edges={(0, 1): guard("sweep_p1"), (1, 2): Guard.true(), (0, 2): Guard.true(),
                   (2, 2): Guard.true()},
            atoms=('sweep_p1',),
        )
        self.assertFalse(decomposes(guard("sweep_p1"), Guard.true(), Guard.true()))
        pruned, report = prune(nba, get_fixture('toy_2x2').scenario)
        self.assertIn((0, 2), pruned.edges)
        self.assertEqual(report.removed_decomposable_edges, 0)
        self.assertTrue(accepts(pruned, [frozenset()]))

    def test_random_automata(self):
        """Test pruned automata on random automata and teams."""
        rng = random.Random(11)
        checked = 0
        for round_ in range(500):
            nba = self.random_nba(rng)
            team = self.teams[round_ % 2]
            try:
                pruned, _ = prune(nba, team)
            except UnsatisfiableTask:
                continue
            checked += 1

            original = set(accepted_words(nba, self.letters, 4))
            for word in accepted_words(pruned, self.letters, 4):
                self.assertIn(word, original, f"{nba.edges} added {word}")

            feasible = {a for a in self.ATOMS if feasible_atom(a, team)}
            for word in original:
                if all(letter <= feasible for letter in word):
                    self.assertTrue(accepts_held(pruned, word, len(nba.states)),
                                    f"{nba.edges} lost {word}")

            again, report = prune(pruned, team)
            self.assertEqual(again.states, pruned.states)
            self.assertEqual(set(again.edges), set(pruned.edges))
            self.assertEqual(report.removed_decomposable_edges, 0)
        self.assertGreater(checked, 100)

    def test_idempotent_on_fixtures(self):
        """Test pruning a pruned automaton changes nothing."""
        fixture = get_fixture('toy_example3')
        for nba, team in [(import_hoa(fixture.hoa), fixture.scenario),
                          (translate(parse("F sweep_p1 && F sweep_p2")), get_fixture('toy_2x2').scenario)]:
            pruned, _ = prune(nba, team)
            again, report = prune(pruned, team)
            self.assertEqual(again.states, pruned.states)
            self.assertEqual(again.edges, pruned.edges)
            self.assertEqual(report.edges_before, report.edges_after)


def run_tests():
    """Run all tests."""
    unittest.main()


if __name__ == '__main__':
    run_tests()
