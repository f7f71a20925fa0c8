"""Tests for the exhaustive reference solver."""

import itertools
import random
import unittest

from posetplan.automaton import translate
from posetplan.errors import InfeasibleSchedule, InstanceTooLarge
from posetplan.fixtures import get_fixture
from posetplan.hoa import import_hoa
from posetplan.ltl import parse
from posetplan.oracle import ExactInstance, exact_optimum
from posetplan.planner import (BnbStats, PlanningContext, bnb, expand, lower_bound, upper_bound,
                               validate_schedule)
from posetplan.poset import Poset, Subtask, compute_posets
from posetplan.pruning import prune


def first_poset(fixture_name, formula):
    scenario = get_fixture(fixture_name).scenario
    nba, _ = prune(translate(parse(formula)), scenario)
    return compute_posets(nba, budget=5.0)[0], scenario


class TestExactOptimum(unittest.TestCase):
    """Test the oracle against branch and bound."""

    CASES = [
        ('toy_2x2', "F sweep_p1 && F sweep_p2"),
        ('toy_2x2', "F(sweep_p1 && F sweep_p2)"),
        ('toy_2x2', "F(sweep_p1 && X sweep_p2)"),
        ('toy_chain', "F(sweep_p1 && F(fix_p2 && F sweep_p3))"),
        ('toy_chain', "F sweep_p3 && F fix_p1"),
    ]

    def test_bnb_matches_oracle(self):
        """Test exhausted searches reach the exact optimum."""
        for name, formula in self.CASES:
            poset, scenario = first_poset(name, formula)
            sched, optimum = exact_optimum(ExactInstance(poset, scenario))
            ctx = PlanningContext(poset, scenario)
            self.assertEqual(validate_schedule(ctx, sched), [], formula)
            incumbent = bnb(ctx, budget=20.0)
            self.assertAlmostEqual(incumbent.makespan, optimum, places=6, msg=formula)

    def random_poset(self, rng):
        pool = ['sweep_p1', 'sweep_p2', 'sweep_p3', 'fix_p2', 'fix_p3', 'p2']
        n = rng.randint(2, 4)
        subtasks = tuple(Subtask(i, frozenset({rng.choice(pool)})) for i in range(1, n + 1))
        pairs = list(itertools.combinations(range(1, n + 1), 2))
        leq = frozenset(p for p in pairs if rng.random() < 0.3)
        opposed = frozenset(frozenset(p) for p in pairs if rng.random() < 0.3)
        return Poset(subtasks=subtasks, leq=leq, opposed=opposed)

    def test_random_instances(self):
        """Test bounds on search nodes and exhausted search on random small posets."""
        rng = random.Random(3)
        team = get_fixture('toy_chain').scenario
        for _ in range(300):
            poset = self.random_poset(rng)
            instance = ExactInstance(poset, team)
            try:
                _, optimum = exact_optimum(instance)
            except InfeasibleSchedule:
                continue

            contexts = {mode: PlanningContext(poset, team, lb_mode=mode) for mode in ('min', 'max', 'alt')}
            ctx = contexts['min']
            frontier, visited = [ctx.root()], 0
            while frontier and visited < 40:
                node = frontier.pop(0)
                visited += 1
                try:
                    _, below = exact_optimum(instance, node)
                except InfeasibleSchedule:
                    continue
                for mode, mode_ctx in contexts.items():
                    self.assertLessEqual(lower_bound(mode_ctx, node), below + 1e-6, f"{mode} {poset}")
                try:
                    self.assertGreaterEqual(upper_bound(ctx, node).makespan, below - 1e-6, str(poset))
                except InfeasibleSchedule:
                    pass
                frontier.extend(expand(ctx, node))

            stats = BnbStats()
            incumbent = bnb(ctx, budget=10.0, stats=stats)
            self.assertTrue(stats.exhausted)
            self.assertAlmostEqual(incumbent.makespan, optimum, places=6, msg=str(poset))

    def test_opposed_pair(self):
        """Test the oracle serializes an opposed pair."""
        poset = Poset(
            subtasks=(Subtask(1, frozenset({'sweep_p1'})), Subtask(2, frozenset({'sweep_p2'}))),
            opposed=frozenset({frozenset({1, 2})}),
        )
        sched, optimum = exact_optimum(ExactInstance(poset, get_fixture('toy_2x2').scenario))
        self.assertAlmostEqual(optimum, 20.0)
        self.assertEqual(len(sched.opposed_resolution), 1)

    def test_partial_node(self):
        """Test completing a partial assignment never beats the global optimum."""
        poset, scenario = first_poset('toy_2x2', "F sweep_p1 && F sweep_p2")
        instance = ExactInstance(poset, scenario)
        _, optimum = exact_optimum(instance)
        ctx = instance.context()
        for child in expand(ctx, ctx.root()):
            _, completed = exact_optimum(instance, child)
            self.assertGreaterEqual(completed, optimum - 1e-9)

    def test_horizon(self):
        """Test the horizon bounds the optimum."""
        poset, scenario = first_poset('toy_chain', "F(sweep_p1 && F(fix_p2 && F sweep_p3))")
        instance = ExactInstance(poset, scenario)
        self.assertGreaterEqual(instance.horizon, exact_optimum(instance)[1])
        self.assertIn('poset', instance.to_dict())


class TestCaps(unittest.TestCase):
    """Test instance size caps."""

    def test_too_many_agents(self):
        """Test the farm team is rejected."""
        poset = Poset(subtasks=(Subtask(1, frozenset({'sweep_p1'})),))
        with self.assertRaises(InstanceTooLarge):
            ExactInstance(poset, get_fixture('pv_farm_12').scenario)

    def test_four_agent_fragment(self):
        """Test the fragment team of four is rejected."""
        fixture = get_fixture('toy_example3')
        nba, _ = prune(import_hoa(fixture.hoa), fixture.scenario)
        poset = compute_posets(nba, budget=5.0)[0]
        with self.assertRaises(InstanceTooLarge):
            ExactInstance(poset, fixture.scenario)

    def test_too_many_subtasks(self):
        """Test the subtask cap."""
        poset = Poset(subtasks=tuple(Subtask(i, frozenset({'sweep_p1'})) for i in range(1, 7)))
        with self.assertRaises(InstanceTooLarge):
            ExactInstance(poset, get_fixture('toy_2x2').scenario)


def run_tests():
    """Run all tests."""
    unittest.main()


if __name__ == '__main__':
    run_tests()
