"""Tests for plan execution, synchronization messages and failure recovery."""

import unittest

from posetplan.errors import DeadlockError, IrrecoverableFailure
from posetplan.fixtures import get_fixture
from posetplan.model import Coalition
from posetplan.planner import PlanningContext, Schedule, bnb, plan
from posetplan.poset import Poset, Subtask, word_satisfies
from posetplan.simulation import (EXECUTING, START_MSG, STOP_MSG, Simulator, Snapshot,
                                  expected_message_count, noise_range, residual_poset, simulate)


def planned(fixture_name, **kwargs):
    fixture = get_fixture(fixture_name)
    result = plan(fixture.scenario, formula=fixture.formula(), hoa_text=fixture.hoa,
                  budget_poset=5.0, budget_bnb=5.0, **kwargs)
    return result.schedule, result.poset, fixture.scenario


class TestNominal(unittest.TestCase):
    """Test replay without noise or failures."""

    def test_fragment_replay(self):
        """Test the executed word satisfies the poset."""
        sched, poset, scenario = planned('toy_example3')
        trace = simulate(sched, poset, scenario)
        self.assertEqual(set(trace.windows), set(poset.indices))
        self.assertTrue(word_satisfies(poset, trace.induced_word(), trace.durations()))
        self.assertLessEqual(trace.makespan, sched.makespan + 1e-6)

    def test_message_count(self):
        """Test one message per ordered pair and per opposed set."""
        sched, poset, scenario = planned('toy_example3')
        trace = simulate(sched, poset, scenario)
        self.assertEqual(trace.message_count(), expected_message_count(poset))
        self.assertEqual(expected_message_count(poset), 3)
        kinds = [e.kind for e in trace.events]
        self.assertEqual(kinds.count(STOP_MSG), 1)
        self.assertEqual(kinds.count(START_MSG), 2)

    def test_parallel_sweeps(self):
        """Test both sweepers execute at once."""
        sched, poset, scenario = planned('toy_2x2')
        trace = simulate(sched, poset, scenario)
        self.assertAlmostEqual(trace.makespan, 10.0)
        executing = [s for s in trace.segments if s['state'] == EXECUTING]
        self.assertEqual(sorted(s['agent'] for s in executing), ['a1', 'a2'])

    def test_waiting_constraint_after_predecessor(self):
        """Test a successor's avoided region stays open until its predecessor starts."""
        solo = get_fixture('toy_2x2').scenario.without(['a2'])
        poset = Poset(
            subtasks=(Subtask(1, frozenset({'sweep_p2'})),
                      Subtask(2, frozenset({'sweep_p1'}), selfloop_neg=frozenset({'p2'}))),
            leq=frozenset({(1, 2)}),
        )
        sched = bnb(PlanningContext(poset, solo), budget=5.0).schedule
        self.assertEqual(sched.sequences, {'a1': (1, 2)})

        sim = Simulator(sched, poset, solo)
        self.assertEqual(sim._forbidden_regions(), set())
        trace = sim.run()
        self.assertEqual(trace.windows, {1: (5.0, 15.0), 2: (20.0, 30.0)})
        self.assertTrue(word_satisfies(poset, trace.induced_word(), trace.durations()))

    def test_events_sorted(self):
        """Test the event log is in time order."""
        sched, poset, scenario = planned('toy_example3')
        times = [e.time for e in simulate(sched, poset, scenario).events]
        self.assertEqual(times, sorted(times))


class TestNoise(unittest.TestCase):
    """Test noisy durations."""

    def test_seeded_runs_repeat(self):
        """Test the same seed gives the same trace."""
        sched, poset, scenario = planned('toy_example3')
        first = simulate(sched, poset, scenario, noise=noise_range(0.2), seed=7)
        second = simulate(sched, poset, scenario, noise=noise_range(0.2), seed=7)
        self.assertEqual(first.to_dict(), second.to_dict())
        self.assertTrue(word_satisfies(poset, first.induced_word(), first.durations()))

    def test_noise_range(self):
        """Test spread validation."""
        self.assertEqual(noise_range(0.1), (0.9, 1.1))
        with self.assertRaises(ValueError):
            noise_range(1.5)
        sched, poset, scenario = planned('toy_2x2')
        with self.assertRaises(ValueError):
            Simulator(sched, poset, scenario, noise=(0.0, 1.0))


class TestFailures(unittest.TestCase):
    """Test re-planning after agent failures."""

    def test_recovered_sweep(self):
        """Test the survivor takes over an interrupted sweep."""
        sched, poset, scenario = planned('toy_2x2')
        trace = simulate(sched, poset, scenario, failures=[('a2', 5.0)])
        self.assertEqual(len(trace.replans), 1)
        self.assertEqual(trace.replans[0].failed, ('a2',))
        # a1 finishes p1 at 10, travels 5 and sweeps p2 for 10
        self.assertAlmostEqual(trace.makespan, 25.0)
        self.assertTrue(word_satisfies(poset, trace.induced_word(), trace.durations()))

    def test_failure_after_work(self):
        """Test a failure after an agent's last subtask needs no re-plan."""
        sched, poset, scenario = planned('toy_2x2')
        trace = simulate(sched, poset, scenario, failures=[('a2', 15.0)])
        self.assertEqual(trace.replans, [])

    def test_irrecoverable(self):
        """Test losing a partner of a joint fix."""
        fixture = get_fixture('toy_chain')
        sched, poset, scenario = planned('toy_chain')
        with self.assertRaises(IrrecoverableFailure):
            simulate(sched, poset, scenario, failures=fixture.failures)


class TestResidual(unittest.TestCase):
    """Test residual posets."""

    def setUp(self):
        """Build a poset with an opposed pair behind a root."""
        self.poset = Poset(
            subtasks=tuple(Subtask(i, frozenset({f'sweep_p{i}'})) for i in (1, 2, 3)),
            leq=frozenset({(1, 2), (1, 3)}),
            opposed=frozenset({frozenset({2, 3})}),
        )

    def test_running_member(self):
        """Test a lone unfinished member waits for its running partner."""
        snapshot = Snapshot(12.0, {1}, {2: 20.0}, {}, {'a1'})
        residual, release, waits = residual_poset(self.poset, snapshot)
        self.assertEqual(residual.indices, [3])
        self.assertEqual(release, {3: 20.0})
        self.assertEqual(waits, {frozenset({2, 3}): (2, 3)})

    def test_unstarted_pair(self):
        """Test an untouched opposed set carries over."""
        snapshot = Snapshot(4.0, {1}, {}, {}, set())
        residual, release, waits = residual_poset(self.poset, snapshot)
        self.assertEqual(residual.opposed, frozenset({frozenset({2, 3})}))
        self.assertEqual(residual.leq, frozenset())
        self.assertEqual((release, waits), ({}, {}))


class TestDeadlock(unittest.TestCase):
    """Test deadlock reporting."""

    def test_unassigned_subtask(self):
        """Test a subtask missing from the plan."""
        poset = Poset(subtasks=(Subtask(1, frozenset({'sweep_p1'})), Subtask(2, frozenset({'sweep_p2'}))))
        sched = Schedule(
            coalition_of={1: Coalition(('a1',), (('a1', 'sweep'),))},
            starts={1: 0.0},
            durations={1: 10.0},
            regions={1: 'p1'},
            sequences={'a1': (1,), 'a2': ()},
            makespan=10.0,
        )
        with self.assertRaises(DeadlockError) as caught:
            simulate(sched, poset, get_fixture('toy_2x2').scenario)
        self.assertEqual(caught.exception.wait_for, {2: {'unassigned'}})


def run_tests():
    """Run all tests."""
    unittest.main()


if __name__ == '__main__':
    run_tests()
