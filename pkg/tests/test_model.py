"""Tests for the scenario model and grounding."""

import json
import math
import os
import tempfile
import unittest
from types import SimpleNamespace

from posetplan.errors import EmptyTeam, MultiRegionSubtask, UnknownBehavior
from posetplan.fixtures import get_fixture
from posetplan.model import (Coalition, PropositionKind, Scenario, coalitions_for, ground,
                             load_scenario, travel_time)


def subtask(index, positive, negative=(), selfloop_neg=()):
    return SimpleNamespace(index=index, positive=frozenset(positive), negative=frozenset(negative),
                           selfloop_neg=frozenset(selfloop_neg))


class TestScenario(unittest.TestCase):
    """Test scenario loading and proposition resolution."""

    def setUp(self):
        """Load the twelve-agent farm."""
        self.scenario = get_fixture('pv_farm_12').scenario

    def test_team_composition(self):
        """Test agent counts per type."""
        types = [a.type_label for a in self.scenario.agents]
        self.assertEqual(len(types), 12)
        self.assertEqual(types.count('Vf'), 6)
        self.assertEqual(types.count('Vl'), 3)
        self.assertEqual(types.count('Vs'), 3)

    def test_resolve(self):
        """Test classification of atom names."""
        region = self.scenario.resolve('p24')
        self.assertEqual(region.kind, PropositionKind.REGION)
        collab = self.scenario.resolve('repair_p3')
        self.assertEqual(collab.kind, PropositionKind.COLLAB_ACTION)
        self.assertEqual((collab.action, collab.region), ('repair', 'p3'))
        local = self.scenario.resolve('sweep_p27')
        self.assertEqual(local.kind, PropositionKind.LOCAL_ACTION)
        self.assertIsNone(self.scenario.resolve('dance_p3'))
        self.assertIsNone(self.scenario.resolve('sweep_p99'))
        self.assertIn('temp_t4', self.scenario)

    def test_synthesized_travel(self):
        """Test travel times from coordinates, speed and metric."""
        flyer = self.scenario.agent('f1')
        ground_agent = self.scenario.agent('s1')
        # p1 (40, 40) to p2 (80, 40): 40 m
        self.assertAlmostEqual(travel_time(flyer, 'p1', 'p2'), 4.0)
        self.assertAlmostEqual(travel_time(ground_agent, 'p1', 'p2'), 10.0)
        # b (0, 0) to p1: euclidean 56.57 m, manhattan 80 m
        self.assertAlmostEqual(flyer.travel_time('b', 'p1'), 5.66, places=2)
        self.assertAlmostEqual(ground_agent.travel_time('b', 'p1'), 20.0)
        self.assertEqual(flyer.travel_time('p5', 'p5'), 0.0)

    def test_local_durations(self):
        """Test action durations."""
        self.assertEqual(self.scenario.local_durations['sweep'], 190)
        self.assertEqual(self.scenario.local_durations['temp'], 10)
        self.assertEqual(self.scenario.behaviors['repair'].duration, 576)

    def test_without_and_relocated(self):
        """Test residual teams."""
        smaller = self.scenario.without(['f1', 's1'])
        self.assertEqual(len(smaller.agents), 10)
        self.assertNotIn('f1', smaller.agent_ids)
        moved = smaller.relocated({'f2': 'p7'})
        self.assertEqual(moved.agent('f2').initial_region, 'p7')
        self.assertEqual(moved.agent('f3').initial_region, 'b')

    def test_dict_round_trip(self):
        """Test writing and reloading a scenario."""
        with tempfile.NamedTemporaryFile('w', suffix='.json', delete=False) as f:
            json.dump(self.scenario.to_dict(), f)
            path = f.name
        try:
            again = load_scenario(path)
        finally:
            os.unlink(path)
        self.assertEqual(again.agent_ids, self.scenario.agent_ids)
        self.assertAlmostEqual(again.travel_time('s2', 'p3', 't5'),
                               self.scenario.travel_time('s2', 'p3', 't5'))

    def test_explicit_distances(self):
        """Test per-agent distance triples and unreachable regions."""
        scenario = Scenario.from_dict({
            'regions': [{'name': 'p1'}, {'name': 'p2'}, {'name': 'p3'}],
            'agents': [{'id': 'a', 'initial': 'p1', 'local_actions': {'sweep': 5},
                        'distances': [['p1', 'p2', 3]]}],
        })
        self.assertEqual(scenario.travel_time('a', 'p2', 'p1'), 3.0)
        self.assertTrue(math.isinf(scenario.travel_time('a', 'p1', 'p3')))

    def test_duplicate_agents_rejected(self):
        """Test agent id uniqueness."""
        with self.assertRaises(ValueError):
            Scenario.from_dict({
                'regions': [{'name': 'p1'}],
                'agents': [{'id': 'a', 'initial': 'p1'}, {'id': 'a', 'initial': 'p1'}],
            })


class TestGrounding(unittest.TestCase):
    """Test service requirements and coalitions."""

    def setUp(self):
        """Load the twelve-agent farm."""
        self.scenario = get_fixture('pv_farm_12').scenario

    def test_collaborative_requirement(self):
        """Test repair needs two small and one large vehicle."""
        req = ground(subtask(1, {'repair_p3'}, {'scan_p3'}), self.scenario)
        self.assertEqual(req.region, 'p3')
        self.assertEqual(req.needed, ('repair_l', 'repair_s', 'repair_s'))
        self.assertEqual(req.participant_count, 3)
        self.assertEqual(req.duration, 576)
        self.assertEqual(req.work, 3 * 576)

    def test_pure_presence(self):
        """Test a region atom needs one visitor."""
        req = ground(subtask(2, {'p18'}), self.scenario)
        self.assertTrue(req.pure_presence)
        self.assertEqual(req.participant_count, 1)
        self.assertEqual(req.duration, 0.0)
        self.assertEqual(len(coalitions_for(req, self.scenario)), 12)

    def test_forbidden_regions(self):
        """Test negative region literals become forbidden regions."""
        req = ground(subtask(3, {'fix_t5'}, {'p18'}, {'p24'}), self.scenario)
        self.assertEqual(req.forbidden_regions, frozenset({'p18'}))
        self.assertEqual(req.waiting_forbidden, frozenset({'p24'}))

    def test_multi_region(self):
        """Test a subtask spanning two regions."""
        with self.assertRaises(MultiRegionSubtask):
            ground(subtask(4, {'sweep_p1', 'sweep_p2'}), self.scenario)

    def test_unknown_behavior(self):
        """Test an unresolvable atom."""
        with self.assertRaises(UnknownBehavior):
            ground(subtask(5, {'dance_p1'}), self.scenario)

    def test_coalitions(self):
        """Test coalition enumeration and capability matching."""
        scan = coalitions_for(ground(subtask(1, {'scan_p34'}), self.scenario), self.scenario)
        self.assertEqual(len(scan), 20)
        repair = coalitions_for(ground(subtask(2, {'repair_p3'}), self.scenario), self.scenario)
        self.assertEqual(len(repair), 9)
        for coalition in repair:
            types = sorted(self.scenario.agent(m).type_label for m in coalition.members)
            self.assertEqual(types, ['Vl', 'Vs', 'Vs'])
            self.assertEqual(len(set(coalition.members)), 3)
        wash = coalitions_for(ground(subtask(3, {'wash_p21'}), self.scenario), self.scenario)
        self.assertEqual(len(wash), 36)

    def test_coalition_order(self):
        """Test coalitions follow agent ids, not declaration order."""
        agents = [{'id': name, 'initial': 'p1', 'local_actions': {'sweep': 5}} for name in ('c', 'a', 'b')]
        orders = []
        for declared in (agents, agents[::-1]):
            team = Scenario.from_dict({'regions': [{'name': 'p1'}], 'agents': declared})
            req = ground(subtask(1, {'sweep_p1'}), team)
            orders.append([c.members for c in coalitions_for(req, team)])
        self.assertEqual(orders[0], [('a',), ('b',), ('c',)])
        self.assertEqual(orders[0], orders[1])

    def test_empty_team(self):
        """Test coalitions of a team with no agents."""
        req = ground(subtask(1, {'sweep_p1'}), self.scenario)
        with self.assertRaises(EmptyTeam):
            coalitions_for(req, self.scenario.without(self.scenario.agent_ids))

    def test_coalition_dict(self):
        """Test coalition serialization."""
        coalition = Coalition(('f1', 'f2'), (('f1', 'wash'), ('f2', 'wash')))
        self.assertEqual(Coalition.from_dict(coalition.to_dict()), coalition)
        self.assertIn('f1', coalition)
        self.assertEqual(len(coalition), 2)


def run_tests():
    """Run all tests."""
    unittest.main()


if __name__ == '__main__':
    run_tests()
