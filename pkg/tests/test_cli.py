"""Tests for the command line interface."""

import json
import os
import unittest

from click.testing import CliRunner

from posetplan.cli import cli, parse_failures
from posetplan.errors import ConfigError
from posetplan.fixtures import FIXTURE_DIR, get_fixture


class TestCli(unittest.TestCase):
    """Test commands end to end in a scratch directory."""

    def setUp(self):
        """Create a runner isolated from user configuration."""
        self.runner = CliRunner()
        self.env = {'POSETPLAN_CONFIG': ''}

    def invoke(self, *args):
        return self.runner.invoke(cli, list(args), env=self.env)

    def test_fixtures(self):
        """Test the fixture listing."""
        result = self.invoke('fixtures', '--format', 'json')
        self.assertEqual(result.exit_code, 0, result.output)
        names = [f['name'] for f in json.loads(result.output)]
        self.assertIn('toy_example3', names)

    def test_translate(self):
        """Test translation writes an automaton."""
        with self.runner.isolated_filesystem():
            result = self.invoke('translate', '--formula', 'F a && F b', '--out', 'out')
            self.assertEqual(result.exit_code, 0, result.output)
            with open(os.path.join('out', 'task.hoa')) as f:
                self.assertTrue(f.read().startswith('HOA: v1'))

    def test_prune(self):
        """Test the prune report."""
        with self.runner.isolated_filesystem():
            result = self.invoke('prune', '--fixture', 'toy_2x2', '--out', 'out', '--format', 'json')
            self.assertEqual(result.exit_code, 0, result.output)
            with open(os.path.join('out', 'prune_report.json')) as f:
                self.assertEqual(json.load(f)['edges_after'], 8)

    def test_posets(self):
        """Test poset mining outputs."""
        with self.runner.isolated_filesystem():
            result = self.invoke('posets', '--fixture', 'toy_example3', '--budget-poset', '5', '--out', 'out')
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertTrue(os.path.exists(os.path.join('out', 'posets.json')))
            self.assertTrue(any(name.endswith('.dot') for name in os.listdir('out')))

    def test_plan_and_simulate(self):
        """Test planning then replaying the plan."""
        with self.runner.isolated_filesystem():
            result = self.invoke('plan', '--fixture', 'toy_2x2', '--budget-poset', '5',
                                 '--budget-bnb', '5', '--out', 'out')
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertIn('incumbent=', result.output)
            for name in ('plan.json', 'gantt.csv', 'poset.dot', 'prune_report.json'):
                self.assertTrue(os.path.exists(os.path.join('out', name)), name)
            with open(os.path.join('out', 'plan.json')) as f:
                self.assertAlmostEqual(json.load(f)['makespan'], 10.0)

            result = self.invoke('simulate', '--fixture', 'toy_2x2', '--plan', 'out/plan.json',
                                 '--out', 'sim', '--format', 'json')
            self.assertEqual(result.exit_code, 0, result.output)
            summary = json.loads(result.output)
            self.assertTrue(summary['constraints_satisfied'])
            self.assertEqual(summary['replans'], 0)
            self.assertTrue(os.path.exists(os.path.join('sim', 'trace.json')))

            result = self.invoke('simulate', '--fixture', 'toy_2x2', '--plan', 'out/plan.json',
                                 '--fail', 'a2@5', '--out', 'sim', '--format', 'json')
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertEqual(json.loads(result.output)['replans'], 1)

    def test_oracle(self):
        """Test the exact comparison on a toy."""
        with self.runner.isolated_filesystem():
            result = self.invoke('oracle', '--fixture', 'toy_2x2', '--budget-bnb', '5',
                                 '--out', 'out', '--format', 'json')
            self.assertEqual(result.exit_code, 0, result.output)
            row = json.loads(result.output)['results'][0]
            self.assertAlmostEqual(row['optimum'], row['bnb'])

    def test_missing_source(self):
        """Test a plan without a task."""
        scenario = str(FIXTURE_DIR / 'toy_2x2.json')
        result = self.invoke('plan', '--scenario', scenario)
        self.assertEqual(result.exit_code, 1)
        self.assertIn('Error', result.output)

    def test_unsatisfiable_exit_code(self):
        """Test exit code 2 when pruning leaves no accepting run."""
        data = get_fixture('toy_example3').scenario.without(['f1']).to_dict()
        with self.runner.isolated_filesystem():
            with open('team.json', 'w') as f:
                json.dump(data, f)
            result = self.invoke('plan', '--scenario', 'team.json',
                                 '--hoa', str(FIXTURE_DIR / 'toy_example3.hoa'), '--out', 'out')
        self.assertEqual(result.exit_code, 2, result.output)

    def test_infeasible_exit_code(self):
        """Test exit code 3 when no subtask grouping fits one region."""
        with self.runner.isolated_filesystem():
            result = self.invoke('plan', '--fixture', 'toy_2x2', '--formula', 'F(sweep_p1 && sweep_p2)',
                                 '--budget-poset', '5', '--budget-bnb', '5', '--out', 'out')
        self.assertEqual(result.exit_code, 3, result.output)


class TestParseFailures(unittest.TestCase):
    """Test failure flag parsing."""

    def test_valid(self):
        """Test agent and time."""
        self.assertEqual(parse_failures(('f1@200', 'l1@600.5')), [('f1', 200.0), ('l1', 600.5)])

    def test_invalid(self):
        """Test malformed flags."""
        for value in ('f1', '@5', 'f1@soon'):
            with self.assertRaises(ConfigError, msg=value):
                parse_failures((value,))


def run_tests():
    """Run all tests."""
    unittest.main()


if __name__ == '__main__':
    run_tests()
