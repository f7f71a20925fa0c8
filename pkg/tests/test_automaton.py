"""Tests for guards, tableau translation, membership and HOA interop."""

import random
import unittest

from posetplan.automaton import Guard, accepts, accepts_stuttered, translate
from posetplan.errors import (AlphabetError, AtomCapExceeded, HoaError, NotPositiveNormalForm,
                              UnsupportedAcceptance)
from posetplan.fixtures import get_fixture
from posetplan.hoa import export_hoa, import_hoa, parse_label
from posetplan.ltl import And, Atom, Not, evaluate, parse


HEADER = """HOA: v1
States: 2
Start: 0
AP: 2 "a" "b"
"""


class TestGuard(unittest.TestCase):
    """Test symbolic edge guards."""

    def test_cubes_and_holds(self):
        """Test DNF cubes and letter evaluation."""
        guard = Guard(parse("a && !b || c"))
        self.assertEqual(len(guard.cubes), 2)
        self.assertTrue(guard.holds({'a'}))
        self.assertFalse(guard.holds({'a', 'b'}))
        self.assertTrue(guard.holds({'b', 'c'}))
        self.assertEqual(guard.support, ('a', 'b', 'c'))

    def test_minterms(self):
        """Test satisfying assignments over the support."""
        guard = Guard(parse("a && !b"))
        self.assertEqual(guard.minterms, frozenset({frozenset({'a'})}))

    def test_minimal_models(self):
        """Test minimal positive sets and forced negatives."""
        guard = Guard(parse("a && !b"))
        self.assertEqual(guard.minimal_models(), [(frozenset({'a'}), frozenset({'b'}))])

    def test_true_and_union(self):
        """Test the constant guard and guard disjunction."""
        self.assertTrue(Guard.true().is_true())
        union = Guard(parse("a")) | Guard(parse("b"))
        self.assertTrue(union.holds({'b'}))
        self.assertFalse(union.holds(set()))

    def test_unsatisfiable(self):
        """Test contradictory guards."""
        self.assertFalse(Guard(parse("a && !a")).is_satisfiable())


class TestTranslate(unittest.TestCase):
    """Test tableau translation."""

    def test_eventually_two_states(self):
        """Test F a gives a two-state automaton."""
        nba = translate(parse("F a"))
        self.assertEqual(len(nba.states), 2)
        self.assertEqual(len(nba.accepting), 1)
        self.assertTrue(accepts(nba, [{'a'}]))
        self.assertTrue(accepts(nba, [set(), {'a'}, set()]))
        self.assertFalse(accepts(nba, [set(), set()]))

    def test_until(self):
        """Test !a U b."""
        nba = translate(parse("!a U b"))
        self.assertTrue(accepts(nba, [set(), {'b'}]))
        self.assertFalse(accepts(nba, [{'a'}, {'b'}]))

    def test_requires_pnf(self):
        """Test that negated conjunctions are rejected."""
        with self.assertRaises(NotPositiveNormalForm):
            translate(Not(And(Atom('a'), Atom('b'))))

    def test_atom_cap(self):
        """Test the atom cap."""
        with self.assertRaises(AtomCapExceeded):
            translate(parse("F a && F b"), atom_cap=1)

    def test_letters_outside_alphabet(self):
        """Test membership with unknown atoms."""
        nba = translate(parse("F a"))
        with self.assertRaises(AlphabetError):
            accepts(nba, [{'z'}])

    def test_agrees_with_evaluator(self):
        """Test translation against the reference evaluator on random words."""
        rng = random.Random(11)
        for text in ("F(a && F b) && (!c U a)", "F(a && X !b) || F(c && F a)", "X a U b"):
            formula = parse(text)
            nba = translate(formula)
            for _ in range(150):
                word = [{x for x in 'abc' if rng.random() < 0.4} for _ in range(rng.randint(1, 5))]
                self.assertEqual(accepts(nba, word), evaluate(formula, word), f"{text} on {word}")


class TestHoa(unittest.TestCase):
    """Test HOA import and export."""

    def setUp(self):
        """Load the three-subtask automaton."""
        self.nba = import_hoa(get_fixture('toy_example3').hoa)

    def test_import_fixture(self):
        """Test states, acceptance and edges of the fixture."""
        self.assertEqual(len(self.nba.states), 5)
        self.assertEqual(self.nba.initial, frozenset({0}))
        self.assertEqual(self.nba.accepting, frozenset({4}))
        self.assertEqual(len(self.nba.edges), 10)
        self.assertEqual(self.nba.atoms, ('sweep_p21', 'mow_p21', 'scan_p21', 'p24'))

    def test_stuttered_membership(self):
        """Test subtask words on the fixture."""
        sweep, mow, scan = {'sweep_p21'}, {'mow_p21'}, {'scan_p21'}
        self.assertTrue(accepts_stuttered(self.nba, [sweep, mow, scan]))
        self.assertTrue(accepts_stuttered(self.nba, [sweep, scan, mow]))
        self.assertFalse(accepts_stuttered(self.nba, [mow, sweep, scan]))

    def test_export_import(self):
        """Test that exported text imports to the same automaton."""
        again = import_hoa(export_hoa(self.nba, name='example'))
        self.assertEqual(again.states, self.nba.states)
        self.assertEqual(again.accepting, self.nba.accepting)
        self.assertEqual(set(again.edges), set(self.nba.edges))
        for key, guard in self.nba.edges.items():
            self.assertEqual(again.edges[key].minterms, guard.minterms)

    def test_parse_label(self):
        """Test label expressions over indexed propositions."""
        self.assertEqual(parse_label("0 & !1", ['a', 'b']), And(Atom('a'), Not(Atom('b'))))
        with self.assertRaises(HoaError):
            parse_label("0 & 2", ['a', 'b'])

    def test_missing_acceptance(self):
        """Test the Acceptance header is required."""
        with self.assertRaises(HoaError):
            import_hoa(HEADER + "--BODY--\nState: 0\n[0] 1\nState: 1 {0}\n[t] 1\n--END--\n")

    def test_unsupported_acceptance(self):
        """Test generalized acceptance is rejected."""
        text = HEADER + "Acceptance: 2 Inf(0)&Inf(1)\n--BODY--\nState: 0\n[0] 1\n--END--\n"
        with self.assertRaises(UnsupportedAcceptance):
            import_hoa(text)

    def test_transition_marks_rejected(self):
        """Test transition-based acceptance is rejected."""
        text = HEADER + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n[0] 1 {0}\nState: 1\n[t] 1\n--END--\n"
        with self.assertRaises(UnsupportedAcceptance):
            import_hoa(text)

    def test_implicit_labels_rejected(self):
        """Test body lines without labels."""
        text = HEADER + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n1\nState: 1 {0}\n--END--\n"
        with self.assertRaises(HoaError):
            import_hoa(text)


def run_tests():
    """Run all tests."""
    unittest.main()


if __name__ == '__main__':
    run_tests()
