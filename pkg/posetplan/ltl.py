"""sc-LTL front end: abstract syntax, parser, printer, normal form, evaluator.

Concrete syntax::

    formula := term ( "U" term )*
    term    := factor ( ("&&" | "||") factor )*
    factor  := "!" factor | "F" factor | "X" factor | "(" formula ")" | atom
    atom    := [a-z][a-z0-9_]* | "true" | "false"

Precedence is unary > && > || > U, with U right-associative.
"""

import logging
from dataclasses import dataclass, field
from typing import Container, FrozenSet, Iterable, Optional, Sequence

import pyparsing as pp

from .errors import NonCoSafe, NotPositiveNormalForm, ParseError, UnknownProposition


logger = logging.getLogger(__name__)

pp.ParserElement.enable_packrat()

RESERVED = frozenset({'true', 'false'})


class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueFormula(Formula):
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FalseFormula(Formula):
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Atom(Formula):
    name: str
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    pos: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula
    pos: Optional[int] = field(default=None, compare=False, repr=False)


TRUE = TrueFormula()
FALSE = FalseFormula()

_BINARY = (And, Or, Until)
_UNARY = (Not, Next, Eventually)


def conjunction(parts: Iterable[Formula]) -> Formula:
    """Left-nested And of parts (True when empty)."""
    result = None
    for part in parts:
        result = part if result is None else And(result, part)
    return TRUE if result is None else result


def disjunction(parts: Iterable[Formula]) -> Formula:
    """Left-nested Or of parts (False when empty)."""
    result = None
    for part in parts:
        result = part if result is None else Or(result, part)
    return FALSE if result is None else result


# Grammar

def _atom_action(s, loc, toks):
    name = toks[0]
    if name == 'true':
        return TrueFormula(pos=loc)
    if name == 'false':
        return FalseFormula(pos=loc)
    return Atom(name, pos=loc)


def _unary_action(s, loc, toks):
    items = list(toks[0])
    result = items[-1]
    for op in reversed(items[:-1]):
        if op == 'G':
            raise NonCoSafe("Always operator 'G' is not allowed in sc-LTL",
                            pp.lineno(loc, s), pp.col(loc, s))
        if op == '!':
            result = Not(result, pos=loc)
        elif op == 'F':
            result = Eventually(result, pos=loc)
        else:
            result = Next(result, pos=loc)
    return result


def _left_action(node_type):
    def action(s, loc, toks):
        items = list(toks[0])
        result = items[0]
        for operand in items[2::2]:
            result = node_type(result, operand, pos=loc)
        return result
    return action


def _until_action(s, loc, toks):
    items = list(toks[0])
    operands = items[0::2]
    result = operands[-1]
    for operand in reversed(operands[:-1]):
        result = Until(operand, result, pos=loc)
    return result


def _build_grammar() -> pp.ParserElement:
    identifier = pp.Regex(r"[a-z][a-z0-9_]*").set_name("proposition")
    identifier.set_parse_action(_atom_action)

    unary_op = pp.Literal('!') | pp.Keyword('F') | pp.Keyword('X') | pp.Keyword('G')

    return pp.infix_notation(
        identifier,
        [
            (unary_op, 1, pp.OpAssoc.RIGHT, _unary_action),
            (pp.Literal('&&'), 2, pp.OpAssoc.LEFT, _left_action(And)),
            (pp.Literal('||'), 2, pp.OpAssoc.LEFT, _left_action(Or)),
            (pp.Keyword('U'), 2, pp.OpAssoc.RIGHT, _until_action),
        ],
    )


_GRAMMAR = _build_grammar()


def parse(text: str, propositions: Optional[Container[str]] = None) -> Formula:
    """Parse sc-LTL text into a formula.

    Args:
        text: Formula source
        propositions: Known proposition names; None skips the check

    Returns:
        Formula AST with source offsets on its nodes

    Raises:
        ParseError: On syntax errors, with line and column
        NonCoSafe: When the Always operator is used
        UnknownProposition: When an atom is not in propositions
    """
    if not text or not text.strip():
        raise ParseError("Empty formula", 1, 1)

    try:
        result = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseException as e:
        raise ParseError(f"Syntax error: {e.msg}", e.lineno, e.col)

    formula = result[0]

    if propositions is not None:
        for node in _walk(formula):
            if isinstance(node, Atom) and node.name not in propositions:
                line = pp.lineno(node.pos or 0, text)
                column = pp.col(node.pos or 0, text)
                raise UnknownProposition(f"Unknown proposition '{node.name}'", line, column)

    return formula


def _walk(formula: Formula):
    stack = [formula]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, _BINARY):
            stack.extend((node.right, node.left))
        elif isinstance(node, _UNARY):
            stack.append(node.operand)


def atoms(formula: Formula) -> FrozenSet[str]:
    """Names of all atoms occurring in formula."""
    return frozenset(node.name for node in _walk(formula) if isinstance(node, Atom))


# Printing

_PRECEDENCE = {Until: 1, Or: 2, And: 3}
_UNARY_PREC = 4
_ATOMIC_PREC = 5
_SYMBOL = {And: '&&', Or: '||', Until: 'U'}


def _prec(formula: Formula) -> int:
    if isinstance(formula, _BINARY):
        return _PRECEDENCE[type(formula)]
    if isinstance(formula, _UNARY):
        return _UNARY_PREC
    return _ATOMIC_PREC


def format_formula(formula: Formula) -> str:
    """Render formula in the concrete syntax with minimal parentheses."""
    if isinstance(formula, TrueFormula):
        return 'true'
    if isinstance(formula, FalseFormula):
        return 'false'
    if isinstance(formula, Atom):
        return formula.name

    if isinstance(formula, _UNARY):
        symbol = {Not: '!', Next: 'X ', Eventually: 'F '}[type(formula)]
        inner = format_formula(formula.operand)
        if _prec(formula.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"{symbol}{inner}"

    level = _prec(formula)
    left = format_formula(formula.left)
    right = format_formula(formula.right)
    right_assoc = isinstance(formula, Until)

    if _prec(formula.left) < level or (right_assoc and _prec(formula.left) == level):
        left = f"({left})"
    if _prec(formula.right) < level or (not right_assoc and _prec(formula.right) == level):
        right = f"({right})"
    return f"{left} {_SYMBOL[type(formula)]} {right}"


# Normal form

def is_literal(formula: Formula) -> bool:
    return isinstance(formula, Atom) or (isinstance(formula, Not) and isinstance(formula.operand, Atom))


def is_propositional(formula: Formula) -> bool:
    """True when formula uses no temporal operator."""
    return not any(isinstance(node, (Next, Until, Eventually)) for node in _walk(formula))


def is_pnf(formula: Formula) -> bool:
    """True when every negation applies to an atom."""
    return all(isinstance(node.operand, Atom) for node in _walk(formula) if isinstance(node, Not))


def to_pnf(formula: Formula) -> Formula:
    """Push negations to atoms with De Morgan and double negation.

    Raises:
        NonCoSafe: When a temporal operator is negated
    """
    return _pnf(formula, negate=False)


def _pnf(formula: Formula, negate: bool) -> Formula:
    if isinstance(formula, TrueFormula):
        return FALSE if negate else TRUE
    if isinstance(formula, FalseFormula):
        return TRUE if negate else FALSE
    if isinstance(formula, Atom):
        return Not(formula) if negate else formula
    if isinstance(formula, Not):
        return _pnf(formula.operand, not negate)
    if isinstance(formula, And):
        node = Or if negate else And
        return node(_pnf(formula.left, negate), _pnf(formula.right, negate))
    if isinstance(formula, Or):
        node = And if negate else Or
        return node(_pnf(formula.left, negate), _pnf(formula.right, negate))

    if negate:
        raise NonCoSafe(f"Negated temporal operator in '{format_formula(formula)}' is not sc-LTL")
    if isinstance(formula, Next):
        return Next(_pnf(formula.operand, False))
    if isinstance(formula, Eventually):
        return Eventually(_pnf(formula.operand, False))
    return Until(_pnf(formula.left, False), _pnf(formula.right, False))


def require_pnf(formula: Formula):
    if not is_pnf(formula):
        raise NotPositiveNormalForm(f"Formula is not in positive normal form: {format_formula(formula)}")


# Semantics

def holds(formula: Formula, letter: Container[str]) -> bool:
    """Evaluate a propositional formula on a set of true atoms."""
    if isinstance(formula, Atom):
        return formula.name in letter
    if isinstance(formula, Not):
        return not holds(formula.operand, letter)
    if isinstance(formula, And):
        return holds(formula.left, letter) and holds(formula.right, letter)
    if isinstance(formula, Or):
        return holds(formula.left, letter) or holds(formula.right, letter)
    if isinstance(formula, TrueFormula):
        return True
    if isinstance(formula, FalseFormula):
        return False
    raise ValueError(f"Temporal operator in propositional context: {format_formula(formula)}")


def nullable(formula: Formula, negate: bool = False) -> bool:
    """Whether formula holds on the empty suffix (strong finite semantics)."""
    if isinstance(formula, TrueFormula):
        return not negate
    if isinstance(formula, FalseFormula):
        return negate
    if isinstance(formula, Atom):
        return False
    if isinstance(formula, Not):
        return nullable(formula.operand, not negate)
    if isinstance(formula, And):
        combine = any if negate else all
        return combine((nullable(formula.left, negate), nullable(formula.right, negate)))
    if isinstance(formula, Or):
        combine = all if negate else any
        return combine((nullable(formula.left, negate), nullable(formula.right, negate)))
    if negate or isinstance(formula, Next):
        return False
    if isinstance(formula, Until):
        return nullable(formula.right)
    return nullable(formula.operand)


def evaluate(formula: Formula, word: Sequence[Container[str]]) -> bool:
    """Reference evaluator: does the finite word satisfy formula?"""
    memo = {}

    def sat(node: Formula, i: int) -> bool:
        if i == len(word):
            return nullable(node)
        key = (id(node), i)
        if key in memo:
            return memo[key]

        if isinstance(node, TrueFormula):
            value = True
        elif isinstance(node, FalseFormula):
            value = False
        elif isinstance(node, Atom):
            value = node.name in word[i]
        elif isinstance(node, Not):
            value = not sat(node.operand, i)
        elif isinstance(node, And):
            value = sat(node.left, i) and sat(node.right, i)
        elif isinstance(node, Or):
            value = sat(node.left, i) or sat(node.right, i)
        elif isinstance(node, Next):
            value = sat(node.operand, i + 1)
        elif isinstance(node, Eventually):
            value = sat(node.operand, i) or sat(node, i + 1)
        else:
            value = sat(node.right, i) or (sat(node.left, i) and sat(node, i + 1))

        memo[key] = value
        return value

    return sat(formula, 0)
