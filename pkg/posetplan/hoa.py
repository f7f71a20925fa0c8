"""HOA v1 import and export for state-based Büchi automata."""

import logging
import re
from typing import Dict, List, Optional, Sequence, Tuple

import pyparsing as pp

from .automaton import Guard, Nba
from .errors import HoaError, UnsupportedAcceptance
from .ltl import And, Atom, FalseFormula, Formula, Not, Or, TrueFormula


logger = logging.getLogger(__name__)

_STATE_RE = re.compile(r'^State:\s*(\d+)(?:\s+"[^"]*")?\s*(\{[\d\s]*\})?\s*$')
_EDGE_RE = re.compile(r'^\[(.*)\]\s*(\d+)\s*(\{[\d\s]*\})?\s*$')


def _label_grammar() -> pp.ParserElement:
    index = pp.Word(pp.nums)
    constant = pp.Keyword('t') | pp.Keyword('f')
    operand = index | constant

    def make_operand(toks):
        token = toks[0]
        if token == 't':
            return TrueFormula()
        if token == 'f':
            return FalseFormula()
        return ('ap', int(token))

    operand.set_parse_action(make_operand)

    def make_not(toks):
        items = list(toks[0])
        result = items[-1]
        for _ in items[:-1]:
            result = ('not', result)
        return result

    def make_binary(tag):
        def action(toks):
            items = list(toks[0])
            result = items[0]
            for operand_ in items[2::2]:
                result = (tag, result, operand_)
            return result
        return action

    return pp.infix_notation(
        operand,
        [
            (pp.Literal('!'), 1, pp.OpAssoc.RIGHT, make_not),
            (pp.Literal('&'), 2, pp.OpAssoc.LEFT, make_binary('and')),
            (pp.Literal('|'), 2, pp.OpAssoc.LEFT, make_binary('or')),
        ],
    )


_LABEL = _label_grammar()


def parse_label(text: str, aps: Sequence[str]) -> Formula:
    """Parse an HOA label expression over indexed atomic propositions."""
    try:
        tree = _LABEL.parse_string(text, parse_all=True)[0]
    except pp.ParseException as e:
        raise HoaError(f"Malformed label [{text}]: {e.msg}")

    def build(node):
        if isinstance(node, (TrueFormula, FalseFormula)):
            return node
        tag = node[0]
        if tag == 'ap':
            if node[1] >= len(aps):
                raise HoaError(f"Label refers to undeclared AP index {node[1]}")
            return Atom(aps[node[1]])
        if tag == 'not':
            return Not(build(node[1]))
        left, right = build(node[1]), build(node[2])
        return And(left, right) if tag == 'and' else Or(left, right)

    return build(tree)


def format_label(formula: Formula, index: Dict[str, int]) -> str:
    """Render a propositional formula in HOA label syntax."""
    if isinstance(formula, TrueFormula):
        return 't'
    if isinstance(formula, FalseFormula):
        return 'f'
    if isinstance(formula, Atom):
        return str(index[formula.name])
    if isinstance(formula, Not):
        inner = format_label(formula.operand, index)
        return f"!{inner}" if isinstance(formula.operand, Atom) else f"!({inner})"
    op = '&' if isinstance(formula, And) else '|'
    parts = []
    for child in (formula.left, formula.right):
        text = format_label(child, index)
        if isinstance(child, (And, Or)) and not isinstance(child, type(formula)):
            text = f"({text})"
        parts.append(text)
    return f" {op} ".join(parts)


def _split_header(text: str) -> Tuple[List[str], List[str]]:
    if '--BODY--' not in text:
        raise HoaError("Missing --BODY-- section")
    header, body = text.split('--BODY--', 1)
    if '--END--' not in body:
        raise HoaError("Missing --END-- marker")
    body = body.split('--END--', 1)[0]
    lines = lambda block: [l.strip() for l in block.strip().splitlines() if l.strip()]
    return lines(header), lines(body)


def import_hoa(text: str) -> Nba:
    """Build an Nba from HOA v1 text with Inf(0) state-based acceptance.

    Args:
        text: HOA source

    Returns:
        Nba with guards parsed from the edge labels
    """
    header, body = _split_header(text)

    if not header or not header[0].startswith('HOA:'):
        raise HoaError("Header must start with 'HOA: v1'")
    if header[0].split(':', 1)[1].strip() != 'v1':
        raise HoaError(f"Unsupported HOA version: {header[0]}")

    n_states: Optional[int] = None
    initial = set()
    aps: List[str] = []
    acceptance = None

    for line in header[1:]:
        key, _, value = line.partition(':')
        value = value.strip()
        if key == 'States':
            n_states = int(value)
        elif key == 'Start':
            if '&' in value:
                raise HoaError("Alternating start states are not supported")
            initial.add(int(value))
        elif key == 'AP':
            tokens = re.findall(r'"([^"]*)"|(\d+)', value)
            if not tokens:
                raise HoaError("Malformed AP line")
            count = int(tokens[0][1])
            aps = [name for name, _ in tokens[1:]]
            if len(aps) != count:
                raise HoaError(f"AP line declares {count} propositions but lists {len(aps)}")
        elif key == 'Acceptance':
            acceptance = ' '.join(value.split())

    if acceptance is None:
        raise HoaError("Missing Acceptance header")
    if acceptance not in ('1 Inf(0)', '1 Inf( 0 )'):
        raise UnsupportedAcceptance(f"Unsupported acceptance condition: {acceptance}")

    states: List[int] = []
    accepting = set()
    edges: Dict[Tuple[int, int], Guard] = {}
    current: Optional[int] = None

    for line in body:
        state_match = _STATE_RE.match(line)
        if state_match:
            current = int(state_match.group(1))
            states.append(current)
            if state_match.group(2) and '0' in state_match.group(2).strip('{} ').split():
                accepting.add(current)
            continue

        edge_match = _EDGE_RE.match(line)
        if edge_match is None:
            raise HoaError(f"Unsupported body line (implicit labels are not supported): {line}")
        if current is None:
            raise HoaError("Edge before any State line")
        if edge_match.group(3):
            raise UnsupportedAcceptance("Transition-based acceptance marks are not supported")

        dst = int(edge_match.group(2))
        guard = Guard(parse_label(edge_match.group(1), aps))
        key = (current, dst)
        edges[key] = edges[key] | guard if key in edges else guard

    if n_states is not None:
        states = sorted(set(states) | set(range(n_states)))
    known = set(states)
    for src, dst in edges:
        if dst not in known:
            raise HoaError(f"Edge target {dst} is not a declared state")

    nba = Nba(
        states=tuple(sorted(known)),
        initial=frozenset(initial),
        accepting=frozenset(accepting),
        edges=edges,
        atoms=tuple(aps),
    )
    logger.info("Imported HOA automaton with %d states and %d edges", len(nba.states), len(nba.edges))
    return nba


def export_hoa(nba: Nba, name: str = 'posetplan') -> str:
    """Serialize an Nba to HOA v1 text."""
    index = {ap: i for i, ap in enumerate(nba.atoms)}
    number = {q: i for i, q in enumerate(nba.states)}
    aps = ' '.join(f'"{ap}"' for ap in nba.atoms)

    lines = [
        'HOA: v1',
        f'name: "{name}"',
        f'States: {len(nba.states)}',
    ]
    lines.extend(f'Start: {number[q]}' for q in sorted(nba.initial))
    lines.extend([
        f'AP: {len(nba.atoms)} {aps}'.rstrip(),
        'acc-name: Buchi',
        'Acceptance: 1 Inf(0)',
        'properties: explicit-labels state-acc',
        '--BODY--',
    ])

    for q in nba.states:
        marker = ' {0}' if q in nba.accepting else ''
        lines.append(f'State: {number[q]}{marker}')
        for dst, guard in nba.successors(q):
            lines.append(f'[{format_label(guard.formula, index)}] {number[dst]}')

    lines.append('--END--')
    return '\n'.join(lines) + '\n'
