"""Error hierarchy shared by every posetplan module.

Each error carries the process exit code the CLI should use when the error
escapes a command.
"""

from typing import Dict, Optional, Set


class PosetPlanError(Exception):
    """Base class for all posetplan errors."""

    exit_code = 1


class ConfigError(PosetPlanError, ValueError):
    """Invalid configuration value or option combination."""


class ParseError(PosetPlanError, ValueError):
    """Syntax error in a formula or label expression."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnknownProposition(ParseError):
    """Identifier that does not name a grounded proposition."""


class NonCoSafe(ParseError):
    """Formula outside the syntactically co-safe fragment."""


class NotPositiveNormalForm(PosetPlanError, ValueError):
    """Negation applied to something other than an atom."""


class AtomCapExceeded(PosetPlanError, ValueError):
    """Proposition universe larger than the configured cap."""


class HoaError(PosetPlanError, ValueError):
    """Malformed HOA text."""


class UnsupportedAcceptance(HoaError):
    """HOA acceptance condition other than Inf(0)."""


class AlphabetError(PosetPlanError, ValueError):
    """Letter mentions atoms outside the automaton's universe."""


class EmptyTeam(PosetPlanError, ValueError):
    """Team without agents."""


class UnsatisfiableTask(PosetPlanError):
    """Pruned automaton has no initial or no accepting state left."""

    exit_code = 2


class SupportCapExceeded(PosetPlanError):
    """Decomposability check over too many support atoms."""


class RunNotAccepting(PosetPlanError, ValueError):
    """State sequence is not an accepting run of the automaton."""


class LanguageCapExceeded(PosetPlanError):
    """Poset language enumeration hit its cap; membership is indeterminate."""

    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"Poset language exceeds {cap} words; result indeterminate")


class CyclicRelation(PosetPlanError, ValueError):
    """Less-equal relation whose transitive closure has a cycle."""


class MissingDuration(PosetPlanError, ValueError):
    """Word mentions a subtask without a known duration."""


class MultiRegionSubtask(PosetPlanError, ValueError):
    """Positive atoms of one subtask refer to different regions."""


class UnknownBehavior(PosetPlanError, ValueError):
    """Atom refers to an undeclared action or behavior."""


class InfeasibleSchedule(PosetPlanError):
    """Constraint graph has a positive cycle under every resolution."""


class InfeasibleForTeam(PosetPlanError):
    """No accepting poset can be served by the team."""

    exit_code = 3


class NoSolution(PosetPlanError):
    """Budget expired before any feasible plan was found."""

    exit_code = 4


class InstanceTooLarge(PosetPlanError, ValueError):
    """Instance exceeds the exact solver's caps."""


class DeadlockError(PosetPlanError):
    """Simulation stalled with unfinished subtasks.

    Attributes:
        wait_for: Map from a waiting subtask to what it waits for
    """

    def __init__(self, time: float, wait_for: Dict[int, Set[str]]):
        self.time = time
        self.wait_for = wait_for
        detail = "; ".join(
            f"{idx} <- {', '.join(sorted(blockers))}" for idx, blockers in sorted(wait_for.items())
        )
        super().__init__(f"Deadlock at t={time:.2f}: {detail}")


class IrrecoverableFailure(PosetPlanError):
    """Surviving agents cannot cover some unfinished subtask."""


class UnknownFixture(PosetPlanError, ValueError):
    """Fixture name not shipped with the package."""
