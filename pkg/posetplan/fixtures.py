"""Shipped scenarios and tasks: the solar farm missions, the lab mission and toy instances."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .errors import UnknownFixture
from .ltl import Formula, parse
from .model import Scenario, Workspace, load_scenario


logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).parent / 'scenarios'

PHI1 = ("F(repair_p3 && !scan_p3 && F scan_p3) && F(wash_p21 && F mow_p21 && F scan_p21) && "
        "F(sweep_p21 && !wash_p21 && F mow_p21) && F(fix_t5 && !p18) && (!p24 U sweep_p27) && "
        "F(wash_p34 && X scan_p34)")
PHI2 = ("F(wash_p11 && !scan_p11 && F scan_p11 && F((mow_p11 && !wash_p11) && F(sweep_p11 && !mow_p11))) && "
        "F(temp_p25 && F repair_p25 && F((scan_p25 && !wash_p25) && F(sweep_p25 && !p26))) && F temp_t4")
PHI3 = ("F(temp_p25 && F repair_p25 && F((scan_p25 && !wash_p25) && F(sweep_p25 && !p26))) && F temp_t4 && "
        "F(sweep_p8 && F wash_p8) && F(repair_p4 && X !p4) && F(sweep_p8 && !wash_p8 && F scan_p8) && "
        "(!temp_t4 U fix_t4)")
PHI4 = "F(repair_p2 && !scan_p2 && F scan_p2 && F(sweep_p2 && !repair_p2)) && F fix_t1 && F scan_p3 && F wash_p5"

PV_FARM_FORMULAS = {'phi1': PHI1, 'phi2': PHI2, 'phi3': PHI3}


@dataclass
class Fixture:
    """A named scenario with its tasks and the properties tests rely on."""

    name: str
    description: str
    scenario_file: str
    formulas: Dict[str, str] = field(default_factory=dict)
    default_formula: Optional[str] = None
    hoa_file: Optional[str] = None
    expectations: Dict[str, Any] = field(default_factory=dict)

    @property
    def scenario_path(self) -> Path:
        return FIXTURE_DIR / self.scenario_file

    @property
    def scenario(self) -> Scenario:
        return load_scenario(str(self.scenario_path))

    @property
    def hoa(self) -> Optional[str]:
        if self.hoa_file is None:
            return None
        return (FIXTURE_DIR / self.hoa_file).read_text()

    @property
    def failures(self) -> List[Tuple[str, float]]:
        return list(self.scenario.failures)

    def formula(self, key: Optional[str] = None) -> Optional[str]:
        """Formula text by key; the default formula when key is omitted."""
        key = key or self.default_formula
        if key is None:
            return None
        if key not in self.formulas:
            raise UnknownFixture(f"Fixture '{self.name}' has no formula '{key}' "
                                 f"(available: {', '.join(sorted(self.formulas)) or 'none'})")
        return self.formulas[key]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'description': self.description,
            'scenario': str(self.scenario_path),
            'formulas': dict(self.formulas),
            'default_formula': self.default_formula,
            'hoa': str(FIXTURE_DIR / self.hoa_file) if self.hoa_file else None,
            'expectations': dict(self.expectations),
        }


FIXTURES: Dict[str, Fixture] = {
    'pv_farm_12': Fixture(
        name='pv_farm_12',
        description='Solar farm with 34 panels, 7 transformers and 12 agents (6 Vf, 3 Vl, 3 Vs)',
        scenario_file='pv_farm_12.json',
        formulas=dict(PV_FARM_FORMULAS),
        default_formula='phi1',
        expectations={
            'agents': 12,
            'type_counts': {'Vf': 6, 'Vl': 3, 'Vs': 3},
            'reference_makespan': 1388.5,
            'makespan_tolerance': 0.10,
        },
    ),
    'pv_farm_24': Fixture(
        name='pv_farm_24',
        description='Solar farm with the doubled team of 24 agents (12 Vf, 6 Vl, 6 Vs)',
        scenario_file='pv_farm_24.json',
        formulas=dict(PV_FARM_FORMULAS),
        default_formula='phi1',
        expectations={
            'agents': 24,
            'type_counts': {'Vf': 12, 'Vl': 6, 'Vs': 6},
        },
    ),
    'hw_lab_6': Fixture(
        name='hw_lab_6',
        description='Lab mockup with 6 panels, 4 transformers, 4 UAVs and 2 UGVs',
        scenario_file='hw_lab_6.json',
        formulas={'phi4': PHI4},
        default_formula='phi4',
        expectations={
            'agents': 6,
            'type_counts': {'Vf': 4, 'Vl': 1, 'Vs': 1},
        },
    ),
    'toy_2x2': Fixture(
        name='toy_2x2',
        description='Two sweepers on two regions 5 s apart; both regions swept in parallel',
        scenario_file='toy_2x2.json',
        formulas={'both': 'F sweep_p1 && F sweep_p2'},
        default_formula='both',
        expectations={'agents': 2, 'optimum': 10.0},
    ),
    'toy_chain': Fixture(
        name='toy_chain',
        description='Ordered chain sweep, joint fix, sweep on a line of three regions',
        scenario_file='toy_chain.json',
        formulas={'chain': 'F(sweep_p1 && F(fix_p2 && F sweep_p3))'},
        default_formula='chain',
        expectations={'agents': 2, 'subtasks': 3, 'failure': 'irrecoverable'},
    ),
    'toy_example3': Fixture(
        name='toy_example3',
        description='Three-subtask fragment: sweep at p21, then mow and scan in either order, p24 avoided',
        scenario_file='toy_example3.json',
        hoa_file='toy_example3.hoa',
        expectations={'leq': [[1, 2], [1, 3]], 'opposed': [[2, 3]]},
    ),
}


def list_fixtures() -> List[Fixture]:
    """All shipped fixtures in name order."""
    return [FIXTURES[name] for name in sorted(FIXTURES)]


def get_fixture(name: str) -> Fixture:
    """Look up a fixture.

    Raises:
        UnknownFixture: When no fixture has this name
    """
    try:
        return FIXTURES[name]
    except KeyError:
        raise UnknownFixture(f"Unknown fixture '{name}' (available: {', '.join(sorted(FIXTURES))})")


def load_fixture(name: str, formula: Optional[str] = None) -> Tuple[Workspace, Scenario, Optional[Formula]]:
    """Load a fixture's workspace, team and parsed task formula.

    The formula is None for fixtures that only ship an automaton.
    """
    fixture = get_fixture(name)
    scenario = fixture.scenario
    text = fixture.formula(formula)
    parsed = parse(text, scenario) if text is not None else None
    logger.debug("Loaded fixture %s with %d agents", name, len(scenario.agents))
    return scenario.workspace, scenario, parsed
