"""Configuration loading for posetplan."""

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError


DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    'ltl': {
        'atom_cap': 64,
    },
    'pruning': {
        'support_cap': 20,
    },
    'poset': {
        'budget': 10.0,
        'opposed_arity': 3,
        'opposed_checks': 5000,
        'decomposition_cap': 64,
        'language_cap': 100000,
        'max_posets': 4,
    },
    'planner': {
        'budget': 30.0,
        'lb_mode': 'min',
        'jobs': 1,
    },
    'simulation': {
        'seed': 0,
        'noise': 0.0,
        'replan_budget': 5.0,
    },
    'output': {
        'directory': 'out',
        'format': 'human',
    },
}


def _merge(base: Dict, override: Dict) -> Dict:
    """Deep-merge override into a copy of base."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """Load configuration from YAML, falling back to defaults.

    Args:
        path: Explicit config path. When omitted, $POSETPLAN_CONFIG and then
            ./data/config.yaml are tried.

    Returns:
        Config dict with every default section present
    """
    candidates = [path, os.environ.get('POSETPLAN_CONFIG'), 'data/config.yaml']

    for candidate in candidates:
        if not candidate:
            continue
        config_path = Path(candidate)
        if config_path.exists():
            with open(config_path, 'r') as f:
                try:
                    loaded = yaml.safe_load(f) or {}
                except yaml.YAMLError as e:
                    raise ConfigError(f"Invalid config file {config_path}: {e}")
            if not isinstance(loaded, dict):
                raise ConfigError(f"Config file {config_path} must hold a mapping")
            return _merge(DEFAULT_CONFIG, loaded)
        if candidate == path:
            raise ConfigError(f"Config file not found: {path}")

    return copy.deepcopy(DEFAULT_CONFIG)


@dataclass
class RunConfig:
    """Resolved options of one CLI run."""

    formula: Optional[str] = None
    hoa: Optional[str] = None
    scenario: Optional[str] = None
    budget_poset: float = 10.0
    budget_bnb: float = 30.0
    seed: int = 0
    out: str = 'out'
    lb_mode: str = 'min'
    opposed_arity: int = 3
    decomposition_cap: int = 64
    jobs: int = 1
    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_options(cls, config: Dict[str, Dict[str, Any]], require_source: bool = True,
                     **flags) -> 'RunConfig':
        """Combine file config with CLI flags; flags set to None keep the file value.

        Args:
            config: Loaded config dict
            require_source: Whether exactly one of formula/HOA must be given
            **flags: CLI option values

        Returns:
            Validated RunConfig
        """
        poset_cfg = config.get('poset', {})
        planner_cfg = config.get('planner', {})

        def pick(name, default):
            value = flags.get(name)
            return default if value is None else value

        run = cls(
            formula=flags.get('formula'),
            hoa=flags.get('hoa'),
            scenario=flags.get('scenario'),
            budget_poset=float(pick('budget_poset', poset_cfg.get('budget', 10.0))),
            budget_bnb=float(pick('budget_bnb', planner_cfg.get('budget', 30.0))),
            seed=int(pick('seed', config.get('simulation', {}).get('seed', 0))),
            out=pick('out', config.get('output', {}).get('directory', 'out')),
            lb_mode=pick('lb_mode', planner_cfg.get('lb_mode', 'min')),
            opposed_arity=int(pick('opposed_arity', poset_cfg.get('opposed_arity', 3))),
            decomposition_cap=int(pick('decomposition_cap', poset_cfg.get('decomposition_cap', 64))),
            jobs=int(pick('jobs', planner_cfg.get('jobs', 1))),
            extra={
                'opposed_checks': int(poset_cfg.get('opposed_checks', 5000)),
                'language_cap': int(poset_cfg.get('language_cap', 100000)),
                'max_posets': int(poset_cfg.get('max_posets', 4)),
                'atom_cap': int(config.get('ltl', {}).get('atom_cap', 64)),
                'support_cap': int(config.get('pruning', {}).get('support_cap', 20)),
            },
        )
        run.validate(require_source)
        return run

    def validate(self, require_source: bool = True):
        """Raise ConfigError on inconsistent values."""
        if self.budget_poset <= 0 or self.budget_bnb <= 0:
            raise ConfigError("Budgets must be positive")
        if self.lb_mode not in ('min', 'max', 'alt'):
            raise ConfigError(f"Unknown lower-bound mode: {self.lb_mode}")
        if self.opposed_arity < 2:
            raise ConfigError("Opposed arity cap must be at least 2")
        if self.decomposition_cap < 1:
            raise ConfigError("Decomposition cap must be at least 1")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if require_source and (self.formula is None) == (self.hoa is None):
            raise ConfigError("Provide exactly one of a formula or an HOA automaton")

    def poset_options(self) -> Dict[str, Any]:
        """Keyword arguments for compute_posets."""
        return {
            'opposed_arity': self.opposed_arity,
            'opposed_checks': self.extra.get('opposed_checks', 5000),
            'decomposition_cap': self.decomposition_cap,
            'language_cap': self.extra.get('language_cap', 100000),
        }
