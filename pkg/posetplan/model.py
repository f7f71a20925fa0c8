"""Scenario model: regions, agents, collaborative behaviors and grounding."""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from .errors import EmptyTeam, MultiRegionSubtask, UnknownBehavior


logger = logging.getLogger(__name__)

UNREACHABLE = math.inf


class PropositionKind(Enum):
    REGION = 'region'
    LOCAL_ACTION = 'local_action'
    COLLAB_ACTION = 'collab_action'


@dataclass(frozen=True)
class Proposition:
    """Grounded meaning of an atom name such as ``p24`` or ``sweep_p21``."""

    name: str
    kind: PropositionKind
    region: str
    action: Optional[str] = None


@dataclass(frozen=True)
class Workspace:
    regions: Tuple[str, ...]
    ids: Mapping[str, int] = field(default_factory=dict)
    coordinates: Mapping[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.regions:
            raise ValueError("Workspace needs at least one region")
        if len(set(self.regions)) != len(self.regions):
            raise ValueError("Region names must be unique")

    def __contains__(self, region: str) -> bool:
        return region in self.regions


@dataclass(frozen=True)
class AgentModel:
    """One agent: its transition graph G_n, capabilities and start region."""

    id: str
    type_label: str
    transitions: Mapping[Tuple[str, str], float]
    local_actions: Mapping[str, float]
    collab_actions: FrozenSet[str]
    initial_region: str
    directed: bool = False

    def __post_init__(self):
        for key, seconds in self.transitions.items():
            if seconds <= 0:
                raise ValueError(f"Agent {self.id}: transition {key} must take positive time")
        for action, seconds in self.local_actions.items():
            if seconds <= 0:
                raise ValueError(f"Agent {self.id}: action {action} must take positive time")

    @cached_property
    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_node(self.initial_region)
        for (src, dst), seconds in self.transitions.items():
            graph.add_edge(src, dst, weight=seconds)
            if not self.directed:
                graph.add_edge(dst, src, weight=seconds)
        return graph

    @cached_property
    def _distances(self) -> Dict[str, Dict[str, float]]:
        return dict(nx.all_pairs_dijkstra_path_length(self.graph, weight='weight'))

    def can_perform(self, action: str) -> bool:
        return action in self.local_actions or action in self.collab_actions

    def travel_time(self, origin: str, target: str) -> float:
        if origin == target:
            return 0.0
        return self._distances.get(origin, {}).get(target, UNREACHABLE)

    def reaches(self, region: str) -> bool:
        return self.travel_time(self.initial_region, region) != UNREACHABLE


@dataclass(frozen=True)
class CollabBehavior:
    name: str
    required_actions: Tuple[str, ...]
    duration: float

    def __post_init__(self):
        if not self.required_actions:
            raise ValueError(f"Behavior {self.name} requires at least one action")
        if self.duration <= 0:
            raise ValueError(f"Behavior {self.name} must take positive time")


@dataclass(frozen=True)
class ServiceRequirement:
    """What serving one subtask takes: place, capabilities, participants, time."""

    subtask: int
    region: str
    needed: Tuple[str, ...]
    participant_count: int
    duration: float
    forbidden_regions: FrozenSet[str] = frozenset()
    waiting_forbidden: FrozenSet[str] = frozenset()

    @property
    def pure_presence(self) -> bool:
        return not self.needed

    @property
    def work(self) -> float:
        """D_ω · N_ω"""
        return self.duration * self.participant_count


@dataclass(frozen=True)
class Coalition:
    members: Tuple[str, ...]
    assignment: Tuple[Tuple[str, str], ...] = ()

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self.members

    def __len__(self) -> int:
        return len(self.members)

    def to_dict(self) -> Dict[str, Any]:
        return {'members': list(self.members), 'assignment': [list(p) for p in self.assignment]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Coalition':
        return cls(tuple(data['members']), tuple(tuple(p) for p in data.get('assignment', [])))


class Scenario:
    """Team model: workspace, agents and collaborative behaviors."""

    def __init__(self, workspace: Workspace, agents: Sequence[AgentModel],
                 behaviors: Mapping[str, CollabBehavior], name: str = '',
                 failures: Sequence[Tuple[str, float]] = ()):
        """Initialize scenario.

        Args:
            workspace: Regions of interest
            agents: Agent models in declaration order
            behaviors: Collaborative behaviors by name
            name: Scenario label
            failures: Injected (agent, time) failures for simulation
        """
        self.workspace = workspace
        self.agents: Tuple[AgentModel, ...] = tuple(agents)
        self.behaviors = dict(behaviors)
        self.name = name
        self.failures = tuple(failures)
        self._by_id = {a.id: a for a in self.agents}
        self._order = {a.id: i for i, a in enumerate(self.agents)}
        if len(self._by_id) != len(self.agents):
            raise ValueError("Agent ids must be unique")
        for agent in self.agents:
            if agent.initial_region not in workspace:
                raise ValueError(f"Agent {agent.id} starts in undeclared region {agent.initial_region}")
        self._resolved: Dict[str, Optional[Proposition]] = {}

    @property
    def agent_ids(self) -> List[str]:
        return [a.id for a in self.agents]

    def agent(self, agent_id: str) -> AgentModel:
        return self._by_id[agent_id]

    def order(self, agent_id: str) -> int:
        return self._order[agent_id]

    @cached_property
    def local_durations(self) -> Dict[str, float]:
        durations: Dict[str, float] = {}
        for agent in self.agents:
            for action, seconds in agent.local_actions.items():
                durations[action] = max(durations.get(action, 0.0), seconds)
        return durations

    def _action_names(self) -> Iterable[str]:
        return set(self.behaviors) | set(self.local_durations)

    def resolve(self, name: str) -> Optional[Proposition]:
        """Classify an atom name; None when it is not grounded here."""
        if name in self._resolved:
            return self._resolved[name]

        result = None
        if name in self.workspace:
            result = Proposition(name, PropositionKind.REGION, name)
        else:
            actions = self._action_names()
            for cut in [i for i, ch in enumerate(name) if ch == '_']:
                action, region = name[:cut], name[cut + 1:]
                if region in self.workspace and action in actions:
                    kind = (PropositionKind.COLLAB_ACTION if action in self.behaviors
                            else PropositionKind.LOCAL_ACTION)
                    result = Proposition(name, kind, region, action)
                    break

        self._resolved[name] = result
        return result

    def __contains__(self, name: str) -> bool:
        return self.resolve(name) is not None

    def propositions(self) -> List[str]:
        names = list(self.workspace.regions)
        for action in sorted(self._action_names()):
            names.extend(f"{action}_{region}" for region in self.workspace.regions)
        return names

    def travel_time(self, agent_id: str, origin: str, target: str) -> float:
        return self.agent(agent_id).travel_time(origin, target)

    def without(self, agent_ids: Iterable[str]) -> 'Scenario':
        """Residual team with the given agents removed."""
        dropped = set(agent_ids)
        return Scenario(self.workspace, [a for a in self.agents if a.id not in dropped],
                        self.behaviors, self.name, self.failures)

    def relocated(self, regions: Mapping[str, str]) -> 'Scenario':
        """Team whose agents start from new regions."""
        agents = [replace(a, initial_region=regions.get(a.id, a.initial_region)) for a in self.agents]
        return Scenario(self.workspace, agents, self.behaviors, self.name, self.failures)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'regions': [
                {'id': self.workspace.ids.get(r, i + 1), 'name': r,
                 **({'xy': list(self.workspace.coordinates[r])} if r in self.workspace.coordinates else {})}
                for i, r in enumerate(self.workspace.regions)
            ],
            'agents': [
                {
                    'id': a.id,
                    'type': a.type_label,
                    'initial': a.initial_region,
                    'local_actions': dict(a.local_actions),
                    'collab_actions': sorted(a.collab_actions),
                    'distances': [[s, d, t] for (s, d), t in sorted(a.transitions.items())],
                }
                for a in self.agents
            ],
            'behaviors': [
                {'name': b.name, 'requires': list(b.required_actions), 'duration': b.duration}
                for b in self.behaviors.values()
            ],
            'failures': [{'agent': agent, 'time': time} for agent, time in self.failures],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Scenario':
        """Build a scenario from the JSON schema.

        Travel graphs come from explicit ``distances`` (per agent or per agent
        type) or, failing that, are synthesised from region coordinates and the
        type's speed and metric.
        """
        regions = data.get('regions') or []
        names = tuple(r['name'] for r in regions)
        workspace = Workspace(
            regions=names,
            ids={r['name']: r.get('id', i + 1) for i, r in enumerate(regions)},
            coordinates={r['name']: tuple(r['xy']) for r in regions if 'xy' in r},
        )
        types = data.get('agent_types', {})
        type_distances = data.get('distances', {})

        agents = []
        for entry in data.get('agents', []):
            type_label = entry.get('type', '')
            defaults = types.get(type_label, {})
            local_actions = dict(defaults.get('local_actions', {}))
            local_actions.update(entry.get('local_actions', {}))
            collab = set(defaults.get('collab_actions', [])) | set(entry.get('collab_actions', []))

            explicit = entry.get('distances', type_distances.get(type_label))
            if explicit is not None:
                transitions = _parse_distances(explicit)
            else:
                transitions = _synthesize_distances(workspace, defaults)

            agents.append(AgentModel(
                id=entry['id'],
                type_label=type_label,
                transitions=transitions,
                local_actions=local_actions,
                collab_actions=frozenset(collab),
                initial_region=entry['initial'],
                directed=bool(data.get('directed', False)),
            ))

        behaviors = {
            b['name']: CollabBehavior(b['name'], tuple(b['requires']), float(b['duration']))
            for b in data.get('behaviors', [])
        }
        failures = [(f['agent'], float(f['time'])) for f in data.get('failures', [])]
        return cls(workspace, agents, behaviors, data.get('name', ''), failures)


def _parse_distances(spec: Any) -> Dict[Tuple[str, str], float]:
    transitions = {}
    if isinstance(spec, dict):
        for key, seconds in spec.items():
            src, dst = [part.strip() for part in key.split(',')]
            transitions[(src, dst)] = float(seconds)
    else:
        for src, dst, seconds in spec:
            transitions[(src, dst)] = float(seconds)
    return transitions


def _synthesize_distances(workspace: Workspace, type_spec: Dict[str, Any]) -> Dict[Tuple[str, str], float]:
    speed = type_spec.get('speed')
    if not speed or len(workspace.coordinates) < len(workspace.regions):
        return {}
    metric = type_spec.get('metric', 'euclidean')
    transitions = {}
    for a, b in itertools.combinations(workspace.regions, 2):
        (xa, ya), (xb, yb) = workspace.coordinates[a], workspace.coordinates[b]
        if metric == 'manhattan':
            meters = abs(xa - xb) + abs(ya - yb)
        else:
            meters = math.hypot(xa - xb, ya - yb)
        if meters > 0:
            transitions[(a, b)] = round(meters / speed, 2)
    return transitions


def load_scenario(path: str) -> Scenario:
    """Load a scenario JSON file."""
    with open(Path(path), 'r') as f:
        return Scenario.from_dict(json.load(f))


def travel_time(agent: AgentModel, origin: str, target: str) -> float:
    """Shortest travel time in the agent's graph; UNREACHABLE when no path."""
    return agent.travel_time(origin, target)


def ground(subtask, scenario: Scenario) -> ServiceRequirement:
    """Turn a subtask's positive atoms into a service requirement.

    Args:
        subtask: Object with index, positive, negative and selfloop_neg atom sets
        scenario: Team model the atoms are grounded in

    Returns:
        ServiceRequirement for the subtask
    """
    props = []
    for name in sorted(subtask.positive):
        prop = scenario.resolve(name)
        if prop is None:
            raise UnknownBehavior(f"Atom '{name}' names no declared region, action or behavior")
        props.append(prop)
    if not props:
        raise ValueError(f"Subtask {subtask.index} asserts no atom")

    regions = {p.region for p in props}
    if len(regions) > 1:
        raise MultiRegionSubtask(f"Subtask {subtask.index} refers to regions {sorted(regions)}")
    region = regions.pop()

    needed: List[str] = []
    duration = 0.0
    for prop in props:
        if prop.kind is PropositionKind.COLLAB_ACTION:
            behavior = scenario.behaviors[prop.action]
            needed.extend(behavior.required_actions)
            duration = max(duration, behavior.duration)
        elif prop.kind is PropositionKind.LOCAL_ACTION:
            needed.append(prop.action)
            duration = max(duration, scenario.local_durations[prop.action])

    def region_atoms(names):
        return frozenset(n for n in names if n in scenario.workspace)

    return ServiceRequirement(
        subtask=subtask.index,
        region=region,
        needed=tuple(sorted(needed)),
        participant_count=max(1, len(needed)),
        duration=duration,
        forbidden_regions=region_atoms(subtask.negative),
        waiting_forbidden=region_atoms(getattr(subtask, 'selfloop_neg', ())),
    )


def _match(agents: Sequence[AgentModel], needed: Sequence[str]) -> Optional[Tuple[Tuple[str, str], ...]]:
    """Assign each needed action to a distinct agent, or None."""
    assignment: List[Tuple[str, str]] = []
    used = set()

    def assign(slot: int) -> bool:
        if slot == len(needed):
            return True
        for agent in agents:
            if agent.id not in used and agent.can_perform(needed[slot]):
                used.add(agent.id)
                assignment.append((agent.id, needed[slot]))
                if assign(slot + 1):
                    return True
                used.discard(agent.id)
                assignment.pop()
        return False

    return tuple(assignment) if assign(0) else None


def coalitions_for(req: ServiceRequirement, scenario: Scenario) -> List[Coalition]:
    """All minimal coalitions able to serve a requirement.

    Members are distinct, cover the needed actions bijectively and can reach
    the region. Coalitions come out in sorted agent-id order.
    """
    if not scenario.agents:
        raise EmptyTeam("Team has no agents")

    reachable = sorted((a for a in scenario.agents if a.reaches(req.region)), key=lambda a: a.id)
    if req.pure_presence:
        return [Coalition((a.id,)) for a in reachable]

    capable = [a for a in reachable if any(a.can_perform(x) for x in req.needed)]
    coalitions = []
    for combo in itertools.combinations(capable, len(req.needed)):
        assignment = _match(combo, req.needed)
        if assignment is not None:
            coalitions.append(Coalition(tuple(a.id for a in combo), assignment))
    return coalitions
