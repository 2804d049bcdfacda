'''
Scenario files: loading, validation and the canonical dictionary form.

A scenario is a single JSON document. Agent ids in the file are 1-based and
are converted to the 0-based ids used by the library when loaded. See
`scenarios/` for one file per simulation mode.
'''

from __future__ import annotations
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import json
import logging
import numpy as np

from pathlib import Path

from .graph import GraphError, Topology, WeightedGraph, is_connected
from .tracking import DEFAULT_LOST_AFTER, TrackerGains, TrackingError
from .control import DEFAULT_A_MAX
from .trajopt.trajectory import RingPose, TrajectoryError
from .trajopt.distributed import AlgParams, ConsensusWeights

logger = logging.getLogger(__name__)


class ScenarioConfigError(RuntimeError):
    ''' Error raised when a scenario file fails to parse or validate'''

    def __init__(self, messages: List[str]):
        super().__init__('; '.join(messages))
        self.messages = list(messages)


class SimMode(str, Enum):
    formation = 'formation'
    scale_demo = 'scale_demo'
    trajopt_alg1 = 'trajopt_alg1'
    trajopt_alg2 = 'trajopt_alg2'
    compare = 'compare'


ESTIMATION_MODES = (SimMode.formation, SimMode.scale_demo)
TRAJOPT_MODES = (SimMode.trajopt_alg1, SimMode.trajopt_alg2)


class ObserverInit(str, Enum):
    leaders_tracked = 'leaders_tracked'
    tracked = 'tracked'


class Feedback(str, Enum):
    estimate = 'estimate'
    truth = 'truth'


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


class _Group:
    ''' flat parameter group read from and written to one JSON object '''

    # file key -> field name
    renamed: Dict[str, str] = {}

    @classmethod
    def from_dict(cls, d: Optional[Dict], section: str, msgs: List[str]):
        if d is None:
            return cls()
        if not isinstance(d, dict):
            msgs.append(f"{section}: expected an object")
            return cls()
        names = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            name = cls.renamed.get(key, key)
            if name not in names:
                msgs.append(f"{section}.{key}: unknown parameter")
                continue
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            msgs.append(f"{section}: {e}")
            return cls()

    def to_dict(self) -> Dict:
        back = {name: key for key, name in self.renamed.items()}
        return {back.get(f.name, f.name): _plain(getattr(self, f.name)) for f in fields(self)}


@dataclass
class TrackingParams(_Group):
    k_p: float = 0.8
    k_v: float = 0.0005
    lost_after: int = DEFAULT_LOST_AFTER
    noise_std: float = 0.0
    dropout: float = 0.0
    # JSON-lines frames replayed instead of the simulated motion capture
    replay: Optional[str] = None


@dataclass
class SensingParams(_Group):
    range_std: float = 0.0
    theta_std: float = 0.0
    phi_std: float = 0.0
    attitude_noise_std: float = 0.0
    yaw: float = 0.0

    @property
    def reading_stds(self) -> Tuple[float, float, float]:
        return (self.range_std, self.theta_std, self.phi_std)


@dataclass
class ObserverParams(_Group):
    k_p: float = 0.8
    k_v: float = 20.0
    init: ObserverInit = ObserverInit.leaders_tracked

    def __post_init__(self):
        self.init = ObserverInit(self.init)


@dataclass
class ControlParams(_Group):
    k_p: float = 9.0
    k_v: float = 4.0
    a_max: float = DEFAULT_A_MAX
    feedback: Feedback = Feedback.estimate

    def __post_init__(self):
        self.feedback = Feedback(self.feedback)


@dataclass
class ScaleSchedule(_Group):
    '''
    Formation scale known to the leaders, constant at `initial` until
    `ramp_start`, then linear to `final` over `ramp_duration` seconds.
    '''
    initial: float = 1.0
    final: float = 1.0
    ramp_start: float = 0.0
    ramp_duration: float = 0.0

    def value(self, t: float) -> float:
        if t <= self.ramp_start:
            return float(self.initial)
        if self.ramp_duration <= 0 or t >= self.ramp_start + self.ramp_duration:
            return float(self.final)
        frac = (t - self.ramp_start) / self.ramp_duration
        return float(self.initial + frac * (self.final - self.initial))


@dataclass
class TrajoptParams(_Group):
    renamed = {'R_collision': 'r_collision', 'R_active': 'r_active'}

    K: int = 40
    h: float = 0.15
    r_collision: float = 0.3
    r_active: float = 1.0
    M: int = 100
    M1: int = 10
    M2: int = 50
    epsilon: float = 1e-3
    a_min: float = -5.0
    a_max: float = 5.0
    alpha_m: float = 0.0
    v_cross: Optional[float] = None
    weights: ConsensusWeights = ConsensusWeights.equal
    qp_tol: float = 1e-8
    qp_max_iter: int = 20000

    def __post_init__(self):
        self.weights = ConsensusWeights(self.weights)

    def to_alg_params(self) -> AlgParams:
        return AlgParams(
            r_collision=self.r_collision,
            r_active=self.r_active,
            M=int(self.M),
            M1=int(self.M1),
            M2=int(self.M2),
            epsilon=self.epsilon,
            a_min=self.a_min,
            a_max=self.a_max,
            alpha_m=self.alpha_m,
            v_cross=self.v_cross,
            weights=self.weights,
            qp_tol=self.qp_tol,
            qp_max_iter=int(self.qp_max_iter))


@dataclass
class CompareParams(_Group):
    agents: List[int] = field(default_factory=lambda: [4, 8, 12, 16, 20])
    reps: int = 20


@dataclass
class RingSpec(_Group):
    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 1.5])
    normal: List[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    up: List[float] = field(default_factory=lambda: [0.0, 0.0, 1.0])
    radius: float = 0.6
    tube_radius: float = 0.3

    def pose(self) -> RingPose:
        return RingPose.from_normal(
            self.center, self.normal, self.up, self.radius, self.tube_radius)


@dataclass
class FormationShape(_Group):
    ''' desired positions center + scale * shape '''
    shape: List[List[float]] = field(default_factory=list)
    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 1.0])
    scale: float = 1.0

    def targets(self, scale: Optional[float] = None) -> np.ndarray:
        s = self.scale if scale is None else scale
        return np.asarray(self.center, dtype=float) + s * np.asarray(self.shape, dtype=float)


@dataclass
class GraphSpec:
    topology: Topology = Topology.complete
    edges: List[Tuple[int, int, float]] = field(default_factory=list)
    weight: float = 1.0

    def build(self, n_nodes: int) -> WeightedGraph:
        return WeightedGraph.from_topology(
            self.topology, n_nodes, self.weight,
            self.edges if self.topology == Topology.custom else None)

    @classmethod
    def from_dict(cls, d: Optional[Dict], section: str, msgs: List[str]) -> GraphSpec:
        if d is None:
            return cls()
        if not isinstance(d, dict):
            msgs.append(f"{section}: expected an object")
            return cls()
        for key in d:
            if key not in ('topology', 'edges', 'weight'):
                msgs.append(f"{section}.{key}: unknown parameter")
        try:
            topology = Topology(d.get('topology', Topology.complete))
        except ValueError:
            msgs.append(f"{section}.topology: unknown topology '{d.get('topology')}'")
            topology = Topology.complete
        edges = []
        for index, edge in enumerate(d.get('edges', [])):
            try:
                i, j = int(edge[0]), int(edge[1])
                w = float(edge[2]) if len(edge) > 2 else float(d.get('weight', 1.0))
            except (TypeError, ValueError, IndexError):
                msgs.append(f"{section}.edges[{index}]: expected [i, j] or [i, j, w]")
                continue
            if i < 1 or j < 1:
                msgs.append(f"{section}.edges[{index}]: agent ids start at 1")
                continue
            edges.append((i - 1, j - 1, w))
        return cls(topology, edges, float(d.get('weight', 1.0)))

    def to_dict(self) -> Dict:
        return {
            'topology': Topology(self.topology).value,
            'edges': [[i + 1, j + 1, w] for (i, j, w) in self.edges],
            'weight': self.weight,
        }


@dataclass
class NetworkParams:
    ''' extra delivery delay in rounds per communication edge '''
    delays: Dict[Tuple[int, int], int] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Optional[Dict], section: str, msgs: List[str]) -> NetworkParams:
        if d is None:
            return cls()
        delays = {}
        for key, value in (d.get('delay') or {}).items():
            try:
                i, j = (int(part) for part in str(key).split('-'))
            except ValueError:
                msgs.append(f"{section}.delay.{key}: expected a key of the form 'i-j'")
                continue
            if i < 1 or j < 1:
                msgs.append(f"{section}.delay.{key}: agent ids start at 1")
                continue
            delays[(min(i, j) - 1, max(i, j) - 1)] = int(value)
        for key in d:
            if key != 'delay':
                msgs.append(f"{section}.{key}: unknown parameter")
        return cls(delays)

    def to_dict(self) -> Dict:
        return {'delay': {f"{i + 1}-{j + 1}": d for (i, j), d in sorted(self.delays.items())}}


def _positions(value, section: str, msgs: List[str]) -> Optional[List[List[float]]]:
    if value is None:
        return None
    try:
        rows = [[float(c) for c in row] for row in value]
    except (TypeError, ValueError):
        msgs.append(f"{section}: expected a list of [x, y, z] positions")
        return None
    for index, row in enumerate(rows):
        if len(row) != 3:
            msgs.append(f"{section}[{index}]: expected 3 coordinates, got {len(row)}")
    return rows


def _check_selection(value, msgs: List[str]) -> Optional[List[Dict]]:
    '''
    Optional explicit list of checks to run, each {"id", "params": [{"name",
    "value"}]}. All checks that apply to the mode run when omitted.
    '''
    if value is None:
        return None
    selection = []
    for index, item in enumerate(value):
        if not isinstance(item, dict) or 'id' not in item:
            msgs.append(f"checks[{index}]: expected an object with an 'id'")
            continue
        params = []
        for p in item.get('params', []):
            if not isinstance(p, dict) or 'name' not in p or 'value' not in p:
                msgs.append(f"checks[{index}].params: expected {{'name', 'value'}} objects")
                continue
            params.append({'name': p['name'], 'value': p['value']})
        selection.append({'id': str(item['id']), 'params': params})
    return selection


TOP_LEVEL_KEYS = (
    'name', 'mode', 'seed', 'n_agents', 'dt_sim', 'duration', 'graph',
    'comm_graph', 'leaders', 'initial_positions', 'final_positions',
    'formation', 'ring', 'tracking', 'sensing', 'observer', 'control',
    'scale', 'trajopt', 'compare', 'network', 'trace_every', 'checks',
)


@dataclass
class ScenarioConfig:
    name: str
    mode: SimMode
    n_agents: int
    seed: int = 0
    dt_sim: float = 0.005
    duration: float = 15.0
    graph: GraphSpec = field(default_factory=GraphSpec)
    comm_graph: GraphSpec = field(default_factory=GraphSpec)
    leaders: List[int] = field(default_factory=list)
    initial_positions: Optional[List[List[float]]] = None
    final_positions: Optional[List[List[float]]] = None
    formation: FormationShape = field(default_factory=FormationShape)
    ring: RingSpec = field(default_factory=RingSpec)
    tracking: TrackingParams = field(default_factory=TrackingParams)
    sensing: SensingParams = field(default_factory=SensingParams)
    observer: ObserverParams = field(default_factory=ObserverParams)
    control: ControlParams = field(default_factory=ControlParams)
    scale: ScaleSchedule = field(default_factory=ScaleSchedule)
    trajopt: TrajoptParams = field(default_factory=TrajoptParams)
    compare: CompareParams = field(default_factory=CompareParams)
    network: NetworkParams = field(default_factory=NetworkParams)
    trace_every: int = 20
    checks: Optional[List[Dict]] = None

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt_sim))

    @classmethod
    def from_dict(cls, d: Dict) -> ScenarioConfig:
        '''
        Builds a config from its dictionary form. Structural problems
        (unknown keys, wrong types) raise ScenarioConfigError listing every
        problem found; semantic checks are left to `validate`.
        '''
        if not isinstance(d, dict):
            raise ScenarioConfigError(["Scenario must be a JSON object"])
        msgs: List[str] = []
        for key in d:
            if key not in TOP_LEVEL_KEYS:
                msgs.append(f"{key}: unknown parameter")
        for key in ('name', 'mode', 'n_agents'):
            if key not in d:
                msgs.append(f"{key}: missing required parameter")
        if msgs and any('missing' in m for m in msgs):
            raise ScenarioConfigError(msgs)

        try:
            mode = SimMode(d['mode'])
        except ValueError:
            msgs.append(f"mode: unknown mode '{d['mode']}'")
            mode = SimMode.formation
        leaders = []
        for value in d.get('leaders', []):
            try:
                leader = int(value)
            except (TypeError, ValueError):
                msgs.append(f"leaders: expected integer agent ids, got {value}")
                continue
            if leader < 1:
                msgs.append(f"leaders: agent ids start at 1, got {value}")
                continue
            leaders.append(leader - 1)

        try:
            cfg = cls(
                name=str(d['name']),
                mode=mode,
                n_agents=int(d['n_agents']),
                seed=int(d.get('seed', 0)),
                dt_sim=float(d.get('dt_sim', 0.005)),
                duration=float(d.get('duration', 15.0)),
                graph=GraphSpec.from_dict(d.get('graph'), 'graph', msgs),
                comm_graph=GraphSpec.from_dict(d.get('comm_graph'), 'comm_graph', msgs),
                leaders=sorted(set(leaders)),
                initial_positions=_positions(
                    d.get('initial_positions'), 'initial_positions', msgs),
                final_positions=_positions(
                    d.get('final_positions'), 'final_positions', msgs),
                formation=FormationShape.from_dict(d.get('formation'), 'formation', msgs),
                ring=RingSpec.from_dict(d.get('ring'), 'ring', msgs),
                tracking=TrackingParams.from_dict(d.get('tracking'), 'tracking', msgs),
                sensing=SensingParams.from_dict(d.get('sensing'), 'sensing', msgs),
                observer=ObserverParams.from_dict(d.get('observer'), 'observer', msgs),
                control=ControlParams.from_dict(d.get('control'), 'control', msgs),
                scale=ScaleSchedule.from_dict(d.get('scale'), 'scale', msgs),
                trajopt=TrajoptParams.from_dict(d.get('trajopt'), 'trajopt', msgs),
                compare=CompareParams.from_dict(d.get('compare'), 'compare', msgs),
                network=NetworkParams.from_dict(d.get('network'), 'network', msgs),
                trace_every=int(d.get('trace_every', 20)),
                checks=_check_selection(d.get('checks'), msgs),
            )
        except (TypeError, ValueError) as e:
            msgs.append(str(e))
            raise ScenarioConfigError(msgs)
        if msgs:
            raise ScenarioConfigError(msgs)
        return cfg

    def to_dict(self) -> Dict:
        ''' canonical form, `from_dict(cfg.to_dict()) == cfg` '''
        d = {
            'name': self.name,
            'mode': SimMode(self.mode).value,
            'seed': self.seed,
            'n_agents': self.n_agents,
            'dt_sim': self.dt_sim,
            'duration': self.duration,
            'graph': self.graph.to_dict(),
            'comm_graph': self.comm_graph.to_dict(),
            'leaders': [i + 1 for i in self.leaders],
            'formation': self.formation.to_dict(),
            'ring': self.ring.to_dict(),
            'tracking': self.tracking.to_dict(),
            'sensing': self.sensing.to_dict(),
            'observer': self.observer.to_dict(),
            'control': self.control.to_dict(),
            'scale': self.scale.to_dict(),
            'trajopt': self.trajopt.to_dict(),
            'compare': self.compare.to_dict(),
            'network': self.network.to_dict(),
            'trace_every': self.trace_every,
        }
        if self.initial_positions is not None:
            d['initial_positions'] = self.initial_positions
        if self.final_positions is not None:
            d['final_positions'] = self.final_positions
        if self.checks is not None:
            d['checks'] = self.checks
        return d

    def with_overrides(self, **kwargs) -> ScenarioConfig:
        ''' copy with the given top level values replaced, None values ignored '''
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def _validate_graph(self, spec: GraphSpec, section: str, msgs: List[str],
                        connected: bool) -> Optional[WeightedGraph]:
        try:
            g = spec.build(self.n_agents)
        except GraphError as e:
            msgs.append(f"{section}: {e}")
            return None
        if connected and not is_connected(g):
            msgs.append(f"{section}: graph must be connected")
        return g

    def _validate_positions(self, positions, section: str, msgs: List[str]):
        if positions is None:
            msgs.append(f"{section}: required in mode '{SimMode(self.mode).value}'")
        elif len(positions) != self.n_agents:
            msgs.append(
                f"{section}: expected {self.n_agents} positions, got {len(positions)}")

    def validate(self) -> Tuple[bool, List[str]]:
        '''
        Checks the scenario for the selected mode.

        Returns:
            (passed, field level messages)
        '''
        msgs: List[str] = []
        if self.n_agents < 1:
            msgs.append(f"n_agents: must be at least 1, got {self.n_agents}")
            return False, msgs
        if self.seed < 0:
            msgs.append(f"seed: must be non negative, got {self.seed}")
        if not self.dt_sim > 0:
            msgs.append(f"dt_sim: must be positive, got {self.dt_sim}")
        if not self.duration > 0:
            msgs.append(f"duration: must be positive, got {self.duration}")
        if self.trace_every < 1:
            msgs.append(f"trace_every: must be at least 1, got {self.trace_every}")

        if self.mode in ESTIMATION_MODES:
            self._validate_estimation(msgs)
        if self.mode in TRAJOPT_MODES or self.mode == SimMode.compare:
            self._validate_trajopt(msgs)
        return len(msgs) == 0, msgs

    def _validate_estimation(self, msgs: List[str]):
        self._validate_graph(self.graph, 'graph', msgs, connected=True)
        if len(self.leaders) == 0:
            msgs.append("leaders: at least one leader is required")
        for i in self.leaders:
            if i >= self.n_agents:
                msgs.append(f"leaders: agent {i + 1} is outside 1..{self.n_agents}")
        self._validate_positions(self.initial_positions, 'initial_positions', msgs)
        shape = self.formation.shape
        if len(shape) != self.n_agents or any(len(row) != 3 for row in shape):
            msgs.append(f"formation.shape: expected {self.n_agents} offsets of 3 coordinates")
        elif self.mode == SimMode.scale_demo:
            offsets = np.asarray(shape, dtype=float)
            if np.max(np.abs(offsets.mean(axis=0))) > 1e-9 * max(1.0, np.max(np.abs(offsets))):
                msgs.append("formation.shape: scaled formations need a zero mean shape")
        if len(self.formation.center) != 3:
            msgs.append("formation.center: expected 3 coordinates")
        try:
            TrackerGains(self.tracking.k_p, self.tracking.k_v)
        except TrackingError as e:
            msgs.append(f"tracking: {e}")
        if self.tracking.lost_after < 1:
            msgs.append(f"tracking.lost_after: must be at least 1, got {self.tracking.lost_after}")
        if self.tracking.noise_std < 0:
            msgs.append(f"tracking.noise_std: must be non negative, got {self.tracking.noise_std}")
        if not 0.0 <= self.tracking.dropout < 1.0:
            msgs.append(f"tracking.dropout: must be in [0, 1), got {self.tracking.dropout}")
        if self.tracking.replay is not None and not Path(self.tracking.replay).is_file():
            msgs.append(f"tracking.replay: no such file '{self.tracking.replay}'")
        for name, value in (
                ('range_std', self.sensing.range_std),
                ('theta_std', self.sensing.theta_std),
                ('phi_std', self.sensing.phi_std),
                ('attitude_noise_std', self.sensing.attitude_noise_std)):
            if value < 0:
                msgs.append(f"sensing.{name}: must be non negative, got {value}")
        if not self.observer.k_p > 0 or not self.observer.k_v > 0:
            msgs.append("observer: k_p and k_v must be positive")
        if not self.control.k_p > 0 or not self.control.k_v > 0:
            msgs.append("control: k_p and k_v must be positive")
        if not self.control.a_max > 0:
            msgs.append(f"control.a_max: must be positive, got {self.control.a_max}")
        if self.scale.ramp_duration < 0:
            msgs.append(f"scale.ramp_duration: must be non negative, got {self.scale.ramp_duration}")

    def _validate_trajopt(self, msgs: List[str]):
        t = self.trajopt
        if t.K < 4:
            msgs.append(f"trajopt.K: must be at least 4, got {t.K}")
        if not t.h > 0:
            msgs.append(f"trajopt.h: must be positive, got {t.h}")
        _, alg_msgs = t.to_alg_params().validate()
        msgs.extend(f"trajopt: {m}" for m in alg_msgs)
        try:
            self.ring.pose()
        except (TrajectoryError, ValueError) as e:
            msgs.append(f"ring: {e}")

        if self.mode == SimMode.compare:
            if self.comm_graph.topology == Topology.custom:
                msgs.append("comm_graph: compare mode needs a named topology")
            if not self.compare.agents or min(self.compare.agents) < 1:
                msgs.append("compare.agents: expected a list of positive agent counts")
            if self.compare.reps < 1:
                msgs.append(f"compare.reps: must be at least 1, got {self.compare.reps}")
            return

        # consensus only reaches agreement over a connected graph
        g = self._validate_graph(
            self.comm_graph, 'comm_graph', msgs,
            connected=self.mode == SimMode.trajopt_alg2)
        self._validate_positions(self.initial_positions, 'initial_positions', msgs)
        self._validate_positions(self.final_positions, 'final_positions', msgs)
        for (i, j), d in self.network.delays.items():
            if g is not None and not g.has_edge(i, j):
                msgs.append(f"network.delay.{i + 1}-{j + 1}: not a communication edge")
            if d < 0:
                msgs.append(f"network.delay.{i + 1}-{j + 1}: must be non negative, got {d}")


def load(path: str) -> ScenarioConfig:
    '''
    Reads and validates a scenario file.

    Raises:
        ScenarioConfigError with every field level problem found
    '''
    try:
        with open(path) as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioConfigError([f"{path}: invalid JSON ({e})"])
    cfg = ScenarioConfig.from_dict(d)
    # replay paths are relative to the scenario file
    replay = cfg.tracking.replay
    if replay is not None and not Path(replay).is_absolute():
        cfg.tracking.replay = str(Path(path).parent / replay)
    ok, msgs = cfg.validate()
    if not ok:
        for msg in msgs:
            logger.error(msg)
        raise ScenarioConfigError(msgs)
    logger.info(f"Loaded scenario '{cfg.name}' ({SimMode(cfg.mode).value}, {cfg.n_agents} agents)")
    return cfg
