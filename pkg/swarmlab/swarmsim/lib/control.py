'''
Distributed formation control law for double integrator agents, with the
leader/follower gain schedule and the eigenvalue check on the velocity gain
matrix.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import logging
import numpy as np

from .graph import WeightedGraph, LeaderSet, GraphError, gain_laplacian, \
    leader_follower_weights
from .numerics import min_real_eigenvalue
from .estimation import StabilityResult

logger = logging.getLogger(__name__)


DEFAULT_A_MAX = 5.0


class ControlError(RuntimeError):
    ''' Error raised for invalid control gains or formation specs'''
    pass


@dataclass
class ControlGains:
    '''
    Velocity gains k_rv per ordered neighbour pair and k_gv per leader. The
    position gains follow from the fixed ratio, k_rp = alpha * k_rv and
    k_gp = alpha * k_gv.
    '''
    alpha: float
    relative_gains: Dict[Tuple[int, int], float]
    global_gains: Dict[int, float]
    _neighbors: Dict[int, List[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ControlError(f"Gain ratio alpha must be positive, got {self.alpha}")
        for key, k in list(self.relative_gains.items()) + list(self.global_gains.items()):
            if not np.isfinite(k) or k < 0:
                raise ControlError(f"Gain on {key} must be non negative, got {k}")
        self._neighbors = {}
        for (i, j) in sorted(self.relative_gains):
            self._neighbors.setdefault(i, []).append(j)

    @classmethod
    def uniform(
            cls,
            g: WeightedGraph,
            leaders: LeaderSet,
            leader_gain: float = 1.0,
            alpha: float = 9.0 / 4.0) -> ControlGains:
        ''' edge weights of `g` as k_rv and a fixed k_gv on every leader '''
        relative = {}
        for (i, j, w) in g.edges:
            relative[(i, j)] = w
            relative[(j, i)] = w
        return cls(alpha, relative, {i: leader_gain for i in leaders})

    def neighbors(self, i: int) -> List[int]:
        return self._neighbors.get(i, [])

    def k_rv(self, i: int, j: int) -> float:
        return self.relative_gains.get((i, j), 0.0)

    def k_rp(self, i: int, j: int) -> float:
        return self.alpha * self.k_rv(i, j)

    def k_gv(self, i: int) -> float:
        return self.global_gains.get(i, 0.0)

    def k_gp(self, i: int) -> float:
        return self.alpha * self.k_gv(i)

    def gamma(self, n_nodes: int) -> np.ndarray:
        ''' L_v + G_v '''
        m = gain_laplacian(n_nodes, self.relative_gains)
        for i, k in self.global_gains.items():
            m[i, i] += k
        return m


def default_control_gains(
        g: WeightedGraph,
        leaders: LeaderSet,
        k_p: float = 9.0,
        k_v: float = 4.0) -> ControlGains:
    '''
    Leaders use k_p/(N_i + 1) and k_v/(N_i + 1) on every neighbour and on the
    global term, followers use k_p/N_i and k_v/N_i with no global term.
    '''
    if len(leaders) == 0:
        raise ControlError("Formation control needs at least one leader")
    if k_v <= 0:
        raise ControlError(f"Velocity gain must be positive, got {k_v}")
    try:
        relative, global_ = leader_follower_weights(g, leaders)
    except GraphError as e:
        raise ControlError(str(e))
    return ControlGains(
        k_p / k_v,
        {key: k_v * w for key, w in relative.items()},
        {i: k_v * w for i, w in global_.items()})


@dataclass
class FormationSpec:
    p_star: np.ndarray
    v_star: np.ndarray

    def __post_init__(self):
        self.p_star = np.asarray(self.p_star, dtype=float).reshape(-1, 3)
        self.v_star = np.asarray(self.v_star, dtype=float).reshape(-1, 3)
        if self.p_star.shape != self.v_star.shape:
            raise ControlError("Desired positions and velocities differ in shape")
        if not (np.all(np.isfinite(self.p_star)) and np.all(np.isfinite(self.v_star))):
            raise ControlError("Formation spec must be finite")

    @classmethod
    def static(cls, p_star: np.ndarray) -> FormationSpec:
        p_star = np.asarray(p_star, dtype=float).reshape(-1, 3)
        return cls(p_star, np.zeros_like(p_star))

    @property
    def n(self) -> int:
        return self.p_star.shape[0]

    def relative(self, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
        ''' (p*_ij, v*_ij) '''
        return self.p_star[i] - self.p_star[j], self.v_star[i] - self.v_star[j]


def control_law(
        i: int,
        p_i: np.ndarray,
        v_i: np.ndarray,
        neighbor_states: Mapping[int, Tuple[np.ndarray, np.ndarray]],
        spec: FormationSpec,
        gains: ControlGains) -> np.ndarray:
    '''
    Acceleration command of agent i.

    Parameters:
        i (int): agent id
        p_i (numpy): position used for feedback, an estimate or the truth
        v_i (numpy): velocity used for feedback
        neighbor_states (dict): neighbour id to (position, velocity) as
            received from that neighbour
        spec (FormationSpec): desired positions and velocities
        gains (ControlGains): control gains

    Returns:
        numpy array of shape (3,)
    '''
    u = np.zeros(3)
    for j in gains.neighbors(i):
        if j not in neighbor_states:
            raise ControlError(f"Agent {i} has no state from neighbour {j}")
        p_j, v_j = neighbor_states[j]
        p_ij, v_ij = spec.relative(i, j)
        u -= gains.k_rp(i, j) * (p_i - p_j - p_ij)
        u -= gains.k_rv(i, j) * (v_i - v_j - v_ij)
    k_gv = gains.k_gv(i)
    if k_gv > 0.0:
        u -= gains.alpha * k_gv * (p_i - spec.p_star[i])
        u -= k_gv * (v_i - spec.v_star[i])
    return u


def control_all(
        p: np.ndarray,
        v: np.ndarray,
        spec: FormationSpec,
        gains: ControlGains,
        neighbor_views: Optional[List[Mapping[int, Tuple[np.ndarray, np.ndarray]]]] = None
        ) -> np.ndarray:
    ''' commands of all agents from a state snapshot, shape (N, 3) '''
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    if p.shape[0] != spec.n:
        raise ControlError(
            f"State has {p.shape[0]} agents but the formation has {spec.n}")
    u = np.zeros_like(p)
    for i in range(p.shape[0]):
        if neighbor_views is None:
            view = {j: (p[j], v[j]) for j in gains.neighbors(i)}
        else:
            view = neighbor_views[i]
        u[i] = control_law(i, p[i], v[i], view, spec, gains)
    return u


def saturate(u: np.ndarray, a_max: float = DEFAULT_A_MAX) -> np.ndarray:
    ''' per axis clamp |u| <= a_max '''
    if a_max <= 0:
        raise ControlError(f"Acceleration bound must be positive, got {a_max}")
    return np.clip(u, -a_max, a_max)


def closed_loop_matrix(gains: ControlGains, n_nodes: int) -> np.ndarray:
    '''
    Per axis formation error dynamics [e_p; e_v]' = M [e_p; e_v] under
    true state feedback and a static spec.
    '''
    gamma = gains.gamma(n_nodes)
    return np.block([
        [np.zeros((n_nodes, n_nodes)), np.eye(n_nodes)],
        [-gains.alpha * gamma, -gamma],
    ])


def check_controller_stability(
        g: WeightedGraph,
        leaders: LeaderSet,
        gains: ControlGains,
        tol: float = 1e-12) -> StabilityResult:
    '''
    Closed loop error dynamics are Hurwitz when every eigenvalue of
    Gamma = L_v + G_v is positive.
    '''
    for i, k in gains.global_gains.items():
        if i not in leaders and k != 0.0:
            raise ControlError(f"Agent {i} has a global gain but is not a leader")
    for (i, j) in gains.relative_gains:
        if not g.has_edge(i, j):
            raise ControlError(f"Gain on ({i}, {j}) which is not a graph edge")
    gamma = gains.gamma(g.n_nodes)
    min_eig = min_real_eigenvalue(gamma)
    if min_eig <= tol:
        logger.debug(f"Controller gain matrix is singular or indefinite ({min_eig})")
    return StabilityResult(min_eig > tol, min_eig, gamma)
