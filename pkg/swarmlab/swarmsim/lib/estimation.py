'''
Distributed observer for swarm localisation and the distributed formation
scale estimator.

Both estimators run one Euler step per simulation tick and read neighbour
values from a snapshot of the previous tick, so every agent's update can be
computed independently.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import logging
import numpy as np

from .graph import WeightedGraph, LeaderSet, GraphError, gain_laplacian, \
    leader_follower_weights
from .numerics import min_real_eigenvalue
from .sensing import RelativeMeasurement

logger = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    ''' Error raised when estimator inputs do not match the gain structure'''
    pass


@dataclass
class StabilityResult:
    stable: bool
    min_eigenvalue: float
    matrix: Optional[np.ndarray] = None

    def to_dict(self) -> Dict:
        return {'stable': bool(self.stable), 'min_eigenvalue': float(self.min_eigenvalue)}


@dataclass
class ObserverGains:
    '''
    Block gain of the observer. Position and velocity channels share one
    normalised innovation, scaled by k_p and k_v respectively, so
    k_rp,ij = k_p * w_ij and k_rv,ij = k_v * w_ij.
    '''
    k_p: float = 0.8
    k_v: float = 20.0
    relative_weights: Dict[Tuple[int, int], float] = field(default_factory=dict)
    global_weights: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def uniform(
            cls,
            g: WeightedGraph,
            leaders: LeaderSet,
            leader_gain: float = 1.0,
            k_p: float = 0.8,
            k_v: float = 20.0) -> ObserverGains:
        ''' edge weights of `g` on every edge and a fixed gain on each leader '''
        relative = {}
        for (i, j, w) in g.edges:
            relative[(i, j)] = w
            relative[(j, i)] = w
        return cls(k_p, k_v, relative, {i: leader_gain for i in leaders})

    def k_rp(self, i: int, j: int) -> float:
        return self.k_p * self.relative_weights.get((i, j), 0.0)

    def k_rv(self, i: int, j: int) -> float:
        return self.k_v * self.relative_weights.get((i, j), 0.0)

    def k_gp(self, i: int) -> float:
        return self.k_p * self.global_weights.get(i, 0.0)

    def k_gv(self, i: int) -> float:
        return self.k_v * self.global_weights.get(i, 0.0)

    def weight_matrix(self, n_nodes: int) -> np.ndarray:
        ''' Laplacian of the normalised weights plus the leader weights on the diagonal '''
        t = gain_laplacian(n_nodes, self.relative_weights)
        for i, w in self.global_weights.items():
            t[i, i] += w
        return t

    def stability_matrix(self, n_nodes: int) -> np.ndarray:
        ''' B D_rp B^T + E D_gp E^T with k_rp = k_p w_ij and k_gp = k_p w_i '''
        return self.k_p * self.weight_matrix(n_nodes)


def default_observer_gains(
        g: WeightedGraph,
        leaders: LeaderSet,
        k_p: float = 0.8,
        k_v: float = 20.0) -> ObserverGains:
    '''
    Leaders use k_rp,ij = k_gp,i = k_p / (N_i + 1), followers use
    k_rp,ij = k_p / N_i and k_gp,i = 0. The velocity channel mirrors this
    with k_v.
    '''
    if len(leaders) == 0:
        raise EstimationError("Observer needs at least one leader")
    try:
        relative, global_ = leader_follower_weights(g, leaders)
    except GraphError as e:
        raise EstimationError(str(e))
    return ObserverGains(k_p, k_v, relative, global_)


@dataclass
class ObserverState:
    p_hat: np.ndarray
    v_hat: np.ndarray

    def __post_init__(self):
        self.p_hat = np.asarray(self.p_hat, dtype=float).reshape(-1, 3)
        self.v_hat = np.asarray(self.v_hat, dtype=float).reshape(-1, 3)
        if self.p_hat.shape != self.v_hat.shape:
            raise EstimationError("Position and velocity estimates differ in shape")

    @property
    def n(self) -> int:
        return self.p_hat.shape[0]

    def copy(self) -> ObserverState:
        return ObserverState(self.p_hat.copy(), self.v_hat.copy())


@dataclass
class MeasurementBundle:
    '''
    Relative measurements in the global frame, both directions of every
    measurement edge, and global positions of the leaders.
    '''
    relative: List[RelativeMeasurement]
    global_positions: Dict[int, np.ndarray]

    def relative_map(self) -> Dict[Tuple[int, int], np.ndarray]:
        return {(m.observer_id, m.target_id): m.value for m in self.relative}


def agent_innovation(
        i: int,
        p_hat_i: np.ndarray,
        neighbor_p_hat: Mapping[int, np.ndarray],
        relative: Mapping[Tuple[int, int], np.ndarray],
        global_position: Optional[np.ndarray],
        gains: ObserverGains) -> np.ndarray:
    '''
    Normalised innovation of agent i from its neighbours' estimates and its
    own measurements. The measured z_ij = p_i - p_j is the reverse of the
    sensor reading of j taken by i.
    '''
    nu = np.zeros(3)
    for (a, j), w in gains.relative_weights.items():
        if a != i or w == 0.0:
            continue
        if (i, j) not in relative:
            raise EstimationError(
                f"Missing relative measurement of agent {j} by agent {i}")
        if j not in neighbor_p_hat:
            raise EstimationError(f"Agent {i} has no estimate from neighbour {j}")
        z_ij = -relative[(i, j)]
        nu += w * (z_ij - (p_hat_i - neighbor_p_hat[j]))
    w_g = gains.global_weights.get(i, 0.0)
    if w_g > 0.0:
        if global_position is None:
            raise EstimationError(f"Leader {i} has no global position measurement")
        nu += w_g * (global_position - p_hat_i)
    return nu


def observer_innovations(
        state: ObserverState,
        meas: MeasurementBundle,
        gains: ObserverGains,
        neighbor_views: Optional[Sequence[Mapping[int, np.ndarray]]] = None) -> np.ndarray:
    ''' innovations of all agents as an (N, 3) array '''
    relative = meas.relative_map()
    nus = np.zeros((state.n, 3))
    for i in range(state.n):
        if neighbor_views is None:
            view = {j: state.p_hat[j] for j in range(state.n)}
        else:
            view = neighbor_views[i]
        nus[i] = agent_innovation(
            i, state.p_hat[i], view, relative,
            meas.global_positions.get(i), gains)
    return nus


def observer_step(
        state: ObserverState,
        meas: MeasurementBundle,
        u: np.ndarray,
        gains: ObserverGains,
        dt: float,
        neighbor_views: Optional[Sequence[Mapping[int, np.ndarray]]] = None) -> ObserverState:
    '''
    One Euler step of dp_hat = v_hat + k_p nu, dv_hat = u + k_v nu.

    Parameters:
        state (ObserverState): estimates at the previous tick
        meas (MeasurementBundle): this tick's measurements
        u (numpy): commanded accelerations, shape (N, 3)
        gains (ObserverGains): observer gains
        dt (float): step in seconds
        neighbor_views (list): optional per agent mapping of neighbour id to
            the estimate received from it, defaults to the state snapshot

    Returns:
        ObserverState after one step
    '''
    nu = observer_innovations(state, meas, gains, neighbor_views)
    u = np.asarray(u, dtype=float).reshape(state.n, 3)
    return ObserverState(
        state.p_hat + dt * (state.v_hat + gains.k_p * nu),
        state.v_hat + dt * (u + gains.k_v * nu))


def observer_error_matrix(gains: ObserverGains, n_nodes: int) -> np.ndarray:
    '''
    Per axis error dynamics e_dot = A e for e = [p_hat - p; v_hat - v] in the
    noiseless case.
    '''
    t = gains.weight_matrix(n_nodes)
    return np.block([
        [-gains.k_p * t, np.eye(n_nodes)],
        [-gains.k_v * t, np.zeros((n_nodes, n_nodes))],
    ])


def slowest_decay_rate(a: np.ndarray) -> float:
    ''' -max Re(eig(a)), the asymptotic decay rate of e_dot = a e '''
    return -float(np.max(np.linalg.eigvals(a).real))


def check_observer_stability(
        g: WeightedGraph,
        leaders: LeaderSet,
        gains: ObserverGains,
        tol: float = 1e-12) -> StabilityResult:
    '''
    Builds the matrix B D_rp B^T + E D_gp E^T from the gain weights and
    reports whether its smallest eigenvalue is positive.
    '''
    for i in gains.global_weights:
        if i not in leaders and gains.global_weights[i] != 0.0:
            raise EstimationError(f"Agent {i} has a global gain but is not a leader")
    for (i, j) in gains.relative_weights:
        if not g.has_edge(i, j):
            raise EstimationError(f"Gain on ({i}, {j}) which is not a graph edge")
    t = gains.stability_matrix(g.n_nodes)
    min_eig = min_real_eigenvalue(t)
    return StabilityResult(min_eig > tol, min_eig, t)


@dataclass
class ScaleEstimatorState:
    s_est: np.ndarray
    weights: Dict[Tuple[int, int], float]
    leader_gains: Dict[int, float]

    def __post_init__(self):
        self.s_est = np.asarray(self.s_est, dtype=float).reshape(-1)

    @property
    def n(self) -> int:
        return self.s_est.shape[0]

    def system_matrix(self) -> np.ndarray:
        ''' L_s + G_s '''
        m = gain_laplacian(self.n, self.weights)
        for i, gi in self.leader_gains.items():
            m[i, i] += gi
        return m


def default_scale_estimator(
        g: WeightedGraph,
        leaders: LeaderSet,
        initial: float = 0.0) -> ScaleEstimatorState:
    ''' a_ij = g_i = 1/(N_i + 1) on leaders, a_ij = 1/N_i on followers '''
    if len(leaders) == 0:
        raise EstimationError("Scale estimator needs at least one leader")
    try:
        relative, global_ = leader_follower_weights(g, leaders)
    except GraphError as e:
        raise EstimationError(str(e))
    return ScaleEstimatorState(np.full(g.n_nodes, float(initial)), relative, global_)


def scale_rate(state: ScaleEstimatorState, s_true: float) -> np.ndarray:
    ''' -(L_s + G_s) s_est + G_s 1 s '''
    rate = np.zeros(state.n)
    for (i, j), a in state.weights.items():
        rate[i] -= a * (state.s_est[i] - state.s_est[j])
    for i, gi in state.leader_gains.items():
        rate[i] -= gi * (state.s_est[i] - s_true)
    return rate


def scale_step(
        state: ScaleEstimatorState,
        s_true: float,
        dt: float) -> ScaleEstimatorState:
    return ScaleEstimatorState(
        state.s_est + dt * scale_rate(state, s_true),
        state.weights,
        state.leader_gains)


def check_scale_stability(state: ScaleEstimatorState) -> StabilityResult:
    m = state.system_matrix()
    min_eig = min_real_eigenvalue(m)
    return StabilityResult(min_eig > 1e-12, min_eig, m)


def desired_trajectory_from_scale(
        center: Tuple[np.ndarray, np.ndarray],
        base_shape: np.ndarray,
        state: ScaleEstimatorState,
        s_true: float) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Approximated desired positions and velocities for a scaled formation.

    Parameters:
        center (tuple): formation centre position and velocity
        base_shape (numpy): zero mean offsets, shape (N, 3)
        state (ScaleEstimatorState): current scale estimates
        s_true (float): scale known to the leaders, drives the estimate rate

    Returns:
        (p_star, v_star), both (N, 3)
    '''
    base_shape = np.asarray(base_shape, dtype=float).reshape(state.n, 3)
    scale = max(1.0, float(np.max(np.abs(base_shape), initial=0.0)))
    if np.max(np.abs(base_shape.mean(axis=0))) > 1e-9 * scale:
        raise EstimationError("Formation base shape must have zero mean")
    p_c, v_c = (np.asarray(c, dtype=float).reshape(3) for c in center)
    s_dot = scale_rate(state, s_true)
    p_star = p_c + state.s_est[:, None] * base_shape
    v_star = v_c + s_dot[:, None] * base_shape
    return p_star, v_star
