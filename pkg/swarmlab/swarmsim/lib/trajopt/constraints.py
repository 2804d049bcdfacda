'''
Constraint rows over the acceleration decision vector: boundary and crossing
equalities, the tube and cone approximation of the ring, convexified
collision avoidance and the actuator box.

Every row is an affine function of the decision vector through the
integration maps of `trajectory.py`.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import logging
import numpy as np
import scipy.linalg

from ..numerics import QpProblem
from .trajectory import DIMS, BoundaryConditions, RingPose, Trajectory, \
    TrajectoryError, boundary_constraints, clamp_crossing, crossing_constraints, \
    crossing_time, jerk_cost_matrix, position_affine, travel_direction

logger = logging.getLogger(__name__)


class Tag(str, Enum):
    boundary = 'boundary'
    crossing = 'crossing'
    executed = 'executed'
    tube = 'tube'
    left_cone = 'leftCone'
    right_cone = 'rightCone'
    collision = 'collision'
    actuator = 'actuator'


@dataclass
class ConstraintSet:
    '''
    Equality block A_eq x = b_eq and inequality block A_in x <= b_in over a
    decision vector of size n, with a provenance tag per row.
    '''
    n: int
    _eq: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    _in: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    eq_tags: List[str] = field(default_factory=list)
    in_tags: List[str] = field(default_factory=list)

    def _check(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.size == 0:
            A = A.reshape(0, self.n)
        if A.shape[1] != self.n or A.shape[0] != b.shape[0]:
            raise TrajectoryError(
                f"Constraint block {A.shape} does not match {self.n} variables "
                f"and {b.shape[0]} bounds")
        return A, b

    def add_equalities(self, A, b, tag) -> ConstraintSet:
        A, b = self._check(A, b)
        self._eq.append((A, b))
        self.eq_tags.extend(self._tags(tag, A.shape[0]))
        return self

    def add_inequalities(self, A, b, tag) -> ConstraintSet:
        A, b = self._check(A, b)
        self._in.append((A, b))
        self.in_tags.extend(self._tags(tag, A.shape[0]))
        return self

    @staticmethod
    def _tags(tag, rows: int) -> List[str]:
        if isinstance(tag, (list, tuple)):
            if len(tag) != rows:
                raise TrajectoryError(f"{len(tag)} tags for {rows} rows")
            return [str(t.value if isinstance(t, Tag) else t) for t in tag]
        tag = tag.value if isinstance(tag, Tag) else str(tag)
        return [tag] * rows

    def extend(self, other: ConstraintSet, offset: int = 0) -> ConstraintSet:
        ''' appends the rows of `other`, placing its variables at `offset` '''
        if offset + other.n > self.n:
            raise TrajectoryError(
                f"Block of {other.n} variables at {offset} exceeds {self.n}")

        def place(A):
            full = np.zeros((A.shape[0], self.n))
            full[:, offset:offset + other.n] = A
            return full

        for (A, b) in other._eq:
            self._eq.append((place(A), b))
        for (A, b) in other._in:
            self._in.append((place(A), b))
        self.eq_tags.extend(other.eq_tags)
        self.in_tags.extend(other.in_tags)
        return self

    @property
    def A_eq(self) -> np.ndarray:
        return np.vstack([A for A, _ in self._eq]) if self._eq else np.zeros((0, self.n))

    @property
    def b_eq(self) -> np.ndarray:
        return np.concatenate([b for _, b in self._eq]) if self._eq else np.zeros(0)

    @property
    def A_in(self) -> np.ndarray:
        return np.vstack([A for A, _ in self._in]) if self._in else np.zeros((0, self.n))

    @property
    def b_in(self) -> np.ndarray:
        return np.concatenate([b for _, b in self._in]) if self._in else np.zeros(0)

    def count(self, tag) -> int:
        ''' number of inequality rows whose tag starts with `tag` '''
        tag = tag.value if isinstance(tag, Tag) else str(tag)
        return sum(1 for t in self.in_tags if t.startswith(tag))

    def problem(self, Q: Optional[np.ndarray] = None, q: Optional[np.ndarray] = None) -> QpProblem:
        if Q is None:
            Q = np.zeros((self.n, self.n))
        if q is None:
            q = np.zeros(self.n)
        return QpProblem(Q, q, self.A_eq, self.b_eq, self.A_in, self.b_in)

    def violations(self, x: np.ndarray) -> Dict[str, float]:
        ''' largest violation per tag family, equalities as absolute residual '''
        out: Dict[str, float] = {}
        if self._eq:
            res = np.abs(self.A_eq @ x - self.b_eq)
            for t, r in zip(self.eq_tags, res):
                key = t.split('(')[0]
                out[key] = max(out.get(key, 0.0), float(r))
        if self._in:
            res = self.A_in @ x - self.b_in
            for t, r in zip(self.in_tags, res):
                key = t.split('(')[0]
                out[key] = max(out.get(key, 0.0), max(float(r), 0.0))
        return out


def _affine_row(
        g: np.ndarray,
        k: int,
        point: np.ndarray,
        bound: float,
        p0: np.ndarray,
        v0: np.ndarray,
        K: int,
        h: float) -> Tuple[np.ndarray, float]:
    ''' g^T (p[k] - point) <= bound as a row over the decision vector '''
    m, c = position_affine(k, p0, v0, K, h)
    return g @ m, bound - g @ (c - point)


def _ring_row_specs(ring: RingPose, k_c: int, direction: int):
    ''' (tag, sample, g, bound) for the tube and both cones '''
    d = float(direction)
    specs = []
    for axis in (ring.r_y, ring.r_z):
        for sign in (1.0, -1.0):
            specs.append((Tag.tube, k_c, sign * axis, ring.tube_radius))
    for axis in (ring.r_y, ring.r_z):
        for sign in (1.0, -1.0):
            specs.append((Tag.left_cone, k_c - 1, sign * axis + d * ring.r_x, 0.0))
    for axis in (ring.r_y, ring.r_z):
        for sign in (1.0, -1.0):
            specs.append((Tag.right_cone, k_c + 1, sign * axis - d * ring.r_x, 0.0))
    return specs


def ring_constraints(
        ring: RingPose,
        k_c: int,
        bc: BoundaryConditions,
        agent: int,
        direction: Optional[int] = None,
        after: int = -1) -> ConstraintSet:
    '''
    Tube rows at k_c and cone rows at k_c - 1 (approach side) and k_c + 1
    (exit side), each absolute value expanded into two linear rows.

    Parameters:
        ring (RingPose): ring to cross
        k_c (int): crossing sample, 1 <= k_c <= K - 1
        bc (BoundaryConditions): boundary conditions of all agents
        agent (int): agent id
        direction (int): +1 when crossing along r_x, -1 against it, taken
            from the boundary conditions by default
        after (int): rows are kept only on samples strictly after this one

    Returns:
        ConstraintSet over the 3K accelerations of the agent
    '''
    K, h = bc.K, bc.h
    if not 1 <= k_c <= K - 1:
        raise TrajectoryError(f"Crossing sample {k_c} outside 1..{K - 1}")
    if direction is None:
        direction = travel_direction(bc, agent, ring)
    p0, v0 = bc.p0[agent], bc.v0[agent]
    rows, bounds, tags = [], [], []
    for tag, k, g, bound in _ring_row_specs(ring, k_c, direction):
        if k <= after:
            continue
        row, rhs = _affine_row(g, k, ring.center, bound, p0, v0, K, h)
        rows.append(row)
        bounds.append(rhs)
        tags.append(tag)
    cs = ConstraintSet(DIMS * K)
    if rows:
        cs.add_inequalities(np.vstack(rows), np.array(bounds), tags)
    return cs


def ring_residuals(
        ring: RingPose,
        k_c: int,
        pos: np.ndarray,
        direction: int = -1) -> Dict[str, float]:
    ''' largest g^T (p[k] - r_o) - bound per row family on sampled positions, <= 0 when satisfied '''
    out: Dict[str, float] = {}
    for tag, k, g, bound in _ring_row_specs(ring, k_c, direction):
        value = float(g @ (pos[k] - ring.center) - bound)
        out[tag.value] = max(out.get(tag.value, -np.inf), value)
    return out


class CollisionMode(str, Enum):
    joint = 'joint'
    single_i = 'single_i'
    single_j = 'single_j'


@dataclass(frozen=True)
class HalfSpace:
    '''
    a_i^T p_i + a_j^T p_j <= b, the convexified separation of agents i and j
    at one sample.
    '''
    a_i: np.ndarray
    a_j: np.ndarray
    b: float
    eta: np.ndarray

    def value(self, p_i: np.ndarray, p_j: np.ndarray) -> float:
        ''' <= 0 when satisfied '''
        return float(self.a_i @ p_i + self.a_j @ p_j - self.b)


def convexify_pair(
        p_i_prev: np.ndarray,
        p_j_prev: np.ndarray,
        mode: CollisionMode,
        r_collision: float,
        eta: Optional[np.ndarray] = None) -> HalfSpace:
    '''
    Linearises ||p_i - p_j|| >= R around the previous points with
    eta = (p_i_prev - p_j_prev) / ||p_i_prev - p_j_prev||.

    joint:     eta^T (p_i - p_j) >= R over both agents
    single_i:  eta^T (p_i - p_j_prev) >= R over agent i
    single_j:  eta^T (p_i_prev - p_j) >= R over agent j
    '''
    p_i_prev = np.asarray(p_i_prev, dtype=float)
    p_j_prev = np.asarray(p_j_prev, dtype=float)
    if eta is None:
        diff = p_i_prev - p_j_prev
        dist = float(np.linalg.norm(diff))
        if dist == 0.0:
            raise TrajectoryError("Previous points coincide, separation direction undefined")
        eta = diff / dist
    mode = CollisionMode(mode)
    zero = np.zeros(DIMS)
    if mode == CollisionMode.joint:
        return HalfSpace(-eta, eta, -r_collision, eta)
    if mode == CollisionMode.single_i:
        return HalfSpace(-eta, zero, -r_collision - eta @ p_j_prev, eta)
    return HalfSpace(zero, eta, eta @ p_i_prev - r_collision, eta)


def separation_direction(
        pos_i: np.ndarray,
        pos_j: np.ndarray,
        k: int,
        i: int,
        j: int) -> np.ndarray:
    '''
    Unit direction from p_j[k] to p_i[k]. When the samples coincide the
    difference at the nearest sample where they differ is used, earlier
    sample first, and a fixed axis oriented by id order when the two
    trajectories coincide everywhere. Swapping i and j negates the result.
    '''
    n = pos_i.shape[0]
    for offset in range(n):
        for kk in (k - offset, k + offset):
            if 0 <= kk < n:
                diff = pos_i[kk] - pos_j[kk]
                dist = float(np.linalg.norm(diff))
                if dist > 0.0:
                    return diff / dist
    return np.array([1.0 if i < j else -1.0, 0.0, 0.0])


def single_collision_rows(
        own_prev: np.ndarray,
        other_prev: np.ndarray,
        own_id: int,
        other_id: int,
        p0: np.ndarray,
        v0: np.ndarray,
        K: int,
        h: float,
        r_collision: float,
        samples: Iterable[int]) -> ConstraintSet:
    '''
    Rows keeping the own trajectory outside the R ball around a frozen
    neighbour trajectory, one row per sample.
    '''
    cs = ConstraintSet(DIMS * K)
    rows, bounds, tags = [], [], []
    for k in samples:
        eta = separation_direction(own_prev, other_prev, k, own_id, other_id)
        hs = convexify_pair(own_prev[k], other_prev[k], CollisionMode.single_i, r_collision, eta)
        row, rhs = _affine_row(hs.a_i, k, np.zeros(DIMS), hs.b, p0, v0, K, h)
        rows.append(row)
        bounds.append(rhs)
        tags.append(f"collision({own_id},{other_id},{k})")
    if rows:
        cs.add_inequalities(np.vstack(rows), np.array(bounds), tags)
    return cs


def joint_collision_rows(
        prev_i: np.ndarray,
        prev_j: np.ndarray,
        i: int,
        j: int,
        bc_i: Tuple[np.ndarray, np.ndarray],
        bc_j: Tuple[np.ndarray, np.ndarray],
        K: int,
        h: float,
        r_collision: float,
        samples: Iterable[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[str]]:
    '''
    Joint separation rows over the blocks of agents i and j.

    Returns:
        (A_i, A_j, b, tags) with A_i x_i + A_j x_j <= b
    '''
    rows_i, rows_j, bounds, tags = [], [], [], []
    for k in samples:
        eta = separation_direction(prev_i, prev_j, k, i, j)
        hs = convexify_pair(prev_i[k], prev_j[k], CollisionMode.joint, r_collision, eta)
        m_i, c_i = position_affine(k, bc_i[0], bc_i[1], K, h)
        m_j, c_j = position_affine(k, bc_j[0], bc_j[1], K, h)
        rows_i.append(hs.a_i @ m_i)
        rows_j.append(hs.a_j @ m_j)
        bounds.append(hs.b - hs.a_i @ c_i - hs.a_j @ c_j)
        tags.append(f"collision({i},{j},{k})")
    n = DIMS * K
    if not rows_i:
        return np.zeros((0, n)), np.zeros((0, n)), np.zeros(0), []
    return np.vstack(rows_i), np.vstack(rows_j), np.array(bounds), tags


def actuator_rows(K: int, a_min: float, a_max: float, start: int = 0) -> ConstraintSet:
    ''' a_min <= a[l][d] <= a_max for l >= start, 6 (K - start) rows '''
    if not a_min < a_max:
        raise TrajectoryError(f"Actuator bounds must satisfy a_min < a_max, got {a_min}, {a_max}")
    n = DIMS * K
    eye = np.eye(n)[DIMS * start:]
    cs = ConstraintSet(n)
    cs.add_inequalities(
        np.vstack([eye, -eye]),
        np.concatenate([np.full(eye.shape[0], a_max), np.full(eye.shape[0], -a_min)]),
        Tag.actuator)
    return cs


def executed_prefix_rows(x_prev: np.ndarray, k: int) -> ConstraintSet:
    ''' pins the accelerations already executed, a[l] for l < k '''
    n = x_prev.shape[0]
    cs = ConstraintSet(n)
    if k > 0:
        cs.add_equalities(np.eye(n)[:DIMS * k], x_prev[:DIMS * k], Tag.executed)
    return cs


def agent_constraints(
        bc: BoundaryConditions,
        agent: int,
        ring: RingPose,
        k_c: int,
        a_min: float,
        a_max: float,
        after: int = -1,
        x_prev: Optional[np.ndarray] = None) -> ConstraintSet:
    '''
    Boundary equalities, ring rows and actuator box of one agent. With
    `x_prev` and `after` > 0 the executed prefix a[0..after-1] is pinned and
    the actuator box only covers the accelerations still to be flown.
    '''
    p0, v0, pf, vf = bc.agent(agent)
    cs = ConstraintSet(DIMS * bc.K)
    A, b = boundary_constraints(p0, v0, pf, vf, bc.K, bc.h)
    cs.add_equalities(A, b, Tag.boundary)
    start = 0
    if x_prev is not None and after > 0:
        cs.extend(executed_prefix_rows(x_prev, after))
        start = after
    cs.extend(ring_constraints(ring, k_c, bc, agent, after=after))
    cs.extend(actuator_rows(bc.K, a_min, a_max, start))
    return cs


def build_centralized(
        bc: BoundaryConditions,
        ring: RingPose,
        previous: Sequence[Trajectory],
        r_collision: float = 0.3,
        a_min: float = -5.0,
        a_max: float = 5.0,
        pin_crossing: bool = False,
        v_cross: Optional[float] = None) -> Tuple[QpProblem, ConstraintSet]:
    '''
    Minimum jerk problem over the stacked accelerations of every agent.

    Parameters:
        bc (BoundaryConditions): boundary conditions of all agents
        ring (RingPose): ring to cross
        previous (list): previous solution of every agent, used for the
            crossing samples and the joint collision convexification
        r_collision (float): separation distance
        a_min, a_max (float): actuator box
        pin_crossing (bool): also pin p[k_c] = r_o and v[k_c] along r_x
        v_cross (float): crossing speed when pinning

    Returns:
        (QpProblem, ConstraintSet) over 3 N K variables
    '''
    N, K, h = bc.n_agents, bc.K, bc.h
    if len(previous) != N:
        raise TrajectoryError(f"{len(previous)} previous solutions for {N} agents")
    block = DIMS * K
    cs = ConstraintSet(N * block)

    for i in range(N):
        k_c = clamp_crossing(crossing_time(previous[i], ring), K)
        own = agent_constraints(bc, i, ring, k_c, a_min, a_max)
        if pin_crossing:
            speed = bc.mean_speed(i) if v_cross is None else v_cross
            velocity = travel_direction(bc, i, ring) * speed * ring.r_x
            A, b = crossing_constraints(bc.p0[i], bc.v0[i], K, h, k_c, ring.center, velocity)
            own.add_equalities(A, b, Tag.crossing)
        cs.extend(own, i * block)

    for i in range(N):
        for j in range(i + 1, N):
            A_i, A_j, b, tags = joint_collision_rows(
                previous[i].pos, previous[j].pos, i, j,
                (bc.p0[i], bc.v0[i]), (bc.p0[j], bc.v0[j]),
                K, h, r_collision, range(1, K + 1))
            A = np.zeros((A_i.shape[0], N * block))
            A[:, i * block:(i + 1) * block] = A_i
            A[:, j * block:(j + 1) * block] = A_j
            cs.add_inequalities(A, b, tags)

    Q = scipy.linalg.block_diag(*[jerk_cost_matrix(K, h)] * N)
    return cs.problem(Q, np.zeros(N * block)), cs
