'''
Discrete double integrator trajectories over a horizon of K steps of h
seconds, the ring pose and the minimum jerk initial solution.

The decision vector of one agent stacks its accelerations sample by sample,
x[3 l + d] = a[l][d] for l in 0..K-1. Positions and velocities follow from
zero order hold on the acceleration,

    v[k] = v0 + h sum_{l<k} a[l]
    p[k] = p0 + k h v0 + h^2 sum_{l<k} (k - l - 1/2) a[l]
'''

from __future__ import annotations
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import logging
import numpy as np

from ..numerics import QpProblem, forward_difference_matrix, solve_qp

logger = logging.getLogger(__name__)


DIMS = 3


class TrajectoryError(RuntimeError):
    ''' Error raised for invalid horizons, boundary conditions or ring poses'''
    pass


class SolverFailure(TrajectoryError):
    ''' A projection or planning QP did not return an optimal solution'''

    def __init__(self, message: str, agent: Optional[int] = None, status: str = ''):
        super().__init__(message)
        self.agent = agent
        self.status = status


def _vec3(v, label: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (DIMS,) or not np.all(np.isfinite(v)):
        raise TrajectoryError(f"{label} must be a finite 3 vector, got {v}")
    return v


@dataclass
class RingPose:
    '''
    Ring opening with centre r_o and orthonormal axes, r_x being the normal
    of the opening.
    '''
    center: np.ndarray
    r_x: np.ndarray
    r_y: np.ndarray
    r_z: np.ndarray
    radius: float = 0.6
    tube_radius: float = 0.3

    def __post_init__(self):
        self.center = _vec3(self.center, 'Ring centre')
        self.r_x = _vec3(self.r_x, 'r_x')
        self.r_y = _vec3(self.r_y, 'r_y')
        self.r_z = _vec3(self.r_z, 'r_z')
        if np.max(np.abs(self.axes @ self.axes.T - np.eye(DIMS))) > 1e-10:
            raise TrajectoryError("Ring axes are not orthonormal")
        if not 0.0 < self.tube_radius <= self.radius:
            raise TrajectoryError(
                f"Tube radius must be in (0, radius], got {self.tube_radius} "
                f"for radius {self.radius}")

    @classmethod
    def from_normal(
            cls,
            center,
            normal,
            up=(0.0, 0.0, 1.0),
            radius: float = 0.6,
            tube_radius: float = 0.3) -> RingPose:
        ''' axes from the opening normal and an up hint that is not parallel to it '''
        r_x = _vec3(normal, 'Ring normal')
        r_x = r_x / np.linalg.norm(r_x)
        up = _vec3(up, 'Ring up vector')
        r_z = up - (up @ r_x) * r_x
        norm = np.linalg.norm(r_z)
        if norm < 1e-9:
            raise TrajectoryError("Ring up vector is parallel to the normal")
        r_z = r_z / norm
        r_y = np.cross(r_z, r_x)
        return cls(center, r_x, r_y, r_z, radius, tube_radius)

    @property
    def axes(self) -> np.ndarray:
        ''' rows r_x, r_y, r_z '''
        return np.vstack([self.r_x, self.r_y, self.r_z])

    def local(self, p: np.ndarray) -> np.ndarray:
        ''' coordinates of points p (..., 3) in the ring frame '''
        return (np.asarray(p, dtype=float) - self.center) @ self.axes.T

    def to_dict(self) -> Dict:
        return {
            'center': self.center.tolist(),
            'normal': self.r_x.tolist(),
            'up': self.r_z.tolist(),
            'radius': self.radius,
            'tube_radius': self.tube_radius,
        }


@dataclass
class BoundaryConditions:
    '''
    Initial and final positions and velocities of every agent, (N, 3) each,
    over a horizon of K steps of h seconds.
    '''
    p0: np.ndarray
    v0: np.ndarray
    pf: np.ndarray
    vf: np.ndarray
    K: int
    h: float

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float).reshape(-1, DIMS)
        n = self.p0.shape[0]
        self.v0 = self._block(self.v0, n, 'v0')
        self.pf = self._block(self.pf, n, 'pf')
        self.vf = self._block(self.vf, n, 'vf')
        if int(self.K) != self.K or self.K < 4:
            raise TrajectoryError(f"Horizon K must be an integer >= 4, got {self.K}")
        self.K = int(self.K)
        if not self.h > 0:
            raise TrajectoryError(f"Step h must be positive, got {self.h}")

    @staticmethod
    def _block(v, n, label):
        v = np.asarray(v, dtype=float).reshape(-1, DIMS)
        if v.shape[0] != n or not np.all(np.isfinite(v)):
            raise TrajectoryError(f"{label} must be a finite ({n}, 3) array")
        return v

    @classmethod
    def rest_to_rest(cls, p0, pf, K: int, h: float) -> BoundaryConditions:
        p0 = np.asarray(p0, dtype=float).reshape(-1, DIMS)
        return cls(p0, np.zeros_like(p0), pf, np.zeros_like(p0), K, h)

    @property
    def n_agents(self) -> int:
        return self.p0.shape[0]

    @property
    def horizon(self) -> float:
        return self.K * self.h

    def agent(self, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.p0[i], self.v0[i], self.pf[i], self.vf[i]

    def mean_speed(self, i: int) -> float:
        ''' straight line speed ||pf - p0|| / (K h) '''
        return float(np.linalg.norm(self.pf[i] - self.p0[i]) / self.horizon)


def position_map(K: int, h: float) -> np.ndarray:
    ''' Phi with p[k] = p0 + k h v0 + (Phi a)[k], shape (K+1, K) '''
    k = np.arange(K + 1)[:, None]
    ell = np.arange(K)[None, :]
    return np.where(ell < k, h * h * (k - ell - 0.5), 0.0)


def velocity_map(K: int, h: float) -> np.ndarray:
    ''' Psi with v[k] = v0 + (Psi a)[k], shape (K+1, K) '''
    k = np.arange(K + 1)[:, None]
    ell = np.arange(K)[None, :]
    return np.where(ell < k, h, 0.0)


def position_affine(
        k: int,
        p0: np.ndarray,
        v0: np.ndarray,
        K: int,
        h: float) -> Tuple[np.ndarray, np.ndarray]:
    ''' (M, c) with p[k] = M x + c, M of shape (3, 3K) '''
    m = np.kron(position_map(K, h)[k][None, :], np.eye(DIMS))
    return m, p0 + k * h * v0


def velocity_affine(
        k: int,
        v0: np.ndarray,
        K: int,
        h: float) -> Tuple[np.ndarray, np.ndarray]:
    ''' (M, c) with v[k] = M x + c '''
    m = np.kron(velocity_map(K, h)[k][None, :], np.eye(DIMS))
    return m, np.array(v0, dtype=float)


@lru_cache(maxsize=32)
def _maps(K: int, h: float) -> Tuple[np.ndarray, np.ndarray]:
    return position_map(K, h), velocity_map(K, h)


def plan_positions(x: np.ndarray, p0: np.ndarray, v0: np.ndarray, h: float) -> np.ndarray:
    ''' (K+1, 3) positions of a stacked acceleration vector '''
    a = np.asarray(x, dtype=float).reshape(-1, DIMS)
    K = a.shape[0]
    phi, _ = _maps(K, float(h))
    k = np.arange(K + 1)[:, None]
    return p0 + k * h * v0 + phi @ a


def integrate(
        accel: np.ndarray,
        p0: np.ndarray,
        v0: np.ndarray,
        h: float) -> Tuple[np.ndarray, np.ndarray]:
    ''' forward recursion of the double integrator, (K+1, 3) positions and velocities '''
    accel = np.asarray(accel, dtype=float).reshape(-1, DIMS)
    K = accel.shape[0]
    pos = np.zeros((K + 1, DIMS))
    vel = np.zeros((K + 1, DIMS))
    pos[0] = p0
    vel[0] = v0
    for k in range(K):
        pos[k + 1] = pos[k] + h * vel[k] + 0.5 * h * h * accel[k]
        vel[k + 1] = vel[k] + h * accel[k]
    return pos, vel


@dataclass
class Trajectory:
    accel: np.ndarray
    p0: np.ndarray
    v0: np.ndarray
    h: float
    pos: np.ndarray = field(init=False)
    vel: np.ndarray = field(init=False)

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=float).reshape(-1, DIMS)
        self.p0 = _vec3(self.p0, 'p0')
        self.v0 = _vec3(self.v0, 'v0')
        self.pos, self.vel = integrate(self.accel, self.p0, self.v0, self.h)

    @classmethod
    def from_x(cls, x: np.ndarray, p0, v0, h: float) -> Trajectory:
        return cls(np.asarray(x, dtype=float).reshape(-1, DIMS), p0, v0, h)

    @property
    def K(self) -> int:
        return self.accel.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.accel.reshape(-1).copy()

    def consistency_error(self) -> float:
        ''' largest gap between the recursion and the closed form integration maps '''
        a = self.accel
        k = np.arange(self.K + 1)[:, None]
        pos = self.p0 + k * self.h * self.v0 + position_map(self.K, self.h) @ a
        vel = self.v0 + velocity_map(self.K, self.h) @ a
        return float(max(np.max(np.abs(pos - self.pos)), np.max(np.abs(vel - self.vel))))

    def jerk_cost(self) -> float:
        d = forward_difference_matrix(self.K, self.h, DIMS)
        return float(np.sum((d @ self.x) ** 2))

    def playback(self, dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        '''
        Exact zero order hold samples of the plan every dt seconds.

        Returns:
            (t, p, v, a), one row per sample from 0 up to K h inclusive
        '''
        if dt <= 0:
            raise TrajectoryError(f"Playback step must be positive, got {dt}")
        n = int(np.floor(self.K * self.h / dt + 1e-9))
        t = np.arange(n + 1) * dt
        k = np.minimum((t / self.h + 1e-9).astype(int), self.K - 1)
        tau = (t - k * self.h)[:, None]
        a = self.accel[k]
        p = self.pos[k] + self.vel[k] * tau + 0.5 * a * tau * tau
        v = self.vel[k] + a * tau
        return t, p, v, a

    def to_rows(self) -> List[Dict]:
        ''' one dict per sample {k, t, p, v, a}, a is null on the final sample '''
        rows = []
        for k in range(self.K + 1):
            rows.append({
                'k': k,
                't': k * self.h,
                'p': self.pos[k].tolist(),
                'v': self.vel[k].tolist(),
                'a': self.accel[k].tolist() if k < self.K else None,
            })
        return rows


def jerk_cost_matrix(K: int, h: float) -> np.ndarray:
    ''' Q = 2 D^T D so that 1/2 x^T Q x = ||D x||^2 '''
    d = forward_difference_matrix(K, h, DIMS)
    return 2.0 * d.T @ d


def boundary_constraints(
        p0: np.ndarray,
        v0: np.ndarray,
        pf: np.ndarray,
        vf: np.ndarray,
        K: int,
        h: float) -> Tuple[np.ndarray, np.ndarray]:
    ''' rows pinning p[K] = pf and v[K] = vf, shape (6, 3K) '''
    mp, cp = position_affine(K, p0, v0, K, h)
    mv, cv = velocity_affine(K, v0, K, h)
    return np.vstack([mp, mv]), np.concatenate([pf - cp, vf - cv])


def crossing_constraints(
        p0: np.ndarray,
        v0: np.ndarray,
        K: int,
        h: float,
        k_c: int,
        point: np.ndarray,
        velocity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ''' rows pinning p[k_c] = point and v[k_c] = velocity '''
    mp, cp = position_affine(k_c, p0, v0, K, h)
    mv, cv = velocity_affine(k_c, v0, K, h)
    return np.vstack([mp, mv]), np.concatenate([point - cp, velocity - cv])


def _solve_equality_plan(
        A: np.ndarray,
        b: np.ndarray,
        K: int,
        h: float,
        agent: int,
        label: str) -> np.ndarray:
    problem = QpProblem(jerk_cost_matrix(K, h), np.zeros(DIMS * K), A, b)
    sol = solve_qp(problem)
    if not sol.ok:
        raise SolverFailure(
            f"{label} plan of agent {agent} failed with status {sol.status.value}",
            agent, sol.status.value)
    return sol.x


def straight_line(bc: BoundaryConditions, agent: int) -> Trajectory:
    ''' minimum jerk plan subject to the boundary conditions only '''
    p0, v0, pf, vf = bc.agent(agent)
    A, b = boundary_constraints(p0, v0, pf, vf, bc.K, bc.h)
    x = _solve_equality_plan(A, b, bc.K, bc.h, agent, 'Straight line')
    return Trajectory.from_x(x, p0, v0, bc.h)


def crossing_time(traj: Trajectory, ring: RingPose) -> int:
    ''' sample nearest the ring centre, the first one on ties '''
    d2 = np.sum((traj.pos - ring.center) ** 2, axis=1)
    return int(np.argmin(d2))


def clamp_crossing(k_c: int, K: int) -> int:
    ''' keeps the crossing triplet k_c - 1, k_c, k_c + 1 on free samples '''
    return int(min(max(k_c, 2), K - 2))


def travel_direction(bc: BoundaryConditions, agent: int, ring: RingPose) -> int:
    '''
    +1 when the agent crosses the opening along r_x, -1 against it. Agents
    with no displacement along the normal approach from the +r_x side.
    '''
    along = float(ring.r_x @ (bc.pf[agent] - bc.p0[agent]))
    return 1 if along > 0 else -1


def crossing_center(
        bc: BoundaryConditions,
        agent: int,
        ring: RingPose,
        k_c: int,
        v_cross: Optional[float] = None) -> Trajectory:
    '''
    Minimum jerk plan through the ring centre at sample k_c, crossing along
    the ring normal.

    Parameters:
        bc (BoundaryConditions): boundary conditions of all agents
        agent (int): agent id
        ring (RingPose): ring to cross
        k_c (int): crossing sample, 1 <= k_c <= K - 1
        v_cross (float): crossing speed, defaults to the straight line speed

    Returns:
        Trajectory with p[k_c] = r_o and v[k_c] parallel to r_x
    '''
    if not 1 <= k_c <= bc.K - 1:
        raise TrajectoryError(f"Crossing sample {k_c} outside 1..{bc.K - 1}")
    if v_cross is None:
        v_cross = bc.mean_speed(agent)
    p0, v0, pf, vf = bc.agent(agent)
    velocity = travel_direction(bc, agent, ring) * v_cross * ring.r_x
    A_b, b_b = boundary_constraints(p0, v0, pf, vf, bc.K, bc.h)
    A_c, b_c = crossing_constraints(p0, v0, bc.K, bc.h, k_c, ring.center, velocity)
    x = _solve_equality_plan(
        np.vstack([A_b, A_c]), np.concatenate([b_b, b_c]), bc.K, bc.h, agent,
        'Ring crossing')
    return Trajectory.from_x(x, p0, v0, bc.h)


def initial_solution(
        bc: BoundaryConditions,
        agent: int,
        ring: RingPose,
        v_cross: Optional[float] = None) -> Trajectory:
    ''' straight line plan, its crossing sample, then the plan through the ring centre '''
    line = straight_line(bc, agent)
    k_c = clamp_crossing(crossing_time(line, ring), bc.K)
    logger.debug(f"Agent {agent} initial crossing sample {k_c}")
    return crossing_center(bc, agent, ring, k_c, v_cross)


def ring_crossing_offset(traj: Trajectory, ring: RingPose) -> Optional[float]:
    '''
    Distance from the ring centre, within the ring plane, at the first
    crossing of the plane. The crossing point is interpolated linearly
    between the two samples on either side. None when the plan never
    crosses.
    '''
    local = ring.local(traj.pos)
    s = local[:, 0]
    for k in range(traj.K + 1):
        if s[k] == 0.0:
            return float(np.linalg.norm(local[k, 1:]))
        if k < traj.K and s[k] * s[k + 1] < 0.0:
            frac = s[k] / (s[k] - s[k + 1])
            point = local[k] + frac * (local[k + 1] - local[k])
            return float(np.linalg.norm(point[1:]))
    return None
