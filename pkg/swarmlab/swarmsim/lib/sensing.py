'''
Simulated bearing and distance sensor.

A reading of agent j taken by agent i is the global difference p_j - p_i
rotated into i's body frame and expressed as (r, theta, phi). Preprocessing
maps it back to a global Cartesian relative measurement with the attitude
estimate of agent i.
'''

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation


class SensingError(RuntimeError):
    ''' Error raised for readings or attitudes that are not valid'''
    pass


class Frame(str, Enum):
    local = 'local_i'
    world = 'global'


@dataclass(frozen=True)
class SphericalReading:
    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r < 0:
            raise SensingError(f"Range must be finite and non negative, got {self.r}")
        if not 0.0 <= self.theta <= np.pi:
            raise SensingError(f"theta must be in [0, pi], got {self.theta}")
        if not -np.pi < self.phi <= np.pi:
            raise SensingError(f"phi must be in (-pi, pi], got {self.phi}")


class Attitude:
    '''
    Rotation from the body frame of an agent to the global frame.
    '''

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (3, 3):
            raise SensingError(f"Attitude must be 3x3, got {matrix.shape}")
        if np.max(np.abs(matrix.T @ matrix - np.eye(3))) > 1e-10:
            raise SensingError("Attitude matrix is not orthonormal")
        if abs(np.linalg.det(matrix) - 1.0) > 1e-10:
            raise SensingError("Attitude matrix is not a proper rotation")
        self.R = matrix

    @classmethod
    def identity(cls) -> Attitude:
        return cls(np.eye(3))

    @classmethod
    def from_yaw(cls, yaw: float) -> Attitude:
        return cls(Rotation.from_euler('z', yaw).as_matrix())

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_matrix(self.R)

    def __repr__(self):
        return f"Attitude(rotvec={self.rotation.as_rotvec()})"


@dataclass(frozen=True)
class RelativeMeasurement:
    '''
    Position of `target_id` relative to `observer_id`, p_target - p_observer
    when the frame is global.
    '''
    observer_id: int
    target_id: int
    value: np.ndarray
    frame: Frame = Frame.world

    def __post_init__(self):
        if self.observer_id == self.target_id:
            raise SensingError(
                f"Agent {self.observer_id} cannot measure itself")


def _wrap_phi(phi: float) -> float:
    phi = float(np.arctan2(np.sin(phi), np.cos(phi)))
    return np.pi if phi <= -np.pi else phi


def cartesian_to_spherical(v: np.ndarray) -> SphericalReading:
    x, y, z = (float(c) for c in v)
    r = float(np.sqrt(x * x + y * y + z * z))
    if r == 0.0:
        raise SensingError("Bearing is undefined for a zero length vector")
    rho = float(np.hypot(x, y))
    # arctan2 form of arccos(z / r), stable near the poles
    theta = float(np.arctan2(rho, z))
    phi = 0.0 if rho == 0.0 else float(np.arctan2(y, x))
    if phi <= -np.pi:
        phi = np.pi
    return SphericalReading(r, theta, phi)


def simulate_sensor(
        p_i: np.ndarray,
        p_j: np.ndarray,
        att_i: Attitude) -> SphericalReading:
    ''' reading of agent j as seen from agent i's body frame '''
    diff = np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float)
    if not np.any(diff):
        raise SensingError("Observer and target positions coincide")
    return cartesian_to_spherical(att_i.R.T @ diff)


def spherical_to_local(s: SphericalReading) -> np.ndarray:
    sin_theta = np.sin(s.theta)
    return s.r * np.array([
        sin_theta * np.cos(s.phi),
        sin_theta * np.sin(s.phi),
        np.cos(s.theta),
    ])


def local_to_global(v_local: np.ndarray, att: Attitude) -> np.ndarray:
    return att.R @ np.asarray(v_local, dtype=float)


def global_to_local(v_global: np.ndarray, att: Attitude) -> np.ndarray:
    return att.R.T @ np.asarray(v_global, dtype=float)


def attitude_with_noise(
        true_att: Attitude,
        angle_noise_std: float,
        rng: np.random.Generator) -> Attitude:
    '''
    Composes the true attitude with a random rotation whose rotation vector
    is zero mean Gaussian with the given per axis standard deviation.
    '''
    if angle_noise_std < 0:
        raise SensingError(f"Noise std must be non negative, got {angle_noise_std}")
    if angle_noise_std == 0:
        return Attitude(true_att.R.copy())
    noise = Rotation.from_rotvec(rng.normal(0.0, angle_noise_std, size=3))
    matrix = (true_att.rotation * noise).as_matrix()
    # re-orthonormalise to stay inside the attitude tolerance
    u, _, vt = np.linalg.svd(matrix)
    return Attitude(u @ vt)


def add_reading_noise(
        reading: SphericalReading,
        stds: Sequence[float],
        rng: Optional[np.random.Generator]) -> SphericalReading:
    ''' zero mean Gaussian noise on (r, theta, phi), theta clamped and phi wrapped '''
    r_std, theta_std, phi_std = stds
    if rng is None or (r_std == 0 and theta_std == 0 and phi_std == 0):
        return reading
    r = max(0.0, reading.r + rng.normal(0.0, r_std))
    theta = float(np.clip(reading.theta + rng.normal(0.0, theta_std), 0.0, np.pi))
    phi = _wrap_phi(reading.phi + rng.normal(0.0, phi_std))
    return SphericalReading(r, theta, phi)


def measure_relative(
        observer_id: int,
        target_id: int,
        p_i: np.ndarray,
        p_j: np.ndarray,
        att_true: Attitude,
        att_estimate: Attitude,
        stds: Sequence[float] = (0.0, 0.0, 0.0),
        rng: Optional[np.random.Generator] = None) -> RelativeMeasurement:
    '''
    Full sensing pipeline for one ordered pair: simulate the reading with the
    true attitude, add reading noise, then preprocess with the attitude
    estimate into a global relative measurement.
    '''
    reading = add_reading_noise(simulate_sensor(p_i, p_j, att_true), stds, rng)
    value = local_to_global(spherical_to_local(reading), att_estimate)
    return RelativeMeasurement(observer_id, target_id, value, Frame.world)
