'''
Random walk tracker that picks each agent's position out of an unordered
set of motion capture measurements.

Each tick runs predict -> associate -> correct per agent. Measurements are
claimed greedily in ascending agent order so no measurement is consumed by
two trackers.
'''

from __future__ import annotations
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

import json
import logging
import numpy as np

logger = logging.getLogger(__name__)

# consecutive misses (1 s at 5 ms ticks) before a track is considered lost
DEFAULT_LOST_AFTER = 200


class TrackingError(RuntimeError):
    ''' Error raised when tracker steps are called out of order'''
    pass


class TrackerPhase(str, Enum):
    predicted = 'predicted'
    corrected = 'corrected'


@dataclass(frozen=True)
class TrackerGains:
    k_p: float = 0.8
    k_v: float = 0.0005

    def __post_init__(self):
        if not 0.0 < self.k_p <= 1.0:
            raise TrackingError(f"k_p must be in (0, 1], got {self.k_p}")
        if self.k_v < 0.0:
            raise TrackingError(f"k_v must be non negative, got {self.k_v}")


@dataclass(frozen=True)
class TrackerState:
    p_hat: np.ndarray
    v_hat: np.ndarray
    phase: TrackerPhase = TrackerPhase.corrected
    missed_count: int = 0

    @classmethod
    def at(cls, position: Sequence[float]) -> TrackerState:
        ''' tracker initialised at a known position, at rest '''
        return cls(np.asarray(position, dtype=float).copy(), np.zeros(3))

    def is_lost(self, lost_after: int = DEFAULT_LOST_AFTER) -> bool:
        return self.missed_count >= lost_after


def predict(s: TrackerState, dt: float) -> TrackerState:
    if dt <= 0:
        raise TrackingError(f"Time step must be positive, got {dt}")
    return replace(
        s,
        p_hat=s.p_hat + s.v_hat * dt,
        phase=TrackerPhase.predicted)


def associate(
        s: TrackerState,
        z_set: Sequence[np.ndarray]) -> Optional[Tuple[np.ndarray, int]]:
    '''
    Nearest measurement to the predicted position.

    Returns:
        (measurement, index into z_set), ties resolved to the lowest index.
        None signals a missing measurement.
    '''
    if s.phase != TrackerPhase.predicted:
        raise TrackingError("associate requires a predicted tracker state")
    if len(z_set) == 0:
        return None
    z = np.asarray(z_set, dtype=float).reshape(-1, 3)
    distances = np.sum((z - s.p_hat) ** 2, axis=1)
    index = int(np.argmin(distances))
    return z[index].copy(), index


def correct(s: TrackerState, z: np.ndarray, g: TrackerGains) -> TrackerState:
    if s.phase != TrackerPhase.predicted:
        raise TrackingError("correct requires a predicted tracker state")
    innovation = np.asarray(z, dtype=float) - s.p_hat
    return TrackerState(
        p_hat=s.p_hat + g.k_p * innovation,
        v_hat=s.v_hat + g.k_v * innovation,
        phase=TrackerPhase.corrected,
        missed_count=0)


def track_swarm(
        trackers: List[TrackerState],
        z_set: Sequence[np.ndarray],
        g: TrackerGains,
        dt: float,
        lost_after: int = DEFAULT_LOST_AFTER) -> List[TrackerState]:
    '''
    Runs one tracking tick for every agent.

    Parameters:
        trackers (list): tracker state per agent, ascending agent id
        z_set (list): unordered position measurements for this tick
        g (TrackerGains): correction gains shared by all trackers
        dt (float): tick length in seconds
        lost_after (int): consecutive misses that mark a track lost

    Returns:
        list of updated tracker states
    '''
    pool = [np.asarray(z, dtype=float) for z in z_set]
    updated = []
    for agent, tracker in enumerate(trackers):
        predicted = predict(tracker, dt)
        match = associate(predicted, pool)
        if match is None:
            missed = replace(predicted, missed_count=predicted.missed_count + 1)
            if missed.missed_count == lost_after:
                logger.warning(
                    f"Track of agent {agent + 1} lost after {lost_after} missed ticks")
            updated.append(missed)
            continue
        z, index = match
        pool.pop(index)
        updated.append(correct(predicted, z, g))
    return updated


def read_measurement_replay(path: str) -> Iterator[Tuple[int, List[np.ndarray]]]:
    ''' yields (tick, measurements) from a JSON-lines replay file '''
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            yield int(record['tick']), [np.asarray(z, dtype=float) for z in record['z']]


def write_measurement_replay(
        path: str,
        ticks: Sequence[Tuple[int, Sequence[np.ndarray]]]) -> None:
    with open(path, 'w') as f:
        for tick, z_set in ticks:
            record = {'tick': int(tick), 'z': [[float(c) for c in z] for z in z_set]}
            f.write(json.dumps(record) + '\n')
