'''
Synchronous round message passing between agents.

Agents send during an open round, seal their outbox, and read what their
neighbours sent once the round has been advanced. Sends are only allowed
along edges of the communication graph. Delivered messages are ordered by
sender id so that a run does not depend on the order agents were stepped in.
'''

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple

import hashlib
import json
import logging
import numpy as np

from .graph import WeightedGraph

logger = logging.getLogger(__name__)


class LocalityError(RuntimeError):
    ''' Raised when a message would cross a pair that is not a communication edge'''
    pass


class RoundError(RuntimeError):
    ''' Raised when the round protocol is not followed'''
    pass


class PayloadKind(str, Enum):
    state = 'state'
    scale = 'scale'
    trajectory = 'trajectory'
    measurement = 'measurement'
    consensus = 'consensus'


def jsonable(value: Any) -> Any:
    ''' numpy values and containers to plain JSON types '''
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    return value


def _digest(h, value: Any):
    ''' feeds a payload into a running hash, arrays by their float64 bytes '''
    if isinstance(value, np.ndarray):
        h.update(f"a{value.shape};".encode('utf-8'))
        h.update(np.ascontiguousarray(value, dtype=np.float64).tobytes())
    elif isinstance(value, dict):
        h.update(b'{')
        for k in sorted(value, key=str):
            h.update(f"{k}:".encode('utf-8'))
            _digest(h, value[k])
        h.update(b'}')
    elif isinstance(value, (list, tuple)):
        h.update(b'[')
        for v in value:
            _digest(h, v)
        h.update(b']')
    else:
        h.update(f"{jsonable(value)!r};".encode('utf-8'))


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    sent_round: int
    deliver_round: int
    kind: PayloadKind
    payload: Any
    seq: int = 0

    def to_dict(self) -> Dict:
        return {
            'src': self.src,
            'dst': self.dst,
            'sent_round': self.sent_round,
            'deliver_round': self.deliver_round,
            'kind': PayloadKind(self.kind).value,
            'payload': jsonable(self.payload),
        }


class Network:
    '''
    Round buffers over a communication graph.

    Parameters:
        g_comm (WeightedGraph): communication graph, messages travel along
            its edges only
        delays (dict): optional extra delivery delay in rounds per edge,
            keyed by (min id, max id)
        record (bool): keep the delivered messages for a transcript dump
    '''

    def __init__(
            self,
            g_comm: WeightedGraph,
            delays: Optional[Dict[Tuple[int, int], int]] = None,
            record: bool = False):
        self.g_comm = g_comm
        self.n_agents = g_comm.n_nodes
        self.delays = {}
        for (i, j), d in (delays or {}).items():
            if not g_comm.has_edge(i, j):
                raise LocalityError(f"Delay given for ({i}, {j}) which is not an edge")
            if int(d) < 0:
                raise RoundError(f"Delay on ({i}, {j}) must be non negative, got {d}")
            self.delays[(min(i, j), max(i, j))] = int(d)
        self.record = record

        self.round = 0
        self._seq = 0
        self._outbox: List[Message] = []
        self._pending: List[Message] = []
        self._inboxes: List[List[Message]] = [[] for _ in range(self.n_agents)]
        self._sealed: Set[int] = set()
        self._hash = hashlib.sha256()
        self.transcript: List[Dict] = []
        self.delivered_count = 0

    def _check_agent(self, agent: int):
        if not 0 <= agent < self.n_agents:
            raise RoundError(f"Unknown agent {agent}")

    def send(self, src: int, dst: int, kind: PayloadKind, payload: Any) -> Message:
        self._check_agent(src)
        self._check_agent(dst)
        if src in self._sealed:
            raise RoundError(f"Agent {src} already sealed round {self.round}")
        if not self.g_comm.has_edge(src, dst):
            raise LocalityError(f"Agent {src} cannot reach agent {dst}, no communication edge")
        delay = self.delays.get((min(src, dst), max(src, dst)), 0)
        self._seq += 1
        msg = Message(
            src, dst, self.round, self.round + 1 + delay,
            PayloadKind(kind), payload, self._seq)
        self._outbox.append(msg)
        return msg

    def broadcast_to_neighbors(self, src: int, kind: PayloadKind, payload: Any) -> int:
        ''' enqueues the payload for every neighbour, returns the number of messages '''
        neighbors = self.g_comm.neighbors(src)
        for dst in neighbors:
            self.send(src, dst, kind, payload)
        return len(neighbors)

    def seal(self, agent: int):
        self._check_agent(agent)
        self._sealed.add(agent)

    def seal_all(self):
        self._sealed = set(range(self.n_agents))

    def advance_round(self) -> int:
        '''
        Closes the round once every agent has sealed, delivers the messages
        due in the new round and returns the new round number.
        '''
        unsealed = sorted(set(range(self.n_agents)) - self._sealed)
        if unsealed:
            raise RoundError(
                f"Round {self.round} cannot advance, agents {unsealed} are not sealed")
        self._pending.extend(self._outbox)
        self._outbox = []
        self.round += 1

        due = [m for m in self._pending if m.deliver_round <= self.round]
        self._pending = [m for m in self._pending if m.deliver_round > self.round]
        due.sort(key=lambda m: (m.dst, m.src, m.seq))

        self._inboxes = [[] for _ in range(self.n_agents)]
        for m in due:
            self._inboxes[m.dst].append(m)
            header = f"{m.src},{m.dst},{m.sent_round},{m.deliver_round},{PayloadKind(m.kind).value};"
            self._hash.update(header.encode('utf-8'))
            _digest(self._hash, m.payload)
            if self.record:
                self.transcript.append(m.to_dict())
        self.delivered_count += len(due)
        self._sealed = set()
        return self.round

    def step(self) -> int:
        ''' seals every agent and advances, for drivers that step all agents together '''
        self.seal_all()
        return self.advance_round()

    def inbox(self, agent: int, kind: Optional[PayloadKind] = None) -> List[Message]:
        self._check_agent(agent)
        if kind is None:
            return list(self._inboxes[agent])
        return [m for m in self._inboxes[agent] if m.kind == kind]

    @property
    def transcript_hash(self) -> str:
        return self._hash.hexdigest()

    def write_transcript(self, path: Path):
        with open(path, 'w') as f:
            for row in self.transcript:
                f.write(json.dumps(row, sort_keys=True))
                f.write('\n')


@dataclass
class TrajectoryCopy:
    origin: int
    version: int
    x: np.ndarray


class TrajectoryRelay:
    '''
    Most recent copy of every agent's plan as known by each agent. An agent
    bumps the version of its own plan when it publishes, and keeps a received
    copy only when its version is newer than the one it holds.
    '''

    def __init__(self, n_agents: int):
        self.n_agents = n_agents
        self.copies: List[Dict[int, TrajectoryCopy]] = [{} for _ in range(n_agents)]

    def publish(self, agent: int, x: np.ndarray) -> int:
        held = self.copies[agent].get(agent)
        version = 0 if held is None else held.version + 1
        self.copies[agent][agent] = TrajectoryCopy(agent, version, np.array(x, dtype=float))
        return version

    def share(self, net: Network, agent: int) -> int:
        ''' broadcasts every copy held by the agent '''
        payload = {
            origin: (c.version, c.x)
            for origin, c in sorted(self.copies[agent].items())
        }
        if not payload:
            return 0
        return net.broadcast_to_neighbors(agent, PayloadKind.trajectory, payload)

    def receive(self, net: Network, agent: int) -> List[int]:
        ''' merges the delivered copies, returns the origins that were updated '''
        updated = set()
        for m in net.inbox(agent, PayloadKind.trajectory):
            for origin, (version, x) in m.payload.items():
                if origin == agent:
                    continue
                held = self.copies[agent].get(origin)
                if held is None or version > held.version:
                    self.copies[agent][origin] = TrajectoryCopy(origin, version, np.array(x))
                    updated.add(origin)
        return sorted(updated)

    def get(self, agent: int, origin: int) -> Optional[np.ndarray]:
        held = self.copies[agent].get(origin)
        return None if held is None else held.x

    def version(self, agent: int, origin: int) -> int:
        held = self.copies[agent].get(origin)
        return -1 if held is None else held.version

    def exchange(self, net: Network, agents: Optional[List[int]] = None) -> Dict[int, List[int]]:
        ''' one full round: every agent shares, the round advances, every agent merges '''
        for i in range(self.n_agents):
            if agents is None or i in agents:
                self.share(net, i)
        net.step()
        return {i: self.receive(net, i) for i in range(self.n_agents)}
