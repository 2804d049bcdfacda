'''
Distributed collision free trajectory optimization through a ring.

Every agent starts from its own minimum jerk plan through the ring centre
and keeps the most recent copy of the other agents' plans, relayed over the
communication graph. At each flight step agents that predict a collision
with an agent in their active region re-plan:

    alg1_run        each agent projects its own plan onto the set keeping it
                    clear of the frozen plans of its active neighbours
    alg2_run        colliding agents agree on a joint plan by neighbour
                    averaging followed by projection onto their local sets
    decentralized_run
                    baseline, every agent re-plans before take off against
                    all other agents
    solve_centralized
                    sequential convex programming over all agents at once

Re-planning rounds are synchronous: within a round every agent reads only
the copies it held when the round started, so a round gives the same result
whatever order the agents are stepped in.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import logging
import time
import numpy as np

from ..graph import WeightedGraph
from ..numerics import QpProblem, QpSolution, QpStatus, project_onto, solve_qp
from ..simnet import Network, PayloadKind, TrajectoryRelay
from .trajectory import DIMS, BoundaryConditions, RingPose, Trajectory, \
    TrajectoryError, SolverFailure, clamp_crossing, initial_solution, \
    jerk_cost_matrix, plan_positions
from .constraints import ConstraintSet, Tag, agent_constraints, \
    build_centralized, joint_collision_rows, single_collision_rows

logger = logging.getLogger(__name__)

# d_i(agent, averaged stacked vector)
Subgradient = Callable[[int, np.ndarray], np.ndarray]

# plans re-optimized during flight, their solve time is averaged per round
IN_FLIGHT = ('alg1', 'alg2')


class ConsensusWeights(str, Enum):
    equal = 'equal'
    metropolis = 'metropolis'


@dataclass
class AlgParams:
    r_collision: float = 0.3
    r_active: float = 1.0
    # caps: M for projected_consensus, M1 for alg1_run repetitions, M2 for
    # alg2_run consensus iterations
    M: int = 100
    M1: int = 10
    M2: int = 50
    epsilon: float = 1e-3
    a_min: float = -5.0
    a_max: float = 5.0
    alpha_m: float = 0.0
    v_cross: Optional[float] = None
    weights: ConsensusWeights = ConsensusWeights.equal
    collision_tol: float = 1e-6
    qp_tol: float = 1e-8
    qp_max_iter: int = 20000

    def validate(self) -> Tuple[bool, List[str]]:
        msgs = []
        if not self.r_collision > 0:
            msgs.append(f"r_collision must be positive, got {self.r_collision}")
        if not self.r_active > self.r_collision:
            msgs.append(
                f"r_active ({self.r_active}) must exceed r_collision ({self.r_collision})")
        for name in ('M', 'M1', 'M2', 'qp_max_iter'):
            if int(getattr(self, name)) < 1:
                msgs.append(f"{name} must be at least 1, got {getattr(self, name)}")
        if not self.epsilon > 0:
            msgs.append(f"epsilon must be positive, got {self.epsilon}")
        if not self.a_min < self.a_max:
            msgs.append(f"a_min ({self.a_min}) must be below a_max ({self.a_max})")
        if self.alpha_m < 0:
            msgs.append(f"alpha_m must be non negative, got {self.alpha_m}")
        if self.v_cross is not None and self.v_cross < 0:
            msgs.append(f"v_cross must be non negative, got {self.v_cross}")
        try:
            ConsensusWeights(self.weights)
        except ValueError:
            msgs.append(f"Unknown consensus weights '{self.weights}'")
        return len(msgs) == 0, msgs

    def check(self):
        ok, msgs = self.validate()
        if not ok:
            raise TrajectoryError('; '.join(msgs))

    def qp_options(self) -> Dict:
        return {'tol': self.qp_tol, 'max_iter': int(self.qp_max_iter)}

    def to_dict(self) -> Dict:
        return {
            'R_collision': self.r_collision,
            'R_active': self.r_active,
            'M': self.M,
            'M1': self.M1,
            'M2': self.M2,
            'epsilon': self.epsilon,
            'a_min': self.a_min,
            'a_max': self.a_max,
            'alpha_m': self.alpha_m,
            'v_cross': self.v_cross,
            'weights': ConsensusWeights(self.weights).value,
            'collision_tol': self.collision_tol,
            'qp_tol': self.qp_tol,
            'qp_max_iter': self.qp_max_iter,
        }


class EventKind(str, Enum):
    reopt = 'reopt'
    accept = 'accept'
    consensus_iter = 'consensus_iter'
    failure = 'failure'


@dataclass
class Event:
    step: int
    agent: Optional[int]
    event: EventKind
    constraint_count: int = 0
    solve_time: float = 0.0
    iterations: int = 0
    partners: int = 0
    distance: float = 0.0
    repetition: int = 0

    def to_dict(self, timing: bool = True) -> Dict:
        row = {
            'step': self.step,
            'repetition': self.repetition,
            'agent': self.agent,
            'event': EventKind(self.event).value,
            'constraint_count': self.constraint_count,
            'iterations': self.iterations,
            'partners': self.partners,
            'distance': self.distance,
        }
        if timing:
            row['solve_time'] = self.solve_time
        return row


def pairwise_distances(positions: Sequence[np.ndarray]) -> np.ndarray:
    ''' distances per sample for every pair i < j, shape (K+1, N(N-1)/2) '''
    n = len(positions)
    cols = [
        np.linalg.norm(positions[i] - positions[j], axis=1)
        for i in range(n) for j in range(i + 1, n)
    ]
    if not cols:
        return np.zeros((positions[0].shape[0] if n else 0, 0))
    return np.column_stack(cols)


def min_pairwise_distance(positions: Sequence[np.ndarray], after: int = -1) -> float:
    ''' smallest distance over all pairs and samples strictly after `after` '''
    d = pairwise_distances(positions)
    if d.shape[1] == 0:
        return float('inf')
    return float(np.min(d[after + 1:]))


def exist_collision(
        own: np.ndarray,
        others: Sequence[np.ndarray],
        r_collision: float,
        after: int = -1,
        tol: float = 0.0) -> bool:
    ''' whether any sample after `after` comes closer than r_collision - tol '''
    for other in others:
        d = np.linalg.norm(own[after + 1:] - other[after + 1:], axis=1)
        if d.size and np.min(d) < r_collision - tol:
            return True
    return False


@dataclass
class RunResult:
    algorithm: str
    trajectories: List[Trajectory]
    initial: List[Trajectory]
    events: List[Event] = field(default_factory=list)
    convergence_failure: bool = False
    solver_failure: bool = False
    rounds: int = 0
    transcript_hash: str = ''
    max_disagreement: float = 0.0

    @property
    def n_agents(self) -> int:
        return len(self.trajectories)

    def positions(self) -> List[np.ndarray]:
        return [t.pos for t in self.trajectories]

    def min_distance(self) -> float:
        return min_pairwise_distance(self.positions())

    def optimizations(self) -> List[Event]:
        return [e for e in self.events if e.event == EventKind.reopt]

    def avg_constraints_per_agent(self) -> float:
        ''' collision rows per optimization, the total divided by the number of optimizations '''
        opts = self.optimizations()
        if not opts:
            return 0.0
        return float(sum(e.constraint_count for e in opts)) / len(opts)

    def replan_rounds(self) -> int:
        ''' distinct (step, repetition) rounds in which at least one agent optimized '''
        return len({(e.step, e.repetition) for e in self.optimizations()})

    def total_solve_time(self) -> float:
        ''' solve time of every optimization and consensus iteration of the run '''
        return float(sum(
            e.solve_time for e in self.events
            if e.event in (EventKind.reopt, EventKind.consensus_iter)))

    def avg_solve_time_per_agent(self) -> float:
        '''
        T_total / (M N) for plans re-optimized in flight, M being the number of
        re-planning rounds, so the figure is the time an agent waits for one
        re-planned trajectory. Plans computed before take off give T_total / N.
        '''
        if self.n_agents == 0:
            return 0.0
        if self.algorithm not in IN_FLIGHT:
            return self.total_solve_time() / self.n_agents
        rounds = self.replan_rounds()
        if rounds == 0:
            return 0.0
        return self.total_solve_time() / (rounds * self.n_agents)

    def avg_partners_per_agent(self) -> float:
        opts = self.optimizations()
        if not opts:
            return 0.0
        return float(sum(e.partners for e in opts)) / len(opts)

    def summary(self, timing: bool = True) -> Dict:
        out = {
            'algorithm': self.algorithm,
            'n_agents': self.n_agents,
            'min_distance': self.min_distance() if self.n_agents > 1 else None,
            'optimizations': len(self.optimizations()),
            'replan_rounds': self.replan_rounds(),
            'avg_constraints_per_agent': self.avg_constraints_per_agent(),
            'avg_partners_per_agent': self.avg_partners_per_agent(),
            'convergence_failure': self.convergence_failure,
            'solver_failure': self.solver_failure,
            'rounds': self.rounds,
            'max_disagreement': self.max_disagreement,
        }
        if timing:
            out['avg_solve_time_per_agent'] = self.avg_solve_time_per_agent()
        return out


def consensus_weights(
        g_comm: WeightedGraph,
        scheme: ConsensusWeights = ConsensusWeights.equal,
        members: Optional[Sequence[int]] = None) -> Dict[int, Dict[int, float]]:
    '''
    Mixing weights a_ij over N_i and i itself, restricted to `members`.

    equal:      a_ij = 1 / (N_i + 1) for every j in N_i and j = i
    metropolis: a_ij = 1 / (1 + max(N_i, N_j)), a_ii takes the remainder,
                doubly stochastic on any undirected graph
    '''
    scheme = ConsensusWeights(scheme)
    members = list(range(g_comm.n_nodes)) if members is None else sorted(members)
    member_set = set(members)
    nbrs = {i: [j for j in g_comm.neighbors(i) if j in member_set] for i in members}
    weights: Dict[int, Dict[int, float]] = {}
    for i in members:
        if scheme == ConsensusWeights.equal:
            w = 1.0 / (len(nbrs[i]) + 1)
            weights[i] = {j: w for j in nbrs[i]}
            weights[i][i] = w
        else:
            row = {j: 1.0 / (1 + max(len(nbrs[i]), len(nbrs[j]))) for j in nbrs[i]}
            row[i] = 1.0 - sum(row.values())
            weights[i] = row
    return weights


def consensus_update(
        i: int,
        x_i: np.ndarray,
        neighbor_copies: Dict[int, np.ndarray],
        weights_i: Dict[int, float],
        constraint_set: QpProblem,
        params: AlgParams,
        block: Optional[np.ndarray] = None,
        subgradient: Optional[Subgradient] = None) -> Tuple[np.ndarray, QpSolution]:
    '''
    One agent's iteration x_i <- P_X_i[sum_j a_ij x_j - alpha_m d_i].

    Parameters:
        i (int): agent id
        x_i (numpy): own copy of the stacked vector
        neighbor_copies (dict): copies received from the neighbours
        weights_i (dict): mixing weights of agent i, including itself
        constraint_set (QpProblem): local set, its cost is ignored
        params (AlgParams): step size and QP options
        block (numpy): indices of the stacked vector the local set acts on,
            the other entries are only averaged
        subgradient (callable): d_i(i, v) of the local objective at the
            averaged vector v, required when alpha_m > 0

    Returns:
        (new copy, projection solution)
    '''
    mixed = weights_i.get(i, 0.0) * x_i
    for j, w in weights_i.items():
        if j == i:
            continue
        if j not in neighbor_copies:
            raise TrajectoryError(f"Agent {i} is missing the copy of neighbour {j}")
        mixed = mixed + w * neighbor_copies[j]
    if params.alpha_m > 0:
        if subgradient is None:
            raise TrajectoryError(
                f"alpha_m = {params.alpha_m} needs a subgradient of agent {i}'s objective")
        mixed = mixed - params.alpha_m * np.asarray(subgradient(i, mixed), dtype=float)
    if block is None:
        block = np.arange(mixed.shape[0])
    sol = project_onto(constraint_set, mixed[block], **params.qp_options())
    if sol.status == QpStatus.infeasible:
        raise SolverFailure(f"Projection of agent {i} is infeasible", i, sol.status.value)
    out = mixed.copy()
    out[block] = sol.x
    return out, sol


def consensus_step(
        x_locals: Dict[int, np.ndarray],
        g_comm: WeightedGraph,
        sets: Dict[int, QpProblem],
        params: AlgParams,
        weights: Optional[Dict[int, Dict[int, float]]] = None,
        blocks: Optional[Dict[int, np.ndarray]] = None,
        subgradient: Optional[Subgradient] = None) -> Dict[int, np.ndarray]:
    ''' one synchronous iteration of every agent in `x_locals` '''
    if weights is None:
        weights = consensus_weights(g_comm, params.weights, list(x_locals))
    out = {}
    for i in sorted(x_locals):
        copies = {j: x_locals[j] for j in weights[i] if j != i}
        out[i], _ = consensus_update(
            i, x_locals[i], copies, weights[i], sets[i], params,
            None if blocks is None else blocks[i], subgradient)
    return out


def projected_consensus(
        x_locals: Dict[int, np.ndarray],
        g_comm: WeightedGraph,
        sets: Dict[int, QpProblem],
        params: AlgParams,
        blocks: Optional[Dict[int, np.ndarray]] = None,
        subgradient: Optional[Subgradient] = None) -> Tuple[Dict[int, np.ndarray], int, bool]:
    '''
    Repeats `consensus_step` until no copy moves by more than epsilon or M
    iterations.

    Returns:
        (final copies, iterations run, whether the change fell below epsilon)
    '''
    weights = consensus_weights(g_comm, params.weights, list(x_locals))
    for m in range(1, int(params.M) + 1):
        updated = consensus_step(x_locals, g_comm, sets, params, weights, blocks, subgradient)
        change = max(float(np.linalg.norm(updated[i] - x_locals[i])) for i in updated)
        x_locals = updated
        if change <= params.epsilon:
            return x_locals, m, True
    logger.warning(
        f"projected consensus: change above {params.epsilon} after {params.M} iterations, "
        f"disagreement {disagreement(x_locals):.3e}")
    return x_locals, int(params.M), False


def jerk_subgradient(K: int, h: float) -> Subgradient:
    '''
    d_i for the stacked plans of all agents: the gradient Q x_ii of agent
    i's own jerk cost ||D x_ii||^2 in its block, zero elsewhere.
    '''
    q = jerk_cost_matrix(K, h)
    block = DIMS * K

    def d(i: int, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        own = slice(i * block, (i + 1) * block)
        out[own] = q @ v[own]
        return out

    return d


def disagreement(x_locals: Dict[int, np.ndarray]) -> float:
    ''' max_ij ||x_i - x_j|| '''
    ids = sorted(x_locals)
    worst = 0.0
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            worst = max(worst, float(np.linalg.norm(x_locals[ids[a]] - x_locals[ids[b]])))
    return worst


class _Swarm:
    '''
    Plans and relayed copies of a run, with the per agent views used for
    collision detection.
    '''

    def __init__(
            self,
            bc: BoundaryConditions,
            ring: RingPose,
            g_comm: WeightedGraph,
            params: AlgParams,
            delays: Optional[Dict[Tuple[int, int], int]] = None,
            record: bool = False):
        if g_comm.n_nodes != bc.n_agents:
            raise TrajectoryError(
                f"Communication graph has {g_comm.n_nodes} nodes for {bc.n_agents} agents")
        params.check()
        self.bc = bc
        self.ring = ring
        self.params = params
        self.net = Network(g_comm, delays, record)
        self.relay = TrajectoryRelay(bc.n_agents)
        self.events: List[Event] = []
        self.initial = [initial_solution(bc, i, ring, params.v_cross) for i in range(bc.n_agents)]
        for i, traj in enumerate(self.initial):
            self.relay.publish(i, traj.x)

    @property
    def n(self) -> int:
        return self.bc.n_agents

    def positions(self, x: np.ndarray, agent: int) -> np.ndarray:
        return plan_positions(x, self.bc.p0[agent], self.bc.v0[agent], self.bc.h)

    def exchange(self, step: int):
        updated = self.relay.exchange(self.net)
        for i in range(self.n):
            if updated[i]:
                self.events.append(Event(step, i, EventKind.accept, partners=len(updated[i])))

    def view(
            self,
            agent: int,
            step: int,
            r_active: Optional[float]) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
        ''' own positions and the positions of the agents in the active region '''
        own = self.positions(self.relay.get(agent, agent), agent)
        others = {}
        for j in range(self.n):
            if j == agent:
                continue
            x_j = self.relay.get(agent, j)
            if x_j is None:
                continue
            pos_j = self.positions(x_j, j)
            if r_active is None or np.linalg.norm(pos_j[step] - own[step]) <= r_active:
                others[j] = pos_j
        return own, others

    def detect(self, step: int, r_active: Optional[float]) -> Dict[int, Tuple[np.ndarray, Dict[int, np.ndarray]]]:
        ''' agents predicting a collision after `step`, with their views '''
        out = {}
        for i in range(self.n):
            own, others = self.view(i, step, r_active)
            if exist_collision(
                    own, list(others.values()), self.params.r_collision, step,
                    self.params.collision_tol):
                out[i] = (own, others)
        return out

    def executed(self) -> List[Trajectory]:
        return [
            Trajectory.from_x(self.relay.get(i, i), self.bc.p0[i], self.bc.v0[i], self.bc.h)
            for i in range(self.n)
        ]

    def result(self, algorithm: str, failure: bool, solver_failure: bool = False,
               max_disagreement: float = 0.0) -> RunResult:
        return RunResult(
            algorithm, self.executed(), self.initial, self.events, failure,
            solver_failure, self.net.round, self.net.transcript_hash, max_disagreement)


def _crossing_sample(pos: np.ndarray, ring: RingPose, K: int) -> int:
    return clamp_crossing(int(np.argmin(np.sum((pos - ring.center) ** 2, axis=1))), K)


def _single_agent_set(
        bc: BoundaryConditions,
        ring: RingPose,
        agent: int,
        x_own: np.ndarray,
        basis_pos: np.ndarray,
        obstacles: Dict[int, np.ndarray],
        step: int,
        params: AlgParams) -> ConstraintSet:
    ''' second convexification: own rows plus single mode rows against frozen neighbours '''
    k_c = _crossing_sample(basis_pos, ring, bc.K)
    cs = agent_constraints(
        bc, agent, ring, k_c, params.a_min, params.a_max, after=step, x_prev=x_own)
    samples = range(step + 1, bc.K + 1)
    for j in sorted(obstacles):
        cs.extend(single_collision_rows(
            basis_pos, obstacles[j], agent, j, bc.p0[agent], bc.v0[agent],
            bc.K, bc.h, params.r_collision, samples))
    return cs


def _project_agent(
        swarm: _Swarm,
        agent: int,
        obstacles: Dict[int, np.ndarray],
        basis: np.ndarray,
        step: int) -> Tuple[QpSolution, ConstraintSet, float]:
    x_own = swarm.relay.get(agent, agent)
    cs = _single_agent_set(
        swarm.bc, swarm.ring, agent, x_own, swarm.positions(basis, agent),
        obstacles, step, swarm.params)
    start = time.perf_counter()
    sol = project_onto(cs.problem(), x_own, **swarm.params.qp_options())
    return sol, cs, time.perf_counter() - start


def _replan_rounds(
        swarm: _Swarm,
        step: int,
        r_active: Optional[float],
        label: str,
        exchange_rounds: int = 1,
        everyone_first: bool = False) -> bool:
    '''
    Synchronous re-planning rounds at one flight step until nobody predicts
    a collision or the repetition cap is reached. Returns False on the cap.
    With `everyone_first` every agent re-plans in the first round whether
    or not it predicts a collision.
    '''
    params = swarm.params
    basis: Dict[int, np.ndarray] = {}
    for m in range(params.M1 + 1):
        if m == 0 and everyone_first:
            colliding = {i: swarm.view(i, step, r_active) for i in range(swarm.n)}
        else:
            colliding = swarm.detect(step, r_active)
        if not colliding:
            return True
        if m == params.M1:
            for i in sorted(colliding):
                swarm.events.append(Event(step, i, EventKind.failure, partners=len(colliding[i][1])))
            logger.warning(
                f"{label}: collisions remain after {params.M1} repetitions at step {step}, "
                f"agents {sorted(colliding)}")
            return False

        new_plans = {}
        for i in sorted(colliding):
            _, obstacles = colliding[i]
            x_own = swarm.relay.get(i, i)
            sol, cs, elapsed = _project_agent(swarm, i, obstacles, basis.get(i, x_own), step)
            swarm.events.append(Event(
                step, i, EventKind.reopt, cs.count(Tag.collision), elapsed,
                sol.iterations, len(obstacles), float(np.linalg.norm(sol.x - x_own)), m))
            if sol.ok:
                new_plans[i] = sol.x
                basis.pop(i, None)
            else:
                # next repetition convexifies around the infeasible iterate
                basis[i] = sol.x
                logger.debug(f"{label}: agent {i} projection {sol.status.value} at step {step}")
        for i, x in new_plans.items():
            swarm.relay.publish(i, x)
        for _ in range(exchange_rounds):
            swarm.exchange(step)
    return False


def alg1_run(
        bc: BoundaryConditions,
        ring: RingPose,
        g_comm: WeightedGraph,
        params: Optional[AlgParams] = None,
        delays: Optional[Dict[Tuple[int, int], int]] = None,
        record: bool = False) -> RunResult:
    '''
    Distributed re-planning during flight. At every step each agent checks
    its plan against the plans of the agents in its active region and, while
    a collision is predicted, projects its plan onto the second
    convexification around the frozen neighbour plans.

    Parameters:
        bc (BoundaryConditions): boundary conditions of all agents
        ring (RingPose): ring to cross
        g_comm (WeightedGraph): communication graph
        params (AlgParams): algorithm parameters
        delays (dict): optional per edge delivery delay in rounds
        record (bool): keep the message transcript

    Returns:
        RunResult with the executed plans and the event log
    '''
    params = params or AlgParams()
    swarm = _Swarm(bc, ring, g_comm, params, delays, record)
    failure = False
    for step in range(bc.K):
        swarm.exchange(step)
        if not _replan_rounds(swarm, step, params.r_active, 'alg1'):
            failure = True
    result = swarm.result('alg1', failure)
    logger.info(
        f"alg1: {len(result.optimizations())} optimizations over {bc.K} steps, "
        f"convergence failure {failure}")
    return result


def decentralized_run(
        bc: BoundaryConditions,
        ring: RingPose,
        g_comm: WeightedGraph,
        params: Optional[AlgParams] = None) -> RunResult:
    '''
    Baseline where every agent re-plans before take off against all other
    N - 1 agents, then repeats in synchronous rounds until collision free or
    the repetition cap.
    '''
    params = params or AlgParams()
    swarm = _Swarm(bc, ring, g_comm, params)
    # plans reach every agent before the baseline starts
    flood = max(1, bc.n_agents - 1)
    for _ in range(flood):
        swarm.exchange(0)
    failure = not _replan_rounds(swarm, 0, None, 'baseline', flood, everyone_first=True)
    return swarm.result('baseline', failure)


def _joint_agent_set(
        swarm: _Swarm,
        agent: int,
        members: List[int],
        copies: Dict[int, np.ndarray],
        step: int) -> Tuple[QpProblem, np.ndarray, int]:
    '''
    First convexification of agent `agent` over the blocks of `members`: own
    and neighbour rows plus joint rows for every pair involving the agent.

    Returns:
        (local set over the member blocks, indices into the stacked vector,
         number of collision rows)
    '''
    bc, params = swarm.bc, swarm.params
    block = DIMS * bc.K
    cs = ConstraintSet(len(members) * block)
    pos = {b: swarm.positions(copies[b], b) for b in members}
    for idx, b in enumerate(members):
        k_c = _crossing_sample(pos[b], swarm.ring, bc.K)
        cs.extend(agent_constraints(
            bc, b, swarm.ring, k_c, params.a_min, params.a_max, after=step,
            x_prev=copies[b]), idx * block)
    me = members.index(agent)
    samples = range(step + 1, bc.K + 1)
    for idx, j in enumerate(members):
        if j == agent:
            continue
        A_i, A_j, b_rows, tags = joint_collision_rows(
            pos[agent], pos[j], agent, j, (bc.p0[agent], bc.v0[agent]),
            (bc.p0[j], bc.v0[j]), bc.K, bc.h, params.r_collision, samples)
        A = np.zeros((A_i.shape[0], cs.n))
        A[:, me * block:(me + 1) * block] = A_i
        A[:, idx * block:(idx + 1) * block] = A_j
        cs.add_inequalities(A, b_rows, tags)
    indices = np.concatenate([np.arange(b * block, (b + 1) * block) for b in members])
    return cs.problem(), indices, cs.count(Tag.collision)


def alg2_run(
        bc: BoundaryConditions,
        ring: RingPose,
        g_comm: WeightedGraph,
        params: Optional[AlgParams] = None,
        delays: Optional[Dict[Tuple[int, int], int]] = None,
        record: bool = False) -> RunResult:
    '''
    Distributed re-planning with the joint convexification. Agents that
    predict a collision hold a copy of the stacked plans of all agents,
    project it onto their joint local set and average it with the copies of
    the other colliding agents they can reach, until no copy moves by more
    than epsilon or the iteration cap M2 is reached.
    '''
    params = params or AlgParams()
    swarm = _Swarm(bc, ring, g_comm, params, delays, record)
    block = DIMS * bc.K
    failure = False
    solver_failure = False
    worst_disagreement = 0.0
    subgradient = jerk_subgradient(bc.K, bc.h) if params.alpha_m > 0 else None

    for step in range(bc.K):
        swarm.exchange(step)
        colliding = swarm.detect(step, params.r_active)
        if not colliding:
            continue
        participants = sorted(colliding)
        weights = consensus_weights(g_comm, params.weights, participants)

        copies: Dict[int, np.ndarray] = {}
        known: Dict[int, set] = {}
        sets: Dict[int, Tuple[QpProblem, np.ndarray, int]] = {}
        for i in participants:
            held = {b: swarm.relay.get(i, b) for b in range(swarm.n)}
            known[i] = {b for b, x in held.items() if x is not None}
            copies[i] = np.concatenate([
                held[b] if held[b] is not None else np.zeros(block) for b in range(swarm.n)])
            members = sorted({i} | set(colliding[i][1]))
            sets[i] = _joint_agent_set(swarm, i, members, held, step)

        # latest copy heard from each neighbour, delayed links keep the older one
        last_seen: Dict[int, Dict[int, np.ndarray]] = {i: {} for i in participants}
        converged = False
        for m in range(params.M2):
            for i in participants:
                payload = {'step': step, 'known': sorted(known[i]), 'x': copies[i]}
                for j in g_comm.neighbors(i):
                    if j in colliding:
                        swarm.net.send(i, j, PayloadKind.consensus, payload)
            swarm.net.step()

            updated = {}
            change = 0.0
            for i in participants:
                for msg in swarm.net.inbox(i, PayloadKind.consensus):
                    payload = msg.payload
                    if payload['step'] != step:
                        continue
                    x = payload['x'].copy()
                    # blocks the sender does not know are taken from the own copy
                    for b in range(swarm.n):
                        if b not in payload['known']:
                            x[b * block:(b + 1) * block] = copies[i][b * block:(b + 1) * block]
                    last_seen[i][msg.src] = x
                received = {
                    j: last_seen[i].get(j, copies[i]) for j in weights[i] if j != i
                }
                problem, indices, n_rows = sets[i]
                start = time.perf_counter()
                try:
                    new, sol = consensus_update(
                        i, copies[i], received, weights[i], problem, params, indices,
                        subgradient)
                except SolverFailure as e:
                    logger.error(f"alg2: {e} at step {step}")
                    swarm.events.append(Event(step, i, EventKind.failure))
                    solver_failure = True
                    new, sol = copies[i], None
                elapsed = time.perf_counter() - start
                delta = float(np.linalg.norm(new - copies[i]))
                change = max(change, delta)
                if sol is not None:
                    swarm.events.append(Event(
                        step, i, EventKind.consensus_iter if m else EventKind.reopt,
                        n_rows, elapsed, sol.iterations, len(colliding[i][1]), delta, m))
                updated[i] = new
            copies = updated
            if solver_failure:
                break
            if m > 0 and change <= params.epsilon:
                converged = True
                break

        spread = disagreement({
            i: np.concatenate([copies[i][b * block:(b + 1) * block] for b in participants])
            for i in participants
        })
        worst_disagreement = max(worst_disagreement, spread)
        if not converged:
            failure = True
            logger.warning(
                f"alg2: consensus not reached in {params.M2} iterations at step {step}, "
                f"disagreement {spread:.3e}")
            for i in participants:
                swarm.events.append(Event(step, i, EventKind.failure))
        for i in participants:
            swarm.relay.publish(i, copies[i][i * block:(i + 1) * block])

    result = swarm.result('alg2', failure, solver_failure, worst_disagreement)
    logger.info(
        f"alg2: {len(result.optimizations())} joint optimizations, "
        f"max disagreement {worst_disagreement:.3e}")
    return result


def solve_centralized(
        bc: BoundaryConditions,
        ring: RingPose,
        params: Optional[AlgParams] = None,
        pin_crossing: bool = False) -> RunResult:
    '''
    Sequential convex programming over the stacked plans of all agents:
    convexify jointly around the previous solution, solve the minimum jerk
    problem and repeat until the plans are collision free or M1 iterations.
    An infeasible iterate becomes the next convexification point.
    '''
    params = params or AlgParams()
    params.check()
    N, block = bc.n_agents, DIMS * bc.K
    initial = [initial_solution(bc, i, ring, params.v_cross) for i in range(N)]
    previous = initial
    events: List[Event] = []
    x = np.concatenate([t.x for t in previous])

    for it in range(params.M1):
        problem, cs = build_centralized(
            bc, ring, previous, params.r_collision, params.a_min, params.a_max,
            pin_crossing, params.v_cross)
        start = time.perf_counter()
        sol = solve_qp(problem, warm_start=x, **params.qp_options())
        elapsed = time.perf_counter() - start
        events.append(Event(
            it, None, EventKind.reopt, cs.count(Tag.collision), elapsed,
            sol.iterations, N - 1))
        x = sol.x
        trajs = [
            Trajectory.from_x(x[i * block:(i + 1) * block], bc.p0[i], bc.v0[i], bc.h)
            for i in range(N)
        ]
        previous = trajs
        if sol.ok and not _any_collision(trajs, params):
            logger.info(f"centralized: collision free after {it + 1} iterations")
            return RunResult('centralized', trajs, initial, events)
        if not sol.ok:
            logger.debug(f"centralized: iteration {it} {sol.status.value}, re-convexifying")

    events.append(Event(params.M1, None, EventKind.failure))
    logger.warning(f"centralized: not collision free after {params.M1} iterations")
    return RunResult('centralized', previous, initial, events, True)


def _any_collision(trajs: Sequence[Trajectory], params: AlgParams) -> bool:
    if len(trajs) < 2:
        return False
    return min_pairwise_distance([t.pos for t in trajs]) < params.r_collision - params.collision_tol
