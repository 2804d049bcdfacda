'''
Scaling comparison of the distributed re-planning against the all-pairs
decentralized baseline over randomly generated ring crossings.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import logging
import numpy as np

from ..graph import WeightedGraph
from .trajectory import DIMS, BoundaryConditions, RingPose, TrajectoryError
from .distributed import AlgParams, RunResult, alg1_run, decentralized_run

logger = logging.getLogger(__name__)

ALGORITHMS = ('alg1', 'baseline')


def random_crossing_scenario(
        n_agents: int,
        rng: np.random.Generator,
        ring: RingPose,
        K: int = 40,
        h: float = 0.15,
        min_spacing: float = 0.6,
        max_tries: int = 10000) -> BoundaryConditions:
    '''
    Rest to rest crossings of the ring. Starts lie on the +r_x side of the
    opening between 1 and 4 m from its plane, goals on the -r_x side, both
    spread laterally over a square that widens with the swarm size. Starts
    and goals keep `min_spacing` from each other.

    Parameters:
        n_agents (int): number of agents
        rng (Generator): source of randomness
        ring (RingPose): ring to cross
        K (int): horizon in steps
        h (float): step in seconds
        min_spacing (float): smallest distance between two starts or two goals

    Returns:
        BoundaryConditions for all agents
    '''
    if n_agents < 1:
        raise TrajectoryError(f"Need at least one agent, got {n_agents}")
    half_width = max(1.0, 0.35 * np.sqrt(n_agents))

    def draw(sign: float) -> np.ndarray:
        points: List[np.ndarray] = []
        tries = 0
        while len(points) < n_agents:
            tries += 1
            if tries > max_tries:
                raise TrajectoryError(
                    f"Could not place {n_agents} agents {min_spacing} m apart")
            local = np.array([
                sign * rng.uniform(1.0, 4.0),
                rng.uniform(-half_width, half_width),
                rng.uniform(-half_width, half_width),
            ])
            if all(np.linalg.norm(local - p) >= min_spacing for p in points):
                points.append(local)
        return np.vstack(points) @ ring.axes + ring.center

    starts = draw(1.0)
    goals = draw(-1.0)
    return BoundaryConditions.rest_to_rest(starts, goals, K, h)


@dataclass
class ComparisonRow:
    n_agents: int
    algorithm: str
    repetitions: int
    optimizations: int
    avg_constraints_per_agent: float
    avg_partners_per_agent: float
    avg_solve_time_per_agent: float
    min_distance: float
    convergence_failures: int

    def to_dict(self, timing: bool = True) -> Dict:
        row = {
            'n_agents': self.n_agents,
            'algorithm': self.algorithm,
            'repetitions': self.repetitions,
            'optimizations': self.optimizations,
            'avg_constraints_per_agent': self.avg_constraints_per_agent,
            'avg_partners_per_agent': self.avg_partners_per_agent,
            'min_distance': self.min_distance,
            'convergence_failures': self.convergence_failures,
        }
        if timing:
            row['avg_solve_time_per_agent'] = self.avg_solve_time_per_agent
        return row


@dataclass
class ComparisonReport:
    rows: List[ComparisonRow] = field(default_factory=list)

    def row(self, n_agents: int, algorithm: str) -> ComparisonRow:
        for r in self.rows:
            if r.n_agents == n_agents and r.algorithm == algorithm:
                return r
        raise KeyError(f"No comparison row for {algorithm} with {n_agents} agents")

    def series(self, algorithm: str, metric: str) -> List[float]:
        ''' metric values of one algorithm ordered by agent count '''
        return [
            getattr(r, metric)
            for r in sorted(self.rows, key=lambda r: r.n_agents)
            if r.algorithm == algorithm
        ]

    def to_rows(self, timing: bool = True) -> List[Dict]:
        return [r.to_dict(timing) for r in self.rows]


def pool_runs(n_agents: int, algorithm: str, runs: Sequence[RunResult]) -> ComparisonRow:
    '''
    One comparison row from the repetitions of an algorithm. Collision rows
    and partners are pooled per optimization. The solve time is the mean of
    the per run `avg_solve_time_per_agent` over the runs that optimized.
    '''
    opts = [e for run in runs for e in run.optimizations()]
    count = len(opts)

    def avg(values) -> float:
        return float(sum(values)) / count if count else 0.0

    times = [run.avg_solve_time_per_agent() for run in runs if run.optimizations()]

    return ComparisonRow(
        n_agents=n_agents,
        algorithm=algorithm,
        repetitions=len(runs),
        optimizations=count,
        avg_constraints_per_agent=avg(e.constraint_count for e in opts),
        avg_partners_per_agent=avg(e.partners for e in opts),
        avg_solve_time_per_agent=float(np.mean(times)) if times else 0.0,
        min_distance=min(
            (run.min_distance() for run in runs), default=float('inf')),
        convergence_failures=sum(1 for run in runs if run.convergence_failure),
    )


def compare_runs(
        agent_counts: Sequence[int],
        repetitions: int,
        rng: np.random.Generator,
        params: Optional[AlgParams] = None,
        ring: Optional[RingPose] = None,
        K: int = 40,
        h: float = 0.15,
        comm_graph: Callable[[int], WeightedGraph] = WeightedGraph.complete,
        progress: Optional[Callable[[int, int], None]] = None) -> ComparisonReport:
    '''
    Runs the distributed re-planning and the decentralized baseline on the
    same random scenarios for every agent count.

    Parameters:
        agent_counts (list): swarm sizes to compare
        repetitions (int): random scenarios per swarm size
        rng (Generator): source of the scenarios
        params (AlgParams): algorithm parameters shared by both runs
        ring (RingPose): ring to cross, unit ring at the origin by default
        K, h: horizon and step of every scenario
        comm_graph (callable): communication graph for a swarm size
        progress (callable): called with (n_agents, repetition) after each
            scenario

    Returns:
        ComparisonReport with one row per swarm size and algorithm
    '''
    if not agent_counts:
        raise TrajectoryError("Comparison needs at least one agent count")
    if repetitions < 1:
        raise TrajectoryError(f"Repetitions must be at least 1, got {repetitions}")
    params = params or AlgParams()
    ring = ring or RingPose.from_normal(np.zeros(DIMS), (1.0, 0.0, 0.0))
    report = ComparisonReport()

    for n in agent_counts:
        runs: Dict[str, List[RunResult]] = {a: [] for a in ALGORITHMS}
        for rep in range(repetitions):
            bc = random_crossing_scenario(n, rng, ring, K, h)
            g = comm_graph(n)
            runs['alg1'].append(alg1_run(bc, ring, g, params))
            runs['baseline'].append(decentralized_run(bc, ring, g, params))
            if progress is not None:
                progress(n, rep)
        for algorithm in ALGORITHMS:
            row = pool_runs(n, algorithm, runs[algorithm])
            report.rows.append(row)
            logger.info(
                f"{algorithm} N={n}: {row.avg_partners_per_agent:.2f} partners, "
                f"{row.avg_constraints_per_agent:.1f} collision rows per optimization")
    return report
