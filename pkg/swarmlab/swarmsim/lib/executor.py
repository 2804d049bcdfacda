'''
Manages process of running a scenario and executing checks
'''

from typing import Dict, List, Optional, Tuple, Type

import logging
import time
import numpy as np

from .check_utils import get_check, get_checks_for_mode
from .control import FormationSpec, control_all, default_control_gains, saturate
from .estimation import MeasurementBundle, ObserverState, default_observer_gains, \
    default_scale_estimator, desired_trajectory_from_scale, observer_innovations, \
    observer_step, scale_step
from .graph import LeaderSet, WeightedGraph
from .numerics import euler_step_swarm
from .report import RunReport, TraceLevel
from .rng import ATTITUDE, COMPARE, SENSING, VICON, RngStreams
from .scenario import ESTIMATION_MODES, TRAJOPT_MODES, Feedback, ObserverInit, \
    ScenarioConfig, ScenarioConfigError, SimMode
from .sensing import Attitude, attitude_with_noise, measure_relative
from .simnet import Network, PayloadKind
from .swarmcheck import CheckParam, SwarmCheck
from .tracking import TrackerGains, TrackerState, read_measurement_replay, \
    track_swarm
from .trajopt.comparison import compare_runs
from .trajopt.distributed import RunResult, alg1_run, alg2_run, pairwise_distances
from .trajopt.trajectory import BoundaryConditions, ring_crossing_offset


logger = logging.getLogger(__name__)


def simulate_mocap(
        p: np.ndarray,
        noise_std: float,
        dropout: float,
        rng: np.random.Generator) -> List[np.ndarray]:
    '''
    Unordered motion capture frame: true positions with Gaussian noise, each
    dropped with probability `dropout`, in a random order. The same number
    of draws is taken whatever the noise settings.
    '''
    n = p.shape[0]
    noise = rng.normal(0.0, 1.0, size=(n, 3)) * noise_std
    keep = rng.random(n) >= dropout
    order = rng.permutation(n)
    return [p[i] + noise[i] for i in order if keep[i]]


def formation_error(p: np.ndarray, p_star: np.ndarray) -> float:
    ''' ||p - p*||_inf over all agents and axes '''
    return float(np.max(np.abs(p - p_star)))


class Executor:

    def __init__(
            self,
            config: ScenarioConfig,
            check_classes: List[Type[SwarmCheck]]):
        self.config = config
        self.checks = check_classes

        # results of each check, keyed by check id
        self.check_result_cache: Dict[str, SwarmCheck] = {}

        self.report: Optional[RunReport] = None
        self.trace_level = TraceLevel.summary
        self._progress_callback = None

    def __update_progress(self, progress):
        """ Calls the progress callback directly. Passing a value of 1.0
        to this function will set the progress bar to 100%
        """
        if self._progress_callback is None:
            return
        else:
            self._progress_callback(progress)

    def _selected_checks(self, only: Optional[List[Type[SwarmCheck]]] = None
                         ) -> List[Tuple[Type[SwarmCheck], List[CheckParam]]]:
        '''
        Check classes and their parameters. The scenario's explicit selection
        wins over the classes that apply to the mode; checks not supported by
        this tool are skipped.
        '''
        candidates = only if only is not None else self.checks
        if self.config.checks is None:
            return [
                (cc, list(cc.input_params))
                for cc in get_checks_for_mode(self.config.mode, candidates)
            ]
        selected = []
        for item in self.config.checks:
            check_class = get_check(item['id'], candidates)
            if check_class is None:
                # then the check is not supported by this tool
                # so skip and move on
                logger.warning(f"Check {item['id']} is not supported, skipping")
                continue
            params = [CheckParam(p['name'], p['value']) for p in item['params']]
            # defaults for any parameter the scenario leaves out
            given = {p.name for p in params}
            params.extend(p for p in check_class.input_params if p.name not in given)
            selected.append((check_class, params))
        return selected

    def run_checks(
            self,
            report: Optional[RunReport],
            only: Optional[List[Type[SwarmCheck]]] = None,
            is_stopped=None) -> List[Dict]:
        '''
        Runs each selected check over the scenario and the report. A check
        that raises is marked failed and the remaining checks still run.

        Returns:
            list of check outputs as dicts
        '''
        self.check_result_cache = {}
        outputs = []
        for check_class, params in self._selected_checks(only):
            if is_stopped is not None and is_stopped():
                break
            check = check_class(params)
            check.check_started()
            try:
                if report is None and check.needs_report:
                    raise RuntimeError(f"{check.name} needs a completed run")
                check.run(self.config, report)
                check.check_ended()
            except Exception as e:
                check.execution_status = "failed"
                check.error_message = str(e)

                logger.error(e, exc_info=True)
            self.check_result_cache[check_class.id] = check
            out = check.get_outputs().to_dict()
            out['id'] = check_class.id
            out['name'] = check_class.name
            out['version'] = check_class.version
            outputs.append(out)
        return outputs

    def run_stability_checks(self, stability_checks) -> List[Dict]:
        ''' only the eigenvalue checks, no simulation '''
        if self.config.mode not in ESTIMATION_MODES:
            raise ScenarioConfigError(
                ["mode: stability checks need a formation or scale_demo scenario"])
        return self.run_checks(None, only=stability_checks)

    def run(
        self,
        progress_callback=None,
        is_stopped=None,
        trace_level: TraceLevel = TraceLevel.summary
    ) -> RunReport:
        self._progress_callback = progress_callback
        self.trace_level = TraceLevel(trace_level)
        self.__update_progress(0)

        ok, messages = self.config.validate()
        if not ok:
            for msg in messages:
                logger.error(msg)
            raise ScenarioConfigError(messages)

        cfg = self.config
        mode = SimMode(cfg.mode)
        logger.info(f"Running '{cfg.name}' in {mode.value} mode with seed {cfg.seed}")
        report = RunReport(cfg.name, mode.value, cfg.seed)
        started = time.perf_counter()

        if mode in ESTIMATION_MODES:
            self._run_formation(report, is_stopped)
        elif mode in TRAJOPT_MODES:
            self._run_trajopt(report)
        else:
            self._run_compare(report)

        report.timing['wall_time'] = time.perf_counter() - started
        self.__update_progress(0.95)
        report.checks = self.run_checks(report, is_stopped=is_stopped)
        self.report = report
        self.__update_progress(1.0)
        return report

    def _exchange_estimates(
            self,
            net: Network,
            observer: ObserverState) -> List[Dict[int, np.ndarray]]:
        ''' one round of position estimates to the sensing neighbours '''
        for i in range(observer.n):
            net.broadcast_to_neighbors(i, PayloadKind.state, observer.p_hat[i])
        net.step()
        return [
            {m.src: m.payload for m in net.inbox(i, PayloadKind.state)}
            for i in range(observer.n)
        ]

    def _relative_measurements(
            self,
            g: WeightedGraph,
            p: np.ndarray,
            att_true: List[Attitude],
            rngs: RngStreams):
        cfg = self.config.sensing
        att_estimate = [
            attitude_with_noise(att, cfg.attitude_noise_std, rngs.stream(ATTITUDE))
            for att in att_true
        ]
        relative = []
        for (i, j, _) in g.edges:
            for (a, b) in ((i, j), (j, i)):
                relative.append(measure_relative(
                    a, b, p[a], p[b], att_true[a], att_estimate[a],
                    cfg.reading_stds, rngs.stream(SENSING)))
        return relative

    def _replayed_frames(self) -> Optional[Dict[int, List[np.ndarray]]]:
        ''' motion capture frames by tick from the scenario's replay file '''
        path = self.config.tracking.replay
        if path is None:
            return None
        try:
            frames = dict(read_measurement_replay(path))
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ScenarioConfigError([f"tracking.replay: cannot read '{path}' ({e})"])
        logger.info(f"Replaying {len(frames)} motion capture frames from {path}")
        return frames

    def _run_formation(self, report: RunReport, is_stopped=None):
        '''
        Closed loop at dt_sim. Per tick: truth integration, motion capture
        frame, tracking, relative sensing, observer step, scale step, control
        law and saturation.
        '''
        cfg = self.config
        n, dt = cfg.n_agents, cfg.dt_sim
        scaled = cfg.mode == SimMode.scale_demo
        g = cfg.graph.build(n)
        leaders = LeaderSet(cfg.leaders)
        rngs = RngStreams(cfg.seed)

        p = np.asarray(cfg.initial_positions, dtype=float).copy()
        v = np.zeros_like(p)
        u = np.zeros_like(p)
        center = np.asarray(cfg.formation.center, dtype=float)
        shape = np.asarray(cfg.formation.shape, dtype=float)

        tracker_gains = TrackerGains(cfg.tracking.k_p, cfg.tracking.k_v)
        trackers = [TrackerState.at(p_i) for p_i in p]
        obs_gains = default_observer_gains(g, leaders, cfg.observer.k_p, cfg.observer.k_v)
        ctrl_gains = default_control_gains(g, leaders, cfg.control.k_p, cfg.control.k_v)

        p_hat = np.array([t.p_hat for t in trackers])
        if cfg.observer.init == ObserverInit.leaders_tracked:
            for i in range(n):
                if i not in leaders:
                    p_hat[i] = 0.0
        observer = ObserverState(p_hat, np.zeros_like(p))

        estimator = None
        if scaled:
            estimator = default_scale_estimator(g, leaders, cfg.scale.initial)
        spec = FormationSpec.static(cfg.formation.targets())
        att_true = [Attitude.from_yaw(cfg.sensing.yaw) for _ in range(n)]
        full = self.trace_level == TraceLevel.full
        net = Network(g, record=full)
        replayed = self._replayed_frames()

        agent_rows, error_rows = [], []
        measurement_rows, track_rows = [], []
        lost = set()
        n_ticks = cfg.n_ticks
        for tick in range(1, n_ticks + 1):
            if is_stopped is not None and is_stopped():
                break
            t = tick * dt
            p, v = euler_step_swarm(p, v, u, dt)

            if replayed is None:
                frame = simulate_mocap(
                    p, cfg.tracking.noise_std, cfg.tracking.dropout, rngs.stream(VICON))
            else:
                # a tick missing from the file is a frame with no measurements
                frame = replayed.get(tick, [])
            trackers = track_swarm(
                trackers, frame, tracker_gains, dt, cfg.tracking.lost_after)
            if full:
                measurement_rows.append({'tick': tick, 'z': [z.tolist() for z in frame]})
                track_rows.append(
                    {'tick': tick, 'z': [tracker.p_hat.tolist() for tracker in trackers]})
            for i, tracker in enumerate(trackers):
                if tracker.is_lost(cfg.tracking.lost_after):
                    lost.add(i)

            meas = MeasurementBundle(
                self._relative_measurements(g, p, att_true, rngs),
                {i: trackers[i].p_hat for i in leaders})
            views = self._exchange_estimates(net, observer)
            traced = tick % cfg.trace_every == 0 or tick == n_ticks
            if traced:
                innovation = np.linalg.norm(
                    observer_innovations(observer, meas, obs_gains, views), axis=1)
            observer = observer_step(observer, meas, u, obs_gains, dt, views)

            s_true = cfg.scale.value(t)
            if scaled:
                estimator = scale_step(estimator, s_true, dt)
                spec = FormationSpec(*desired_trajectory_from_scale(
                    (center, np.zeros(3)), shape, estimator, s_true))
                p_true_star = cfg.formation.targets(s_true)
            else:
                p_true_star = spec.p_star

            if cfg.control.feedback == Feedback.truth:
                u = control_all(p, v, spec, ctrl_gains)
            else:
                u = control_all(observer.p_hat, observer.v_hat, spec, ctrl_gains)
            u = saturate(u, cfg.control.a_max)

            if traced:
                row = {
                    't': t,
                    'formation_error': formation_error(p, p_true_star),
                    'observer_error': formation_error(observer.p_hat, p),
                }
                if scaled:
                    row['scale'] = s_true
                    row['scale_error'] = float(np.max(np.abs(estimator.s_est - s_true)))
                error_rows.append(row)
                for i in range(n):
                    agent_row = {
                        't': t,
                        'agent': i + 1,
                        'p': p[i].tolist(),
                        'v': v[i].tolist(),
                        'p_hat': observer.p_hat[i].tolist(),
                        'v_hat': observer.v_hat[i].tolist(),
                        'u': u[i].tolist(),
                        'e': (p[i] - p_true_star[i]).tolist(),
                        'innovation': float(innovation[i]),
                    }
                    if scaled:
                        agent_row['s_est'] = float(estimator.s_est[i])
                    agent_rows.append(agent_row)
            if tick % max(1, n_ticks // 10) == 0:
                self.__update_progress(0.9 * tick / n_ticks)

        report.traces['agents'] = agent_rows
        report.traces['errors'] = error_rows
        if full:
            report.traces['messages'] = net.transcript
            report.traces['measurements'] = measurement_rows
            report.traces['tracks'] = track_rows

        last = error_rows[-1] if error_rows else {}
        report.summary = {
            'n_agents': n,
            'ticks': n_ticks,
            'final_formation_error': last.get('formation_error'),
            'final_observer_error': last.get('observer_error'),
            'lost_tracks': [i + 1 for i in sorted(lost)],
            'transcript_hash': net.transcript_hash,
        }
        if scaled:
            report.summary['final_scale'] = last.get('scale')
            report.summary['final_scale_error'] = last.get('scale_error')
        report.failure_flags = {
            'convergence_failure': False,
            'solver_failure': False,
            'lost_track': len(lost) > 0,
        }
        if lost:
            logger.warning(f"Tracks lost during the run: {report.summary['lost_tracks']}")
        logger.info(
            f"Final formation error {report.summary['final_formation_error']:.3g} m "
            f"after {n_ticks} ticks")

    def _run_trajopt(self, report: RunReport):
        cfg = self.config
        tp = cfg.trajopt
        bc = BoundaryConditions.rest_to_rest(
            cfg.initial_positions, cfg.final_positions, int(tp.K), tp.h)
        ring = cfg.ring.pose()
        g_comm = cfg.comm_graph.build(cfg.n_agents)
        params = tp.to_alg_params()
        runner = alg1_run if cfg.mode == SimMode.trajopt_alg1 else alg2_run
        result = runner(
            bc, ring, g_comm, params, dict(cfg.network.delays) or None,
            record=self.trace_level == TraceLevel.full)
        self.__update_progress(0.8)
        self._fill_trajopt_report(report, result, bc, ring)

    def _fill_trajopt_report(self, report: RunReport, result: RunResult, bc, ring):
        cfg = self.config
        trajectories = result.trajectories

        report.summary = result.summary(timing=False)
        report.summary['ring_offsets'] = [
            ring_crossing_offset(traj, ring) for traj in trajectories]
        report.summary['boundary_error'] = max(
            max(np.max(np.abs(traj.pos[0] - bc.p0[i])),
                np.max(np.abs(traj.vel[0] - bc.v0[i])),
                np.max(np.abs(traj.pos[-1] - bc.pf[i])),
                np.max(np.abs(traj.vel[-1] - bc.vf[i])))
            for i, traj in enumerate(trajectories))
        report.summary['transcript_hash'] = result.transcript_hash
        report.failure_flags = {
            'convergence_failure': bool(result.convergence_failure),
            'solver_failure': bool(result.solver_failure),
        }
        report.timing['avg_solve_time_per_agent'] = result.avg_solve_time_per_agent()
        report.timing['solve_time_vs_n'] = [{
            'n_agents': result.n_agents,
            'algorithm': result.algorithm,
            'avg_solve_time_per_agent': result.avg_solve_time_per_agent(),
        }]
        report.timing['solve_times'] = [
            {'step': e.step, 'agent': e.agent, 'solve_time': e.solve_time}
            for e in result.optimizations()]

        rows = []
        for i, traj in enumerate(trajectories):
            for row in traj.to_rows():
                rows.append({'agent': i + 1, **row})
        report.traces['trajectories'] = rows
        report.traces['events'] = [
            {**e.to_dict(timing=False),
             'agent': None if e.agent is None else e.agent + 1}
            for e in result.events]

        n = result.n_agents
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        if pairs:
            d = pairwise_distances(result.positions())
            report.traces['distances'] = [
                {'k': k, 't': k * bc.h,
                 **{f"d_{i + 1}_{j + 1}": float(d[k, c]) for c, (i, j) in enumerate(pairs)}}
                for k in range(d.shape[0])
            ]

        if self.trace_level == TraceLevel.full:
            playback = []
            for i, traj in enumerate(trajectories):
                t, p, v, a = traj.playback(cfg.dt_sim)
                for s in range(t.shape[0]):
                    playback.append({
                        'agent': i + 1, 't': float(t[s]),
                        'p': p[s].tolist(), 'v': v[s].tolist(), 'a': a[s].tolist()})
            report.traces['playback'] = playback

        logger.info(
            f"{result.algorithm}: {len(result.optimizations())} optimizations, "
            f"min distance {report.summary['min_distance']}")

    def _run_compare(self, report: RunReport):
        cfg = self.config
        rngs = RngStreams(cfg.seed)
        comm = cfg.comm_graph

        def comm_graph(n: int) -> WeightedGraph:
            return WeightedGraph.from_topology(comm.topology, n, comm.weight)

        total = len(cfg.compare.agents) * cfg.compare.reps
        done = []

        def progress(n_agents: int, rep: int):
            done.append((n_agents, rep))
            self.__update_progress(0.9 * len(done) / total)

        comparison = compare_runs(
            cfg.compare.agents, cfg.compare.reps, rngs.stream(COMPARE),
            cfg.trajopt.to_alg_params(), cfg.ring.pose(), int(cfg.trajopt.K),
            cfg.trajopt.h, comm_graph, progress)

        report.traces['comparison'] = comparison.to_rows(timing=False)
        report.timing['solve_time_vs_n'] = [
            {'n_agents': row.n_agents, 'algorithm': row.algorithm,
             'avg_solve_time_per_agent': row.avg_solve_time_per_agent}
            for row in comparison.rows]
        failures = sum(row.convergence_failures for row in comparison.rows)
        report.summary = {
            'agents': list(cfg.compare.agents),
            'reps': cfg.compare.reps,
            'convergence_failures': failures,
            'avg_partners_per_agent': {
                algorithm: comparison.series(algorithm, 'avg_partners_per_agent')
                for algorithm in sorted({row.algorithm for row in comparison.rows})
            },
        }
        report.failure_flags = {
            'convergence_failure': failures > 0,
            'solver_failure': False,
        }
