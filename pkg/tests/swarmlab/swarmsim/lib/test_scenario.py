import copy
import json
import tempfile
import unittest

from pathlib import Path

from swarmlab.swarmsim.lib.graph import Topology
from swarmlab.swarmsim.lib.scenario import CompareParams, Feedback, \
    ObserverInit, ScaleSchedule, ScenarioConfig, ScenarioConfigError, SimMode, \
    load


SCENARIOS = Path(__file__).resolve().parents[4] / 'scenarios'

SQUARE = [
    [0.5, 0.5, 0.0],
    [-0.5, 0.5, 0.0],
    [-0.5, -0.5, 0.0],
    [0.5, -0.5, 0.0],
]


def formation_dict(**kwargs):
    ''' four agents on a complete graph, every agent a leader, noiseless '''
    d = {
        'name': 'square',
        'mode': 'formation',
        'seed': 1,
        'n_agents': 4,
        'dt_sim': 0.01,
        'duration': 25.0,
        'graph': {'topology': 'complete'},
        'leaders': [1, 2, 3, 4],
        'initial_positions': [
            [0.8, 0.7, 0.9],
            [-0.7, 0.6, 1.1],
            [-0.6, -0.8, 1.0],
            [0.5, -0.4, 0.8],
        ],
        'formation': {'shape': SQUARE, 'center': [0.0, 0.0, 1.0]},
        'observer': {'init': 'tracked'},
        'trace_every': 50,
    }
    d.update(kwargs)
    return d


def crossing_dict(**kwargs):
    ''' two agents exchanging sides of a ring at x = 0 '''
    d = {
        'name': 'crossing',
        'mode': 'trajopt_alg1',
        'seed': 0,
        'n_agents': 2,
        'comm_graph': {'topology': 'path'},
        'initial_positions': [[1.2, 0.1, 1.0], [-2.4, -0.1, 1.0]],
        'final_positions': [[-2.4, 0.1, 1.0], [1.2, -0.1, 1.0]],
        'ring': {'center': [0.0, 0.0, 1.0], 'normal': [1.0, 0.0, 0.0]},
        'trajopt': {'K': 24, 'h': 0.15, 'R_active': 5.0},
        'trace_every': 1,
    }
    d.update(kwargs)
    return d


def compare_dict(**kwargs):
    d = {
        'name': 'small-compare',
        'mode': 'compare',
        'seed': 11,
        'n_agents': 2,
        'comm_graph': {'topology': 'complete'},
        'ring': {'center': [0.0, 0.0, 1.5], 'normal': [0.0, 1.0, 0.0]},
        'trajopt': {'K': 20, 'h': 0.2, 'M1': 5},
        'compare': {'agents': [2, 3], 'reps': 1},
    }
    d.update(kwargs)
    return d


class TestScenarioFiles(unittest.TestCase):

    def test_shipped_scenarios(self):
        paths = sorted(SCENARIOS.glob('*.json'))
        self.assertGreaterEqual(len(paths), 5)
        modes = set()
        for path in paths:
            cfg = load(str(path))
            modes.add(cfg.mode)
            self.assertEqual(ScenarioConfig.from_dict(cfg.to_dict()), cfg, path.name)
        self.assertEqual(modes, set(SimMode))

    def test_load_round_trip(self):
        cfg = ScenarioConfig.from_dict(formation_dict())
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'scenario.json'
            with open(path, 'w') as f:
                json.dump(cfg.to_dict(), f)
            self.assertEqual(load(str(path)), cfg)

    def test_replay_relative_to_scenario(self):
        with tempfile.TemporaryDirectory() as tmp:
            (Path(tmp) / 'frames.jsonl').write_text('{"tick": 1, "z": []}\n')
            path = Path(tmp) / 'replayed.json'
            with open(path, 'w') as f:
                json.dump(formation_dict(tracking={'replay': 'frames.jsonl'}), f)
            cfg = load(str(path))
            self.assertEqual(cfg.tracking.replay, str(Path(tmp) / 'frames.jsonl'))

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'broken.json'
            path.write_text('{"name": ')
            with self.assertRaises(ScenarioConfigError) as ctx:
                load(str(path))
            self.assertIn('invalid JSON', ctx.exception.messages[0])

    def test_load_validates(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'leaderless.json'
            with open(path, 'w') as f:
                json.dump(formation_dict(leaders=[]), f)
            with self.assertRaises(ScenarioConfigError) as ctx:
                load(str(path))
            self.assertIn("leaders: at least one leader is required", ctx.exception.messages)


class TestFromDict(unittest.TestCase):

    def test_one_based_ids(self):
        d = crossing_dict(
            comm_graph={'topology': 'custom', 'edges': [[1, 2, 0.5]]},
            network={'delay': {'2-1': 3}})
        cfg = ScenarioConfig.from_dict(d)
        self.assertEqual(cfg.comm_graph.edges, [(0, 1, 0.5)])
        self.assertEqual(cfg.network.delays, {(0, 1): 3})
        self.assertEqual(cfg.to_dict()['comm_graph']['edges'], [[1, 2, 0.5]])
        self.assertEqual(cfg.to_dict()['network'], {'delay': {'1-2': 3}})

        cfg = ScenarioConfig.from_dict(formation_dict(leaders=[3, 1, 3]))
        self.assertEqual(cfg.leaders, [0, 2])
        self.assertEqual(cfg.to_dict()['leaders'], [1, 3])

    def test_defaults_and_enums(self):
        cfg = ScenarioConfig.from_dict({'name': 'x', 'mode': 'formation', 'n_agents': 2})
        self.assertEqual(cfg.seed, 0)
        self.assertEqual(cfg.dt_sim, 0.005)
        self.assertEqual(cfg.graph.topology, Topology.complete)
        self.assertEqual(cfg.observer.init, ObserverInit.leaders_tracked)
        self.assertEqual(cfg.control.feedback, Feedback.estimate)
        self.assertEqual(cfg.control.k_p, 9.0)
        self.assertEqual(cfg.trajopt.r_collision, 0.3)
        self.assertEqual(cfg.compare.agents, [4, 8, 12, 16, 20])
        self.assertIsNone(cfg.checks)
        self.assertEqual(cfg.n_ticks, 3000)

    def test_renamed_keys(self):
        cfg = ScenarioConfig.from_dict(crossing_dict())
        self.assertEqual(cfg.trajopt.r_active, 5.0)
        trajopt = cfg.to_dict()['trajopt']
        self.assertEqual(trajopt['R_active'], 5.0)
        self.assertNotIn('r_active', trajopt)
        self.assertEqual(trajopt['weights'], 'equal')

    def test_subgradient_step_size(self):
        cfg = ScenarioConfig.from_dict(crossing_dict(trajopt={'K': 24, 'alpha_m': 1e-4}))
        self.assertEqual(cfg.trajopt.alpha_m, 1e-4)
        self.assertEqual(cfg.trajopt.to_alg_params().alpha_m, 1e-4)
        self.assertEqual(cfg.to_dict()['trajopt']['alpha_m'], 1e-4)
        self.assertEqual(ScenarioConfig.from_dict(crossing_dict()).trajopt.alpha_m, 0.0)

    def test_unknown_keys(self):
        d = formation_dict(bogus=1)
        d['tracking'] = {'gain': 2.0}
        with self.assertRaises(ScenarioConfigError) as ctx:
            ScenarioConfig.from_dict(d)
        self.assertIn("bogus: unknown parameter", ctx.exception.messages)
        self.assertIn("tracking.gain: unknown parameter", ctx.exception.messages)

    def test_missing_required(self):
        d = formation_dict()
        del d['mode']
        with self.assertRaises(ScenarioConfigError) as ctx:
            ScenarioConfig.from_dict(d)
        self.assertEqual(ctx.exception.messages, ["mode: missing required parameter"])

    def test_bad_values(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            ScenarioConfig.from_dict(formation_dict(mode='hover', leaders=[0, 'a']))
        msgs = ctx.exception.messages
        self.assertIn("mode: unknown mode 'hover'", msgs)
        self.assertIn("leaders: agent ids start at 1, got 0", msgs)
        self.assertIn("leaders: expected integer agent ids, got a", msgs)

        with self.assertRaises(ScenarioConfigError):
            ScenarioConfig.from_dict(formation_dict(observer={'init': 'guess'}))

    def test_check_selection(self):
        checks = [{'id': 'abc', 'params': [{'name': 'Tolerance', 'value': 0.1}]}]
        cfg = ScenarioConfig.from_dict(formation_dict(checks=checks))
        self.assertEqual(cfg.checks, checks)
        with self.assertRaises(ScenarioConfigError):
            ScenarioConfig.from_dict(formation_dict(checks=[{'params': []}]))


class TestValidate(unittest.TestCase):

    def test_valid(self):
        for d in (formation_dict(), crossing_dict(), compare_dict()):
            ok, msgs = ScenarioConfig.from_dict(d).validate()
            self.assertTrue(ok, msgs)
            self.assertEqual(msgs, [])

    def test_estimation_messages(self):
        d = formation_dict(
            graph={'topology': 'custom', 'edges': [[1, 2], [3, 4]]},
            leaders=[5],
            tracking={'dropout': 1.0})
        d['formation'] = {'shape': SQUARE[:3]}
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertFalse(ok)
        self.assertIn("graph: graph must be connected", msgs)
        self.assertIn("leaders: agent 5 is outside 1..4", msgs)
        self.assertIn("formation.shape: expected 4 offsets of 3 coordinates", msgs)
        self.assertIn("tracking.dropout: must be in [0, 1), got 1.0", msgs)

    def test_scaled_shape_zero_mean(self):
        shape = copy.deepcopy(SQUARE)
        shape[0][0] = 1.0
        d = formation_dict(mode='scale_demo')
        d['formation'] = {'shape': shape}
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertFalse(ok)
        self.assertIn("formation.shape: scaled formations need a zero mean shape", msgs)

    def test_trajopt_messages(self):
        d = crossing_dict(network={'delay': {'1-2': -1}})
        d['trajopt'] = {'K': 3}
        d['final_positions'] = [[0.0, 0.0, 1.0]]
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertFalse(ok)
        self.assertIn("trajopt.K: must be at least 4, got 3", msgs)
        self.assertIn("final_positions: expected 2 positions, got 1", msgs)
        self.assertIn("network.delay.1-2: must be non negative, got -1", msgs)

        d = crossing_dict(
            n_agents=3,
            comm_graph={'topology': 'path'},
            network={'delay': {'1-3': 1}})
        d['initial_positions'].append([0.0, 2.0, 1.0])
        d['final_positions'].append([0.0, -2.0, 1.0])
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertEqual(msgs, ["network.delay.1-3: not a communication edge"])

    def test_alg2_needs_connected_comm_graph(self):
        d = crossing_dict(
            n_agents=3,
            comm_graph={'topology': 'custom', 'edges': [[1, 2]]})
        d['initial_positions'].append([0.0, 2.0, 1.0])
        d['final_positions'].append([0.0, -2.0, 1.0])
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertTrue(ok, msgs)

        d['mode'] = 'trajopt_alg2'
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertFalse(ok)
        self.assertEqual(msgs, ["comm_graph: graph must be connected"])

    def test_missing_replay_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            missing = str(Path(tmp) / 'frames.jsonl')
            d = formation_dict(tracking={'replay': missing})
            ok, msgs = ScenarioConfig.from_dict(d).validate()
            self.assertFalse(ok)
            self.assertEqual(msgs, [f"tracking.replay: no such file '{missing}'"])

    def test_compare_messages(self):
        d = compare_dict(
            comm_graph={'topology': 'custom', 'edges': [[1, 2]]},
            compare={'agents': [], 'reps': 0})
        ok, msgs = ScenarioConfig.from_dict(d).validate()
        self.assertFalse(ok)
        self.assertIn("comm_graph: compare mode needs a named topology", msgs)
        self.assertIn("compare.agents: expected a list of positive agent counts", msgs)
        self.assertIn("compare.reps: must be at least 1, got 0", msgs)


class TestOverrides(unittest.TestCase):

    def test_with_overrides(self):
        cfg = ScenarioConfig.from_dict(formation_dict())
        self.assertEqual(cfg.with_overrides(seed=None), cfg)
        other = cfg.with_overrides(seed=5, compare=CompareParams([2], 3))
        self.assertEqual(other.seed, 5)
        self.assertEqual(other.compare.agents, [2])
        self.assertEqual(cfg.seed, 1)

    def test_scale_schedule(self):
        schedule = ScaleSchedule(initial=1.0, final=2.0, ramp_start=2.0, ramp_duration=10.0)
        self.assertEqual(schedule.value(0.0), 1.0)
        self.assertEqual(schedule.value(2.0), 1.0)
        self.assertAlmostEqual(schedule.value(7.0), 1.5)
        self.assertEqual(schedule.value(12.0), 2.0)
        self.assertEqual(schedule.value(100.0), 2.0)
        self.assertEqual(ScaleSchedule(final=3.0, ramp_start=1.0).value(1.5), 3.0)


if __name__ == '__main__':
    unittest.main()
