import csv
import json
import tempfile
import unittest

from pathlib import Path

import numpy as np

from swarmlab.swarmsim.lib.report import RunReport, TraceLevel, \
    emit_plots_data, write_report


def sample_report(**kwargs):
    report = RunReport('sample', 'trajopt_alg1', 3)
    report.summary = {
        'n_agents': 3,
        'algorithm': 'alg1',
        'optimizations': 4,
        'avg_constraints_per_agent': 12.5,
        'avg_partners_per_agent': 1.25,
        'min_distance': np.float64(0.31),
    }
    report.failure_flags = {'convergence_failure': False, 'solver_failure': False}
    report.traces = {
        'distances': [
            {'k': k, 't': 0.1 * k, 'd_1_2': 1.0 + k, 'd_1_3': 2.0, 'd_2_3': 0.5}
            for k in range(5)
        ],
    }
    report.checks = [{
        'id': 'x',
        'execution': {'start': '2020-01-01T00:00:00.0', 'end': '2020-01-01T00:00:01.0',
                      'status': 'completed', 'error': None},
        'check_state': 'pass',
    }]
    report.timing = {
        'wall_time': 1.5,
        'solve_time_vs_n': [
            {'n_agents': 3, 'algorithm': 'alg1', 'avg_solve_time_per_agent': 0.01}],
    }
    for key, value in kwargs.items():
        setattr(report, key, value)
    return report


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.DictReader(f))


class TestRunReport(unittest.TestCase):

    def test_flags(self):
        report = sample_report()
        self.assertFalse(report.convergence_failure)
        self.assertFalse(report.solver_failure)
        report.failure_flags['solver_failure'] = True
        self.assertTrue(report.solver_failure)
        self.assertFalse(RunReport('a', 'formation', 0).convergence_failure)

    def test_digest_ignores_timing(self):
        a = sample_report()
        b = sample_report(timing={'wall_time': 99.0})
        b.checks = [dict(a.checks[0], execution={
            'start': '2021-05-05T10:00:00.0', 'end': '2021-05-05T10:00:09.0',
            'status': 'completed', 'error': None})]
        self.assertEqual(a.digest(), b.digest())

    def test_digest_covers_results(self):
        a = sample_report()
        b = sample_report()
        b.traces['distances'][2]['d_2_3'] = 0.49
        self.assertNotEqual(a.digest(), b.digest())
        c = sample_report(seed=4)
        self.assertNotEqual(a.digest(), c.digest())

    def test_to_dict(self):
        d = sample_report().to_dict()
        self.assertIn('timing', d)
        self.assertNotIn('traces', d)
        self.assertIsInstance(d['summary']['min_distance'], float)
        json.dumps(d)

        d = sample_report().to_dict(timing=False, traces=True)
        self.assertNotIn('timing', d)
        self.assertEqual(len(d['traces']['distances']), 5)
        self.assertEqual(d['checks'][0]['execution'], {'status': 'completed', 'error': None})


class TestWriteReport(unittest.TestCase):

    def test_plots_data(self):
        with tempfile.TemporaryDirectory() as tmp:
            written = emit_plots_data(sample_report(), Path(tmp))
            names = sorted(p.name for p in written)
            self.assertEqual(
                names, ['constraints_vs_n.csv', 'distances.csv', 'solve_time_vs_n.csv'])

            rows = read_csv(Path(tmp) / 'distances.csv')
            self.assertEqual(len(rows), 5)
            self.assertEqual(list(rows[0].keys()), ['k', 't', 'd_1_2', 'd_1_3', 'd_2_3'])
            self.assertEqual(float(rows[3]['d_1_2']), 4.0)

            rows = read_csv(Path(tmp) / 'constraints_vs_n.csv')
            self.assertEqual(len(rows), 1)
            self.assertEqual(rows[0]['algorithm'], 'alg1')
            self.assertEqual(float(rows[0]['avg_partners_per_agent']), 1.25)

    def test_comparison_rows(self):
        comparison = [
            {'n_agents': n, 'algorithm': a, 'repetitions': 2, 'optimizations': 3,
             'avg_constraints_per_agent': 1.0, 'avg_partners_per_agent': 0.5}
            for n in (2, 3) for a in ('alg1', 'baseline')
        ]
        report = RunReport('cmp', 'compare', 0, traces={'comparison': comparison})
        with tempfile.TemporaryDirectory() as tmp:
            written = emit_plots_data(report, Path(tmp))
            self.assertEqual([p.name for p in written], ['constraints_vs_n.csv'])
            rows = read_csv(written[0])
            self.assertEqual(len(rows), 4)
            self.assertEqual(rows[3]['algorithm'], 'baseline')

    def test_trace_levels(self):
        with tempfile.TemporaryDirectory() as tmp:
            written = write_report(sample_report(), Path(tmp) / 'none', TraceLevel.none)
            self.assertEqual([p.name for p in written], ['report.json'])
            with open(written[0]) as f:
                d = json.load(f)
            self.assertEqual(d['digest'], sample_report().digest())
            self.assertEqual(d['timing']['wall_time'], 1.5)

            written = write_report(sample_report(), Path(tmp) / 'full', 'full')
            names = {p.name for p in written}
            self.assertIn('distances.csv', names)
            self.assertIn('distances.jsonl', names)
            with open(Path(tmp) / 'full' / 'distances.jsonl') as f:
                lines = f.readlines()
            self.assertEqual(len(lines), 5)
            self.assertEqual(json.loads(lines[0])['d_1_3'], 2.0)

    def test_byte_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_report(sample_report(), Path(tmp) / 'a', TraceLevel.summary)
            write_report(sample_report(), Path(tmp) / 'b', TraceLevel.summary)
            for name in ('distances.csv', 'constraints_vs_n.csv'):
                self.assertEqual(
                    (Path(tmp) / 'a' / name).read_bytes(),
                    (Path(tmp) / 'b' / name).read_bytes())


if __name__ == '__main__':
    unittest.main()
