import numpy as np
import os
import tempfile
import unittest

from swarmlab.swarmsim.lib.tracking import TrackerState, TrackerGains, \
    TrackerPhase, TrackingError, predict, associate, correct, track_swarm, \
    read_measurement_replay, write_measurement_replay


class TestTrackerSteps(unittest.TestCase):

    def test_predict(self):
        s = TrackerState(np.zeros(3), np.array([1.0, 0, 0]))
        p = predict(s, 0.005)
        np.testing.assert_allclose(p.p_hat, [0.005, 0, 0])
        self.assertEqual(p.phase, TrackerPhase.predicted)

        still = predict(TrackerState.at([1, 2, 3]), 0.005)
        np.testing.assert_array_equal(still.p_hat, [1, 2, 3])

        twice = predict(predict(s, 0.005), 0.005)
        np.testing.assert_allclose(twice.p_hat, [0.01, 0, 0])

    def test_associate(self):
        s = predict(TrackerState.at([0.1, 0, 0]), 0.005)
        z, index = associate(s, [np.zeros(3), np.full(3, 5.0)])
        np.testing.assert_array_equal(z, [0, 0, 0])
        self.assertEqual(index, 0)

        s = predict(TrackerState.at([0, 0, 0]), 0.005)
        z, index = associate(s, [np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])])
        np.testing.assert_array_equal(z, [1, 0, 0])
        self.assertEqual(index, 0)

        self.assertIsNone(associate(s, []))

    def test_associate_requires_prediction(self):
        with self.assertRaises(TrackingError):
            associate(TrackerState.at([0, 0, 0]), [np.zeros(3)])

    def test_correct(self):
        g = TrackerGains()
        s = predict(TrackerState(np.array([1.0, 0, 0]), np.zeros(3)), 0.005)
        c = correct(s, np.array([2.0, 0, 0]), g)
        self.assertAlmostEqual(c.p_hat[0], 1.8)
        self.assertAlmostEqual(c.v_hat[0], 0.0005)
        self.assertEqual(c.phase, TrackerPhase.corrected)

        same = correct(s, s.p_hat.copy(), g)
        np.testing.assert_array_equal(same.p_hat, s.p_hat)
        np.testing.assert_array_equal(same.v_hat, s.v_hat)

    def test_gain_validation(self):
        with self.assertRaises(TrackingError):
            TrackerGains(k_p=1.5)
        with self.assertRaises(TrackingError):
            TrackerGains(k_v=-1.0)


class TestTrackSwarm(unittest.TestCase):

    def test_permuted_measurements(self):
        rng = np.random.default_rng(1)
        truth = np.array([[0.0, 0.0, 1.0], [2.0, 0.0, 1.0], [0.0, 2.0, 1.0]])
        trackers = [TrackerState.at(p + 0.05) for p in truth]
        g = TrackerGains()
        for _ in range(20):
            order = rng.permutation(len(truth))
            trackers = track_swarm(trackers, [truth[i] for i in order], g, 0.005)
        for tracker, p in zip(trackers, truth):
            self.assertLess(np.linalg.norm(tracker.p_hat - p), 1e-6)

    def test_dropped_measurement(self):
        truth = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        trackers = [TrackerState.at(p) for p in truth]
        moved = truth[0] + np.array([0.1, 0, 0])
        trackers = track_swarm(trackers, [moved], TrackerGains(), 0.005)
        self.assertEqual(trackers[0].missed_count, 0)
        self.assertAlmostEqual(trackers[0].p_hat[0], 0.08)
        self.assertEqual(trackers[1].missed_count, 1)
        self.assertEqual(trackers[1].phase, TrackerPhase.predicted)
        np.testing.assert_array_equal(trackers[1].p_hat, truth[1])

    def test_no_double_claim(self):
        trackers = [TrackerState.at([0, 0, 0]), TrackerState.at([0.01, 0, 0])]
        trackers = track_swarm(trackers, [np.zeros(3)], TrackerGains(), 0.005)
        self.assertEqual(trackers[0].missed_count, 0)
        self.assertEqual(trackers[1].missed_count, 1)

    def test_static_fixed_point(self):
        truth = np.array([[0.5, -1.0, 1.0], [1.5, 1.0, 0.5]])
        trackers = [TrackerState.at(p) for p in truth]
        for _ in range(100):
            trackers = track_swarm(trackers, list(truth[::-1]), TrackerGains(), 0.005)
        for tracker, p in zip(trackers, truth):
            self.assertLessEqual(np.max(np.abs(tracker.p_hat - p)), 1e-9)

    def test_error_non_increasing(self):
        target = np.array([1.0, 1.0, 1.0])
        trackers = [TrackerState.at([0.0, 0.0, 0.0])]
        last = np.inf
        for _ in range(50):
            trackers = track_swarm(trackers, [target], TrackerGains(k_v=0.0), 0.005)
            err = np.linalg.norm(trackers[0].p_hat - target)
            self.assertLessEqual(err, last + 1e-12)
            last = err

    def test_replay_roundtrip(self):
        ticks = [(0, [np.array([1.0, 2.0, 3.0])]), (1, [])]
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'replay.jsonl')
            write_measurement_replay(path, ticks)
            loaded = list(read_measurement_replay(path))
        self.assertEqual([t for t, _ in loaded], [0, 1])
        np.testing.assert_array_equal(loaded[0][1][0], [1.0, 2.0, 3.0])
        self.assertEqual(loaded[1][1], [])


if __name__ == '__main__':
    unittest.main()
