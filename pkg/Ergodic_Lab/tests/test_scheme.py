import math

import numpy as np
from django.test import SimpleTestCase

from Ergodic_Lab.model import build_problem, check_one_sided
from Ergodic_Lab.noise import MasterSeed, PathBlock, make_stream
from Ergodic_Lab.scheme import (
    SchemeParams,
    StepKind,
    euler_step,
    modified_drift,
    modified_drift_slope_sup,
    modified_problem,
    simulate_block,
    simulate_path,
    tamed_step,
)


class SchemeParamsTests(SimpleTestCase):
    def test_dt_above_cap_rejected(self):
        with self.assertRaises(ValueError):
            SchemeParams(dt=2.0, dt_cap=1.0, n_steps=1)

    def test_nonpositive_dt_rejected(self):
        with self.assertRaises(ValueError):
            SchemeParams(dt=0.0, n_steps=1)

    def test_nonpositive_alpha_rejected(self):
        with self.assertRaises(ValueError):
            SchemeParams(dt=0.1, alpha=0.0, n_steps=1)

    def test_horizon(self):
        self.assertAlmostEqual(SchemeParams(dt=0.25, n_steps=8).horizon, 2.0)


class StepTests(SimpleTestCase):
    def test_tamed_displacement_never_exceeds_one_over_alpha(self):
        params = SchemeParams(dt=0.5, alpha=2.0, n_steps=1)
        x = np.array([[1e3], [-50.0], [0.3]])
        fx = -x - x ** 3
        displacement = tamed_step(x, fx, params, 0.0) - x
        self.assertTrue(np.all(np.abs(displacement) < 1 / params.alpha))

    def test_tamed_and_euler_agree_to_first_order(self):
        params = SchemeParams(dt=1e-4, n_steps=1)
        x = np.array([[0.7]])
        fx = -x
        tamed = tamed_step(x, fx, params, 0.0)
        euler = euler_step(x, fx, params, 0.0)
        self.assertLess(abs((tamed - euler).item()), 2 * params.dt ** 2)

    def test_gap_to_euler_is_the_taming_correction(self):
        params = SchemeParams(dt=0.01, alpha=2.0, n_steps=1)
        x = np.array([[0.7], [-3.0]])
        fx = -x - x ** 3
        gap = np.abs(euler_step(x, fx, params, 0.0) - tamed_step(x, fx, params, 0.0)).ravel()
        norm = np.abs(fx).ravel()
        expected = params.alpha * params.dt ** 2 * norm ** 2 / (1 + params.alpha * params.dt * norm)
        np.testing.assert_allclose(gap, expected, rtol=1e-10)

    def test_modified_drift_is_bounded(self):
        values = modified_drift(build_problem("cubic"), np.linspace(-1e3, 1e3, 101)[:, None], 1.0)
        self.assertTrue(np.all(np.abs(values) < 1.0))


class DivergenceTests(SimpleTestCase):
    def setUp(self):
        self.cubic = build_problem("cubic")
        self.master = MasterSeed(2024)

    def test_noiseless_tamed_ou_decays_monotonically(self):
        params = SchemeParams(dt=0.1, n_steps=50)
        result = simulate_path(build_problem("ou"), params, StepKind.TAMED, [3.0], make_stream(self.master, 0),
                               checkpoints=range(51), zero_noise=True)
        norms = [float(np.linalg.norm(state)) for _, state in result.recorded_states]
        self.assertEqual(len(norms), 51)
        self.assertTrue(all(b < a for a, b in zip(norms, norms[1:])))
        self.assertGreater(norms[-1], 0.0)

    def test_euler_explodes_within_three_steps_without_noise(self):
        params = SchemeParams(dt=0.5, n_steps=10)
        result = simulate_path(self.cubic, params, StepKind.EULER, [100.0], make_stream(self.master, 0),
                               zero_noise=True)
        self.assertIsNotNone(result.exploded_at)
        self.assertLessEqual(result.exploded_at, 3)

    def test_tamed_path_stays_bounded_without_noise(self):
        params = SchemeParams(dt=0.5, n_steps=1000)
        result = simulate_path(self.cubic, params, StepKind.TAMED, [100.0], make_stream(self.master, 0),
                               zero_noise=True)
        self.assertIsNone(result.exploded_at)
        self.assertLessEqual(result.sup_norm, 100.0)
        self.assertLessEqual(result.max_displacement, 1.0)

    def test_tamed_path_with_noise_over_long_run(self):
        dt, n_steps = 0.5, 100_000
        params = SchemeParams(dt=dt, n_steps=n_steps)
        result = simulate_path(self.cubic, params, StepKind.TAMED, [100.0], make_stream(self.master, 0))
        self.assertIsNone(result.exploded_at)
        self.assertLessEqual(result.max_displacement, 1.0)
        self.assertLessEqual(result.sup_norm, 100.0 + 10.0 * math.sqrt(dt * n_steps))

    def test_exploded_paths_record_nan(self):
        params = SchemeParams(dt=0.5, n_steps=5)
        block = PathBlock(self.master, np.arange(3))
        result = simulate_block(self.cubic, params, StepKind.EULER, np.array([100.0]), block,
                                checkpoints=[0, 5], zero_noise=True)
        self.assertTrue(np.all(result.exploded))
        np.testing.assert_array_equal(result.recorded[0], np.full((3, 1), 100.0))
        self.assertTrue(np.all(np.isnan(result.recorded[5])))


class PathDriverTests(SimpleTestCase):
    def setUp(self):
        self.ou = build_problem("ou")
        self.master = MasterSeed(17)

    def test_checkpoints_are_recorded(self):
        params = SchemeParams(dt=0.1, n_steps=10)
        result = simulate_path(self.ou, params, StepKind.TAMED, [1.0], make_stream(self.master, 0),
                               checkpoints=[0, 5, 10])
        self.assertEqual([step for step, _ in result.recorded_states], [0, 5, 10])
        np.testing.assert_array_equal(result.recorded_states[0][1], [1.0])
        np.testing.assert_array_equal(result.recorded_states[-1][1], result.final_state)

    def test_unsorted_checkpoints_rejected(self):
        params = SchemeParams(dt=0.1, n_steps=10)
        with self.assertRaises(ValueError):
            simulate_path(self.ou, params, StepKind.TAMED, [0.0], make_stream(self.master, 0), checkpoints=[5, 2])

    def test_wrong_initial_dimension_rejected(self):
        params = SchemeParams(dt=0.1, n_steps=1)
        with self.assertRaises(ValueError):
            simulate_path(self.ou, params, StepKind.TAMED, [0.0, 1.0], make_stream(self.master, 0))

    def test_continuing_a_stream_matches_one_long_run(self):
        full = simulate_path(self.ou, SchemeParams(dt=0.1, n_steps=20), StepKind.TAMED, [2.0],
                             make_stream(self.master, 4))
        stream = make_stream(self.master, 4)
        half = SchemeParams(dt=0.1, n_steps=10)
        first = simulate_path(self.ou, half, StepKind.TAMED, [2.0], stream)
        second = simulate_path(self.ou, half, StepKind.TAMED, first.final_state, stream)
        self.assertEqual(stream.step_index, 20)
        np.testing.assert_array_equal(second.final_state, full.final_state)

    def test_block_rows_match_single_paths(self):
        params = SchemeParams(dt=0.05, n_steps=40)
        block = simulate_block(self.ou, params, StepKind.TAMED, np.array([0.5]),
                               PathBlock(self.master, np.arange(4)))
        single = simulate_path(self.ou, params, StepKind.TAMED, [0.5], make_stream(self.master, 2))
        np.testing.assert_array_equal(block.final_states[2], single.final_state)

    def test_rotation_problem_runs_in_two_dimensions(self):
        params = SchemeParams(dt=0.01, n_steps=100)
        result = simulate_path(build_problem("rotation"), params, StepKind.TAMED, [1.0, 0.0],
                               make_stream(self.master, 0))
        self.assertEqual(result.final_state.shape, (2,))
        self.assertTrue(np.all(np.isfinite(result.final_state)))


class ModifiedDriftTests(SimpleTestCase):
    def test_modified_cubic_drift_loses_the_one_sided_condition(self):
        modified = modified_problem(build_problem("cubic"), alpha=1.0)
        report = check_one_sided(modified, n_pairs=2000, sampling_radius=10.0, seed=0)
        self.assertFalse(report.passed)

    def test_modified_cubic_slope_is_never_expanding(self):
        slope, argmax = modified_drift_slope_sup(build_problem("cubic"), alpha=1.0, radius=10.0)
        self.assertLess(slope, 0.0)
        self.assertGreaterEqual(slope, -1.0)
        self.assertGreater(abs(argmax), 5.0)

    def test_slope_needs_one_dimension(self):
        with self.assertRaises(ValueError):
            modified_drift_slope_sup(build_problem("rotation"), alpha=1.0, radius=1.0)
