import math

import numpy as np
from django.test import SimpleTestCase

from Ergodic_Lab.errors import DriftOverflow, InsufficientSamples, NotGradientProblem, UnknownProblem
from Ergodic_Lab.model import (
    NoiseModel,
    Problem,
    build_problem,
    check_one_sided,
    check_poly_growth,
    default_catalog,
    eval_drift,
    gibbs_log_density,
    gradient_mismatch,
    one_sided_ratio,
    polynomial_problem,
)


class CatalogTests(SimpleTestCase):
    def test_catalog_lists_builtin_problems(self):
        self.assertEqual(default_catalog().names(), ["cubic", "double_well", "ou", "rotation"])

    def test_ou_defaults(self):
        problem = build_problem("ou")
        self.assertEqual(problem.dim, 1)
        self.assertEqual(problem.gamma, 1.0)
        self.assertEqual(problem.noise.isotropic_scale(), 1.0)
        np.testing.assert_allclose(eval_drift(problem, [2.0]), [-2.0])

    def test_ou_overrides_rescale_drift_and_noise(self):
        problem = build_problem("ou", gamma=2.0, sigma=0.5, dim=3)
        self.assertEqual(problem.dim, 3)
        np.testing.assert_allclose(eval_drift(problem, [1.0, -1.0, 0.5]), [-2.0, 2.0, -1.0])
        self.assertEqual(problem.noise.isotropic_scale(), 0.5)

    def test_cubic_drift(self):
        problem = build_problem("cubic")
        np.testing.assert_allclose(eval_drift(problem, [2.0]), [-10.0])
        self.assertEqual(problem.growth_degree, 3)
        self.assertAlmostEqual(problem.noise.isotropic_scale(), math.sqrt(2))

    def test_unknown_problem(self):
        with self.assertRaises(UnknownProblem):
            build_problem("lorenz")

    def test_fixed_dimension_cannot_change(self):
        with self.assertRaises(ValueError):
            build_problem("cubic", dim=2)


class ProblemValidationTests(SimpleTestCase):
    def test_nonpositive_gamma_rejected(self):
        with self.assertRaises(ValueError):
            polynomial_problem([0.0, -1.0], gamma=-1.0, growth_degree=1)

    def test_degenerate_noise_rejected(self):
        with self.assertRaises(ValueError):
            NoiseModel(np.zeros((1, 1)))

    def test_noise_dimension_must_match(self):
        with self.assertRaises(ValueError):
            Problem(
                name="bad",
                dim=2,
                drift=lambda x: -x,
                gamma=1.0,
                growth_degree=1,
                noise=NoiseModel.isotropic(1, 1.0),
            )

    def test_non_isotropic_noise_has_no_scale(self):
        noise = NoiseModel.from_columns([[1.0, 0.0], [0.0, 2.0]])
        self.assertEqual(noise.K, 2)
        self.assertIsNone(noise.isotropic_scale())

    def test_drift_overflow(self):
        problem = build_problem("cubic")
        with self.assertRaises(DriftOverflow):
            eval_drift(problem, [1e200])


class OneSidedCheckTests(SimpleTestCase):
    def test_ou_passes_with_ratio_minus_gamma(self):
        report = check_one_sided(build_problem("ou"), n_pairs=2000, sampling_radius=10.0, seed=1)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.worst_ratio, -1.0, places=9)
        self.assertEqual(report.kind, "one_sided")

    def test_cubic_passes(self):
        report = check_one_sided(build_problem("cubic"), n_pairs=5000, sampling_radius=10.0, seed=2)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.worst_ratio, -1.0 + 1e-9)

    def test_rotation_skew_part_does_not_change_ratio(self):
        report = check_one_sided(build_problem("rotation"), n_pairs=2000, sampling_radius=5.0, seed=3)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.worst_ratio, -1.0, places=9)

    def test_double_well_fails_with_witness(self):
        problem = build_problem("double_well")
        report = check_one_sided(problem, n_pairs=5000, sampling_radius=2.0, seed=4)
        self.assertFalse(report.passed)
        self.assertGreater(report.worst_ratio, 0.0)
        x1, x2 = report.witness
        self.assertAlmostEqual(float(one_sided_ratio(problem, x1, x2)), report.worst_ratio)

    def test_all_pairs_degenerate(self):
        with self.assertRaises(InsufficientSamples):
            check_one_sided(build_problem("ou"), n_pairs=10, sampling_radius=1e-14, seed=0)

    def test_same_seed_same_report(self):
        first = check_one_sided(build_problem("cubic"), 500, 3.0, seed=9)
        second = check_one_sided(build_problem("cubic"), 500, 3.0, seed=9)
        self.assertEqual(first.worst_ratio, second.worst_ratio)


class GrowthCheckTests(SimpleTestCase):
    def test_cubic_growth_ratio_is_bounded(self):
        report = check_poly_growth(build_problem("cubic"), n_points=5000, sampling_radius=100.0, seed=0)
        self.assertTrue(report.passed)
        self.assertLess(report.worst_ratio, 2.0)
        self.assertEqual(report.notes, ())

    def test_understated_degree_is_flagged(self):
        problem = polynomial_problem([0.0, -1.0, 0.0, -1.0], gamma=1.0, growth_degree=1)
        report = check_poly_growth(problem, n_points=5000, sampling_radius=100.0, seed=0)
        self.assertGreater(report.worst_ratio, 1e3)
        self.assertEqual(len(report.notes), 1)


class GibbsTests(SimpleTestCase):
    def test_ou_log_density(self):
        problem = build_problem("ou")
        np.testing.assert_allclose(gibbs_log_density(problem, [[1.0], [2.0]], 1.0), [-1.0, -4.0])

    def test_rotation_is_not_gradient(self):
        with self.assertRaises(NotGradientProblem):
            gibbs_log_density(build_problem("rotation"), [[0.0, 0.0]], 1.0)

    def test_polynomial_potential_matches_drift(self):
        points = np.linspace(-3, 3, 13)[:, None]
        self.assertLess(gradient_mismatch(build_problem("cubic"), points), 1e-5)
