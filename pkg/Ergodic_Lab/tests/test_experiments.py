import math

import numpy as np
from django.test import SimpleTestCase

from Ergodic_Lab.engine import Estimate, MonteCarloEngine, Observable
from Ergodic_Lab.errors import SlopeUndetermined
from Ergodic_Lab.experiments import (
    SweepRow,
    analytic_cost,
    contraction_test,
    cost_end_to_end,
    cost_schedule,
    divergence_demo,
    ergodic_decay_rate,
    ergodic_error_curve,
    fit_log_slope,
    flatness_ratio,
    moment_growth_sweep,
    plateau_level,
    steps_for,
    weak_error_rows,
    weak_error_sweep,
)
from Ergodic_Lab.model import build_problem
from Ergodic_Lab.noise import MasterSeed
from Ergodic_Lab.oracle import invariant_reference, ou_finite_time_moment
from Ergodic_Lab.scheme import StepKind


def _row(parameter, abs_error, stderr=1e-4):
    estimate = Estimate(mean=abs_error, variance=0.0, n_samples=100, stderr=stderr, ci95_halfwidth=1.96 * stderr)
    return SweepRow(parameter=parameter, estimate=estimate, reference=0.0, abs_error=abs_error, error_stderr=stderr)


class HelperTests(SimpleTestCase):
    def test_fit_log_slope_of_power_law(self):
        self.assertAlmostEqual(fit_log_slope([1.0, 2.0, 4.0], [3.0, 6.0, 12.0]), 1.0)

    def test_steps_for(self):
        self.assertEqual(steps_for(4.0, 0.025), 160)
        with self.assertRaises(ValueError):
            steps_for(1.0, 0.3)

    def test_row_against_reference(self):
        estimate = Estimate.from_samples([0.4, 0.6])
        row = SweepRow.against(0.1, estimate, 0.45)
        self.assertAlmostEqual(row.abs_error, 0.05)
        self.assertEqual(row.error_stderr, estimate.stderr)


class CostScheduleTests(SimpleTestCase):
    def test_step_counts(self):
        counts = [cost_schedule(eps, R=1).n_steps for eps in (0.1, 0.01, 0.001)]
        self.assertEqual(counts, [54, 2121, 47718])

    def test_ratios_follow_the_analytic_law(self):
        epsilons = (0.1, 0.01, 0.001)
        schedules = [cost_schedule(eps, R=1) for eps in epsilons]
        for (a, b), (ea, eb) in zip(zip(schedules, schedules[1:]), zip(epsilons, epsilons[1:])):
            ratio = b.n_steps / a.n_steps
            analytic = analytic_cost(eb, 1) / analytic_cost(ea, 1)
            self.assertLess(abs(ratio / analytic - 1), 0.02)

    def test_horizon_doubles_when_epsilon_is_squared(self):
        self.assertAlmostEqual(cost_schedule(0.01, 1).horizon, 2 * cost_schedule(0.1, 1).horizon)

    def test_schedule_fields(self):
        schedule = cost_schedule(0.1, R=1)
        log_eps = math.log(10)
        self.assertAlmostEqual(schedule.dt, 0.1 / log_eps)
        self.assertGreaterEqual(schedule.simulated_horizon, schedule.horizon)
        self.assertLess(schedule.simulated_horizon - schedule.horizon, schedule.dt)

    def test_time_constant_scales_the_horizon_only(self):
        base = cost_schedule(0.01, R=1)
        doubled = cost_schedule(0.01, R=1, c_time=2.0)
        self.assertAlmostEqual(doubled.horizon, 2 * base.horizon)
        self.assertEqual(doubled.dt, base.dt)
        self.assertGreaterEqual(doubled.n_steps, 2 * base.n_steps - 1)
        self.assertLessEqual(doubled.n_steps, 2 * base.n_steps)

    def test_smaller_epsilon_costs_more(self):
        schedules = [cost_schedule(eps, R=1) for eps in (0.1, 0.05, 0.01, 0.005, 0.001)]
        for coarse, fine in zip(schedules, schedules[1:]):
            self.assertLess(fine.dt, coarse.dt)
            self.assertGreater(fine.n_steps, coarse.n_steps)

    def test_epsilon_out_of_range(self):
        for eps in (0.0, 1.0, 2.0):
            with self.assertRaises(ValueError):
                cost_schedule(eps, R=1)

    def test_end_to_end_reaches_accuracy(self):
        ou = build_problem("ou")
        row, schedule, path_steps = cost_end_to_end(ou, Observable.moment(2), [0.0], 0.05, 1, 4000, MasterSeed(5),
                                                    reference=0.5)
        self.assertEqual(path_steps, 4000 * schedule.n_steps)
        self.assertLessEqual(row.abs_error, 0.05 + 3 * row.error_stderr)

    def test_end_to_end_respects_the_step_cap(self):
        with self.assertRaises(ValueError):
            cost_end_to_end(build_problem("ou"), Observable.moment(2), [0.0], 0.5, 0, 10, MasterSeed(0),
                            reference=0.5, c_acc=10.0)


class MomentGrowthTests(SimpleTestCase):
    def test_cubic_fourth_moment_stays_flat(self):
        rows = moment_growth_sweep(build_problem("cubic"), [2.0], 4, 0.01, [1.0, 10.0, 100.0], 1000, MasterSeed(6))
        self.assertEqual([row.parameter for row in rows], [1.0, 10.0, 100.0])
        self.assertLessEqual(flatness_ratio(rows), 2.0)
        for row in rows:
            self.assertAlmostEqual(row.normalized, row.estimate.mean ** 0.25)

    def test_initial_state_counts_in_the_supremum(self):
        rows = moment_growth_sweep(build_problem("ou"), [2.0], 2, 0.1, [1.0], 500, MasterSeed(6))
        self.assertEqual(rows[0].estimate.mean, 4.0)

    def test_step_above_cap_rejected(self):
        with self.assertRaises(ValueError):
            moment_growth_sweep(build_problem("ou"), [0.0], 2, 2.0, [4.0], 10, MasterSeed(0))

    def test_raised_cap_admits_the_step(self):
        rows = moment_growth_sweep(build_problem("ou"), [0.0], 2, 2.0, [4.0], 10, MasterSeed(0), dt_cap=4.0)
        self.assertEqual(len(rows), 1)


class WeakErrorTests(SimpleTestCase):
    def test_ou_weak_order_with_fine_step_reference(self):
        rows, slope = weak_error_sweep(build_problem("ou"), Observable.moment(2), [1.0], 4.0,
                                       [0.2, 0.1, 0.05, 0.025], 4000, MasterSeed(7))
        self.assertEqual(len(rows), 4)
        self.assertTrue(all(row.reference == rows[0].reference for row in rows))
        self.assertGreaterEqual(slope, 0.7)
        self.assertLessEqual(slope, 1.3)

    def test_euler_weak_order_on_ou(self):
        rows, slope = weak_error_sweep(build_problem("ou"), Observable.moment(2), [1.0], 4.0,
                                       [0.2, 0.1, 0.05, 0.025], 4000, MasterSeed(7), kind=StepKind.EULER)
        self.assertEqual(len(rows), 4)
        self.assertGreaterEqual(slope, 0.7)
        self.assertLessEqual(slope, 1.3)

    def test_errors_shrink_with_dt(self):
        rows = weak_error_rows(build_problem("ou"), Observable.moment(2), [1.0], 1.0, [0.2, 0.1], 2000,
                               MasterSeed(7))
        self.assertGreater(rows[0].abs_error, rows[1].abs_error)

    def test_closed_form_reference(self):
        reference = ou_finite_time_moment(1.0, 1.0, 1.0, 1.0)
        rows = weak_error_rows(build_problem("ou"), Observable.moment(2), [1.0], 1.0, [0.2, 0.1], 2000,
                               MasterSeed(7), reference=reference)
        for row in rows:
            self.assertEqual(row.reference, reference)
            self.assertAlmostEqual(row.abs_error, abs(row.estimate.mean - reference))

    def test_closed_form_needs_dyadic_steps(self):
        with self.assertRaises(ValueError):
            weak_error_rows(build_problem("ou"), Observable.moment(2), [1.0], 1.2, [0.3, 0.2], 10, MasterSeed(7),
                            reference=0.5)

    def test_two_step_sizes_cannot_fix_a_slope(self):
        with self.assertRaises(SlopeUndetermined):
            weak_error_sweep(build_problem("ou"), Observable.moment(2), [1.0], 1.0, [0.2, 0.1], 100, MasterSeed(7))

    def test_increasing_dt_list_rejected(self):
        with self.assertRaises(ValueError):
            weak_error_rows(build_problem("ou"), Observable.moment(2), [1.0], 1.0, [0.1, 0.2], 100, MasterSeed(7))


class ErgodicErrorTests(SimpleTestCase):
    def test_transient_decays_at_twice_gamma(self):
        ou = build_problem("ou")
        dt = 0.01
        horizons = [1.0, 2.0, 4.0, 8.0, 16.0]
        rows = ergodic_error_curve(ou, Observable.moment(2), [3.0], dt, [steps_for(T, dt) for T in horizons],
                                   10_000, MasterSeed(8), 0.5, lipschitz=1.0)
        np.testing.assert_allclose([row.parameter for row in rows], horizons)
        self.assertAlmostEqual(rows[0].transient_bound, math.exp(-1.0) * 4.0)
        self.assertLessEqual(ergodic_decay_rate(rows), -1.4)

    def test_plateau_shrinks_with_dt(self):
        ou = build_problem("ou")
        master = MasterSeed(9)
        plateaus = []
        for dt, refine in ((0.1, 1), (0.05, 0)):
            rows = ergodic_error_curve(ou, Observable.moment(2), [0.0], dt, [steps_for(10.0, dt)], 20_000, master,
                                       0.5, refine=refine)
            plateaus.append(plateau_level(rows))
        ratio = plateaus[1] / plateaus[0]
        self.assertGreaterEqual(ratio, 0.3)
        self.assertLessEqual(ratio, 0.8)

    def test_flat_curve_has_no_decay_rate(self):
        rows = [_row(T, 0.01) for T in (1.0, 2.0, 4.0)]
        with self.assertRaises(SlopeUndetermined):
            ergodic_decay_rate(rows)

    def test_decay_rate_of_exact_exponential(self):
        rows = [_row(T, math.exp(-2 * T)) for T in (1.0, 2.0, 3.0)] + [_row(12.0, 1e-6)]
        self.assertAlmostEqual(ergodic_decay_rate(rows), -2.0)

    def test_invariant_reference_feeds_the_curve(self):
        cubic = build_problem("cubic")
        reference = invariant_reference(cubic, Observable.moment(2)).value
        rows = ergodic_error_curve(cubic, Observable.moment(2), [0.0], 0.02, [500], 4000, MasterSeed(10), reference)
        self.assertLessEqual(rows[0].abs_error, 3 * rows[0].error_stderr + 5 * 0.02)
        self.assertIsNone(rows[0].transient_bound)


class ContractionTests(SimpleTestCase):
    def test_ou_contraction(self):
        ratio = contraction_test(build_problem("ou"), [0.0], [1.0], 1e-3, 10.0, MasterSeed(11))
        self.assertLessEqual(ratio, 1.05)
        self.assertGreaterEqual(ratio, 1.0)

    def test_cubic_contraction(self):
        ratio = contraction_test(build_problem("cubic"), [-2.0], [2.0], 1e-3, 10.0, MasterSeed(11))
        self.assertLessEqual(ratio, 1.05)

    def test_identical_initial_states(self):
        self.assertEqual(contraction_test(build_problem("ou"), [1.0], [1.0], 1e-3, 1.0, MasterSeed(0)), 0.0)

    def test_step_must_be_fine(self):
        with self.assertRaises(ValueError):
            contraction_test(build_problem("ou"), [0.0], [1.0], 1e-2, 1.0, MasterSeed(0))


class DivergenceTests(SimpleTestCase):
    def test_euler_explodes_while_tamed_stays_bounded(self):
        report = divergence_demo(build_problem("cubic"), np.array([100.0]), 0.5, 1000, MasterSeed(12),
                                 zero_noise=True)
        self.assertLessEqual(report.euler_exploded_at, 3)
        self.assertIsNone(report.tamed_exploded_at)
        self.assertLessEqual(report.tamed_sup_norm, 100.0)
        self.assertLessEqual(report.tamed_max_displacement, 1.0)


class EngineReuseTests(SimpleTestCase):
    def test_sweeps_accept_a_shared_engine(self):
        engine = MonteCarloEngine(workers=1, batch_size=256)
        rows = moment_growth_sweep(build_problem("ou"), [0.0], 2, 0.1, [1.0, 2.0], 500, MasterSeed(13), engine=engine)
        self.assertEqual(len(rows), 2)
        self.assertGreaterEqual(rows[1].estimate.mean, rows[0].estimate.mean)
