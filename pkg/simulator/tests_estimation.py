import math

import numpy as np
from django.test import SimpleTestCase

from cavity.exceptions import DegenerateData, NonFiniteObjective
from cavity.params import Calibration, HeatingModel, SystemParams
from cavity.services.core_model import saturation_for_power
from cavity.services.trap_physics import ideal_trapping_time, trapping_time_curve
from cavity.units import mhz
from simulator.services import estimation
from simulator.services.optimizer import minimize

COLLAPSE_THETA = (-0.675, -0.361, 2.775, 1.5)


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


class TestMinimize(SimpleTestCase):
    def test_quadratic_bowl(self):
        result = minimize(lambda x: (x[0] - 3) ** 2 + (x[1] + 1) ** 2, [0.0, 0.0])
        self.assertTrue(np.allclose(result.vector(), [3.0, -1.0], atol=1e-6))
        self.assertTrue(result.converged)
        self.assertGreater(result.n_evaluations, 0)

    def test_rosenbrock(self):
        result = minimize(rosenbrock, [-1.2, 1.0], names=("x", "y"))
        self.assertAlmostEqual(result.parameters["x"], 1.0, delta=1e-4)
        self.assertAlmostEqual(result.parameters["y"], 1.0, delta=1e-4)

    def test_bound_is_flagged(self):
        result = minimize(
            lambda x: (x[0] + 1) ** 2, [0.5], bounds=[(0.0, None)], names=("x",)
        )
        self.assertAlmostEqual(result.parameters["x"], 0.0, delta=1e-6)
        self.assertEqual(result.parameter_bounds_hit, ["x"])

    def test_non_finite_start_aborts(self):
        with self.assertRaises(NonFiniteObjective):
            minimize(lambda x: float("nan"), [1.0])

    def test_repeatable_and_thread_independent(self):
        a = minimize(rosenbrock, [-1.2, 1.0])
        b = minimize(rosenbrock, [-1.2, 1.0], threads=4)
        self.assertEqual(a.parameters, b.parameters)
        self.assertEqual(a.diagnostics["best_start"], b.diagnostics["best_start"])


class TestFitHeating(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.calibration = Calibration()
        self.delta_c = mhz(-1.0)
        self.n_eff_u0 = mhz(-1.0)
        self.powers = np.geomspace(0.08, 30.0, 20)

    def synthetic(self, d0, d1, temperature_uk=100.0):
        s = saturation_for_power(
            self.powers, self.delta_c, self.n_eff_u0, self.calibration, self.params
        )
        heating = HeatingModel.from_microkelvin(d0, d1, temperature_uk)
        return trapping_time_curve(s, heating, self.params)

    def fit(self, taus, temperature_uk=100.0):
        return estimation.fit_heating_coefficients(
            self.powers,
            taus,
            self.params,
            temperature_uk,
            self.delta_c,
            self.n_eff_u0,
            self.calibration,
        )

    def test_noiseless_round_trip(self):
        taus = self.synthetic(0.475, 0.759)
        self.assertTrue(np.all(np.isfinite(taus)))
        result = self.fit(taus)
        self.assertAlmostEqual(result.parameters["d0"] / 0.475, 1.0, delta=1e-4)
        self.assertAlmostEqual(result.parameters["d1"] / 0.759, 1.0, delta=1e-4)
        self.assertLess(result.residual_rms, 1e-6)

    def test_noisy_recovery(self):
        clean = self.synthetic(0.475, 0.759)
        errors = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            noisy = clean * (1 + 0.05 * rng.standard_normal(len(clean)))
            result = self.fit(noisy)
            errors.append(
                [
                    abs(result.parameters["d0"] / 0.475 - 1),
                    abs(result.parameters["d1"] / 0.759 - 1),
                ]
            )
        median = np.median(errors, axis=0)
        self.assertTrue(np.all(median < 0.1))

    def test_ideal_limit_gives_zero_coefficients(self):
        taus = np.full(len(self.powers), ideal_trapping_time(self.params))
        result = self.fit(taus, temperature_uk=0.0)
        self.assertLess(result.parameters["d0"], 1e-6)
        self.assertLess(result.parameters["d1"], 1e-6)

    def test_untrapped_points_are_skipped(self):
        taus = self.synthetic(0.475, 0.759)
        taus[:3] = np.nan
        result = self.fit(taus)
        self.assertEqual(result.diagnostics["n_untrapped"], 3)
        self.assertAlmostEqual(result.parameters["d1"] / 0.759, 1.0, delta=1e-4)

    def test_all_untrapped_is_degenerate(self):
        with self.assertRaises(DegenerateData):
            self.fit(np.full(len(self.powers), np.nan))

    def test_too_few_points_is_degenerate(self):
        taus = self.synthetic(0.475, 0.759)
        taus[3:] = np.nan
        with self.assertRaises(DegenerateData):
            self.fit(taus)


class TestFitCollapse(SimpleTestCase):
    def setUp(self):
        self.times = np.linspace(0.0, 40.0, 400)

    def synthetic(self, theta=COLLAPSE_THETA, amplitude=3.0, offset=0.2):
        return amplitude * estimation.collapse_shape(self.times, theta) + offset

    def test_noiseless_round_trip(self):
        result = estimation.fit_collapse_model((self.times, self.synthetic()))
        for name, expected in zip(estimation.COLLAPSE_NAMES, COLLAPSE_THETA):
            self.assertAlmostEqual(
                result.parameters[name] / expected, 1.0, delta=1e-3, msg=name
            )
        self.assertAlmostEqual(result.diagnostics["amplitude"] / 3.0, 1.0, delta=1e-3)

    def test_amplitude_scale_does_not_matter(self):
        base = estimation.fit_collapse_model((self.times, self.synthetic()))
        scaled = estimation.fit_collapse_model((self.times, 7.0 * self.synthetic()))
        for name in estimation.COLLAPSE_NAMES:
            self.assertAlmostEqual(
                scaled.parameters[name] / base.parameters[name], 1.0, delta=1e-3
            )

    def test_repeatable(self):
        data = (self.times, self.synthetic())
        a = estimation.fit_collapse_model(data)
        b = estimation.fit_collapse_model(data)
        self.assertEqual(a.parameters, b.parameters)

    def test_exponential_decay_has_no_collective_factor(self):
        rng = np.random.default_rng(4)
        theta = (-0.675, -0.361, 0.0, 5.0)
        clean = self.synthetic(theta)
        noisy = clean + 0.002 * np.ptp(clean) * rng.standard_normal(len(clean))
        result, spread = estimation.bootstrap_collapse_fit(
            (self.times, noisy), n_resamples=10, seed=1
        )
        self.assertLessEqual(result.parameters["a_param"], 3 * spread["a_param"] + 1e-6)

    def test_monte_carlo_check(self):
        result = estimation.fit_collapse_model(
            (self.times, self.synthetic()), monte_carlo_check=True, n0=10_000
        )
        self.assertLess(result.diagnostics["monte_carlo_sup_deviation"], 0.02)

    def test_flat_trace_is_degenerate(self):
        with self.assertRaises(DegenerateData):
            estimation.fit_collapse_model((self.times, np.ones(len(self.times))))


class TestNonExponentiality(SimpleTestCase):
    def setUp(self):
        self.times = np.linspace(0.0, 40.0, 400)

    def test_exponential_input(self):
        values = 0.3 + 2.0 * np.exp(-self.times / 6.0)
        report = estimation.nonexponentiality_test((self.times, values))
        self.assertAlmostEqual(report.improvement, 1.0)
        self.assertFalse(report.non_exponential)
        self.assertAlmostEqual(report.exponential_tau / 6.0, 1.0, delta=1e-6)

    def test_collapse_transmission_is_non_exponential(self):
        values = estimation.collapse_shape(self.times, COLLAPSE_THETA)
        report = estimation.nonexponentiality_test((self.times, values))
        self.assertTrue(report.non_exponential)
        self.assertGreater(report.improvement, 2.0)

    def test_collapse_atom_number_is_non_exponential(self):
        values = estimation.collapse_shape(
            self.times, COLLAPSE_THETA, observable=estimation.ATOM_NUMBER
        )
        report = estimation.nonexponentiality_test(
            (self.times, values), observable=estimation.ATOM_NUMBER
        )
        self.assertTrue(report.non_exponential)

    def test_white_noise_is_degenerate(self):
        rng = np.random.default_rng(0)
        with self.assertRaises(DegenerateData):
            estimation.nonexponentiality_test((self.times, rng.normal(size=400)))

    def test_noise_estimate(self):
        rng = np.random.default_rng(1)
        noise = estimation.noise_level(rng.normal(0, 0.3, 20_000))
        self.assertAlmostEqual(noise / 0.3, 1.0, delta=0.05)

    def test_report_serializes(self):
        values = estimation.collapse_shape(self.times, COLLAPSE_THETA)
        report = estimation.nonexponentiality_test((self.times, values))
        data = report.as_dict()
        self.assertIn("model_fit", data)
        self.assertTrue(math.isfinite(data["improvement"]))
