import math

import numpy as np
from django.test import SimpleTestCase

from cavity.exceptions import UNTRAPPED, InvalidParameters
from cavity.params import Calibration, HeatingModel, SystemParams
from cavity.services.core_model import saturation_for_power
from cavity.services import trap_physics
from cavity.units import angular_to_temperature, mhz, to_mhz

FITTED_COEFFICIENTS = [(0.475, 0.759), (0.627, 1.12), (0.884, 1.32)]

# (delta_C MHz, d0, d1) -> (s_opt, tau_max ms) and {power uW: tau ms} at
# T = 100 uK, N_eff U0 = -1 MHz and the default power calibration
TRAP_CURVE_REGRESSION = {
    (-1.0, 0.475, 0.759): (
        (0.796685971533, 14.3457609762),
        {0.1: 0.130201123233, 1.0: 2.73490565407, 3.0: 6.71256586595, 30.0: 14.2494714484},
    ),
    (-2.0, 0.627, 1.12): (
        (0.753376338097, 11.1392606281),
        {0.1: 0.0699239901846, 1.0: 1.86101319202, 3.0: 4.75182766155, 30.0: 11.1039504873},
    ),
    (-3.0, 0.884, 1.32): (
        (0.823210318404, 9.18639102316),
        {0.1: 0.00911413258264, 1.0: 0.999244775433, 3.0: 2.78869561514, 30.0: 9.06467203355},
    ),
}


class TestTrapDepthAndHeating(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_depth_vanishes_without_light(self):
        self.assertEqual(trap_physics.trap_depth(0.0, self.params), 0.0)

    def test_depth_at_optimum_saturation(self):
        depth = trap_physics.trap_depth(0.02, self.params)
        self.assertAlmostEqual(to_mhz(depth), 21.32, places=2)
        # about k_B * 1.02 mK
        self.assertAlmostEqual(
            angular_to_temperature(depth) / 1000.0, 1.02, delta=0.01
        )

    def test_saturating_depth_is_bounded(self):
        depth = trap_physics.trap_depth(1e12, self.params, saturating=True)
        self.assertAlmostEqual(depth / abs(self.params.delta_a), 1.0, places=9)

    def test_negative_saturation_rejected(self):
        with self.assertRaises(InvalidParameters):
            trap_physics.trap_depth(-0.1, self.params)

    def test_heating_vanishes_without_light(self):
        self.assertEqual(trap_physics.recoil_heating_rate(0.0, self.params), 0)

    def test_axis_shares_average_to_prefactor(self):
        shares = trap_physics.RECOIL_AXIS_SHARES
        self.assertAlmostEqual(sum(shares) / 2, 0.3, places=15)
        split = trap_physics.recoil_heating_split(0.02, self.params)
        total = trap_physics.recoil_heating_rate(0.02, self.params)
        self.assertAlmostEqual(sum(split) / 2, total, places=15)

    def test_heating_at_optimum_saturation(self):
        unit = self.params.omega_rec * self.params.gamma
        rate = trap_physics.recoil_heating_rate(0.02, self.params)
        self.assertAlmostEqual(rate / unit, 6e-3, places=15)


class TestIdealTrappingTime(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_about_fifty_milliseconds(self):
        tau = trap_physics.ideal_trapping_time(self.params)
        self.assertAlmostEqual(tau, 49.5, delta=0.2)
        self.assertLess(abs(tau - 50.0) / 50.0, 0.1)

    def test_linear_in_detuning(self):
        doubled = self.params.with_changes(delta_a=2 * self.params.delta_a)
        self.assertAlmostEqual(
            trap_physics.ideal_trapping_time(doubled)
            / trap_physics.ideal_trapping_time(self.params),
            2.0,
            places=12,
        )

    def test_depth_over_heating_identity(self):
        tau = trap_physics.ideal_trapping_time(self.params)
        for s in (1e-4, 0.02, 1.0, 50.0):
            ratio = trap_physics.trap_depth(
                s, self.params
            ) / trap_physics.recoil_heating_rate(s, self.params)
            self.assertLess(abs(ratio / 1000.0 - tau) / tau, 1e-12)


class TestEmpiricalTrappingTime(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.heating = HeatingModel.from_microkelvin(0.475, 0.759, 100.0)

    def test_reduces_to_ideal_limit(self):
        ideal = trap_physics.ideal_trapping_time(self.params)
        for s in (1e-3, 0.02, 3.0, 1e4):
            tau = trap_physics.empirical_trapping_time(
                s, HeatingModel(), self.params
            )
            self.assertAlmostEqual(tau / ideal, 1.0, places=12)

    def test_threshold_saturation(self):
        threshold = trap_physics.saturation_threshold(self.heating, self.params)
        self.assertAlmostEqual(threshold / 1.958e-3, 1.0, delta=2e-3)
        below = trap_physics.empirical_trapping_time(
            threshold * 0.999, self.heating, self.params
        )
        above = trap_physics.empirical_trapping_time(
            threshold * 1.001, self.heating, self.params
        )
        self.assertIs(below, UNTRAPPED)
        self.assertGreater(above, 0)
        just_above = trap_physics.empirical_trapping_time(
            threshold * 1.01, self.heating, self.params
        )
        self.assertGreater(just_above, above)

    def test_operating_point(self):
        tau = trap_physics.empirical_trapping_time(0.02, self.heating, self.params)
        self.assertAlmostEqual(tau, 1.71, delta=0.03)

    def test_zero_light_is_untrapped(self):
        self.assertIs(
            trap_physics.empirical_trapping_time(0.0, self.heating, self.params),
            UNTRAPPED,
        )

    def test_unimodal_for_positive_d1(self):
        for d0, d1 in FITTED_COEFFICIENTS:
            heating = HeatingModel.from_microkelvin(d0, d1, 100.0)
            threshold = trap_physics.saturation_threshold(heating, self.params)
            s = np.geomspace(threshold * (1 + 1e-6), 1e4, 10_000)
            tau = trap_physics.trapping_time_curve(s, heating, self.params)
            self.assertTrue(np.all(np.isfinite(tau)))
            signs = np.sign(np.diff(tau))
            signs = signs[signs != 0]
            self.assertEqual(int(np.sum(signs[1:] != signs[:-1])), 1)

    def test_high_saturation_limits(self):
        tau = trap_physics.empirical_trapping_time(1e9, self.heating, self.params)
        self.assertLess(tau, 1e-6)
        no_d1 = HeatingModel.from_microkelvin(0.475, 0.0, 100.0)
        tau_inf = trap_physics.empirical_trapping_time(1e9, no_d1, self.params)
        unit = 0.3 * self.params.gamma * self.params.omega_rec
        expected = (
            (abs(self.params.delta_a) - no_d1.temperature)
            / (unit * 1.475)
            / 1000.0
        )
        self.assertAlmostEqual(tau_inf / expected, 1.0, places=6)

    def test_curve_marks_untrapped_points(self):
        s = np.array([0.0, 1e-4, 0.02, 1.0])
        tau = trap_physics.trapping_time_curve(s, self.heating, self.params)
        self.assertTrue(np.isnan(tau[0]) and np.isnan(tau[1]))
        self.assertAlmostEqual(
            tau[2],
            trap_physics.empirical_trapping_time(0.02, self.heating, self.params),
            places=12,
        )


class TestOptimalSaturation(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_ideal_limit_returns_constant(self):
        s_opt, tau_max = trap_physics.optimal_saturation(
            HeatingModel(), self.params
        )
        self.assertAlmostEqual(
            tau_max / trap_physics.ideal_trapping_time(self.params),
            1.0,
            places=9,
        )
        self.assertGreater(s_opt, 0)

    def test_matches_dense_grid_search(self):
        for d0, d1 in FITTED_COEFFICIENTS:
            heating = HeatingModel.from_microkelvin(d0, d1, 100.0)
            s_opt, tau_max = trap_physics.optimal_saturation(
                heating, self.params
            )
            threshold = trap_physics.saturation_threshold(heating, self.params)
            s = np.geomspace(threshold * (1 + 1e-9), 1e3, 200_001)
            tau = trap_physics.trapping_time_curve(s, heating, self.params)
            grid_max = float(np.nanmax(tau))
            grid_s = float(s[int(np.nanargmax(tau))])
            self.assertGreaterEqual(tau_max, grid_max * (1 - 1e-9))
            self.assertLess(abs(tau_max - grid_max) / grid_max, 1e-6)
            self.assertLess(abs(math.log(s_opt / grid_s)), 1e-2)

    def test_caption_coefficients_peak_well_above_two_percent(self):
        heating = HeatingModel.from_microkelvin(0.475, 0.759, 100.0)
        s_opt, tau_max = trap_physics.optimal_saturation(heating, self.params)
        self.assertGreater(s_opt, 0.5)
        self.assertLess(s_opt, 1.2)
        self.assertGreater(tau_max, 13.0)
        self.assertLess(tau_max, 15.5)

    def test_heating_dominated_limit(self):
        heating = HeatingModel.from_microkelvin(0.475, 1e6, 100.0)
        s_opt, _ = trap_physics.optimal_saturation(heating, self.params)
        # maximizes A/(1+s) - B/s: s/(1+s) = sqrt(B/A)
        ratio = math.sqrt(heating.temperature / abs(self.params.delta_a))
        self.assertAlmostEqual(s_opt / (ratio / (1 - ratio)), 1.0, delta=0.01)
        threshold = trap_physics.saturation_threshold(heating, self.params)
        self.assertGreater(s_opt, threshold)

    def test_optimum_moves_down_with_heating_slope(self):
        previous = math.inf
        for d1 in (0.5, 5.0, 50.0, 500.0):
            heating = HeatingModel.from_microkelvin(0.475, d1, 100.0)
            s_opt, _ = trap_physics.optimal_saturation(heating, self.params)
            self.assertLess(s_opt, previous)
            previous = s_opt

    def test_hot_cloud_is_never_trapped(self):
        heating = HeatingModel(d0=0.1, d1=0.1, temperature=mhz(2000.0))
        self.assertIs(
            trap_physics.optimal_saturation(heating, self.params), UNTRAPPED
        )


class TestTrapCurveRegression(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_optima(self):
        for (delta_c, d0, d1), (expected, _) in TRAP_CURVE_REGRESSION.items():
            heating = HeatingModel.from_microkelvin(d0, d1, 100.0)
            s_opt, tau_max = trap_physics.optimal_saturation(heating, self.params)
            self.assertAlmostEqual(s_opt / expected[0], 1.0, delta=1e-6, msg=delta_c)
            self.assertAlmostEqual(tau_max / expected[1], 1.0, delta=1e-6, msg=delta_c)

    def test_curve_points(self):
        for (delta_c, d0, d1), (_, points) in TRAP_CURVE_REGRESSION.items():
            heating = HeatingModel.from_microkelvin(d0, d1, 100.0)
            powers = np.array(sorted(points))
            s = saturation_for_power(
                powers, mhz(delta_c), mhz(-1.0), Calibration(), self.params
            )
            tau = trap_physics.trapping_time_curve(s, heating, self.params)
            for power, value in zip(powers, tau):
                self.assertAlmostEqual(
                    value / points[power], 1.0, delta=1e-6, msg=(delta_c, power)
                )
