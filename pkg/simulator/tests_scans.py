import os
import unittest

import numpy as np
from django.test import SimpleTestCase

from cavity.exceptions import InvalidParameters
from cavity.params import Calibration, DriveConfig, HeatingModel, SystemParams
from cavity.services.core_model import (
    light_shift_u0,
    lorentzian_photon_number,
    saturation_for_power,
)
from cavity.services.trap_physics import optimal_saturation, trapping_time_curve
from cavity.units import mhz
from simulator.services import dynamics, scans
from simulator.services.traces import TransmissionTrace

SLOW = bool(os.environ.get("SELFTRAP_SLOW"))


class TestTrapCurve(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.calibration = Calibration()
        self.heating = HeatingModel.from_microkelvin(0.475, 0.759, 100.0)
        self.powers = np.geomspace(0.01, 30.0, 40)

    def curve(self, heating=None):
        return scans.trap_curve(
            self.powers,
            mhz(-1.0),
            mhz(-1.0),
            heating or self.heating,
            self.calibration,
            self.params,
        )

    def test_matches_the_empirical_law(self):
        curve = self.curve()
        s = saturation_for_power(
            self.powers, mhz(-1.0), mhz(-1.0), self.calibration, self.params
        )
        expected = trapping_time_curve(s, self.heating, self.params)
        self.assertTrue(np.allclose(curve.saturation, s, rtol=1e-12))
        self.assertTrue(np.array_equal(np.isnan(curve.tau_ms), np.isnan(expected)))
        finite = np.isfinite(expected)
        self.assertTrue(np.allclose(curve.tau_ms[finite], expected[finite], rtol=1e-12))

    def test_weakest_drive_does_not_trap(self):
        curve = self.curve()
        self.assertTrue(np.isnan(curve.tau_ms[0]))
        self.assertEqual(curve.columns()["trapped"][0], False)
        self.assertTrue(np.any(curve.columns()["trapped"]))

    def test_optimum_maps_back_to_its_power(self):
        curve = self.curve()
        s_best, tau_best = optimal_saturation(self.heating, self.params)
        self.assertEqual(curve.optimal_saturation, s_best)
        self.assertEqual(curve.optimal_tau_ms, tau_best)
        s_back = saturation_for_power(
            curve.optimal_power_uw, mhz(-1.0), mhz(-1.0), self.calibration, self.params
        )
        self.assertAlmostEqual(s_back / s_best, 1.0, places=9)
        self.assertTrue(np.all(curve.tau_ms[np.isfinite(curve.tau_ms)] <= tau_best * (1 + 1e-9)))

    def test_hot_cloud_is_never_trapped(self):
        curve = self.curve(HeatingModel.from_microkelvin(0.475, 0.759, 1e9))
        self.assertTrue(np.all(np.isnan(curve.tau_ms)))
        self.assertIsNone(curve.optimal_power_uw)


class TestScanAtomNumber(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.drive = DriveConfig.from_ratio(mhz(-3.0), 620.0, self.params)
        self.config = dynamics.ProtocolConfig(
            drive_on_time=0.1,
            shutter_ramp=0.05,
            record_until=0.4,
            n_macroparticles=100,
            cloud_sigma=300.0,
            seed=5,
        )

    def test_needs_two_points(self):
        with self.assertRaises(InvalidParameters):
            scans.scan_atom_number(self.config, self.drive, self.params, [1e6], 1)

    def test_one_time_per_atom_number(self):
        scan = scans.scan_atom_number(
            self.config, self.drive, self.params, [1e5, 1e6], 1
        )
        self.assertEqual(list(scan.n_atoms), [1e5, 1e6])
        self.assertEqual(len(scan.tau_ms), 2)
        finite = scan.tau_ms[np.isfinite(scan.tau_ms)]
        self.assertTrue(np.all(finite >= 0))
        self.assertEqual(set(scan.columns()), {"n_atoms", "tau_ms", "n_eff_calibrated"})
        self.assertEqual(len(scan.n_eff_calibrated), 2)

    def test_repeatable(self):
        a = scans.scan_atom_number(self.config, self.drive, self.params, [1e5, 1e6], 1)
        b = scans.scan_atom_number(
            self.config, self.drive, self.params, [1e5, 1e6], 1, threads=2
        )
        self.assertTrue(np.array_equal(a.tau_ms, b.tau_ms, equal_nan=True))
        self.assertTrue(
            np.array_equal(a.n_eff_calibrated, b.n_eff_calibrated, equal_nan=True)
        )


class TestCalibratedNEff(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.delta_c = mhz(-3.0)
        self.times = np.linspace(0.0, 10.0, 101)

    def trace(self, filled_pulling, tail_pulling=0.0):
        kappa = self.params.kappa
        filled = lorentzian_photon_number(1.0, self.delta_c, filled_pulling, kappa)
        tail = lorentzian_photon_number(1.0, self.delta_c, tail_pulling, kappa)
        photon_number = np.where(self.times < 5.0, filled, tail)
        photon_number[self.times < 1.0] = 0.0
        zeros = np.zeros(len(self.times))
        return TransmissionTrace(
            self.times, photon_number, zeros, zeros, 1.0, kappa, signal_start=1.0
        )

    def test_reads_the_drive_on_atom_number(self):
        pulling = mhz(-1.0)
        n_eff = scans.calibrated_n_eff(self.trace(pulling), self.delta_c, self.params)
        expected = pulling / light_shift_u0(self.params)
        self.assertAlmostEqual(n_eff / expected, 1.0, delta=1e-9)

    def test_cloud_still_present_reads_zero(self):
        pulling = mhz(-1.0)
        n_eff = scans.calibrated_n_eff(
            self.trace(pulling, tail_pulling=pulling), self.delta_c, self.params
        )
        self.assertLess(abs(n_eff), 1e-9 * abs(pulling / light_shift_u0(self.params)))

    def test_no_root_is_nan(self):
        # drive-on level below the empty cavity
        trace = self.trace(mhz(1.0))
        self.assertTrue(np.isnan(scans.calibrated_n_eff(trace, self.delta_c, self.params)))


@unittest.skipUnless(SLOW, "set SELFTRAP_SLOW=1 to run the protocol benchmarks")
class TestAtomNumberBenchmark(SimpleTestCase):
    def test_trapping_time_grows_with_atom_number(self):
        params = SystemParams.published()
        drive = DriveConfig.from_ratio(mhz(-2.0), 290.0, params)
        config = dynamics.ProtocolConfig(seed=2)
        scan = scans.scan_atom_number(
            config, drive, params, np.geomspace(2e6, 2e7, 5), 10, threads=4
        )
        self.assertTrue(np.all(np.isfinite(scan.tau_ms)))
        self.assertGreater(scan.spearman_rho, 0.9)
        self.assertGreaterEqual(scan.tau_ms[-1], 3 * scan.tau_ms[0])
