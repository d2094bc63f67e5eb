import math

import numpy as np
from django.test import SimpleTestCase

from cavity.exceptions import InvalidParameters
from cavity.params import Calibration, DriveConfig, EnsembleState, SystemParams
from cavity.services import core_model
from cavity.units import mhz, to_mhz


class TestModeFunction(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_antinode_is_normalized(self):
        self.assertEqual(core_model.mode_function((0, 0, 0), self.params), 1.0)

    def test_quarter_wavelength_is_a_node(self):
        r = (self.params.wavelength / 4, 0, 0)
        self.assertAlmostEqual(
            core_model.mode_function(r, self.params), 0.0, places=12
        )

    def test_waist_gives_one_over_e(self):
        r = (0, self.params.waist, 0)
        self.assertAlmostEqual(
            core_model.mode_function(r, self.params), math.exp(-1), places=12
        )

    def test_bounded_by_one(self):
        rng = np.random.default_rng(3)
        r = rng.normal(scale=300.0, size=(5000, 3))
        f = core_model.mode_function(r, self.params)
        self.assertTrue(np.all(np.abs(f) <= 1.0))


class TestEffectiveAtomNumber(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.half_lambda = self.params.wavelength / 2

    def test_all_at_antinodes(self):
        x = self.half_lambda * np.arange(10)
        positions = np.column_stack([x, np.zeros(10), np.zeros(10)])
        state = EnsembleState(positions, np.zeros((10, 3)), np.full(10, 7.0))
        self.assertAlmostEqual(
            core_model.effective_atom_number(state, self.params), 70.0,
            places=9,
        )

    def test_single_atom_at_node(self):
        state = EnsembleState.single((self.params.wavelength / 4, 0, 0))
        self.assertAlmostEqual(
            core_model.effective_atom_number(state, self.params), 0.0,
            places=12,
        )

    def test_uniform_along_axis_averages_to_half(self):
        n = 100_000
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 500 * self.params.wavelength, size=n)
        positions = np.column_stack([x, np.zeros(n), np.zeros(n)])
        state = EnsembleState(positions, np.zeros((n, 3)), np.ones(n))
        n_eff = core_model.effective_atom_number(state, self.params)
        # cos^2 has variance 1/8 about its mean 1/2
        sigma = math.sqrt(n / 8.0)
        self.assertLess(abs(n_eff - n / 2), 3 * sigma)

    def test_never_exceeds_atom_number(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = 500
            state = EnsembleState(
                rng.normal(scale=200.0, size=(n, 3)),
                np.zeros((n, 3)),
                rng.uniform(0.5, 50.0, size=n),
            )
            n_eff = core_model.effective_atom_number(state, self.params)
            self.assertLessEqual(n_eff, state.atom_number)
            self.assertGreaterEqual(n_eff, 0.0)


class TestLightShift(SimpleTestCase):
    def test_published_value(self):
        params = SystemParams.published()
        u0 = core_model.light_shift_u0(params)
        # -2 pi * 71.5 Hz
        self.assertAlmostEqual(to_mhz(u0) * 1e6, -71.5, delta=0.3)
        n_eff = core_model.n_eff_for_pulling(mhz(-1.0), params)
        self.assertAlmostEqual(n_eff / 1.4e4, 1.0, delta=0.02)

    def test_far_detuned_limit(self):
        params = SystemParams.published(u0_factor=1.0, gamma=1e-9)
        u0 = core_model.light_shift_u0(params)
        self.assertAlmostEqual(
            u0 / (params.g**2 / params.delta_a), 1.0, places=12
        )

    def test_odd_in_atomic_detuning(self):
        red = SystemParams.published()
        blue = SystemParams.published(delta_a=-red.delta_a)
        self.assertLess(core_model.light_shift_u0(red), 0)
        self.assertEqual(
            core_model.light_shift_u0(blue), -core_model.light_shift_u0(red)
        )

    def test_rejects_resonant_drive(self):
        with self.assertLogs("cavity.params", level="WARNING"):
            params = SystemParams.published(delta_a=0.0)
        with self.assertRaises(InvalidParameters):
            core_model.light_shift_u0(params)


class TestSteadyState(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.kappa = self.params.kappa
        self.drive = DriveConfig.from_ratio(mhz(-3.0), 620, self.params)

    def test_on_resonance_unit_drive(self):
        drive = DriveConfig(delta_c=mhz(-1.0), eta=self.kappa)
        n = core_model.steady_state_photon_number(drive, mhz(-1.0), self.params)
        self.assertAlmostEqual(n, 1.0, places=12)

    def test_transmission_operating_point(self):
        n = core_model.steady_state_photon_number(
            self.drive, mhz(-1.0), self.params
        )
        self.assertAlmostEqual(n / 2.527e5, 1.0, delta=1e-3)

    def test_no_drive(self):
        drive = DriveConfig(delta_c=mhz(-3.0), eta=0.0)
        self.assertEqual(
            core_model.steady_state_photon_number(drive, mhz(-1), self.params),
            0.0,
        )

    def test_lorentzian_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            pull = mhz(rng.uniform(-5, 5))
            offset = mhz(rng.uniform(-10, 10))
            above = DriveConfig(delta_c=pull + offset, eta=100.0)
            below = DriveConfig(delta_c=pull - offset, eta=100.0)
            self.assertAlmostEqual(
                core_model.steady_state_photon_number(above, pull, self.params),
                core_model.steady_state_photon_number(below, pull, self.params),
                places=9,
            )

    def test_peak_at_pulled_resonance(self):
        pull = mhz(-1.0)
        detunings = np.linspace(pull - 5 * self.kappa, pull + 5 * self.kappa,
                                1_000_001)
        n = core_model.lorentzian_photon_number(
            100.0, detunings, pull, self.kappa
        )
        spacing = detunings[1] - detunings[0]
        peak = detunings[int(np.argmax(n))]
        self.assertLessEqual(abs(peak - pull), spacing)

    def test_half_width_is_kappa(self):
        pull = mhz(-1.0)
        peak = core_model.lorentzian_photon_number(1.0, pull, pull, self.kappa)
        for sign in (1, -1):
            n = core_model.lorentzian_photon_number(
                1.0, pull + sign * self.kappa, pull, self.kappa
            )
            self.assertAlmostEqual(n / peak, 0.5, delta=1e-9)

    def test_field_observables(self):
        obs = core_model.field_observables(
            self.drive, mhz(-1.0), self.params
        )
        self.assertAlmostEqual(obs.pulled_detuning, mhz(-2.0), places=12)
        self.assertAlmostEqual(obs.saturation_max, 0.024, delta=5e-4)

    def test_power_drive_requires_calibration(self):
        drive = DriveConfig(delta_c=mhz(-2.0), power_uw=0.7)
        with self.assertRaises(InvalidParameters):
            core_model.steady_state_photon_number(drive, 0.0, self.params)
        resolved = core_model.resolve_drive(drive, self.params)
        self.assertGreater(
            core_model.steady_state_photon_number(resolved, 0.0, self.params),
            0,
        )


class TestIntensityChange(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_empty_cavity(self):
        drive = DriveConfig(delta_c=mhz(-3.0), eta=1000.0)
        self.assertEqual(core_model.intensity_change(drive, 0.0, self.params), 0)

    def test_zero_at_twice_the_detuning(self):
        drive = DriveConfig(delta_c=mhz(-3.0), eta=1000.0)
        self.assertEqual(
            core_model.intensity_change(drive, 2 * drive.delta_c, self.params),
            0.0,
        )

    def test_operating_point(self):
        drive = DriveConfig.from_ratio(mhz(-3.0), 620, self.params)
        delta = core_model.intensity_change(drive, mhz(-1.0), self.params)
        self.assertAlmostEqual(delta / 7.577e4, 1.0, delta=1e-3)

    def test_equals_difference_of_steady_states(self):
        rng = np.random.default_rng(1234)
        for _ in range(1000):
            params = SystemParams.published(kappa=mhz(rng.uniform(0.5, 10)))
            drive = DriveConfig(
                delta_c=mhz(rng.uniform(-10, 10)), eta=rng.uniform(0, 1e4)
            )
            pull = mhz(rng.uniform(-10, 10))
            filled = core_model.steady_state_photon_number(drive, pull, params)
            empty = core_model.empty_cavity_photon_number(drive, params)
            change = core_model.intensity_change(drive, pull, params)
            scale = max(filled, empty, 1e-300)
            self.assertLess(abs(change - (filled - empty)) / scale, 1e-10)


class TestPullingFromTransmission(SimpleTestCase):
    def setUp(self):
        self.kappa = mhz(2.77)

    def ratio(self, delta_c, pulling):
        filled = core_model.lorentzian_photon_number(1.0, delta_c, pulling, self.kappa)
        empty = core_model.lorentzian_photon_number(1.0, delta_c, 0.0, self.kappa)
        return filled / empty

    def test_recovers_the_pulling(self):
        for delta_c_mhz, pulling_mhz in [(-3.0, -1.0), (-2.0, -0.3), (-1.87, -1.0), (2.0, 1.5)]:
            delta_c, pulling = mhz(delta_c_mhz), mhz(pulling_mhz)
            recovered = core_model.pulling_from_transmission(
                self.ratio(delta_c, pulling), delta_c, self.kappa
            )
            self.assertAlmostEqual(recovered / pulling, 1.0, delta=1e-9)

    def test_end_points(self):
        delta_c = mhz(-3.0)
        self.assertAlmostEqual(
            core_model.pulling_from_transmission(1.0, delta_c, self.kappa), 0.0, places=9
        )
        peak = (delta_c**2 + self.kappa**2) / self.kappa**2
        self.assertAlmostEqual(
            core_model.pulling_from_transmission(peak, delta_c, self.kappa) / delta_c,
            1.0,
            delta=1e-6,
        )

    def test_vectorized(self):
        delta_c = mhz(-3.0)
        pulling = mhz(np.array([-0.5, -1.0, -2.0]))
        recovered = core_model.pulling_from_transmission(
            self.ratio(delta_c, pulling), delta_c, self.kappa
        )
        self.assertTrue(np.allclose(recovered, pulling, rtol=1e-9))

    def test_ratio_out_of_range(self):
        delta_c = mhz(-3.0)
        for ratio in (0.9, 100.0, float("nan")):
            with self.assertRaises(InvalidParameters, msg=ratio):
                core_model.pulling_from_transmission(ratio, delta_c, self.kappa)
        with self.assertRaises(InvalidParameters):
            core_model.pulling_from_transmission(2.0, 0.0, self.kappa)


class TestSaturationAndCalibration(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.calibration = Calibration()

    def test_zero_photons(self):
        self.assertEqual(
            core_model.saturation_from_photon_number(0, self.params), 0.0
        )

    def test_operating_point_saturation(self):
        s = core_model.saturation_from_photon_number(2.527e5, self.params)
        self.assertAlmostEqual(s, 0.024, delta=5e-4)

    def test_negative_photon_number_rejected(self):
        with self.assertRaises(InvalidParameters):
            core_model.saturation_from_photon_number(-1.0, self.params)

    def test_anchor_power_reproduces_anchor_saturation(self):
        eta = core_model.calibrate_power_to_drive(
            0.7, self.calibration, self.params
        )
        n = core_model.lorentzian_photon_number(
            eta,
            self.calibration.anchor_delta_c,
            self.calibration.anchor_n_eff_u0,
            self.params.kappa,
        )
        s = core_model.saturation_from_photon_number(n, self.params)
        self.assertAlmostEqual(s, 0.02, places=12)

    def test_zero_power(self):
        self.assertEqual(
            core_model.calibrate_power_to_drive(
                0.0, self.calibration, self.params
            ),
            0.0,
        )

    def test_amplitude_scales_as_root_power(self):
        eta1 = core_model.calibrate_power_to_drive(
            0.7, self.calibration, self.params
        )
        eta4 = core_model.calibrate_power_to_drive(
            2.8, self.calibration, self.params
        )
        self.assertAlmostEqual(eta4 / eta1, 2.0, places=12)

    def test_inverse_map(self):
        eta = core_model.calibrate_power_to_drive(
            0.46, self.calibration, self.params
        )
        self.assertAlmostEqual(
            core_model.power_for_eta(eta, self.calibration, self.params),
            0.46,
            places=12,
        )

    def test_negative_power_rejected(self):
        with self.assertRaises(InvalidParameters):
            core_model.calibrate_power_to_drive(
                -0.1, self.calibration, self.params
            )
        with self.assertRaises(InvalidParameters):
            Calibration(anchor_power_uw=0.0)


class TestParameterValidation(SimpleTestCase):
    def test_drive_needs_exactly_one_intensity(self):
        with self.assertRaises(InvalidParameters):
            DriveConfig(delta_c=0.0)
        with self.assertRaises(InvalidParameters):
            DriveConfig(delta_c=0.0, eta=1.0, power_uw=1.0)
        with self.assertRaises(InvalidParameters):
            DriveConfig(delta_c=0.0, eta=-1.0)

    def test_system_params_invariants(self):
        with self.assertRaises(InvalidParameters):
            SystemParams.published(kappa=0.0)
        with self.assertRaises(InvalidParameters):
            SystemParams.published(u0_factor=1.5)
        with self.assertRaises(InvalidParameters):
            SystemParams.published(waist=-1.0)

    def test_weakly_dispersive_warning(self):
        with self.assertLogs("cavity.params", level="WARNING"):
            SystemParams.published(delta_a=mhz(-100.0))

    def test_hbar_over_m_for_rubidium(self):
        # hbar / m(87Rb) = 0.7308 um^2/ms
        params = SystemParams.published()
        self.assertAlmostEqual(params.hbar_over_m, 0.7308, delta=2e-3)

    def test_weights_must_be_positive(self):
        with self.assertRaises(InvalidParameters):
            EnsembleState(np.zeros((2, 3)), np.zeros((2, 3)), [1.0, 0.0])
