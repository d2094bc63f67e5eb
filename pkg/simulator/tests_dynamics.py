import math
import os
import unittest

import numpy as np
from django.test import SimpleTestCase

from cavity.exceptions import NO_DECAY, InvalidParameters, NumericalInstability
from cavity.params import DriveConfig, EnsembleState, SystemParams
from cavity.services.core_model import (
    effective_atom_number,
    empty_cavity_photon_number,
    light_shift_u0,
)
from cavity.units import PER_US_TO_PER_MS, mhz
from simulator.services import dynamics
from simulator.services.traces import (
    TransmissionTrace,
    average_traces,
    extract_trapping_time,
    pointwise_standard_error,
)

SLOW = bool(os.environ.get("SELFTRAP_SLOW"))


def short_protocol(**overrides):
    values = dict(
        release_time=0.0,
        drive_on_time=0.1,
        shutter_ramp=0.05,
        record_until=0.4,
        n_macroparticles=100,
        n_atoms=1e6,
        cloud_sigma=300.0,
        seed=11,
    )
    values.update(overrides)
    return dynamics.ProtocolConfig(**values)


class TestProtocolConfig(SimpleTestCase):
    def test_needs_enough_macroparticles(self):
        with self.assertRaises(InvalidParameters):
            dynamics.ProtocolConfig(n_macroparticles=99)

    def test_rejects_unordered_times(self):
        with self.assertRaises(InvalidParameters):
            dynamics.ProtocolConfig(drive_on_time=40.0, record_until=30.0)

    def test_drive_ramp(self):
        config = dynamics.ProtocolConfig(drive_on_time=3.0, shutter_ramp=0.2)
        self.assertEqual(config.drive_fraction(2.99), 0.0)
        self.assertEqual(config.drive_fraction(3.0), 0.0)
        self.assertAlmostEqual(config.drive_fraction(3.05), 0.25, places=12)
        self.assertAlmostEqual(config.drive_fraction(3.1), 0.5, places=12)
        self.assertEqual(config.drive_fraction(3.2), 1.0)
        self.assertAlmostEqual(config.signal_start, 3.2)

    def test_step_drive_without_ramp(self):
        config = dynamics.ProtocolConfig(shutter_ramp=0.0)
        self.assertEqual(config.drive_fraction(config.drive_on_time), 1.0)

    def test_sample_grid(self):
        times = dynamics.ProtocolConfig().sample_times()
        self.assertEqual(len(times), 6001)
        self.assertAlmostEqual(times[-1], 30.0, places=9)
        self.assertTrue(np.allclose(np.diff(times), 0.005))


class TestForces(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.photons = 2.5e5

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        n = 1000
        positions = np.column_stack(
            [
                rng.uniform(0, self.params.wavelength, n),
                rng.normal(0, 60.0, n),
                rng.normal(0, 60.0, n),
            ]
        )
        acc = dynamics.dipole_force(positions, self.photons, self.params)
        steps = (5e-5, 1e-3, 1e-3)
        numeric = np.empty_like(acc)
        for axis, h in enumerate(steps):
            shift = np.zeros(3)
            shift[axis] = h
            upper = dynamics.dipole_potential(
                positions + shift, self.photons, self.params
            )
            lower = dynamics.dipole_potential(
                positions - shift, self.photons, self.params
            )
            numeric[:, axis] = -(upper - lower) / (2 * h)
        scale = (
            self.params.hbar_over_m
            * abs(light_shift_u0(self.params))
            * PER_US_TO_PER_MS
            * self.photons
            * self.params.wavenumber
        )
        error = np.linalg.norm(acc - numeric, axis=1)
        magnitude = np.linalg.norm(acc, axis=1)
        self.assertTrue(np.all(error <= 1e-6 * (magnitude + 1e-3 * scale)))

    def test_antinode_is_force_free(self):
        acc = dynamics.dipole_force(
            np.zeros((1, 3)), self.photons, self.params, gravity=False
        )
        self.assertTrue(np.all(acc == 0.0))

    def test_red_detuned_light_attracts(self):
        off_axis = np.array([[0.05, 20.0, -20.0]])
        acc = dynamics.dipole_force(
            off_axis, self.photons, self.params, gravity=False
        )[0]
        self.assertLess(acc[0], 0)
        self.assertLess(acc[1], 0)
        self.assertGreater(acc[2], 0)

    def test_gravity_only_without_light(self):
        acc = dynamics.dipole_force(np.ones((3, 3)), 0.0, self.params)
        self.assertTrue(np.allclose(acc, [[0, 0, -self.params.gravity]] * 3))


class TestIntegrator(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.config = dynamics.ProtocolConfig(heating=False, gravity=False)
        self.drive = DriveConfig.from_ratio(mhz(-3.0), 620.0, self.params)

    def test_atom_at_rest_on_antinode_stays(self):
        state = EnsembleState.single((0.0, 0.0, 0.0))
        rng = np.random.default_rng(0)
        for _ in range(100):
            state = dynamics.step(state, self.drive, self.config, self.params, rng)
        self.assertTrue(np.all(state.positions == 0.0))
        self.assertTrue(np.all(state.velocities == 0.0))

    def test_free_fall_is_ballistic(self):
        config = dynamics.ProtocolConfig(heating=True, gravity=True)
        dark = self.drive.with_eta(0.0)
        start = EnsembleState.single((1.0, 10.0, 5.0), velocity=(3.0, -2.0, 5.0))
        state = start
        rng = np.random.default_rng(0)
        for _ in range(1000):
            state = dynamics.step(state, dark, config, self.params, rng, dt=0.05)
        elapsed = 1000 * 0.05e-3
        expected = (
            start.positions
            + start.velocities * elapsed
            - np.array([0, 0, 0.5 * self.params.gravity * elapsed**2])
        )
        self.assertTrue(np.allclose(state.positions, expected, rtol=1e-9, atol=1e-9))
        self.assertAlmostEqual(state.time, elapsed, places=9)

    def test_energy_is_conserved_in_frozen_field(self):
        rng = np.random.default_rng(21)
        n = 200
        photons = 1e5
        state = EnsembleState(
            positions=np.column_stack(
                [
                    rng.uniform(-0.05, 0.05, n),
                    rng.normal(0, 20.0, n),
                    rng.normal(0, 20.0, n),
                ]
            ),
            velocities=rng.normal(0, 50.0, (n, 3)),
            weights=np.ones(n),
        )
        depth = abs(light_shift_u0(self.params)) * photons
        omega_axial = self.params.wavenumber * math.sqrt(
            2 * depth * self.params.hbar_over_m / 1e3
        )
        dt = 2 * math.pi / omega_axial / 40
        integrator = dynamics.FieldIntegrator(
            self.params, self.drive.delta_c, dt, heating=False, photon_number=photons
        )

        def energy():
            potential = dynamics.dipole_potential(state.positions, photons, self.params)
            kinetic = 0.5 * np.sum(state.velocities**2, axis=1)
            return float(np.sum(kinetic + potential))

        window, total = 2000, 100_000
        first, last = [], []
        for i in range(total):
            integrator.advance(state, 0.0, 0.0)
            if i < window:
                first.append(energy())
            elif i >= total - window:
                last.append(energy())
        drift = abs(np.mean(last) - np.mean(first)) / abs(np.mean(first))
        self.assertLess(drift, 1e-4)

    def test_non_finite_positions_abort(self):
        state = EnsembleState.single((np.nan, 0.0, 0.0))
        with self.assertRaises(NumericalInstability):
            dynamics.step(
                state, self.drive, self.config, self.params, np.random.default_rng(0)
            )


class TestHeatingKick(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_no_light_no_kick(self):
        velocities = np.random.default_rng(1).normal(size=(50, 3))
        kicked = dynamics.heating_kick(
            velocities, np.zeros(50), 0.05, np.random.default_rng(2), self.params
        )
        self.assertTrue(np.array_equal(kicked, velocities))

    def test_energy_growth_matches_recoil_heating(self):
        rng = np.random.default_rng(9)
        n, steps, dt, s = 1000, 100, 0.05, 0.02
        squares = np.zeros(3)
        for _ in range(steps):
            kicked = dynamics.heating_kick(
                np.zeros((n, 3)), np.full(n, s), dt, rng, self.params
            )
            squares += np.sum(kicked**2, axis=0)
        gain = 0.5 * squares / (n * steps) / (dt * 1e-3)
        # hbar omega_rec gamma s per mass, in um^2/ms^3
        unit = (
            self.params.hbar_over_m
            * self.params.omega_rec
            * self.params.gamma
            * PER_US_TO_PER_MS**2
            * s
        )
        self.assertEqual(gain[0], 0.0)
        self.assertAlmostEqual(gain[1] / (0.4 * unit), 1.0, delta=0.05)
        self.assertAlmostEqual(gain[2] / (0.2 * unit), 1.0, delta=0.05)
        # the axis average is the (3/10) rate
        self.assertAlmostEqual((gain[1] + gain[2]) / 2 / (0.3 * unit), 1.0, delta=0.05)


class TestCloud(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()

    def test_weights_carry_the_atom_number(self):
        config = dynamics.ProtocolConfig(n_atoms=2e6, n_macroparticles=500)
        state = dynamics.initialize_thermal_cloud(config, self.params)
        self.assertEqual(len(state), 500)
        self.assertAlmostEqual(state.atom_number / 2e6, 1.0, places=12)

    def test_no_atoms_gives_empty_cloud(self):
        config = dynamics.ProtocolConfig(n_atoms=0)
        state = dynamics.initialize_thermal_cloud(config, self.params)
        self.assertEqual(len(state), 0)
        self.assertEqual(effective_atom_number(state, self.params), 0.0)

    def test_seed_fixes_the_cloud(self):
        config = dynamics.ProtocolConfig(seed=4)
        a = dynamics.initialize_thermal_cloud(config, self.params)
        b = dynamics.initialize_thermal_cloud(config, self.params)
        self.assertTrue(np.array_equal(a.positions, b.positions))
        self.assertTrue(np.array_equal(a.velocities, b.velocities))

    def test_thermal_velocity_spread(self):
        config = dynamics.ProtocolConfig(n_macroparticles=20_000, seed=2)
        state = dynamics.initialize_thermal_cloud(config, self.params)
        sigma = dynamics.thermal_velocity_sigma(100.0, self.params)
        # about 9.8 cm/s for rubidium at 100 uK
        self.assertAlmostEqual(sigma / 97.8, 1.0, delta=0.01)
        self.assertAlmostEqual(np.std(state.velocities) / sigma, 1.0, delta=0.02)

    def test_window_scales_weights(self):
        config = dynamics.ProtocolConfig(
            n_atoms=1e6, n_macroparticles=1000, transverse_window=500.0
        )
        state = dynamics.initialize_thermal_cloud(config, self.params)
        self.assertTrue(np.all(np.abs(state.positions[:, 1:]) <= 500.0))
        inside = (2 * 0.691462461274013 - 1) ** 2
        self.assertAlmostEqual(state.atom_number / (1e6 * inside), 1.0, places=9)

    def test_atoms_for_pulling_matches_sampled_cloud(self):
        target = mhz(-1.0)
        config = dynamics.ProtocolConfig(n_macroparticles=400_000, seed=8)
        n_atoms = dynamics.atoms_for_pulling(target, config, self.params)
        config = dynamics.ProtocolConfig(
            n_macroparticles=400_000, seed=8, n_atoms=n_atoms
        )
        state = dynamics.initialize_thermal_cloud(config, self.params)
        integrator = dynamics.FieldIntegrator(self.params, 0.0, 0.05)
        integrator.free_flight(
            state, state.positions.copy(), state.velocities.copy(), 3.0
        )
        pulling = effective_atom_number(state, self.params) * light_shift_u0(
            self.params
        )
        self.assertAlmostEqual(pulling / target, 1.0, delta=0.15)


class TestTimeStep(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.drive = DriveConfig.from_ratio(mhz(-3.0), 620.0, self.params)

    def test_auto_step_resolves_axial_motion(self):
        config = dynamics.ProtocolConfig()
        dt, substeps = dynamics.choose_time_step(config, self.drive, self.params)
        # peak depth for eta/kappa = 620: axial period about 1.55 us
        self.assertLess(dt, 1.56 / 40)
        self.assertGreater(dt, 1.50 / 40 * 0.9)
        self.assertAlmostEqual(dt * substeps, 5.0, places=9)

    def test_dark_drive_uses_default_step(self):
        config = dynamics.ProtocolConfig()
        dt, substeps = dynamics.choose_time_step(
            config, self.drive.with_eta(0.0), self.params
        )
        self.assertEqual((dt, substeps), (0.05, 100))

    def test_too_large_step_rejected(self):
        config = dynamics.ProtocolConfig(dt=1.0)
        with self.assertRaises(InvalidParameters):
            dynamics.choose_time_step(config, self.drive, self.params)

    def test_warns_when_motion_is_fast_against_kappa(self):
        strong = DriveConfig.from_ratio(mhz(-3.0), 2000.0, self.params)
        with self.assertLogs("simulator.services.dynamics", level="WARNING"):
            dynamics.choose_time_step(dynamics.ProtocolConfig(), strong, self.params)


class TestRunProtocol(SimpleTestCase):
    def setUp(self):
        self.params = SystemParams.published()
        self.drive = DriveConfig.from_ratio(mhz(-3.0), 620.0, self.params)

    def test_no_atoms_gives_empty_cavity_level(self):
        config = short_protocol(n_atoms=0)
        trace = dynamics.run_protocol(config, self.drive, self.params)
        empty = empty_cavity_photon_number(self.drive, self.params)
        dark = trace.times < config.drive_on_time
        lit = trace.times >= config.signal_start
        self.assertTrue(np.all(trace.photon_number[dark] == 0.0))
        self.assertTrue(np.allclose(trace.photon_number[lit], empty, rtol=1e-12))
        self.assertTrue(np.all(trace.n_eff == 0.0))

    def test_same_seed_same_trace(self):
        config = short_protocol()
        a = dynamics.run_protocol(config, self.drive, self.params)
        b = dynamics.run_protocol(config, self.drive, self.params)
        self.assertTrue(np.array_equal(a.photon_number, b.photon_number))
        self.assertTrue(np.array_equal(a.trapped_fraction, b.trapped_fraction))

    def test_effective_number_bounded_by_atoms(self):
        config = short_protocol()
        trace = dynamics.run_protocol(config, self.drive, self.params)
        self.assertTrue(np.all(trace.n_eff <= config.n_atoms * (1 + 1e-12)))
        self.assertTrue(np.all(trace.n_eff >= 0))
        self.assertTrue(np.all((trace.trapped_fraction >= 0) & (trace.trapped_fraction <= 1)))

    def test_ensemble_does_not_depend_on_threads(self):
        config = short_protocol(record_until=0.2)
        serial = dynamics.run_ensemble(config, self.drive, self.params, 3, threads=1)
        parallel = dynamics.run_ensemble(config, self.drive, self.params, 3, threads=3)
        for a, b in zip(serial, parallel):
            self.assertTrue(np.array_equal(a.photon_number, b.photon_number))
        self.assertFalse(
            np.array_equal(serial[0].photon_number, serial[1].photon_number)
        )

    def test_far_detuned_drive_does_not_hold_atoms(self):
        config = short_protocol(
            drive_on_time=0.5,
            record_until=3.0,
            n_macroparticles=300,
            cloud_sigma=1000.0,
            transverse_window=400.0,
        )
        far = DriveConfig.from_ratio(mhz(-50.0), 620.0, self.params)
        driven = dynamics.run_protocol(config, far, self.params)
        ballistic = dynamics.run_protocol(config, far.with_eta(0.0), self.params)
        self.assertLess(
            abs(driven.trapped_fraction[-1] - ballistic.trapped_fraction[-1]), 0.05
        )
        self.assertLess(driven.trapped_fraction[-1], driven.trapped_fraction[0])


class TestTraces(SimpleTestCase):
    def make_trace(self, times, signal, signal_start=0.0):
        zeros = np.zeros(len(times))
        return TransmissionTrace(
            times, signal, zeros, zeros, eta=1.0, kappa=1.0, signal_start=signal_start
        )

    def test_length_mismatch_rejected(self):
        with self.assertRaises(InvalidParameters):
            TransmissionTrace(np.arange(3), np.ones(2), np.ones(3), np.ones(3))

    def test_exponential_decay_gives_half_life(self):
        tau = 2.0
        times = np.linspace(0, 20 * tau, 4001)
        trace = self.make_trace(times, 1.0 + 5.0 * np.exp(-times / tau))
        measured = extract_trapping_time(trace)
        self.assertLess(abs(measured - tau * math.log(2)) / (tau * math.log(2)), 1e-3)

    def test_step_decay_within_one_sample(self):
        times = np.linspace(0, 10, 1001)
        signal = np.where(times < 4.0, 3.0, 1.0)
        signal[:100] = np.linspace(1.0, 3.0, 100)
        trace = self.make_trace(times, signal, signal_start=1.0)
        measured = extract_trapping_time(trace)
        i_max = int(np.argmax(signal[100:])) + 100
        self.assertLessEqual(abs(measured - (4.0 - times[i_max])), 0.01)

    def test_rising_trace_never_decays(self):
        times = np.linspace(0, 10, 101)
        trace = self.make_trace(times, 1.0 + times)
        self.assertIs(extract_trapping_time(trace), NO_DECAY)

    def test_maximum_searched_after_signal_start(self):
        times = np.linspace(0, 10, 1001)
        signal = 1.0 + np.exp(-(times - 2.0) / 1.0) * (times >= 2.0)
        signal[:50] = 100.0
        trace = self.make_trace(times, signal, signal_start=1.0)
        measured = extract_trapping_time(trace)
        self.assertAlmostEqual(measured, math.log(2), delta=0.01)

    def test_average_rejects_mismatched_grids(self):
        a = self.make_trace(np.linspace(0, 1, 11), np.ones(11))
        b = self.make_trace(np.linspace(0, 2, 11), np.ones(11))
        with self.assertRaises(InvalidParameters):
            average_traces([a, b])

    def test_average_and_standard_error(self):
        rng = np.random.default_rng(6)
        times = np.linspace(0, 1, 2001)
        traces = [
            self.make_trace(times, 5.0 + rng.normal(0, 1.0, len(times)))
            for _ in range(10)
        ]
        mean = average_traces(traces)
        self.assertTrue(
            np.allclose(mean.photon_number, np.mean([t.photon_number for t in traces], axis=0))
        )
        error = pointwise_standard_error(traces)
        self.assertAlmostEqual(np.mean(error) / (1 / math.sqrt(10)), 1.0, delta=0.05)

    def test_normalized_transmission(self):
        trace = TransmissionTrace(
            np.arange(2), np.array([4.0, 9.0]), np.zeros(2), np.zeros(2), eta=3.0, kappa=1.5
        )
        self.assertTrue(np.allclose(trace.transmission_norm, [1.0, 2.25]))


@unittest.skipUnless(SLOW, "set SELFTRAP_SLOW=1 to run the protocol benchmarks")
class TestProtocolBenchmarks(SimpleTestCase):
    """Full release/drive/record runs of the published configuration."""

    def setUp(self):
        self.params = SystemParams.published()

    def test_self_trapping_trace(self):
        drive = DriveConfig.from_ratio(mhz(-3.0), 620.0, self.params)
        base = dynamics.ProtocolConfig(seed=1)
        n_atoms = dynamics.atoms_for_pulling(mhz(-1.0), base, self.params)
        config = dynamics.ProtocolConfig(seed=1, n_atoms=n_atoms)
        traces = dynamics.run_ensemble(config, drive, self.params, 10, threads=4)
        trace = average_traces(traces)
        times, photons = trace.times, trace.photon_number

        on = np.searchsorted(times, config.drive_on_time)
        ramped = np.searchsorted(times, config.signal_start)
        self.assertGreater(photons[ramped], photons[on])
        i_max = int(np.argmax(photons[ramped:])) + ramped
        self.assertGreaterEqual(times[i_max], 4.0)
        self.assertLessEqual(times[i_max], 15.0)
        empty = empty_cavity_photon_number(drive, self.params)
        self.assertAlmostEqual(np.median(photons[-100:]) / empty, 1.0, delta=0.1)
        held = trace.trapped_fraction[times > 10.0] / trace.trapped_fraction[ramped]
        self.assertGreater(held[0], 0.1)
