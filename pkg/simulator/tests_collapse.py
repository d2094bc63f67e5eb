import math

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from cavity.exceptions import InvalidParameters
from cavity.units import mhz
from simulator.services import collapse

KAPPA = mhz(2.77)


def reference_model(n0=2000, tau=1.0):
    return collapse.DecayModelParams.from_physical(
        delta_c=mhz(-1.87), n0_u0=mhz(-1.0), n0=n0, a_param=2.775, tau=tau, kappa=KAPPA
    )


def linear_model(n0, tau=1.0):
    return collapse.DecayModelParams(
        delta_c_tilde=-0.675, u0_tilde=-0.361 / max(n0, 1), n0=n0, a_param=0.0, tau=tau
    )


class TestDecayModelParams(SimpleTestCase):
    def test_rejects_invalid_values(self):
        for bad in (dict(n0=-1), dict(tau=0.0), dict(a_param=-0.1), dict(n0=2.5)):
            values = dict(delta_c_tilde=-0.5, u0_tilde=-0.01, n0=10, a_param=1.0, tau=1.0)
            values.update(bad)
            with self.assertRaises(InvalidParameters):
                collapse.DecayModelParams(**values)

    def test_from_physical_units(self):
        model = reference_model(n0=1000)
        self.assertAlmostEqual(model.delta_c_tilde, -1.87 / 2.77, places=12)
        self.assertAlmostEqual(model.n0_u0_tilde, -1.0 / 2.77, places=12)


class TestEscapeRate(SimpleTestCase):
    def test_zero_atoms_do_not_escape(self):
        self.assertEqual(collapse.escape_rate(0, reference_model()), 0.0)

    def test_linear_without_collective_factor(self):
        model = linear_model(100, tau=2.0)
        self.assertEqual(collapse.escape_rate(100, model), 50.0)

    def test_pulled_resonance_suppression(self):
        model = collapse.DecayModelParams(
            delta_c_tilde=-0.5, u0_tilde=-0.005, n0=100, a_param=2.775, tau=1.0
        )
        rate = collapse.escape_rate(100, model)
        self.assertAlmostEqual(rate / 100, math.exp(-2.775), places=12)
        self.assertAlmostEqual(math.exp(-2.775), 0.0624, places=4)

    def test_published_fit_values(self):
        model = reference_model(n0=1000, tau=1.0)
        rate = collapse.escape_rate(1000, model)
        self.assertAlmostEqual(rate / 1000, 0.0799, delta=2e-4)

    def test_negative_count_rejected(self):
        with self.assertRaises(InvalidParameters):
            collapse.escape_rate(-1, reference_model())


class TestSimulateDecay(SimpleTestCase):
    def test_empty_ensemble(self):
        trajectory = collapse.simulate_decay(linear_model(0), 10.0, seed=1)
        self.assertEqual(len(trajectory), 0)
        self.assertTrue(np.all(trajectory.counts_at(np.linspace(0, 10, 5)) == 0))

    def test_counts_fall_by_one(self):
        trajectory = collapse.simulate_decay(reference_model(), 50.0, seed=2)
        self.assertEqual(trajectory.counts[0], 1999)
        self.assertTrue(np.all(np.diff(trajectory.counts) == -1))
        self.assertTrue(np.all(np.diff(trajectory.escape_times) >= 0))
        self.assertTrue(np.all(trajectory.escape_times <= 50.0))

    def test_same_seed_same_trajectory(self):
        a = collapse.simulate_decay(reference_model(), 20.0, seed=5)
        b = collapse.simulate_decay(reference_model(), 20.0, seed=5)
        self.assertTrue(np.array_equal(a.escape_times, b.escape_times))

    def test_per_atom_rate_grows_as_atoms_leave(self):
        model = reference_model()
        for seed in range(5):
            trajectory = collapse.simulate_decay(model, 100.0, seed=seed)
            rates = collapse.per_atom_rate(trajectory.counts, model)
            self.assertTrue(np.all(np.diff(rates) >= 0))

    def test_single_atom_escape_times_are_exponential(self):
        model = linear_model(1, tau=2.0)
        rng = np.random.default_rng(17)
        times = [
            collapse.simulate_decay(model, 200.0, rng=rng).escape_times[0]
            for _ in range(2000)
        ]
        result = stats.kstest(times, "expon", args=(0.0, 2.0))
        self.assertGreater(result.pvalue, 0.01)


class TestMeanDecayCurve(SimpleTestCase):
    def test_linear_death_process(self):
        n0, runs = 10_000, 50
        model = linear_model(n0, tau=1.0)
        curve = collapse.mean_decay_curve(model, 5.0, runs, master_seed=3)
        for index in (50, 100, 200):
            p = math.exp(-curve.times[index])
            sigma = math.sqrt(n0 * p * (1 - p) / runs)
            self.assertLess(abs(curve.n_mean[index] - n0 * p), 3 * sigma)

    def test_single_trajectory_is_the_step_curve(self):
        model = reference_model()
        curve = collapse.mean_decay_curve(model, 30.0, 1, master_seed=4)
        seed = np.random.SeedSequence(4).spawn(1)[0]
        trajectory = collapse.simulate_decay(
            model, 30.0, rng=np.random.default_rng(seed)
        )
        self.assertTrue(np.array_equal(curve.n_mean, trajectory.counts_at(curve.times)))

    def test_deterministic_and_thread_independent(self):
        model = reference_model()
        a = collapse.mean_decay_curve(model, 30.0, 8, master_seed=9)
        b = collapse.mean_decay_curve(model, 30.0, 8, master_seed=9, threads=4)
        self.assertTrue(np.array_equal(a.n_mean, b.n_mean))

    def test_large_ensemble_follows_mean_field(self):
        n0 = 10_000
        model = reference_model(n0=n0)
        curve = collapse.mean_decay_curve(model, 40.0, 50, master_seed=1)
        gap = np.max(np.abs(curve.n_mean - curve.n_meanfield)) / n0
        self.assertLess(gap, 0.01)

    def test_quadrature_matches_ode(self):
        model = reference_model(n0=10_000)
        times = np.linspace(0.0, 40.0, 201)
        quadrature = model.n0 * collapse.mean_field_fraction(
            times, model.delta_c_tilde, model.n0_u0_tilde, model.a_param, model.tau
        )
        ode = collapse.mean_field_ode(times, model)
        self.assertLess(np.max(np.abs(quadrature - ode)) / model.n0, 1e-4)

    def test_mean_field_reduces_to_exponential(self):
        times = np.linspace(0.0, 10.0, 101)
        fraction = collapse.mean_field_fraction(times, -0.675, -0.361, 0.0, 2.0)
        self.assertTrue(np.allclose(fraction, np.exp(-times / 2.0), rtol=1e-5, atol=1e-9))


class TestTransmissionFromN(SimpleTestCase):
    def setUp(self):
        self.model = reference_model(n0=1000)
        self.eta = 100.0 * KAPPA
        self.times = np.linspace(0.0, 40.0, 401)

    def level(self, n):
        detuning = (self.model.delta_c_tilde - n * self.model.u0_tilde) * KAPPA
        return self.eta**2 / (detuning**2 + KAPPA**2)

    def test_no_atoms_is_empty_cavity_level(self):
        trace = collapse.transmission_from_n(
            self.times, np.zeros(len(self.times)), self.model, self.eta
        )
        self.assertTrue(np.allclose(trace.photon_number, self.level(0)))

    def test_constant_atoms_is_filled_level(self):
        trace = collapse.transmission_from_n(
            self.times, np.full(len(self.times), 1000.0), self.model, self.eta
        )
        self.assertTrue(np.allclose(trace.photon_number, self.level(1000)))
        self.assertTrue(np.allclose(trace.trapped_fraction, 1.0))

    def test_collapse_is_steeper_than_exponential_late(self):
        fraction = collapse.mean_field_fraction(
            self.times,
            self.model.delta_c_tilde,
            self.model.n0_u0_tilde,
            self.model.a_param,
            self.model.tau,
        )
        trace = collapse.transmission_from_n(
            self.times, self.model.n0 * fraction, self.model, self.eta
        )
        photons = trace.photon_number
        self.assertTrue(np.all(np.diff(photons) <= 0))
        self.assertAlmostEqual(photons[0] / self.level(1000), 1.0, places=9)
        excess = np.log(photons - self.level(0))
        slope = np.gradient(excess, self.times)
        early = slope[np.argmin(np.abs(fraction - 0.9))]
        late = slope[np.argmin(np.abs(fraction - 0.05))]
        self.assertGreater(late / early, 1.5)
