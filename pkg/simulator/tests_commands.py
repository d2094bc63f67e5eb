import json
import os
import tempfile
import unittest
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from cavity.params import Calibration, HeatingModel, SystemParams
from cavity.services.core_model import saturation_for_power
from cavity.services.trap_physics import trapping_time_curve
from cavity.units import mhz
from selftrap.cli import dispatch
from simulator import io
from simulator.management.base import attach_negative_values
from simulator.services.estimation import collapse_shape

SLOW = bool(os.environ.get("SELFTRAP_SLOW"))

SHORT_RUN = [
    "drive_on_ms=0.1",
    "shutter_ramp_ms=0.05",
    "record_until_ms=0.4",
    "n_macroparticles=100",
    "n_atoms=1e6",
    "cloud_sigma_um=300",
]


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def work_in_tmp(self):
        cwd = os.getcwd()
        os.chdir(self.dir)
        self.addCleanup(os.chdir, cwd)

    def call(self, name, *args, **options):
        out = StringIO()
        call_command(name, *args, stdout=out, verbosity=0, **options)
        return out.getvalue()


class TestSimulateCommand(CommandTestCase):
    def simulate(self, **options):
        out = self.dir / "trace.csv"
        self.call("simulate", out=str(out), overrides=SHORT_RUN, traces=2, **options)
        return out

    def test_writes_average_traces_and_manifest(self):
        out = self.simulate(seed=4)
        frame = pd.read_csv(out)
        self.assertEqual(
            list(frame.columns),
            [
                "t_ms",
                "photon_number",
                "transmission_norm",
                "n_eff",
                "trapped_fraction",
                "photon_number_sem",
            ],
        )
        self.assertEqual(len(frame), 81)
        self.assertTrue((self.dir / "trace_trace000.csv").exists())
        self.assertTrue((self.dir / "trace_trace001.csv").exists())
        manifest = io.read_manifest(self.dir / "trace.csv.manifest.json")
        self.assertEqual(manifest["command"], "simulate")
        self.assertEqual(manifest["seed"], 4)
        self.assertEqual(manifest["config"]["record_until_ms"], 0.4)
        self.assertEqual(len(manifest["outputs"]), 3)

    def test_manifest_rerun_is_byte_identical(self):
        out = self.simulate()
        before = out.read_bytes()
        message = self.call("verify_manifest", str(self.dir / "trace.csv.manifest.json"))
        self.assertIn("Reproduced 3 output(s)", message)
        self.assertEqual(out.read_bytes(), before)

    def test_rerun_with_more_threads_is_byte_identical(self):
        self.simulate()
        self.call("verify_manifest", str(self.dir / "trace.csv.manifest.json"), threads=2)

    def test_tampered_manifest_is_reported(self):
        self.simulate()
        path = self.dir / "trace.csv.manifest.json"
        manifest = json.loads(path.read_text())
        first = sorted(manifest["outputs"])[0]
        manifest["outputs"][first] = "0" * 64
        path.write_text(json.dumps(manifest))
        with self.assertRaises(CommandError) as ctx:
            self.call("verify_manifest", str(path))
        self.assertEqual(ctx.exception.returncode, 4)
        self.assertIn("[digest-mismatch]", str(ctx.exception))

    def test_config_error_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("simulate", out=str(self.dir / "x.csv"), overrides=["kapa_MHz=2"])
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertTrue(str(ctx.exception).startswith("[config-error]"))

    def test_no_manifest(self):
        self.simulate(no_manifest=True)
        self.assertFalse((self.dir / "trace.csv.manifest.json").exists())


class TestTrapCurveCommand(CommandTestCase):
    def test_one_curve_per_detuning(self):
        self.call(
            "trap_curve",
            "--delta-c-mhz=-1,-2,-3",
            powers="0.1:3.0:30",
            out=str(self.dir),
        )
        for label in ("-1.00", "-2.00", "-3.00"):
            frame = pd.read_csv(self.dir / f"trap_curve_{label}MHz.csv")
            self.assertEqual(
                list(frame.columns), ["power_uW", "saturation", "tau_ms", "trapped"]
            )
            self.assertEqual(len(frame), 30)
            self.assertTrue(set(frame["trapped"]) <= {0, 1})
        optima = pd.read_csv(self.dir / "optima.csv")
        self.assertEqual(list(optima["delta_C_MHz"]), [-1.0, -2.0, -3.0])
        self.assertTrue(np.all(optima["optimal_tau_ms"] > 0))
        self.assertTrue((self.dir / "manifest.json").exists())

    def test_fitted_coefficients_per_detuning(self):
        self.call("trap_curve", "--delta-c-mhz=-2", powers="0.5", out=str(self.dir))
        frame = pd.read_csv(self.dir / "trap_curve_-2.00MHz.csv")
        params = SystemParams.published()
        s = saturation_for_power(0.5, mhz(-2.0), mhz(-1.0), Calibration(), params)
        tau = trapping_time_curve(
            [s], HeatingModel.from_microkelvin(0.627, 1.12, 100.0), params
        )[0]
        self.assertAlmostEqual(frame["tau_ms"][0] / tau, 1.0, places=7)


class TestCollapseCommand(CommandTestCase):
    def test_columns_and_start(self):
        out = self.dir / "collapse.csv"
        self.call(
            "collapse", out=str(out), n0=200, traces=3, t_end_ms=10.0, points=51, seed=1
        )
        frame = pd.read_csv(out)
        self.assertEqual(
            list(frame.columns), ["t_ms", "n_mean", "n_meanfield", "transmission_norm"]
        )
        self.assertEqual(len(frame), 51)
        self.assertEqual(frame["n_mean"][0], 200)
        self.assertEqual(frame["n_meanfield"][0], 200)
        self.assertTrue(np.all(np.diff(frame["n_mean"]) <= 0))


class TestFitCommands(CommandTestCase):
    def test_fit_heating(self):
        params = SystemParams.published()
        powers = np.geomspace(0.08, 30.0, 20)
        s = saturation_for_power(powers, mhz(-1.0), mhz(-1.0), Calibration(), params)
        taus = trapping_time_curve(
            s, HeatingModel.from_microkelvin(0.475, 0.759, 100.0), params
        )
        data = io.emit_csv(
            {"power_uW": powers, "tau_ms": taus}, ("power_uW", "tau_ms"), self.dir / "d.csv"
        )
        report_path = self.dir / "heating.json"
        self.call(
            "fit_heating", "--delta-c-mhz=-1", data=str(data), out=str(report_path)
        )
        report = json.loads(report_path.read_text())
        self.assertAlmostEqual(report["parameters"]["d0"] / 0.475, 1.0, delta=1e-3)
        self.assertAlmostEqual(report["parameters"]["d1"] / 0.759, 1.0, delta=1e-3)
        self.assertEqual(report["delta_C_MHz"], -1.0)
        model = pd.read_csv(self.dir / "heating_model.csv")
        self.assertEqual(list(model.columns), ["power_uW", "tau_ms", "tau_model_ms"])

    def test_fit_heating_schema_mismatch(self):
        data = self.dir / "d.csv"
        data.write_text("power_uW,lifetime\n1,2\n")
        with self.assertRaises(CommandError) as ctx:
            self.call("fit_heating", data=str(data), out=str(self.dir / "h.json"))
        self.assertEqual(ctx.exception.returncode, 4)

    def test_fit_collapse_with_verdict(self):
        times = np.linspace(0.0, 40.0, 400)
        values = 3.0 * collapse_shape(times, (-0.675, -0.361, 2.775, 1.5)) + 0.2
        data = io.emit_csv(
            {"t_ms": times, "transmission_norm": values},
            ("t_ms", "transmission_norm"),
            self.dir / "decay.csv",
        )
        report_path = self.dir / "collapse.json"
        self.call(
            "fit_collapse", data=str(data), out=str(report_path), nonexponentiality=True
        )
        report = json.loads(report_path.read_text())
        self.assertAlmostEqual(report["parameters"]["a_param"] / 2.775, 1.0, delta=0.05)
        self.assertTrue(report["nonexponentiality"]["non_exponential"])
        model = pd.read_csv(self.dir / "collapse_model.csv")
        self.assertLess(np.max(np.abs(model["model"] - model["data"])), 1e-2)

    def test_flat_data_is_degenerate(self):
        data = self.dir / "flat.csv"
        data.write_text("t_ms,transmission_norm\n" + "".join(f"{t},1\n" for t in range(50)))
        with self.assertRaises(CommandError) as ctx:
            self.call("fit_collapse", data=str(data), out=str(self.dir / "c.json"))
        self.assertEqual(ctx.exception.returncode, 4)
        self.assertIn("[degenerate-data]", str(ctx.exception))


class TestScanAtomNumberCommand(CommandTestCase):
    def test_writes_one_row_per_point(self):
        out = self.dir / "scan.csv"
        self.call(
            "scan_atom_number",
            "--delta-c-mhz=-2",
            eta_over_kappa=290.0,
            n_atoms="1e5:1e6:2",
            traces=1,
            overrides=SHORT_RUN[:4] + ["cloud_sigma_um=300"],
            out=str(out),
        )
        frame = pd.read_csv(out)
        self.assertEqual(list(frame.columns), ["n_atoms", "tau_ms", "n_eff_calibrated"])
        self.assertEqual(list(frame["n_atoms"]), [1e5, 1e6])
        manifest = io.read_manifest(self.dir / "scan.csv.manifest.json")
        self.assertEqual(manifest["config"]["delta_C_MHz"], -2.0)


class TestDispatch(CommandTestCase):
    def test_no_arguments_is_a_usage_error(self):
        self.assertEqual(dispatch([]), 2)

    def test_unknown_subcommand(self):
        self.assertEqual(dispatch(["frobnicate"]), 2)

    def test_help(self):
        self.assertEqual(dispatch(["--help"]), 0)

    def test_missing_required_flag(self):
        self.assertEqual(dispatch(["fit-heating"]), 2)

    def test_runs_a_subcommand(self):
        out = self.dir / "c.csv"
        status = dispatch(
            ["collapse", "--out", str(out), "--n0", "50", "--traces", "1",
             "--t-end-ms", "1", "--points", "11", "--delta-c-mhz", "-1.87"]
        )
        self.assertEqual(status, 0)
        self.assertTrue(out.exists())

    def test_negative_list_values(self):
        status = dispatch(
            ["trap-curve", "--delta-c-mhz", "-1,-2", "--powers", "0.1:1:3",
             "--out", str(self.dir)]
        )
        self.assertEqual(status, 0)
        self.assertTrue((self.dir / "trap_curve_-2.00MHz.csv").exists())

    def test_error_category_sets_exit_status(self):
        status = dispatch(
            ["simulate", "--out", str(self.dir / "x.csv"), "--set", "kappa=2"]
        )
        self.assertEqual(status, 3)

    def test_attach_negative_values(self):
        self.assertEqual(
            attach_negative_values(["--a", "-1,-2", "--b", "3", "--c", "-.5"]),
            ["--a=-1,-2", "--b", "3", "--c=-.5"],
        )

    def test_trap_curve_writes_to_working_directory(self):
        self.work_in_tmp()
        status = dispatch(
            ["trap-curve", "--config", "defaults", "--powers", "0.1:3.0:30",
             "--delta-c-mhz", "-1,-2,-3"]
        )
        self.assertEqual(status, 0)
        for label in ("-1.00", "-2.00", "-3.00"):
            frame = pd.read_csv(self.dir / f"trap_curve_{label}MHz.csv")
            self.assertEqual(len(frame), 30)
        self.assertTrue((self.dir / "optima.csv").exists())
        self.assertTrue((self.dir / "manifest.json").exists())

    def test_default_output_is_named_after_the_command(self):
        self.work_in_tmp()
        self.call(
            "scan_atom_number",
            "--delta-c-mhz=-2",
            eta_over_kappa=290.0,
            n_atoms="1e5:1e6:2",
            traces=1,
            overrides=SHORT_RUN[:4] + ["cloud_sigma_um=300"],
        )
        frame = pd.read_csv(self.dir / "scan_atom_number.csv")
        self.assertEqual(list(frame.columns), ["n_atoms", "tau_ms", "n_eff_calibrated"])
        self.assertTrue((self.dir / "scan_atom_number.csv.manifest.json").exists())


@unittest.skipUnless(SLOW, "set SELFTRAP_SLOW=1 to run the protocol benchmarks")
class TestAtomNumberScanCommand(CommandTestCase):
    def test_default_scan(self):
        self.work_in_tmp()
        status = dispatch(
            ["scan-atom-number", "--delta-c-mhz", "-2", "--eta-over-kappa", "290",
             "--threads", "4"]
        )
        self.assertEqual(status, 0)
        frame = pd.read_csv(self.dir / "scan_atom_number.csv")
        self.assertEqual(len(frame), 5)
        self.assertTrue(np.all(np.diff(frame["n_atoms"]) > 0))
