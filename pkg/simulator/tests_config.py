import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from cavity.exceptions import ConfigError, InvalidParameters, SchemaMismatch
from cavity.params import SystemParams
from cavity.units import mhz
from simulator import config as cfg
from simulator import io
from simulator.management.base import parse_float_list, parse_grid
from simulator.services.dynamics import atoms_for_pulling


class ConfigFileTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write(self, text, name="run.cfg"):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path


class TestParseConfig(ConfigFileTestCase):
    def test_defaults(self):
        config = cfg.parse_config()
        self.assertEqual(config["kappa_MHz"], 2.77)
        self.assertEqual(config["n_macroparticles"], 2000)
        self.assertIsNone(config["n_atoms"])
        self.assertEqual(cfg.parse_config("defaults"), config)

    def test_empty_file_gives_published_values(self):
        config = cfg.parse_config(self.write(""))
        self.assertEqual(config["kappa_MHz"], 2.77)
        self.assertEqual(config["g_MHz"], 0.33)
        self.assertEqual(config["delta_A_MHz"], -1066.0)
        self.assertEqual(config["waist_um"], 127.0)
        self.assertEqual(config["temperature_uK"], 100.0)

    def test_single_override_changes_only_that_key(self):
        config = cfg.parse_config(self.write("kappa_MHz = 5.54\n"))
        defaults = cfg.parse_config()
        changed = [key for key in config if config[key] != defaults[key]]
        self.assertEqual(changed, ["kappa_MHz"])

    def test_file_with_comments(self):
        path = self.write(
            "# strong drive\n"
            "kappa_MHz = 3.0   # wider cavity\n"
            "\n"
            "n_atoms = 5e6\n"
            "seed = 7\n"
        )
        config = cfg.parse_config(path)
        self.assertEqual(config["kappa_MHz"], 3.0)
        self.assertEqual(config["n_atoms"], 5e6)
        self.assertEqual(config["seed"], 7)
        self.assertEqual(config["g_MHz"], 0.33)

    def test_overrides_win_over_file(self):
        path = self.write("delta_C_MHz = -2\n")
        config = cfg.parse_config(path, {"delta_C_MHz": "-1.5"})
        self.assertEqual(config["delta_C_MHz"], -1.5)

    def test_misspelled_key_suggests_the_right_one(self):
        path = self.write("seed = 1\nkapa_MHz = 2.77\n")
        with self.assertRaises(ConfigError) as ctx:
            cfg.parse_config(path)
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn("kappa_MHz", str(ctx.exception))

    def test_missing_unit_suffix(self):
        path = self.write("kappa = 2.77\n")
        with self.assertRaises(ConfigError) as ctx:
            cfg.parse_config(path)
        self.assertEqual(ctx.exception.line, 1)
        self.assertIn("unit suffix", str(ctx.exception))
        self.assertIn("kappa_MHz", str(ctx.exception))

    def test_non_numeric_value_reports_its_line(self):
        path = self.write("seed = 1\n\nwaist_um = wide\n")
        with self.assertRaises(ConfigError) as ctx:
            cfg.parse_config(path)
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn("waist_um", str(ctx.exception))

    def test_out_of_range_values(self):
        for text in ("kappa_MHz = -1\n", "n_macroparticles = 10\n", "n_atoms = -5\n"):
            with self.assertRaises(ConfigError, msg=text):
                cfg.parse_config(self.write(text))

    def test_line_without_assignment(self):
        with self.assertRaises(ConfigError) as ctx:
            cfg.parse_config(self.write("kappa_MHz 2.77\n"))
        self.assertEqual(ctx.exception.line, 1)

    def test_duplicate_key(self):
        with self.assertRaises(ConfigError) as ctx:
            cfg.parse_config(self.write("seed = 1\nseed = 2\n"))
        self.assertEqual(ctx.exception.line, 2)

    def test_protocol_order_is_checked(self):
        with self.assertRaises(ConfigError):
            cfg.parse_config(self.write("drive_on_ms = 40\n"))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            cfg.parse_config(self.dir / "absent.cfg")

    def test_unknown_override(self):
        with self.assertRaises(ConfigError):
            cfg.parse_config(None, {"temperature": "50"})

    def test_parse_overrides(self):
        self.assertEqual(
            cfg.parse_overrides(["seed=3", " d0 = 0.5"]), {"seed": "3", "d0": "0.5"}
        )
        with self.assertRaises(ConfigError):
            cfg.parse_overrides(["seed"])

    def test_config_errors_exit_with_three(self):
        self.assertEqual(ConfigError("x").exit_code, 3)


class TestBuilders(SimpleTestCase):
    def setUp(self):
        self.config = cfg.parse_config()
        self.params = cfg.system_params(self.config)

    def test_system_params_match_published_values(self):
        published = SystemParams.published()
        self.assertEqual(self.params.kappa, published.kappa)
        self.assertEqual(self.params.g, published.g)
        self.assertEqual(self.params.delta_a, published.delta_a)
        self.assertAlmostEqual(self.params.omega_rec, published.omega_rec, places=12)
        self.assertEqual(self.params.cavity_length, 15000.0)

    def test_drive_from_ratio(self):
        drive = cfg.drive_config(self.config, self.params)
        self.assertIsNone(drive.power_uw)
        self.assertAlmostEqual(drive.eta, 620.0 * self.params.kappa)
        self.assertEqual(drive.delta_c, mhz(-3.0))

    def test_power_selects_calibrated_drive(self):
        config = dict(self.config, power_uW=0.7)
        drive = cfg.drive_config(config, self.params)
        self.assertEqual(drive.power_uw, 0.7)
        self.assertIsNone(drive.eta)

    def test_auto_atom_number(self):
        protocol = cfg.protocol_config(self.config, self.params)
        expected = atoms_for_pulling(mhz(-1.0), protocol, self.params)
        self.assertAlmostEqual(protocol.n_atoms / expected, 1.0, places=12)
        self.assertIsNone(protocol.dt)
        self.assertEqual(protocol.drive_on_time, 3.0)

    def test_explicit_atom_number_and_step(self):
        config = dict(self.config, n_atoms=2e6, dt_us=0.02)
        protocol = cfg.protocol_config(config, self.params)
        self.assertEqual(protocol.n_atoms, 2e6)
        self.assertEqual(protocol.dt, 0.02)

    def test_heating_model(self):
        heating = cfg.heating_model(self.config)
        self.assertEqual((heating.d0, heating.d1), (0.475, 0.759))
        self.assertGreater(heating.temperature, 0)

    def test_calibration(self):
        anchor = cfg.calibration(self.config)
        self.assertEqual(anchor.anchor_power_uw, 0.7)
        self.assertEqual(anchor.anchor_delta_c, mhz(-2.0))


class TestCsv(ConfigFileTestCase):
    def test_format(self):
        path = io.emit_csv(
            {"b": [float("nan"), 2e-10], "a": [1.0, 1.0 / 3.0]},
            ("a", "b"),
            self.dir / "out.csv",
        )
        self.assertEqual(
            path.read_bytes(), b"a,b\n1,nan\n0.333333333,2e-10\n"
        )

    def test_empty_series_writes_header(self):
        path = io.emit_csv({"t_ms": [], "tau_ms": []}, ("t_ms", "tau_ms"), self.dir / "e.csv")
        self.assertEqual(path.read_text(), "t_ms,tau_ms\n")

    def test_schema_is_enforced(self):
        with self.assertRaises(SchemaMismatch):
            io.emit_csv({"a": [1.0]}, ("a", "b"), self.dir / "x.csv")
        with self.assertRaises(SchemaMismatch):
            io.emit_csv({"a": [1.0], "b": [1.0, 2.0]}, ("a", "b"), self.dir / "x.csv")

    def test_values_survive_a_round_trip(self):
        rng = np.random.default_rng(2)
        values = rng.lognormal(0.0, 5.0, 200) * rng.choice([-1, 1], 200)
        path = io.emit_csv({"x": values}, ("x",), self.dir / "r.csv")
        back = io.ingest_csv(path, ["x"])["x"].to_numpy()
        # 9 significant digits
        self.assertTrue(np.all(np.abs(back / values - 1) <= 5e-9 * (1 + 1e-6)))

    def test_ingest_aliases_and_missing_markers(self):
        path = self.write("P_uW,tau,note\n0.1,untrapped,a\n1.5,4.2 ms,b\n3,,c\n", "d.csv")
        frame = io.ingest_csv(path, ["power_uW", "tau_ms"])
        self.assertEqual(list(frame["power_uW"]), [0.1, 1.5, 3.0])
        self.assertTrue(math.isnan(frame["tau_ms"][0]))
        self.assertEqual(frame["tau_ms"][1], 4.2)
        self.assertTrue(math.isnan(frame["tau_ms"][2]))
        self.assertIn("note", frame.columns)

    def test_ingest_missing_column(self):
        path = self.write("power_uW,other\n1,2\n", "d.csv")
        with self.assertRaises(SchemaMismatch) as ctx:
            io.ingest_csv(path, ["power_uW", "tau_ms"])
        self.assertIn("tau_ms", str(ctx.exception))

    def test_ingest_rejects_text(self):
        path = self.write("t_ms,transmission_norm\n0,high\n", "d.csv")
        with self.assertRaises(SchemaMismatch):
            io.ingest_csv(path, ["t_ms", "transmission_norm"])

    def test_clean_number(self):
        self.assertEqual(io.clean_number("1,234.5"), 1234.5)
        self.assertEqual(io.clean_number(" -2.5e-3 "), -2.5e-3)
        self.assertTrue(math.isnan(io.clean_number("N/A")))


class TestManifest(ConfigFileTestCase):
    def test_manifest_records_digests(self):
        output = io.emit_csv({"a": [1.0]}, ("a",), self.dir / "a.csv")
        path = io.write_manifest(
            io.manifest_path(output),
            "simulate",
            {"seed": 3, "out": str(output)},
            {"seed": 3},
            [output],
            None,
        )
        self.assertEqual(path.name, "a.csv.manifest.json")
        manifest = io.read_manifest(path)
        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(manifest["outputs"][str(output)], io.file_digest(output))
        self.assertEqual(io.changed_outputs(manifest), [])
        output.write_text("a\n2\n")
        self.assertEqual(io.changed_outputs(manifest), [str(output)])

    def test_directory_output(self):
        self.assertEqual(io.manifest_path(self.dir), self.dir / "manifest.json")

    def test_broken_manifest(self):
        with self.assertRaises(SchemaMismatch):
            io.read_manifest(self.write("{}", "m.json"))
        with self.assertRaises(SchemaMismatch):
            io.read_manifest(self.write("not json", "m.json"))

    def test_report_writes_nan_as_null(self):
        path = io.write_report(
            self.dir / "r.json", {"tau": float("nan"), "values": [np.float64(1.5)]}
        )
        self.assertIn('"tau": null', path.read_text())

    def test_grids(self):
        self.assertEqual(len(parse_grid("1:100:3")), 3)
        self.assertAlmostEqual(parse_grid("1:100:3")[1], 10.0)
        self.assertEqual(parse_float_list("-1,-2,-3"), [-1.0, -2.0, -3.0])
        with self.assertRaises(InvalidParameters):
            parse_grid("0:1:3")
        with self.assertRaises(InvalidParameters):
            parse_grid("a:b")
