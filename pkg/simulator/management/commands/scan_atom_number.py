from dataclasses import replace

from simulator.config import calibration, drive_config, protocol_config, system_params
from simulator.io import emit_csv
from simulator.management.base import SelfTrapCommand, parse_grid
from simulator.services.scans import scan_atom_number

COLUMNS = ("n_atoms", "tau_ms", "n_eff_calibrated")


class Command(SelfTrapCommand):
    help = (
        "Trapping time of the simulated transmission against the total atom "
        "number at fixed drive"
    )

    def add_run_arguments(self, parser):
        parser.add_argument("--n-atoms", default="2e6:2e7:5", help="start:stop:count")
        parser.add_argument("--traces", type=int, default=10)
        parser.add_argument("--delta-c-mhz", type=float, default=None)
        parser.add_argument("--eta-over-kappa", type=float, default=None)

    def run(self, options):
        flags = {}
        if options["delta_c_mhz"] is not None:
            flags["delta_C_MHz"] = options["delta_c_mhz"]
        if options["eta_over_kappa"] is not None:
            flags["eta_over_kappa"] = options["eta_over_kappa"]
            flags["power_uW"] = 0.0
        config = self.load_config(options, **flags)
        params = system_params(config)
        drive = drive_config(config, params)
        atom_numbers = parse_grid(options["n_atoms"])
        # the atom number is scanned, so "auto" has nothing to derive
        protocol = protocol_config({**config, "n_atoms": 0.0}, params)
        scan = scan_atom_number(
            replace(protocol, n_atoms=float(atom_numbers[0])),
            drive,
            params,
            atom_numbers,
            options["traces"],
            threads=options["threads"],
            calibration=calibration(config),
            progress=self.progress(options),
        )
        path = emit_csv(scan.columns(), COLUMNS, options["out"])
        for n_atoms, tau in zip(scan.n_atoms, scan.tau_ms):
            self.stdout.write(f"N = {n_atoms:.4g}: tau = {tau:.4g} ms")
        self.stdout.write(
            self.style.SUCCESS(
                f"Spearman rank correlation {scan.spearman_rho:.3f} "
                f"(p = {scan.spearman_pvalue:.3g})"
            )
        )
        return [path]
