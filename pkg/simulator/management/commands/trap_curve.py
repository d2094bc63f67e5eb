from pathlib import Path

from django.conf import settings

from cavity.params import HeatingModel
from cavity.units import mhz
from simulator.config import calibration, system_params
from simulator.io import emit_csv
from simulator.management.base import SelfTrapCommand, parse_float_list, parse_grid
from simulator.services.scans import trap_curve

CURVE_COLUMNS = ("power_uW", "saturation", "tau_ms", "trapped")
OPTIMA_COLUMNS = (
    "delta_C_MHz",
    "optimal_saturation",
    "optimal_tau_ms",
    "optimal_power_uW",
)


class Command(SelfTrapCommand):
    default_out = "."
    help = (
        "Trapping time against drive power from the empirical heating law, "
        "one CSV per cavity detuning plus the optima"
    )

    def add_run_arguments(self, parser):
        parser.add_argument("--powers", default="0.05:30:60", help="start:stop:count in uW")
        parser.add_argument(
            "--delta-c-mhz",
            type=parse_float_list,
            default=[-1.0, -2.0, -3.0],
            help="comma-separated cavity detunings",
        )
        parser.add_argument("--d0", type=float, default=None)
        parser.add_argument("--d1", type=float, default=None)

    def heating_for(self, delta_c_mhz, options):
        d0, d1 = self.config["d0"], self.config["d1"]
        fitted = settings.SELFTRAP_FITTED_HEATING.get(delta_c_mhz)
        if fitted and options["d0"] is None and options["d1"] is None:
            d0, d1 = fitted
        if options["d0"] is not None:
            d0 = options["d0"]
        if options["d1"] is not None:
            d1 = options["d1"]
        return HeatingModel.from_microkelvin(d0, d1, self.config["temperature_uK"])

    def run(self, options):
        config = self.load_config(options)
        params = system_params(config)
        anchor = calibration(config)
        powers = parse_grid(options["powers"])
        out = Path(options["out"])

        outputs = []
        optima = {name: [] for name in OPTIMA_COLUMNS}
        for delta_c_mhz in options["delta_c_mhz"]:
            curve = trap_curve(
                powers,
                mhz(delta_c_mhz),
                mhz(config["n_eff_u0_MHz"]),
                self.heating_for(delta_c_mhz, options),
                anchor,
                params,
            )
            outputs.append(
                emit_csv(
                    curve.columns(),
                    CURVE_COLUMNS,
                    out / f"trap_curve_{delta_c_mhz:+.2f}MHz.csv",
                )
            )
            optima["delta_C_MHz"].append(delta_c_mhz)
            optima["optimal_saturation"].append(curve.optimal_saturation)
            optima["optimal_tau_ms"].append(curve.optimal_tau_ms)
            optima["optimal_power_uW"].append(curve.optimal_power_uw)
            if curve.optimal_tau_ms is None:
                self.stdout.write(
                    self.style.WARNING(f"Delta_C = {delta_c_mhz} MHz: never trapped")
                )
            else:
                self.stdout.write(
                    f"Delta_C = {delta_c_mhz:+.2f} MHz: longest trapping "
                    f"{curve.optimal_tau_ms:.3f} ms at s = "
                    f"{curve.optimal_saturation:.4g} "
                    f"({curve.optimal_power_uw:.4g} uW)"
                )
        optima = {
            name: [float("nan") if v is None else v for v in values]
            for name, values in optima.items()
        }
        outputs.append(emit_csv(optima, OPTIMA_COLUMNS, out / "optima.csv"))
        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote {len(options['delta_c_mhz'])} trap curves to {out}"
            )
        )
        return outputs
