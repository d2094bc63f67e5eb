from cavity.params import HeatingModel
from cavity.services.core_model import saturation_for_power
from cavity.services.trap_physics import trapping_time_curve
from cavity.units import mhz
from simulator.config import calibration, system_params
from simulator.io import emit_csv, ingest_csv, write_report
from simulator.management.base import SelfTrapCommand
from simulator.services.estimation import fit_heating_coefficients

MODEL_COLUMNS = ("power_uW", "tau_ms", "tau_model_ms")


class Command(SelfTrapCommand):
    default_out = "fit_heating.json"
    help = (
        "Fit the heating coefficients d0, d1 to measured trapping times; "
        "the data CSV needs power_uW and tau_ms columns"
    )

    def add_run_arguments(self, parser):
        parser.add_argument("--data", required=True)
        parser.add_argument("--delta-c-mhz", type=float, default=None)

    def run(self, options):
        config = self.load_config(options)
        params = system_params(config)
        anchor = calibration(config)
        delta_c_mhz = options["delta_c_mhz"]
        if delta_c_mhz is None:
            delta_c_mhz = config["delta_C_MHz"]
        data = ingest_csv(options["data"], ["power_uW", "tau_ms"])
        powers = data["power_uW"].to_numpy()
        taus = data["tau_ms"].to_numpy()

        result = fit_heating_coefficients(
            powers,
            taus,
            params,
            config["temperature_uK"],
            mhz(delta_c_mhz),
            mhz(config["n_eff_u0_MHz"]),
            anchor,
            threads=options["threads"],
        )
        heating = HeatingModel.from_microkelvin(
            result.parameters["d0"], result.parameters["d1"], config["temperature_uK"]
        )
        s = saturation_for_power(
            powers, mhz(delta_c_mhz), mhz(config["n_eff_u0_MHz"]), anchor, params
        )
        report = write_report(
            options["out"],
            {"delta_C_MHz": delta_c_mhz, "data": options["data"], **result.as_dict()},
        )
        model = emit_csv(
            {
                "power_uW": powers,
                "tau_ms": taus,
                "tau_model_ms": trapping_time_curve(s, heating, params),
            },
            MODEL_COLUMNS,
            self.sibling(options, "_model"),
        )
        summary = "d0 = {:.4g}, d1 = {:.4g} (rms {:.3g} ms, {} points)".format(
            result.parameters["d0"],
            result.parameters["d1"],
            result.residual_rms,
            result.diagnostics["n_points"],
        )
        if result.parameter_bounds_hit:
            self.stdout.write(
                self.style.WARNING(
                    summary + f"; at bound: {', '.join(result.parameter_bounds_hit)}"
                )
            )
        else:
            self.stdout.write(self.style.SUCCESS(summary))
        return [report, model]
