from cavity.units import mhz
from simulator.config import system_params
from simulator.io import emit_csv
from simulator.management.base import SelfTrapCommand
from simulator.services.collapse import (
    DecayModelParams,
    mean_decay_curve,
    transmission_from_n,
)

COLUMNS = ("t_ms", "n_mean", "n_meanfield", "transmission_norm")


class Command(SelfTrapCommand):
    help = (
        "Stochastic atom-number collapse of the self-trapped cloud, averaged "
        "over trajectories, with the mean-field curve"
    )

    def add_run_arguments(self, parser):
        parser.add_argument("--a", type=float, default=2.775, dest="a_param")
        parser.add_argument("--tau-ms", type=float, default=1.5)
        parser.add_argument("--delta-c-mhz", type=float, default=-1.87)
        parser.add_argument("--n0-u0-mhz", type=float, default=-1.0)
        parser.add_argument("--n0", type=int, default=10_000)
        parser.add_argument("--traces", type=int, default=10)
        parser.add_argument("--t-end-ms", type=float, default=40.0)
        parser.add_argument("--points", type=int, default=501)

    def run(self, options):
        config = self.load_config(options)
        params = system_params(config)
        model = DecayModelParams.from_physical(
            delta_c=mhz(options["delta_c_mhz"]),
            n0_u0=mhz(options["n0_u0_mhz"]),
            n0=options["n0"],
            a_param=options["a_param"],
            tau=options["tau_ms"],
            kappa=params.kappa,
        )
        curve = mean_decay_curve(
            model,
            options["t_end_ms"],
            options["traces"],
            master_seed=config["seed"],
            n_points=options["points"],
            threads=options["threads"],
        )
        eta = config["eta_over_kappa"] * params.kappa
        sampled = transmission_from_n(curve.times, curve.n_mean, model, eta)
        columns = {
            "t_ms": curve.times,
            "n_mean": curve.n_mean,
            "n_meanfield": curve.n_meanfield,
            "transmission_norm": sampled.transmission_norm,
        }
        path = emit_csv(columns, COLUMNS, options["out"])
        self.stdout.write(
            self.style.SUCCESS(
                f"{curve.n_trajectories} trajectories of {model.n0} atoms: "
                f"{curve.n_mean[-1]:.4g} left at {curve.times[-1]:.4g} ms"
            )
        )
        return [path]
