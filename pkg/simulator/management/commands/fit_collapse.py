from simulator.io import emit_csv, ingest_csv, write_report
from simulator.management.base import SelfTrapCommand
from simulator.services import estimation

MODEL_COLUMNS = ("t_ms", "data", "model")
DEFAULT_COLUMNS = {
    estimation.TRANSMISSION: "transmission_norm",
    estimation.ATOM_NUMBER: "n_mean",
}


class Command(SelfTrapCommand):
    default_out = "fit_collapse.json"
    help = (
        "Fit the mean-field collapse model to a decaying transmission or "
        "atom-number series and test it against a single exponential"
    )

    def add_run_arguments(self, parser):
        parser.add_argument("--data", required=True)
        parser.add_argument(
            "--observable",
            choices=[estimation.TRANSMISSION, estimation.ATOM_NUMBER],
            default=estimation.TRANSMISSION,
        )
        parser.add_argument("--column", default=None, help="data column to fit")
        parser.add_argument("--bootstrap", type=int, default=0, metavar="N")
        parser.add_argument("--mc-check", action="store_true")
        parser.add_argument("--n0", type=int, default=10_000)
        parser.add_argument("--nonexponentiality", action="store_true")

    def run(self, options):
        config = self.load_config(options)
        observable = options["observable"]
        column = options["column"] or DEFAULT_COLUMNS[observable]
        data = ingest_csv(options["data"], ["t_ms", column])
        series = (data["t_ms"].to_numpy(), data[column].to_numpy())

        if options["bootstrap"] > 0:
            result, _ = estimation.bootstrap_collapse_fit(
                series,
                n_resamples=options["bootstrap"],
                seed=config["seed"],
                observable=observable,
            )
        else:
            result = estimation.fit_collapse_model(
                series,
                observable=observable,
                threads=options["threads"],
                monte_carlo_check=options["mc_check"],
                n0=options["n0"],
                seed=config["seed"],
            )
        report = {"data": options["data"], "column": column, **result.as_dict()}
        if options["nonexponentiality"]:
            verdict = estimation.nonexponentiality_test(series, observable=observable)
            report["nonexponentiality"] = verdict.as_dict()
            report["nonexponentiality"].pop("model_fit", None)

        outputs = [write_report(options["out"], report)]
        outputs.append(
            emit_csv(
                {
                    "t_ms": series[0],
                    "data": series[1],
                    "model": estimation.collapse_model_curve(
                        series[0], result, observable
                    ),
                },
                MODEL_COLUMNS,
                self.sibling(options, "_model"),
            )
        )
        parameters = ", ".join(
            f"{name} = {result.parameters[name]:.4g}"
            for name in estimation.COLLAPSE_NAMES
        )
        self.stdout.write(self.style.SUCCESS(f"{parameters} (rms {result.residual_rms:.3g})"))
        if options["nonexponentiality"]:
            verdict_text = (
                "non-exponential" if report["nonexponentiality"]["non_exponential"]
                else "consistent with a single exponential"
            )
            self.stdout.write(
                f"residual improvement {report['nonexponentiality']['improvement']:.3g}: "
                f"{verdict_text}"
            )
        return outputs
