from pathlib import Path

from cavity.exceptions import NO_DECAY
from simulator.config import calibration, drive_config, protocol_config, system_params
from simulator.io import emit_csv
from simulator.management.base import SelfTrapCommand
from simulator.services.dynamics import run_ensemble
from simulator.services.traces import (
    TRACE_COLUMNS,
    average_traces,
    extract_trapping_time,
    pointwise_standard_error,
)

AVERAGE_COLUMNS = TRACE_COLUMNS + ("photon_number_sem",)


class Command(SelfTrapCommand):
    help = (
        "Release the cloud, switch on the drive and record the cavity "
        "output; writes every trajectory and their average as CSV"
    )

    def add_run_arguments(self, parser):
        parser.add_argument("--traces", type=int, default=1)

    def run(self, options):
        config = self.load_config(options)
        params = system_params(config)
        drive = drive_config(config, params)
        protocol = protocol_config(config, params)

        traces = run_ensemble(
            protocol,
            drive,
            params,
            options["traces"],
            threads=options["threads"],
            calibration=calibration(config),
            progress=self.progress(options),
        )
        average = average_traces(traces)
        columns = average.columns()
        columns["photon_number_sem"] = pointwise_standard_error(traces)
        outputs = [emit_csv(columns, AVERAGE_COLUMNS, options["out"])]
        suffix = Path(options["out"]).suffix
        for i, trace in enumerate(traces):
            outputs.append(
                emit_csv(
                    trace.columns(),
                    TRACE_COLUMNS,
                    self.sibling(options, f"_trace{i:03d}", suffix),
                )
            )

        tau = extract_trapping_time(average)
        if tau is NO_DECAY:
            self.stdout.write(
                self.style.WARNING(
                    f"{len(traces)} trajectories: the transmission does not decay"
                )
            )
        else:
            self.stdout.write(
                self.style.SUCCESS(
                    f"{len(traces)} trajectories of {protocol.n_atoms:.4g} atoms: "
                    f"trapping time {tau:.3f} ms"
                )
            )
        return outputs
