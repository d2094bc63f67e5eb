import logging
import re
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from cavity.exceptions import InvalidParameters, SelfTrapError
from simulator.config import parse_config, parse_overrides
from simulator.io import manifest_path, write_manifest

logger = logging.getLogger(__name__)

# options every Django command has; they are not part of a run record
DJANGO_OPTIONS = {
    "verbosity",
    "settings",
    "pythonpath",
    "traceback",
    "no_color",
    "force_color",
    "skip_checks",
    "stdout",
    "stderr",
}


def command_error(exc):
    return CommandError(f"[{exc.category}] {exc}", returncode=exc.exit_code)


NEGATIVE_VALUE = re.compile(r"^-[\d.]")


def attach_negative_values(argv):
    """Join `--flag -1,-2` into `--flag=-1,-2`; argparse would read a
    negative list as an unknown option."""
    joined = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        following = argv[i + 1] if i + 1 < len(argv) else None
        if (
            arg.startswith("--")
            and "=" not in arg
            and following is not None
            and NEGATIVE_VALUE.match(following)
        ):
            joined.append(f"{arg}={following}")
            i += 2
            continue
        joined.append(arg)
        i += 1
    return joined


def parse_float_list(text):
    """`-1,-2,-3` into floats."""
    try:
        return [float(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise InvalidParameters(f"expected comma-separated numbers, got '{text}'")


def parse_grid(text):
    """``start:stop:count`` into a geometric grid; a single number is a
    one-point grid."""
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise InvalidParameters(f"expected start:stop:count, got '{text}'")
    if start <= 0 or stop <= 0 or count < 1:
        raise InvalidParameters(f"grid needs positive bounds and count, got '{text}'")
    return np.geomspace(start, stop, count)


class SelfTrapCommand(BaseCommand):
    """A run that writes result files under ``--out`` and a manifest next
    to them. Subclasses implement ``run`` and return the written paths."""

    requires_system_checks = []
    argv = None
    # --out when none is given; None means "<command>.csv"
    default_out = None

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="key = value file")
        parser.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="KEY=VALUE",
            help="override one config key",
        )
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--threads", type=int, default=settings.SELFTRAP_THREADS)
        parser.add_argument("--out", default=None, help="output path")
        parser.add_argument("--no-manifest", action="store_true")
        self.add_run_arguments(parser)

    def add_run_arguments(self, parser):
        pass

    def run_from_argv(self, argv):
        self.argv = attach_negative_values(argv)
        super().run_from_argv(self.argv)

    @property
    def name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def load_config(self, options, **flags):
        """Config file, then command flags, then `--set` and `--seed`."""
        overrides = {**flags, **parse_overrides(options["overrides"])}
        if options["seed"] is not None:
            overrides["seed"] = options["seed"]
        self.config = parse_config(options["config"], overrides)
        return self.config

    def progress(self, options):
        return options["verbosity"] >= 2

    def run(self, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        started = timezone.now()
        self.config = None
        if options["out"] is None:
            options["out"] = self.default_out or f"{self.name}.csv"
        if options["threads"] < 1:
            raise CommandError("--threads must be >= 1", returncode=2)
        try:
            outputs = self.run(options)
            if outputs and not options["no_manifest"]:
                recorded = {
                    k: v for k, v in options.items() if k not in DJANGO_OPTIONS
                }
                write_manifest(
                    manifest_path(options["out"]),
                    self.name,
                    recorded,
                    self.config,
                    outputs,
                    started,
                    argv=self.argv,
                )
        except SelfTrapError as exc:
            logger.debug("%s failed", self.name, exc_info=True)
            raise command_error(exc)

    def sibling(self, options, suffix, extension=".csv"):
        """Path next to ``--out`` with ``suffix`` added to its stem."""
        out = Path(options["out"])
        return out.with_name(f"{out.stem}{suffix}{extension}")
