from io import StringIO

from django.core.management import call_command
from django.core.management.base import BaseCommand

from cavity.exceptions import DigestMismatch, SelfTrapError
from simulator.io import changed_outputs, read_manifest
from simulator.management.base import command_error


class Command(BaseCommand):
    requires_system_checks = []
    help = (
        "Re-run the command recorded in a manifest and check that every "
        "output is reproduced byte for byte"
    )

    def add_arguments(self, parser):
        parser.add_argument("manifest")
        parser.add_argument(
            "--threads",
            type=int,
            default=None,
            help="re-run with a different thread count",
        )

    def handle(self, *args, **options):
        try:
            manifest = read_manifest(options["manifest"])
            replay = dict(manifest["options"], no_manifest=True)
            if options["threads"] is not None:
                replay["threads"] = options["threads"]
            call_command(
                manifest["command"], stdout=StringIO(), verbosity=0, **replay
            )
            changed = changed_outputs(manifest)
            if changed:
                raise DigestMismatch(
                    f"{len(changed)} output(s) differ from the manifest: "
                    + ", ".join(changed)
                )
        except SelfTrapError as exc:
            raise command_error(exc)
        self.stdout.write(
            self.style.SUCCESS(
                f"Reproduced {len(manifest['outputs'])} output(s) of "
                f"'{manifest['command']}'"
            )
        )
