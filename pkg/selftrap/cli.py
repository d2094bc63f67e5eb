"""``selftrap <subcommand> [options]``: thin front end over the simulator
management commands."""

import os
import sys

COMMANDS = {
    "simulate": "simulate",
    "trap-curve": "trap_curve",
    "collapse": "collapse",
    "fit-heating": "fit_heating",
    "fit-collapse": "fit_collapse",
    "scan-atom-number": "scan_atom_number",
    "verify-manifest": "verify_manifest",
}

USAGE = "usage: selftrap {{{}}} [options]\n".format(",".join(COMMANDS))


def dispatch(argv=None):
    """Run one subcommand and return its exit status; 2 on usage errors."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("-h", "--help"):
        sys.stdout.write(USAGE)
        return 0
    if not argv or argv[0] not in COMMANDS:
        sys.stderr.write(USAGE)
        if argv:
            sys.stderr.write(f"selftrap: unknown subcommand '{argv[0]}'\n")
        return 2

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "selftrap.settings")
    import django
    from django.core.management import load_command_class

    django.setup()
    name = COMMANDS[argv[0]]
    command = load_command_class("simulator", name)
    try:
        command.run_from_argv(["selftrap", name] + argv[1:])
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return 0
