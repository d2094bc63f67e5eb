#!/usr/bin/env python
"""selftrap management utility.

``manage.py test`` runs the suite; ``manage.py trap-curve ...`` (or any
hyphenated subcommand) goes through ``selftrap.cli.dispatch`` so exit
statuses match the ``selftrap`` entry point. Django names such as
``trap_curve`` work as well.
"""
import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "selftrap.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install the packages in requirements.txt "
            "into the active environment."
        ) from exc

    from selftrap.cli import COMMANDS, dispatch

    if len(sys.argv) > 1 and "-" in sys.argv[1] and sys.argv[1] in COMMANDS:
        sys.exit(dispatch(sys.argv[1:]))
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
