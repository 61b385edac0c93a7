import os
import sys

from project.core.exceptions import ExitCode

SUBCOMMANDS = ("validate", "map", "plan", "run", "sweep", "report")

USAGE = f"""usage: holotest {{{'|'.join(SUBCOMMANDS)}}} [options]

Run `holotest <subcommand> --help` for the options of a subcommand.
"""


def main(argv: list[str] | None = None) -> int:
    """Console entry point; dispatches to the holotest management commands only."""
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] in ("-h", "--help", "help"):
        sys.stderr.write(USAGE)
        return ExitCode.OK if argv else ExitCode.USAGE
    if argv[0] not in SUBCOMMANDS:
        sys.stderr.write(f"holotest: unknown subcommand {argv[0]!r}\n{USAGE}")
        return ExitCode.USAGE

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "project.settings")
    from django.core.management import execute_from_command_line

    execute_from_command_line(["holotest", *argv])
    return ExitCode.OK


if __name__ == "__main__":
    sys.exit(main())
