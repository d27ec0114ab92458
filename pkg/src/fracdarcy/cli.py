"""Command-line entry point: ``fracdarcy study <config.json>``."""
import argparse
import sys

from .study import ConfigError, StudyConfig, run_study


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fracdarcy",
        description="Convergence studies for Darcy flow in fractured porous media.")
    sub = parser.add_subparsers(dest="command", required=True)
    study = sub.add_parser("study", help="run a convergence study described by a JSON file")
    study.add_argument("config", help="JSON study configuration")
    study.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration entry (value parsed as JSON if possible)")
    study.add_argument("--vtk", action="store_true",
                       help="write VTK fields for every level into vtk_dir")
    study.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = StudyConfig.from_json(args.config).with_overrides(args.override)
        if args.vtk and not config.vtk_dir:
            raise ConfigError("--vtk needs vtk_dir in the configuration")
    except (OSError, ConfigError, TypeError) as exc:
        print(f"fracdarcy: error: {exc}", file=sys.stderr)
        return 2
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    result = run_study(config, log=log, vtk=args.vtk)
    if not config.output:
        sys.stdout.write(result.to_csv())
    return 0 if result.converged else 1


if __name__ == "__main__":
    sys.exit(main())
