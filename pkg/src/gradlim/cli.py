"""Command line entry point: ``gradlim run <experiment>`` and ``gradlim list``.

Exit status: 0 when no check failed, 1 when any check failed, 2 for usage
errors (argparse), 3 when the output or config file cannot be read or
written.
"""

import argparse
import json
import sys
from typing import List, Optional

from . import __version__
from .experiments import ALL, EXPERIMENTS, FORMATS, ExperimentConfig, run
from .registry import PRESET_TABLES, listing
from .report import render, summary_lines
from .stats import DEFAULT_K_SIGMA, DEFAULT_LEVEL, Verdict

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

# CLI flag -> config field, for preset-valued options
PRESET_FLAGS = {
    "law": "law", "scheme": "scheme", "phi": "phi", "chi": "chi", "h": "h", "f": "f",
    "eta": "eta", "zeta": "zeta", "sde": "sde", "time_change": "time_change",
}


def _n_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("n values must be positive integers")
    return values


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradlim", description="Monte Carlo checks of graduation and Euler error limits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment or the whole suite")
    r.add_argument("experiment", nargs="?", choices=EXPERIMENTS + (ALL,))
    r.add_argument("--experiment", dest="experiment_opt", choices=EXPERIMENTS + (ALL,))
    r.add_argument("--config", help="JSON or YAML file with config fields; flags override it")
    r.add_argument("--seed", type=int)
    r.add_argument("--samples", type=_positive_int, help="samples or replications per block")
    r.add_argument("--n-list", type=_n_list, dest="n_list", help="comma-separated resolutions")
    r.add_argument("--n", type=_positive_int, help="single resolution (shorthand for --n-list)")
    r.add_argument("--K", type=_positive_int, help="substeps per period for path experiments")
    r.add_argument("--alpha", type=float, help="constant c of the dyadic scaling c*4^n")
    for flag, kind in PRESET_FLAGS.items():
        r.add_argument(f"--{flag.replace('_', '-')}", dest=flag, choices=sorted(PRESET_TABLES[kind]))
    r.add_argument("--level", type=float, help=f"KS significance level (default {DEFAULT_LEVEL})")
    r.add_argument("--k-sigma", type=float, dest="k_sigma", help=f"tolerance in stderrs (default {DEFAULT_K_SIGMA:g})")
    r.add_argument("--format", choices=FORMATS)
    r.add_argument("--out", help="output file (default: stdout)")
    r.add_argument("--quiet", action="store_true", help="suppress the summary on stderr")

    sub.add_parser("list", help="list experiments and named presets")
    return parser


def _load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return data


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = _load_config_file(args.config) if args.config else {}
    experiment = args.experiment_opt or args.experiment or data.get("experiment")
    if args.experiment and args.experiment_opt and args.experiment != args.experiment_opt:
        raise ValueError("conflicting experiment names")
    if experiment is None:
        raise ValueError("name an experiment (or 'all')")
    data["experiment"] = experiment
    if args.n is not None and args.n_list is not None:
        raise ValueError("use either --n or --n-list")
    overrides = {
        "seed": args.seed, "samples": args.samples, "K": args.K, "alpha": args.alpha,
        "n_list": [args.n] if args.n is not None else args.n_list,
        "level": args.level, "k_sigma": args.k_sigma, "format": args.format, "out": args.out,
        **{field: getattr(args, field) for field in PRESET_FLAGS},
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        print(json.dumps({"experiments": list(EXPERIMENTS) + [ALL], "presets": listing()}, indent=2, sort_keys=True))
        return EXIT_OK

    try:
        cfg = config_from_args(args)
    except OSError as exc:
        print(f"gradlim: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        parser.error(str(exc))

    suite = run(cfg)
    text = render(suite, cfg.format)
    try:
        if cfg.out:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"gradlim: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        for line in summary_lines(suite):
            print(line, file=sys.stderr)
    return EXIT_FAIL if suite.verdict == Verdict.FAIL else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
