"""Command-line entry point: ``labelalign <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data or numerical error, 3 a verified
inequality failed (bound or emergence check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import adapt, harness
from .adapt import AdaptConfig, RegularizedProblem
from .datagen import SyntheticSpec, synth_task
from .datasets import (
    DigitCorpus,
    binary_design,
    load_matrix_csv,
    load_mnist_corpus,
    load_usps_corpus,
    load_usps_csv,
)
from .errors import DataError, NumericalError, VerificationError
from .metrics import METRICS, evaluate
from .report import ExperimentReport
from .spectral import DesignMatrix

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("labelalign")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument helpers


def float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def parse_pairs(text: str) -> tuple[tuple[int, int], ...]:
    """'0-1,2-3' -> ((0, 1), (2, 3)); 'all' -> all 45 pairs; 'subset' -> the fixed 10."""
    if text == "all":
        return harness.ALL_PAIRS
    if text == "subset":
        return harness.SUBSET_PAIRS
    pairs = []
    for item in text.split(","):
        lo, sep, hi = item.strip().partition("-")
        if not sep or not lo.isdigit() or not hi.isdigit():
            raise argparse.ArgumentTypeError(f"bad digit pair {item!r}; use e.g. 0-1,2-3")
        a, b = sorted((int(lo), int(hi)))
        if a == b or b > 9:
            raise argparse.ArgumentTypeError(f"bad digit pair {item!r}")
        pairs.append((a, b))
    return tuple(pairs)


def load_config(path) -> dict:
    """Read TOML or JSON key-value defaults. Keys use the long flag names (dashes or underscores)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a table of key-value pairs")
    return data


def _config_defaults(data: dict, command: str, sub: argparse.ArgumentParser) -> dict:
    """Top-level keys plus the table named after the command, converted to parser types."""
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get(command, {}))
    actions = {a.dest: a for a in sub._actions}
    out = {}
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for command {command!r}")
        action = actions[dest]
        if action.type is not None and not isinstance(value, bool):
            text = ",".join(map(str, value)) if isinstance(value, list) else str(value)
            try:
                value = action.type(text)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        out[dest] = value
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML or JSON file of option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp for byte-identical output")
    p.add_argument("-v", "--verbose", action="store_true")


def _solver(p, default="closed"):
    p.add_argument("--solver", choices=harness.SOLVERS, default=default)


def _hyper(p):
    p.add_argument("--k", type=int, default=1, help="source spectral cutoff")
    p.add_argument("--k-tilde", type=int, default=1, help="target spectral cutoff")
    p.add_argument("--lam", type=float, default=1.0, help="regularization weight")
    p.add_argument("--mode", choices=adapt.MODES, default="label-align")
    p.add_argument("--l2-coef", type=float, default=0.0)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--step-size", default="auto", help="auto, inv2sigma1 or a positive number")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelalign", description="Label-alignment regularization for domain adaptation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("diagnose", help="rank, k(eps) and label energy curve of one dataset")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--csv", help="feature CSV; a final 'label' column holds the labels")
    src.add_argument("--mnist-dir", help="directory with MNIST IDX files")
    src.add_argument("--usps-csv", help="USPS CSV: 256 pixel columns then a 'label' column")
    src.add_argument("--synthetic", action="store_true", help="source domain of the default synthetic task")
    p.add_argument("--digits", type=parse_pairs, default=((0, 1),), help="digit pair, e.g. 0-1")
    p.add_argument("--split", choices=("train", "test"), default="train", help="MNIST split")
    p.add_argument("--add-bias", action="store_true", help="append a bias column to CSV features")
    p.add_argument("--eps", type=float_list, default=(0.1,))

    p = sub.add_parser("synth", help="rotated-Gaussian experiment")
    _common(p)
    _solver(p)
    p.add_argument("--task", choices=("classification", "regression"), default="classification")
    p.add_argument("--n-source", type=int, default=SyntheticSpec.n_source)
    p.add_argument("--n-target", type=int, default=SyntheticSpec.n_target)
    p.add_argument("--anisotropy", type=float_list, default=SyntheticSpec.anisotropy)
    p.add_argument("--rotation", type=float, default=SyntheticSpec.rotation_deg, help="degrees")
    p.add_argument("--lambdas", type=float_list, default=harness.DEFAULT_LAMBDAS)
    p.add_argument("--l2-coefs", type=float_list, default=harness.DEFAULT_L2_COEFS)

    p = sub.add_parser("mnist-usps", help="MNIST/USPS binary adaptation benchmark")
    _common(p)
    _solver(p, default="gd")
    p.add_argument("--mnist-dir", required=True)
    p.add_argument("--usps-train", required=True, help="USPS train CSV")
    p.add_argument("--usps-test", required=True, help="USPS test CSV")
    p.add_argument("--pairs", type=parse_pairs, default=harness.SUBSET_PAIRS, help="0-1,2-3,... or 'subset' or 'all'")
    p.add_argument("--columns", default=",".join(harness.MNIST_USPS_COLUMNS))
    p.add_argument("--ratio", type=float, help="run only the RATIO->U column")
    p.add_argument("--lambdas", type=float_list, default=harness.DEFAULT_LAMBDAS)
    p.add_argument("--cutoffs", type=int_list, help="shared k and k~ grid (default: doubling to rank)")
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--validation-size", type=int, default=100)

    p = sub.add_parser("bounds", help="check both distance bounds on random instances")
    _common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--max-d", type=int, default=10)
    p.add_argument("--max-n", type=int, default=100)

    p = sub.add_parser("emergence", help="correlated-feature alignment toy against its lower bound")
    _common(p)
    p.add_argument("--s", type=float_list, default=(0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 10.0))
    p.add_argument("--seeds", type=int, default=5, help="number of seeds starting at --seed")

    p = sub.add_parser("train", help="fit a single configuration on CSV data")
    _common(p)
    _solver(p)
    _hyper(p)
    p.add_argument("--source", required=True, help="source CSV with a 'label' column")
    p.add_argument("--target", required=True, help="target CSV; labels optional, used only for evaluation")
    p.add_argument("--metric", choices=sorted(METRICS), default="accuracy")

    p = sub.add_parser("sweep", help="grid search selected on labeled target validation points")
    _common(p)
    _solver(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True, help="target CSV with a 'label' column")
    p.add_argument("--lambdas", type=float_list, default=harness.DEFAULT_LAMBDAS)
    p.add_argument("--cutoffs", type=int_list)
    p.add_argument("--metric", choices=sorted(METRICS), default="accuracy")
    p.add_argument("--validation-size", type=int, default=100)
    p.add_argument("--iterations", type=int, default=5000)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**_config_defaults(load_config(args.config), args.command, sub))
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# commands


def _step(text):
    if text in adapt.STEP_RULES:
        return text
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--step-size must be one of {adapt.STEP_RULES} or a number") from None


def _load_labeled(path, what, required=True):
    design, labels = load_matrix_csv(path)
    if labels is None and required:
        raise DataError(f"{what} CSV {path} has no 'label' column")
    return design, labels


def cmd_diagnose(args) -> ExperimentReport:
    (lo, hi), = args.digits[:1]
    if args.csv:
        design, labels = _load_labeled(args.csv, "diagnose")
        if args.add_bias:
            design = DesignMatrix.with_bias(design.data)
        name = f"diagnose_{Path(args.csv).stem}"
    elif args.mnist_dir:
        corpus = load_mnist_corpus(args.mnist_dir)
        design, labels, _ = binary_design(getattr(corpus, args.split), lo, hi)
        name = f"diagnose_mnist_{lo}{hi}"
    elif args.usps_csv:
        design, labels, _ = binary_design(load_usps_csv(args.usps_csv), lo, hi)
        name = f"diagnose_usps_{lo}{hi}"
    else:
        src, _ = synth_task(SyntheticSpec(seed=args.seed))
        design, labels = src
        name = "diagnose_synthetic"
    report = harness.run_diagnose(design, labels, args.eps, name=name)
    report.seed = args.seed
    return report


def cmd_synth(args) -> ExperimentReport:
    if len(args.anisotropy) != 2:
        raise UsageError("--anisotropy takes two values")
    spec = SyntheticSpec(
        n_source=args.n_source,
        n_target=args.n_target,
        anisotropy=tuple(args.anisotropy),
        rotation_deg=args.rotation,
        seed=args.seed,
        task=args.task,
    )
    return harness.run_synth(spec, args.lambdas, args.l2_coefs, solver=args.solver)


def cmd_mnist_usps(args) -> ExperimentReport:
    mnist: DigitCorpus = load_mnist_corpus(args.mnist_dir)
    usps = load_usps_corpus(args.usps_train, args.usps_test)
    columns = [f"{args.ratio:g}->U"] if args.ratio is not None else [c for c in args.columns.split(",") if c]
    for c in columns:
        harness.parse_column(c)
    grid = harness.SweepGrid(lambdas=args.lambdas, cutoffs=args.cutoffs)
    return harness.run_mnist_usps(
        mnist,
        usps,
        args.pairs,
        columns,
        grid,
        solver=args.solver,
        seed=args.seed,
        iterations=args.iterations,
        validation_size=args.validation_size,
        progress=log.info,
    )


def cmd_bounds(args) -> ExperimentReport:
    return harness.run_bound_check(args.count, args.seed, n_range=(20, args.max_n), d_range=(2, args.max_d))


def cmd_emergence(args) -> ExperimentReport:
    return harness.run_emergence(args.s, range(args.seed, args.seed + args.seeds))


def cmd_train(args) -> ExperimentReport:
    step = _step(args.step_size)
    source, y = _load_labeled(args.source, "source")
    target, target_labels = _load_labeled(args.target, "target", required=False)
    cfg = AdaptConfig(
        k=args.k,
        k_tilde=args.k_tilde,
        lam=args.lam,
        iterations=args.iterations,
        step_size=step,
        mode=args.mode,
        l2_coef=args.l2_coef,
    )
    prob = RegularizedProblem(source, y, target, cfg)
    sol = harness.fit(prob, args.solver)
    report = ExperimentReport("train", seed=args.seed)
    report.add_rows("weights", [{"index": i, "weight": float(v), "seed": args.seed} for i, v in enumerate(sol.weights)])
    summary = {
        "config": cfg.as_dict(),
        "solver": sol.solver,
        "objective": adapt.objective_value(sol.weights, prob),
        "flags": sol.flags,
        f"source_{args.metric}": evaluate(args.metric, source.data @ sol.weights, y),
    }
    if target_labels is not None:
        summary[f"target_{args.metric}"] = evaluate(args.metric, target.data @ sol.weights, target_labels)
    report.summary = summary
    return report


def cmd_sweep(args) -> ExperimentReport:
    source, y = _load_labeled(args.source, "source")
    target, target_labels = _load_labeled(args.target, "target")
    prob = RegularizedProblem(source, y, target, AdaptConfig(iterations=args.iterations))
    n_val = min(args.validation_size, target.n)
    perm = np.random.Generator(np.random.PCG64(args.seed)).permutation(target.n)
    grid = harness.SweepGrid(lambdas=args.lambdas, cutoffs=args.cutoffs, selection_metric=args.metric)
    report = harness.run_sweep(
        prob, grid, target_labels, np.sort(perm[:n_val]), np.sort(perm[n_val:]), args.solver, seed=args.seed
    )
    report.summary["validation_size"] = n_val
    return report


COMMANDS = {
    "diagnose": cmd_diagnose,
    "synth": cmd_synth,
    "mnist-usps": cmd_mnist_usps,
    "bounds": cmd_bounds,
    "emergence": cmd_emergence,
    "train": cmd_train,
    "sweep": cmd_sweep,
}


def _emit(report: ExperimentReport, args) -> None:
    paths = report.write(args.out, fmt=args.format, timestamp=not args.no_timestamp)
    for path in paths:
        log.info("wrote %s", path)
    print(json.dumps(json.loads(report.to_json(timestamp=False))["summary"], indent=2, sort_keys=True))


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        report = COMMANDS[args.command](args)
    except VerificationError as exc:
        report = getattr(exc, "report", None)
        if report is not None:
            _emit(report, args)
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    _emit(report, args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
