"""Command line front end.

Exit status is 0 on success (whatever the decision), 1 on a usage error and
2 when the data or a parameter is outside the domain of the test. Standard
output carries CSV only; messages go to standard error.
"""

import argparse
import math
import sys

import numpy as np

from . import __version__
from ._validation import ConfigError, DataError, DomainError
from .gof import classical_gof_test, dp_mc_gof_test, zcdp_gof_test
from .gwas import output_perturbation_test
from .harness import PRESETS, TEST_IDS, ExperimentConfig, emit_csv, format_csv, preset, run_experiment
from .minchi import (
    classical_independence_test,
    dp_mc_min_test,
    independence_model,
    zcdp_min_chi2_test,
)
from .randnoise import RngStream
from .report import StatKind

DEFAULT_RHO = 0.001
NULL_SUM_TOLERANCE = 1e-3
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- file readers -----------------------------------------------------------------

def _data_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(raw, start=1):
        text = line.split("#", 1)[0].strip()
        if text:
            yield lineno, text


def _count(token, path, lineno):
    token = token.strip()
    try:
        value = int(token)
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected a nonnegative integer, got {token!r}") from None
    if value < 0:
        raise DataError(f"{path}:{lineno}: negative count {value}")
    return value


def read_histogram(path):
    """One nonnegative integer per line; ``#`` starts a comment."""
    counts = [_count(text, path, lineno) for lineno, text in _data_lines(path)]
    if not counts:
        raise DataError(f"{path}: no counts found")
    if len(counts) < 2:
        raise DataError(f"{path}: a histogram needs at least 2 cells")
    return np.array(counts, dtype=np.int64)


def read_table(path):
    """Comma-separated rows of nonnegative integers."""
    rows = []
    width = None
    for lineno, text in _data_lines(path):
        row = [_count(tok, path, lineno) for tok in text.split(",")]
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no table rows found")
    if len(rows) < 2 or width < 2:
        raise DataError(f"{path}: a table needs at least 2 rows and 2 columns")
    return np.array(rows, dtype=np.int64)


# -- argument types -----------------------------------------------------------------

def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _alpha(text):
    value = _positive_float(text)
    if value >= 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1): {text!r}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return value


def _float_list(text):
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None


def _int_list(text):
    try:
        values = [int(tok) for tok in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("sample sizes must be positive")
    return values


def _stat(text):
    try:
        return StatKind.coerce(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown statistic {text!r}; use proj, unproj or classical") from None


def _normalized_null(values):
    """Accept a null typed with rounded entries (sum within 1e-3) and rescale it to sum 1."""
    p = np.asarray(values, dtype=float)
    if np.any(p <= 0):
        raise DomainError("null probabilities must be positive")
    total = p.sum()
    if abs(total - 1.0) > NULL_SUM_TOLERANCE:
        raise DomainError(f"null probabilities sum to {total:.6g}, not 1")
    return p / total


# -- parser ----------------------------------------------------------------------------

def _add_privacy(p, with_mc=True):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--rho", type=_positive_float,
                       help=f"zCDP budget; Gaussian noise of variance 1/rho (default {DEFAULT_RHO})")
    if with_mc:
        group.add_argument("--epsilon", type=_positive_float,
                           help="pure-DP budget; Laplace noise and a Monte Carlo threshold")
    p.add_argument("--alpha", type=_alpha, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--stat", type=_stat, default=StatKind.PROJECTED,
                   help="proj, unproj or classical (non-private); default proj")
    p.add_argument("--seed", type=_seed, default=0, help="master seed (default 0)")
    if with_mc:
        p.add_argument("--mc-samples", type=_positive_int, default=59,
                       help="Monte Carlo null samples for --epsilon (default 59)")
        p.add_argument("--noise-variance", type=_positive_float, default=None,
                       help="noise variance plugged into the statistic for --epsilon "
                            "(default 8/epsilon^2, the Laplace variance)")


def build_parser():
    parser = _Parser(prog="dpchi2", description="Differentially private chi-square tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("test-gof", help="goodness-of-fit test on a histogram file")
    p.add_argument("input", help="histogram file: one count per line, '#' comments")
    p.add_argument("--null", type=_float_list, required=True,
                   help="comma-separated null probabilities (required)")
    _add_privacy(p)

    p = sub.add_parser("test-indep", help="independence test on a contingency table file")
    p.add_argument("input", help="table file: comma-separated counts, one row per line")
    _add_privacy(p)

    p = sub.add_parser("test-gwas", help="output-perturbation test on a 3 x 2 case/control table")
    p.add_argument("input", help="3 x 2 table file with equal column sums")
    _add_privacy(p, with_mc=False)

    p = sub.add_parser("simulate", help="Type I error / power sweep, CSV per sample size")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="named experiment setup (default: none, use --test and --null)")
    p.add_argument("--test", choices=TEST_IDS, default=None,
                   help="test to simulate when no preset is given (default zcdp-gof)")
    p.add_argument("--null", default=None,
                   help="null probabilities; for independence tests give row and column "
                        "marginals separated by ';' (default: preset's)")
    p.add_argument("--offset", type=_float_list, default=None,
                   help="alternative minus null, row-major, summing to 0 (default 0: the null)")
    p.add_argument("--n-grid", type=_int_list, default=None,
                   help="comma-separated sample sizes (default: preset's)")
    p.add_argument("--trials", type=_positive_int, default=None,
                   help="trials per sample size (default 5000, or the preset's)")
    p.add_argument("--workers", type=_positive_int, default=1,
                   help="worker processes; results do not depend on it (default 1)")
    p.add_argument("--out", default=None, help="output CSV path (default standard output)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--rho", type=_positive_float, help="zCDP budget (default 0.001 or preset's)")
    group.add_argument("--epsilon", type=_positive_float,
                       help="pure-DP budget for Monte Carlo tests (default sqrt(0.002) or preset's)")
    p.add_argument("--alpha", type=_alpha, default=None, help="significance level (default 0.05)")
    p.add_argument("--stat", type=_stat, default=None, help="proj, unproj or classical (default proj)")
    p.add_argument("--mc-samples", type=_positive_int, default=None,
                   help="Monte Carlo null samples (default 59)")
    p.add_argument("--seed", type=_seed, default=None, help="master seed (default 0)")
    p.add_argument("--noise-variance", type=_positive_float, default=None,
                   help="noise variance plugged into Monte Carlo statistics (default 8/epsilon^2)")
    return parser


# -- commands ---------------------------------------------------------------------------

def _emit(report):
    sys.stdout.write(report.csv_line() + "\n")


def _note(report):
    if not report.converged:
        print("warning: minimization hit its evaluation cap", file=sys.stderr)


def _cmd_test_gof(args):
    counts = read_histogram(args.input)
    p0 = _normalized_null(args.null)
    if p0.size != counts.size:
        raise DomainError(f"null has {p0.size} entries but the histogram has {counts.size} cells")
    rng = RngStream(args.seed)
    if args.stat is StatKind.CLASSICAL:
        report = classical_gof_test(counts, args.alpha, p0)
    elif args.epsilon is not None:
        report = dp_mc_gof_test(counts, args.epsilon, args.alpha, p0, args.stat,
                                m=args.mc_samples, rng=rng, noise_variance=args.noise_variance)
    else:
        rho = DEFAULT_RHO if args.rho is None else args.rho
        report = zcdp_gof_test(counts, rho, args.alpha, p0, args.stat, rng=rng)
    _emit(report)


def _cmd_test_indep(args):
    table = read_table(args.input)
    rng = RngStream(args.seed)
    if args.stat is StatKind.CLASSICAL:
        report = classical_independence_test(table, args.alpha)
    else:
        model = independence_model(*table.shape)
        if args.epsilon is not None:
            report = dp_mc_min_test(table, args.epsilon, args.alpha, model, args.stat,
                                    m=args.mc_samples, rng=rng,
                                    noise_variance=args.noise_variance)
        else:
            rho = DEFAULT_RHO if args.rho is None else args.rho
            report = zcdp_min_chi2_test(table, rho, args.alpha, model, args.stat, rng=rng)
    _note(report)
    _emit(report)


def _cmd_test_gwas(args):
    table = read_table(args.input)
    if args.stat is StatKind.UNPROJECTED:
        raise UsageError("test-gwas perturbs Pearson's statistic; --stat unproj does not apply")
    rho = DEFAULT_RHO if args.rho is None else args.rho
    _emit(output_perturbation_test(table, rho, args.alpha, rng=RngStream(args.seed)))


def _parse_null(text, test_id):
    try:
        parts = [[float(tok) for tok in part.split(",")] for part in text.split(";")]
    except ValueError:
        raise UsageError(f"cannot parse --null {text!r}") from None
    if test_id in ("zcdp-gof", "mc-gof"):
        if len(parts) != 1:
            raise UsageError("goodness-of-fit tests take a single null vector")
        return tuple(parts[0])
    if len(parts) != 2:
        raise UsageError("independence tests take --null 'row,marginals;column,marginals'")
    return tuple(tuple(p) for p in parts)


def _cmd_simulate(args):
    budget = args.epsilon if args.epsilon is not None else args.rho
    overrides = dict(n_grid=args.n_grid, trials=args.trials, alpha=args.alpha, budget=budget,
                     m=args.mc_samples, master_seed=args.seed, kind=args.stat,
                     noise_variance=args.noise_variance, offset=args.offset)
    if args.preset is not None:
        if args.test is not None and args.test != PRESETS[args.preset]["test_id"]:
            raise UsageError("--test conflicts with the preset's test")
        if args.null is not None:
            overrides["null"] = _parse_null(args.null, PRESETS[args.preset]["test_id"])
        cfg = preset(args.preset, **overrides)
    else:
        test_id = args.test or "zcdp-gof"
        if args.null is None or args.n_grid is None:
            raise UsageError("simulate needs --preset, or --null and --n-grid")
        params = {k: v for k, v in overrides.items() if v is not None}
        if budget is None and test_id in ("mc-gof", "mc-indep"):
            params["budget"] = math.sqrt(2 * DEFAULT_RHO)
        cfg = ExperimentConfig(test_id=test_id, null=_parse_null(args.null, test_id), **params)
    if _uses_epsilon(cfg.test_id) and args.rho is not None:
        raise UsageError(f"{cfg.test_id} is calibrated by Monte Carlo; give --epsilon, not --rho")
    if not _uses_epsilon(cfg.test_id) and args.epsilon is not None:
        raise UsageError(f"{cfg.test_id} is a zCDP test; give --rho, not --epsilon")

    def progress(row):
        print(f"n={row.n}: {row.rejections}/{row.trials} rejected, "
              f"{row.inconclusive} inconclusive", file=sys.stderr)

    rows = run_experiment(cfg, workers=args.workers, progress=progress)
    if args.out is None:
        sys.stdout.write(format_csv(rows))
    else:
        emit_csv(rows, args.out)


def _uses_epsilon(test_id):
    return test_id in ("mc-gof", "mc-indep")


COMMANDS = {
    "test-gof": _cmd_test_gof,
    "test-indep": _cmd_test_indep,
    "test-gwas": _cmd_test_gwas,
    "simulate": _cmd_simulate,
}


def main(argv=None):
    """Parse ``argv``, run the command and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
