"""Experiment runner.

    mkme <command> [flags] [--config FILE]

Commands: estimate, synth-gauss, synth-t, two-sample, hsic, kde. Each run
writes ``results.csv`` and ``manifest.json`` into ``--out``. A config file
holds ``key = value`` lines using the long flag names (``bw-grid = 0.5,1,2``);
command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import density, hsic, mmd, synth
from .estimators import BASE_KINDS, FKMSE, SKMSE, check_kind, inner_product, select_params, shrinkage_loocv
from .kernels import gram, median_heuristic
from .rng import child_seed, substream
from .selection import loocv_objective

COMMANDS = ("estimate", "synth-gauss", "synth-t", "two-sample", "hsic", "kde")


class ConfigError(ValueError):
    """Invalid configuration; reported with usage and exit status 2."""


@dataclass
class Dataset:
    name: str
    matrix: np.ndarray
    labels: np.ndarray | None = None


def load_csv(path, has_header: bool = False, label_col: int | None = None) -> Dataset:
    """Read a comma-separated numeric table.

    Every cell must parse as a finite real. With ``label_col`` that column is
    split out as ``labels``.
    """
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"{path}: no such file")
    rows: list[list[float]] = []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, fields in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ValueError(f"{path}: line {lineno}: expected {width} fields, got {len(fields)}")
            values = []
            for col, text in enumerate(fields, start=1):
                try:
                    v = float(text)
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}, column {col}: not a number: {text.strip()!r}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}: line {lineno}, column {col}: not finite: {text.strip()!r}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    matrix = np.array(rows, dtype=float)
    labels = None
    if label_col is not None:
        if not 0 <= label_col < matrix.shape[1]:
            raise ValueError(f"{path}: label column {label_col} out of range for {matrix.shape[1]} columns")
        labels = matrix[:, label_col].copy()
        matrix = np.delete(matrix, label_col, axis=1)
        if matrix.shape[1] == 0:
            raise ValueError(f"{path}: no feature columns left after removing the label column")
    return Dataset(path.stem, matrix, labels)


# --- argument parsing --------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _estimators(text: str) -> list[str]:
    try:
        return [check_kind(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mkme", description="Marginalized kernel mean estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_estimators=BASE_KINDS):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="results")
        p.add_argument("--estimators", type=_estimators, default=list(default_estimators))
        p.add_argument("--config", help="key = value file; flags given on the command line win")

    def data_args(p, required=True):
        p.add_argument("--data", required=required)
        p.add_argument("--header", action="store_true")
        p.add_argument("--label-col", type=int, default=None)

    p = sub.add_parser("estimate", help="fit estimators to a CSV sample and report their parameters")
    common(p)
    data_args(p)
    p.add_argument("--bw-multiplier", type=float, default=1.0)

    p = sub.add_parser("synth-gauss", help="loss against a known mixture of Gaussians")
    common(p)
    p.add_argument("--d", type=_int_list, default=[5])
    p.add_argument("--n", type=_int_list, default=[50])
    p.add_argument("--copies", type=int, default=30)
    p.add_argument("--sigma2-grid", type=_float_list, default=None, help="fixed-variance MKME sweep instead of LOOCV")

    p = sub.add_parser("synth-t", help="test NLL on t-distributed data")
    common(p)
    p.add_argument("--d", type=_int_list, default=[10])
    p.add_argument("--n", type=_int_list, default=[60])
    p.add_argument("--copies", type=int, default=30)
    p.add_argument("--df", type=float, default=3.0)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--bw-grid", type=_float_list, default=list(density.DEFAULT_BW_GRID))
    p.add_argument("--prototypes", type=int, default=10)

    p = sub.add_parser("two-sample", help="permutation MMD two-sample test")
    common(p)
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--header", action="store_true")
    p.add_argument("--label-col", type=int, default=None)
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--d", type=_int_list, default=[1], help="synthetic power mode (no --a/--b)")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--generator", choices=("gauss", "mog"), default="gauss")
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--same", action="store_true", help="draw both samples from one distribution")

    p = sub.add_parser("hsic", help="permutation HSIC independence test and power study")
    common(p)
    data_args(p)
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--alpha", type=_float_list, default=[0.05])
    p.add_argument("--eta", type=_float_list, default=[1.0])
    p.add_argument("--repetitions", type=int, default=1)

    p = sub.add_parser("kde", help="density estimation by kernel mean matching")
    common(p)
    data_args(p)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--bw-grid", type=_float_list, default=list(density.DEFAULT_BW_GRID))
    p.add_argument("--prototypes", type=int, default=10)
    p.add_argument("--repeats", type=int, default=1)
    return parser


def read_config(path) -> list[str]:
    """Turn ``key = value`` lines into argv tokens."""
    tokens: list[str] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens.extend([flag, value])
    return tokens


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and argv and argv[0] in COMMANDS:
        try:
            file_tokens = read_config(known.config)
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
        except ConfigError as exc:
            parser.error(str(exc))
        argv = [argv[0]] + file_tokens + argv[1:]
    args = parser.parse_args(argv)
    try:
        validate(args)
    except ConfigError as exc:
        parser.error(str(exc))
    return args


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate(args: argparse.Namespace) -> None:
    _require(args.seed >= 0, "--seed must be nonnegative")
    _require(len(args.estimators) > 0, "--estimators must name at least one estimator")
    cmd = args.command
    if cmd in ("synth-gauss", "synth-t"):
        _require(all(d >= 1 for d in args.d) and args.d, "--d must be positive integers")
        _require(all(n >= 3 for n in args.n) and args.n, "--n must be integers >= 3")
        _require(args.copies >= 1, "--copies must be at least 1")
    if cmd == "synth-gauss" and args.sigma2_grid is not None:
        _require(args.sigma2_grid and all(s >= 0 for s in args.sigma2_grid), "--sigma2-grid must be nonnegative")
    if cmd == "synth-t":
        _require(args.df > 0, "--df must be positive")
        _require(args.test_size >= 1, "--test-size must be at least 1")
    if cmd in ("synth-t", "kde"):
        _require(args.bw_grid and all(m > 0 for m in args.bw_grid), "--bw-grid must hold positive multipliers")
        _require(args.prototypes >= 1, "--prototypes must be at least 1")
    if cmd == "kde":
        _require(0.0 < args.test_fraction < 1.0, "--test-fraction must be in (0, 1)")
        _require(args.repeats >= 1, "--repeats must be at least 1")
    if cmd == "estimate":
        _require(args.bw_multiplier > 0, "--bw-multiplier must be positive")
    if cmd == "two-sample":
        _require(args.perms >= 1, "--perms must be at least 1")
        _require(0.0 < args.alpha < 1.0, "--alpha must be in (0, 1)")
        _require((args.a is None) == (args.b is None), "--a and --b go together")
        if args.a is None:
            _require(args.n >= 3, "--n must be at least 3")
            _require(args.trials >= 1, "--trials must be at least 1")
            _require(all(d >= 1 for d in args.d) and args.d, "--d must be positive integers")
    if cmd == "hsic":
        _require(args.perms >= 1, "--perms must be at least 1")
        _require(args.alpha and all(0.0 < a < 1.0 for a in args.alpha), "--alpha values must be in (0, 1)")
        _require(args.eta and all(0.0 < e <= 1.0 for e in args.eta), "--eta values must be in (0, 1]")
        _require(args.repetitions >= 1, "--repetitions must be at least 1")
        bad = [k for k in args.estimators if k not in BASE_KINDS]
        _require(not bad, f"hsic supports {', '.join(BASE_KINDS)}; got {', '.join(bad)}")


# --- commands ---------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def run_estimate(args, seed: int):
    data = load_csv(args.data, args.header, args.label_col)
    xs = data.matrix
    theta2 = args.bw_multiplier * median_heuristic(xs)
    rows = []
    for kind in args.estimators:
        params = select_params(kind, xs, theta2)
        est = params.apply(xs)
        if kind in (SKMSE, FKMSE):
            score = float(shrinkage_loocv(gram(xs, xs, theta2), [params.lam], kind)[0])
        else:
            score = loocv_objective(xs, theta2, params.noise)
        rows.append(
            {
                "estimator": kind,
                "n": xs.shape[0],
                "d": xs.shape[1],
                "theta2": theta2,
                "corruption": str(params.noise),
                "lambda": "" if params.lam is None else params.lam,
                "loocv": score,
                "beta_sum": float(est.beta.sum()),
                "rkhs_norm2": inner_product(est, est),
            }
        )
    return rows, {}


def run_synth_gauss(args, seed: int):
    rows = []
    if args.sigma2_grid is not None:
        for d in args.d:
            for n in args.n:
                for r in synth.sigma_sweep(d, n, args.sigma2_grid, args.copies, seed):
                    rows.append({"d": d, "n": n, "estimator": "mkme_fixed", "sigma2": r["sigma2"],
                                 "mean_loss": r["mean_loss"], "stderr": r["stderr"]})
        return rows, {}
    for r in synth.risk_experiment(args.d, args.n, args.copies, args.estimators, seed):
        rows.append({k: r[k] for k in ("d", "n", "estimator", "mean_loss", "stderr")})
    return rows, {}


def run_synth_t(args, seed: int):
    out = synth.t_nll_experiment(
        args.d, args.n, args.copies, args.estimators, seed, df=args.df,
        test_size=args.test_size, bw_grid=args.bw_grid, prototypes=args.prototypes,
    )
    return [{k: r[k] for k in ("d", "n", "estimator", "mean_nll", "stderr")} for r in out], {}


def _gauss_gen(shift: float):
    def gen(d, n, rng):
        x = rng.standard_normal((n, d))
        x[:, 0] += shift
        return x

    return gen


def _mog_gen(seed: int, key: str):
    def gen(d, n, rng):
        return synth.sample_mog(synth.sample_mog_spec(d, substream(seed, "mog", key, d)), n, rng)

    return gen


def run_two_sample(args, seed: int):
    if args.a is not None:
        a = load_csv(args.a, args.header, args.label_col).matrix
        b = load_csv(args.b, args.header, args.label_col).matrix
        rows, results = [], {}
        for kind in args.estimators:
            res = mmd.two_sample_test(a, b, kind, B=args.perms, alpha=args.alpha, seed=child_seed(seed, "perm"))
            row = {"estimator": kind, "statistic": res.statistic, "p_value": res.p_value,
                   "rejected": res.rejected, "theta2": res.info["theta2"]}
            rows.append(row)
            results[kind] = {k: row[k] for k in ("statistic", "p_value", "rejected", "theta2")}
        return rows, {"results": results}
    if args.generator == "gauss":
        gen1, gen2 = _gauss_gen(0.0), _gauss_gen(0.0 if args.same else args.shift)
    else:
        gen1 = _mog_gen(seed, "p")
        gen2 = gen1 if args.same else _mog_gen(seed, "q")
    out = mmd.power_curve(gen1, gen2, args.d, args.n, args.trials, args.estimators, seed, B=args.perms, alpha=args.alpha)
    return [{"d": r["d"], "n": args.n, "estimator": r["estimator"], "power": r["power"], "trials": r["trials"]} for r in out], {}


def _split_xy(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if data.labels is not None:
        return data.matrix, data.labels[:, None]
    if data.matrix.shape[1] < 2:
        raise ValueError("hsic needs at least two columns")
    return data.matrix[:, :-1], data.matrix[:, -1:]


def run_hsic(args, seed: int):
    xs, ys = _split_xy(load_csv(args.data, args.header, args.label_col))
    out = hsic.power_study(xs, ys, args.eta, args.alpha, args.repetitions, args.perms, args.estimators, seed)
    return [{k: r[k] for k in ("alpha", "eta", "estimator", "power", "repetitions")} for r in out], {}


def run_kde(args, seed: int):
    xs = load_csv(args.data, args.header, args.label_col).matrix
    rows = []
    for kind in args.estimators:
        nlls, mults = [], []
        for r in range(args.repeats):
            res = density.kde_pipeline(
                xs, kind, test_fraction=args.test_fraction, bw_grid=args.bw_grid,
                seed=child_seed(seed, "repeat", r), prototypes=args.prototypes,
            )
            nlls.append(res.nll)
            mults.append(res.multiplier)
        rep = synth.RiskReport.from_losses(nlls)
        rows.append({"estimator": kind, "mean_nll": rep.mean, "stderr": rep.stderr,
                     "multipliers": ";".join(_fmt(m) for m in mults), "repeats": args.repeats})
    return rows, {}


RUNNERS = {
    "estimate": run_estimate,
    "synth-gauss": run_synth_gauss,
    "synth-t": run_synth_t,
    "two-sample": run_two_sample,
    "hsic": run_hsic,
    "kde": run_kde,
}


def write_csv(path: Path, rows: list[dict]) -> None:
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(k, "")) for k in fields])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    seed = child_seed(args.seed, args.command)
    rows, extra = RUNNERS[args.command](args, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", rows)
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in vars(args).items() if k != "config"},
        "seed": args.seed,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "mkme": _version()},
        "wall_time_s": time.perf_counter() - start,
        "outputs": ["results.csv", "manifest.json"],
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return run(args)
    except Exception as exc:  # runtime failure: one diagnostic line, exit 1
        print(f"mkme {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
