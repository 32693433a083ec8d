"""Experiment runner: convergence tables for the limit theorems, CSV and plots.

Config file (TOML)::

    mode = "second-order"       # limit-check | second-order | abs-max | mc-crosscheck | tail-diagnostics
    n = [1000, 10000, 100000]
    points = [[0, 0, 0, 0], [1, -1, 1, -1]]
    output = "affine.csv"
    threads = 1

    [model]
    name = "affine"             # vanishing | diverging | affine | constant | custom
    # lambda = 1.0              # constant
    # expr = "t + 1"            # custom

    [mc]                        # mc-crosscheck only
    replications = 100000
    seed = 12345
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .corr_models import CorrelationModel, Regime
from .exact_engine import (
    DegenerateProbabilityError,
    abs_max_prob_exact,
    cross_tail_sum,
    joint_prob_exact,
    tail_sum,
)
from .gauss_core import DomainError
from .limit_laws import INF, LimitSpec, abs_max_limit, hr_exponent, joint_limit, max_law, mixture_exponent, tilde_H
from .mc_sim import simulate_joint_grid
from .norming import EvalPoint
from .second_order import LOG, LOGLOG, SecondOrderResult, second_order_rhs, tail_sum_expansion_rhs

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

MODES = ("limit-check", "second-order", "abs-max", "mc-crosscheck", "tail-diagnostics")
CSV_COLUMNS = (
    "n",
    "x1",
    "y1",
    "x2",
    "y2",
    "exact_prob",
    "limit",
    "deviation",
    "scale",
    "scaled_dev",
    "predicted_rhs",
    "rel_gap",
)
THREADS_ENV = "BVN_EXTREMES_THREADS"
EXIT_DEGENERATE = 3
EXIT_USAGE = 2


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ReportError(OSError):
    """Output could not be written or read."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    points: tuple[EvalPoint, ...]
    n_schedule: tuple[int, ...]
    mode: str = "limit-check"
    replications: int = 100_000
    seed: int = 0
    output: Path | None = None
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"field 'mode': expected one of {', '.join(MODES)}, got {self.mode!r}")
        if not self.points:
            raise ConfigError("field 'points': grid is empty")
        if not self.n_schedule:
            raise ConfigError("field 'n': schedule is empty")
        for k, n in enumerate(self.n_schedule):
            if not isinstance(n, int) or isinstance(n, bool) or n < 2:
                raise ConfigError(f"field 'n[{k}]': expected an integer >= 2, got {n!r}")
            if self.mode == "second-order" and n < 1000:
                raise ConfigError(f"field 'n[{k}]': second-order mode needs n >= 1000, got {n}")
        if any(b <= a for a, b in zip(self.n_schedule, self.n_schedule[1:])):
            raise ConfigError("field 'n': schedule must be strictly increasing")
        if self.mode == "mc-crosscheck" and self.replications < 100:
            raise ConfigError("field 'mc.replications': need >= 100")
        if self.threads < 1:
            raise ConfigError("field 'threads': need >= 1")
        try:
            CorrelationModel.from_name(self.model)
        except DomainError as exc:
            raise ConfigError(f"field 'model': {exc}") from None

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        try:
            return cls.from_mapping(raw, base=path.parent)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    @classmethod
    def from_mapping(cls, raw: dict, base: Path | None = None) -> "ExperimentConfig":
        known = {"mode", "n", "points", "output", "threads", "model", "mc"}
        extra = sorted(set(raw) - known)
        if extra:
            raise ConfigError(f"unknown field(s): {', '.join(extra)}")
        model = _model_name(raw.get("model"))
        points = tuple(_point(v, f"points[{k}]") for k, v in enumerate(_list(raw, "points")))
        ns = tuple(_list(raw, "n"))
        mc = raw.get("mc", {})
        if not isinstance(mc, dict):
            raise ConfigError("field 'mc': expected a table")
        out = raw.get("output")
        if out is not None:
            out = Path(out)
            if base is not None and not out.is_absolute():
                out = base / out
        return cls(
            model=model,
            points=points,
            n_schedule=ns,
            mode=raw.get("mode", "limit-check"),
            replications=_int(mc.get("replications", 100_000), "mc.replications"),
            seed=_int(mc.get("seed", 0), "mc.seed"),
            output=out,
            threads=_int(raw.get("threads", 1), "threads"),
        )


def _list(raw, key):
    v = raw.get(key)
    if not isinstance(v, list):
        raise ConfigError(f"field '{key}': expected an array")
    return v


def _int(v, name):
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"field '{name}': expected an integer, got {v!r}")
    return v


def _point(v, name):
    if not isinstance(v, list) or len(v) != 4 or not all(isinstance(c, (int, float)) for c in v):
        raise ConfigError(f"field '{name}': expected [x1, y1, x2, y2], got {v!r}")
    try:
        return EvalPoint(*(float(c) for c in v))
    except DomainError as exc:
        raise ConfigError(f"field '{name}': {exc}") from None


def _model_name(m) -> str:
    if isinstance(m, str):
        return m
    if not isinstance(m, dict) or "name" not in m:
        raise ConfigError("field 'model': expected a string or a table with 'name'")
    name = m["name"]
    if name == "constant":
        if "lambda" not in m:
            raise ConfigError("field 'model.lambda': required for the constant model")
        return f"constant:{float(m['lambda'])!r}"
    if name == "custom":
        if "expr" not in m:
            raise ConfigError("field 'model.expr': required for a custom profile")
        return f"custom:{m['expr']}"
    return str(name)


@dataclass(frozen=True)
class ConvergenceRecord:
    n: int
    point: EvalPoint
    exact_prob: float
    limit: float
    deviation: float
    scale: float
    scaled_dev: float
    predicted_rhs: float
    rel_gap: float

    @classmethod
    def build(cls, n, point, exact, limit, scale, rhs) -> "ConvergenceRecord":
        dev = exact - limit
        sd = scale * dev
        return cls(n, point, exact, limit, dev, scale, sd, rhs, abs(sd - rhs) / max(abs(rhs), 1e-12))

    def row(self) -> list[str]:
        vals = (*self.point.as_tuple(), self.exact_prob, self.limit, self.deviation, self.scale)
        vals += (self.scaled_dev, self.predicted_rhs, self.rel_gap)
        return [str(self.n)] + [format_float(v) for v in vals]


def format_float(v: float) -> str:
    return format(float(v), ".17g")


# -- running -------------------------------------------------------------------


@dataclass
class _Context:
    config: ExperimentConfig
    model: CorrelationModel = field(init=False)
    spec: LimitSpec = field(init=False)

    def __post_init__(self):
        self.model = CorrelationModel.from_name(self.config.model)
        self.spec = LimitSpec.for_model(self.model)


def _scale(rate: str, n: int) -> float:
    return SecondOrderResult(0.0, Regime.CONTINUOUS, rate).scale(n)


def _tail_limit(spec: LimitSpec, x: float, y: float) -> float:
    if spec.regime is Regime.VANISHING:
        return hr_exponent(0.0, x, y)
    if spec.regime is Regime.DIVERGING:
        return hr_exponent(INF, x, y)
    return mixture_exponent(spec, x, y)


def _cell(ctx: _Context, n: int, p: EvalPoint, threads: int, cache) -> ConvergenceRecord:
    mode, spec, model = ctx.config.mode, ctx.spec, ctx.model
    if mode in ("limit-check", "second-order"):
        so = cache("rhs", p, lambda: second_order_rhs(spec, p))
        lim = cache("limit", p, lambda: joint_limit(spec, p))
        exact = joint_prob_exact(model, n, p, threads=threads).total
        return ConvergenceRecord.build(n, p, exact, lim, so.scale(n), so.rhs)
    if mode == "abs-max":
        lim = cache("limit", p, lambda: abs_max_limit(spec, p.x2, p.y2))
        exact = abs_max_prob_exact(model, n, p.x2, p.y2, threads=threads)
        return ConvergenceRecord.build(n, p, exact, lim, math.nan, math.nan)
    if mode == "tail-diagnostics":
        lim = cache("limit", p, lambda: _tail_limit(spec, p.x2, p.y2))
        exact = tail_sum(model, n, p.x2, p.y2, threads=threads)
        if spec.regime in (Regime.CONTINUOUS, Regime.CONSTANT_HR):
            # b_n^2 (1 - rho) / 2 = m (1 - log log n / (2 log n) + ...) pulls the sum below its limit
            rhs = cache("rhs", p, lambda: -tail_sum_expansion_rhs(spec, p.x2, p.y2))
            return ConvergenceRecord.build(n, p, exact, lim, _scale(LOGLOG, n), rhs)
        return ConvergenceRecord.build(n, p, exact, lim, _scale(LOG, n), math.nan)
    raise AssertionError(mode)


def _mc_cells(ctx: _Context, n: int, threads: int) -> list[ConvergenceRecord]:
    cfg = ctx.config
    est = simulate_joint_grid(ctx.model, n, cfg.points, cfg.replications, cfg.seed, threads=threads)
    out = []
    for p, e in zip(cfg.points, est):
        exact = joint_prob_exact(ctx.model, n, p, threads=threads).total
        # limit column carries the Monte Carlo estimate; scaled_dev is the z-score
        scale = 1.0 / e.std_error if e.std_error > 0 else math.inf
        out.append(ConvergenceRecord.build(n, p, exact, e.estimate, scale, math.nan))
    return out


def _nan_record(n, p):
    nan = math.nan
    return ConvergenceRecord(n, p, nan, nan, nan, nan, nan, nan, nan)


def run_experiment(config: ExperimentConfig, errors: list | None = None) -> list[ConvergenceRecord]:
    """One record per (n, point), ordered by n then point index.

    Cells hitting a numerical degeneracy yield all-NaN records; the error is
    logged and appended to ``errors`` when given.
    """
    ctx = _Context(config)
    threads = config.threads
    memo = {}

    def cache(kind, p, fn):
        key = (kind, p)
        if key not in memo:
            memo[key] = fn()
        return memo[key]

    # limits and right-hand sides are shared across n; compute them once, serially
    if config.mode in ("limit-check", "second-order"):
        for p in config.points:
            cache("rhs", p, lambda: second_order_rhs(ctx.spec, p))
            cache("limit", p, lambda: joint_limit(ctx.spec, p))

    if config.mode == "mc-crosscheck":
        records = []
        for n in config.n_schedule:
            try:
                records.extend(_mc_cells(ctx, n, threads))
            except DegenerateProbabilityError as exc:
                _report_error(exc, errors)
                records.extend(_nan_record(n, p) for p in config.points)
        return records

    cells = [(n, p) for n in config.n_schedule for p in config.points]
    inner = 1 if len(cells) >= threads else threads

    def work(cell):
        n, p = cell
        try:
            return _cell(ctx, n, p, inner, cache), None
        except DegenerateProbabilityError as exc:
            return _nan_record(n, p), exc

    if threads <= 1 or inner > 1:
        results = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, cells))
    for _, exc in results:
        if exc is not None:
            _report_error(exc, errors)
    return [r for r, _ in results]


def _report_error(exc, errors):
    log.error("%s", exc)
    if errors is not None:
        errors.append(exc)


# -- output --------------------------------------------------------------------


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def parse_csv(text: str) -> list[ConvergenceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("CSV header does not match the record schema")
    out = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"line {k}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        v = [float(c) for c in row[1:]]
        out.append(ConvergenceRecord(int(row[0]), EvalPoint(*v[:4]), *v[4:]))
    return out


def emit_report(records, out_csv: str | Path, plots: bool = False, plot_dir: str | Path | None = None) -> list[Path]:
    """Write the CSV and, if ``plots``, one PNG per point; returns the paths written."""
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out_csv = Path(out_csv)
    try:
        with open(out_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(records_to_csv(records))
    except OSError as exc:
        raise ReportError(f"cannot write {out_csv}: {exc.strerror or exc}") from exc
    written = [out_csv]
    if plots:
        written += _plots(records, Path(plot_dir) if plot_dir else out_csv.parent, out_csv.stem)
    return written


def _plots(records, plot_dir: Path, stem: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    try:
        plot_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {plot_dir}: {exc.strerror or exc}") from exc
    by_point: dict[EvalPoint, list[ConvergenceRecord]] = {}
    for r in records:
        by_point.setdefault(r.point, []).append(r)
    paths = []
    for k, (p, rs) in enumerate(by_point.items()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot([math.log(r.n) for r in rs], [r.scaled_dev for r in rs], "o-", label="scaled deviation")
        rhs = rs[0].predicted_rhs
        if math.isfinite(rhs):
            ax.axhline(rhs, color="k", ls="--", lw=1, label="predicted limit")
        ax.set_xlabel("log n")
        ax.set_ylabel("scaled deviation")
        ax.set_title("(x1, y1, x2, y2) = ({:g}, {:g}, {:g}, {:g})".format(*p.as_tuple()), fontsize=9)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = plot_dir / f"{stem}_point{k}.png"
        try:
            fig.savefig(path, dpi=100)
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
        finally:
            plt.close(fig)
        paths.append(path)
    return paths


# -- command line ----------------------------------------------------------------


def _threads_default() -> int:
    v = os.environ.get(THREADS_ENV)
    if v is None:
        return 1
    try:
        return max(1, int(v))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={v!r} is not an integer") from None


def _read_grid(path) -> list[EvalPoint]:
    pts = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    for k, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            pts.append(EvalPoint.parse(line))
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"{path}:{k}: {exc}") from None
    return pts


def _points(args) -> tuple[EvalPoint, ...]:
    pts = []
    for s in args.point or []:
        try:
            pts.append(EvalPoint.parse(s))
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"--point: {exc}") from None
    if getattr(args, "grid", None):
        pts += _read_grid(args.grid)
    return tuple(pts)


def _n_list(text: str) -> list[int]:
    try:
        return [int(float(s)) if "e" in s.lower() else int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n list {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bvn-extremes", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, n=True, point=True, defaults=True):
        p.add_argument(
            "--model",
            default="affine" if defaults else None,
            help="vanishing | diverging | affine | constant:<lam> | custom:<expr> (default affine)",
        )
        if n:
            p.add_argument(
                "--n", type=_n_list, default=[1000] if defaults else None, help="comma-separated list, e.g. 1000,1e4"
            )
        if point:
            p.add_argument("--point", action="append", help="x1,y1,x2,y2 (repeatable)")
            p.add_argument("--grid", help="file with one x1,y1,x2,y2 per line")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("limits", help="evaluate limit laws and second-order constants")
    common(p, n=False)
    p = sub.add_parser("exact", help="exact finite-n joint probability")
    common(p)
    p = sub.add_parser("mc", help="Monte Carlo estimate")
    common(p)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("converge", help="sweep an n schedule and write a CSV table")
    common(p, defaults=False)
    p.add_argument("--config", help="TOML experiment file (flags below override it)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--plots", action="store_true")
    p = sub.add_parser("report", help="render plots from a CSV table")
    p.add_argument("csv")
    p.add_argument("--out", help="plot directory (default: next to the CSV)")
    return ap


def _cmd_limits(args, out):
    model = CorrelationModel.from_name(args.model)
    spec = LimitSpec.for_model(model)
    for p in _points(args) or (EvalPoint(0, 0, 0, 0),):
        so = second_order_rhs(spec, p)
        out.write(
            f"point={','.join(format(v, 'g') for v in p.as_tuple())} "
            f"H(x2,y2)={format_float(max_law(spec, p.x2, p.y2))} "
            f"Htilde(x1,y1)={format_float(tilde_H(spec, p.x1, p.y1))} "
            f"joint={format_float(joint_limit(spec, p))} "
            f"second_order={format_float(so.rhs)} rate={so.rate!r}\n"
        )


def _cmd_exact(args, out, threads):
    model = CorrelationModel.from_name(args.model)
    for n in args.n:
        for p in _points(args) or (EvalPoint(0, 0, 0, 0),):
            d = joint_prob_exact(model, n, p, threads=threads)
            c1, c2 = cross_tail_sum(model, n, p, threads=threads)
            out.write(
                f"n={n} point={','.join(format(v, 'g') for v in p.as_tuple())} total={format_float(d.total)} "
                f"pM={format_float(d.pM)} pMx={format_float(d.pMx)} pMy={format_float(d.pMy)} "
                f"pBox={format_float(d.pBox)} cross_tails={format_float(c1)},{format_float(c2)}\n"
            )


def _cmd_mc(args, out, threads):
    model = CorrelationModel.from_name(args.model)
    pts = _points(args) or (EvalPoint(0, 0, 0, 0),)
    for n in args.n:
        for p, e in zip(pts, simulate_joint_grid(model, n, pts, args.reps, args.seed, threads=threads)):
            out.write(
                f"n={n} point={','.join(format(v, 'g') for v in p.as_tuple())} estimate={format_float(e.estimate)} "
                f"std_error={format_float(e.std_error)} replications={e.replications} seed={e.seed}\n"
            )


def _converge_config(args, threads) -> ExperimentConfig:
    if args.config:
        kw = dict(ExperimentConfig.from_toml(args.config).__dict__)
    else:
        kw = dict(model="affine", points=(), n_schedule=(1000,), mode="limit-check")
    if args.model is not None:
        kw["model"] = args.model
    pts = _points(args)
    if pts:
        kw["points"] = pts
    if args.n is not None:
        kw["n_schedule"] = tuple(args.n)
    for flag, key in (("mode", "mode"), ("reps", "replications"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            kw[key] = getattr(args, flag)
    if args.out:
        kw["output"] = Path(args.out)
    if args.threads is not None or os.environ.get(THREADS_ENV) is not None or not args.config:
        kw["threads"] = threads
    return ExperimentConfig(**kw)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        threads = args.threads if getattr(args, "threads", None) is not None else _threads_default()
        if args.cmd == "limits":
            _cmd_limits(args, out)
        elif args.cmd == "exact":
            _cmd_exact(args, out, threads)
        elif args.cmd == "mc":
            _cmd_mc(args, out, threads)
        elif args.cmd == "converge":
            cfg = _converge_config(args, threads)
            errors: list = []
            records = run_experiment(cfg, errors)
            if cfg.output is not None:
                emit_report(records, cfg.output, plots=args.plots)
            else:
                out.write(records_to_csv(records))
            if errors:
                return EXIT_DEGENERATE
        elif args.cmd == "report":
            try:
                text = Path(args.csv).read_text(encoding="utf-8")
            except OSError as exc:
                raise ReportError(f"cannot read {args.csv}: {exc.strerror}") from None
            recs = parse_csv(text)
            plot_dir = Path(args.out) if args.out else Path(args.csv).parent
            for path in _plots(recs, plot_dir, Path(args.csv).stem):
                out.write(f"{path}\n")
    except ArithmeticError as exc:
        # degenerate per-row probabilities, unconverged quadrature, overflow
        log.error("%s", exc)
        return EXIT_DEGENERATE
    except (ConfigError, DomainError, ReportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
