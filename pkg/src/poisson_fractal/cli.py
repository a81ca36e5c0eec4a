"""Command-line experiment runner.

Subcommands: ``exact``, ``simulate``, ``be``, ``couple-check``, ``soup-dump``.
Settings come from defaults, then an optional JSON file (``--config``), then
flags. Exit codes: 0 success, 1 usage or config error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields

from .coverage import DEFAULT_DEPTH_CAP, InsufficientResolutionError
from .estimators import (
    MAX_PAIR_CLASSES,
    BudgetError,
    UnsupportedModelError,
    be_classify,
    coupling_check,
    exact_first_moment_mn,
    exact_mean_Mn,
    exact_second_moment_mn,
    mc_experiment,
)
from .grains import Model
from .measure import IntensitySpec, LawKind, RadiusLaw, single_cover_exponent, untouched_exponent_box
from .soup import UnsupportedLawError, sample_soup, write_soup

CSV_FIELDS = ("model", "d", "lambda", "n", "statistic", "value", "stderr", "replicates", "seed", "depth_cap")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    model: str = "box"
    d: int = 1
    lam: float = 1.0
    levels: list[int] = field(default_factory=lambda: [2])
    replicates: int = 1000
    seed: int = 0
    depth_cap: int = DEFAULT_DEPTH_CAP
    output: str | None = None
    format: str = "csv"
    workers: int | None = None
    law: str = "power"
    couple: float | None = None

    def validate(self) -> None:
        if self.model not in ("ball", "box"):
            raise UsageError(f"unknown model {self.model!r}")
        if self.law not in {k.value for k in LawKind}:
            raise UsageError(f"unknown law {self.law!r}; choose power, logplus or logminus")
        if self.format not in ("csv", "json"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.d < 1:
            raise UsageError("dimension must be positive")
        if not self.lam > 0:
            raise UsageError("lambda must be positive")
        if not self.levels or any(n < 1 for n in self.levels):
            raise UsageError("levels must be a non-empty list of positive integers")
        if self.depth_cap < 0:
            raise UsageError("depth cap must be non-negative")

    def spec(self) -> IntensitySpec:
        return IntensitySpec(Model(self.model), self.d, self.lam, RadiusLaw(LawKind(self.law), self.d))


@dataclass(frozen=True)
class SweepRow:
    model: str
    d: int
    lam: float
    n: int
    statistic: str
    value: float
    stderr: float
    replicates: int
    seed: int
    depth_cap: int

    def as_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return {k: out[k] for k in CSV_FIELDS}


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def render_rows(rows, fmt: str, fieldnames=CSV_FIELDS) -> str:
    dicts = [r.as_dict() if hasattr(r, "as_dict") else r for r in rows]
    if fmt == "json":
        return json.dumps(dicts, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fieldnames)
    for r in dicts:
        w.writerow([_fmt(r[k]) for k in fieldnames])
    return buf.getvalue()


def emit(text: str, output: str | None) -> None:
    """Write to stdout, or atomically to ``output`` (no partial files survive)."""
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(output))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".partial-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, output)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _row(cfg: RunConfig, n, stat, value, stderr=0.0, replicates=0) -> SweepRow:
    return SweepRow(cfg.model, cfg.d, float(cfg.lam), int(n), stat, float(value), float(stderr),
                    int(replicates), int(cfg.seed), int(cfg.depth_cap))


def cmd_exact(cfg: RunConfig) -> list[SweepRow]:
    spec, d, lam = cfg.spec(), cfg.d, cfg.lam
    if spec.law.kind is not LawKind.POWER:
        raise UsageError("exact tables are defined for the pure-power law only")
    rows = []
    if spec.model is Model.BALL:
        print("note: m_n statistics have closed forms for the box model only; "
              "ball rows cover M_n", file=sys.stderr)
    for n in cfg.levels:
        if spec.model is Model.BOX:
            e = untouched_exponent_box(n, d)
            rows += [
                _row(cfg, n, "untouched_exponent", e),
                _row(cfg, n, "p_untouched_lower", math.exp(-lam * 2**d) * n ** (-lam)),
                _row(cfg, n, "p_untouched", math.exp(-lam * e)),
                _row(cfg, n, "p_untouched_upper", float(n) ** (-lam)),
                _row(cfg, n, "mean_mn_lower", math.exp(-lam * 2**d) * float(n) ** (d - lam)),
                _row(cfg, n, "exact_mean_mn", exact_first_moment_mn(spec, n)),
            ]
            if n**d <= MAX_PAIR_CLASSES:
                m1, m2 = exact_first_moment_mn(spec, n), exact_second_moment_mn(spec, n)
                rows += [_row(cfg, n, "exact_second_moment_mn", m2), _row(cfg, n, "pz_lower_bound", m1 * m1 / m2)]
            else:
                print(f"note: second moment skipped at n={n} (needs {n**d} offset classes, "
                      f"budget {MAX_PAIR_CLASSES})", file=sys.stderr)
        if spec.model is Model.BOX or n > math.sqrt(d) / 2:
            c = single_cover_exponent(spec.model, n, d)
            rows += [_row(cfg, n, "single_cover_exponent", c), _row(cfg, n, "p_single_uncovered", math.exp(-lam * c))]
            if spec.model is Model.BALL:
                # M_n only counts grains of radius >= 1/n.
                c_n = single_cover_exponent(spec.model, n, d, radius_floor=1.0 / n)
                rows += [_row(cfg, n, "single_cover_exponent_phi_n", c_n),
                         _row(cfg, n, "p_single_uncovered_phi_n", math.exp(-lam * c_n))]
        exact_Mn = spec.model is Model.BOX or d == 1
        rows.append(_row(cfg, n, "exact_mean_Mn" if exact_Mn else "mean_Mn_circumscribed_upper", exact_mean_Mn(spec, n)))
        if spec.model is Model.BOX:
            rows.append(_row(cfg, n, "mean_Mn_upper", float(n) ** (d - lam) * math.exp(lam * 2**d)))
    return rows


def cmd_simulate(cfg: RunConfig) -> list[SweepRow]:
    if cfg.replicates < 2:
        raise UsageError("simulate needs at least 2 replicates")
    reports = mc_experiment(cfg.spec(), None, cfg.levels, cfg.replicates, cfg.depth_cap, cfg.seed,
                            workers=cfg.workers, couple=cfg.couple)
    return [
        _row(cfg, rep.level, name, est.value, est.stderr, rep.replicates)
        for rep in reports
        for name, est in rep.mc.items()
    ]


def cmd_be(cfg: RunConfig) -> dict:
    res = be_classify(RadiusLaw(LawKind(cfg.law), cfg.d), cfg.lam, cfg.d)
    return {
        "law": cfg.law, "d": cfg.d, "lambda": cfg.lam, "verdict": res.verdict.value,
        "necessary_exponent": res.necessary_exponent, "sufficient_exponent": res.sufficient_exponent,
    }


COUPLE_FIELDS = ("replicate", "seed", "subset", "mn_lambda", "mn_lambda_prime",
                 "lo_lambda", "lo_lambda_prime", "monotone")


def cmd_couple_check(cfg: RunConfig) -> list[dict]:
    if cfg.couple is None:
        raise UsageError("couple-check needs --couple LAMBDA_PRIME")
    if not 0 < cfg.couple <= cfg.lam:
        raise UsageError(f"--couple must lie in (0, {cfg.lam}]")
    n = cfg.levels[0]
    pairs = coupling_check(cfg.spec(), None, n, cfg.replicates, cfg.couple, cfg.seed, cfg.depth_cap)
    return [
        dict(replicate=i, seed=p.replicate_seed, subset=p.subset, mn_lambda=p.untouched[0],
             mn_lambda_prime=p.untouched[1], lo_lambda=p.covering_lo[0], lo_lambda_prime=p.covering_lo[1],
             monotone=p.monotone)
        for i, p in enumerate(pairs)
    ]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _levels(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    common.add_argument("--model", choices=["ball", "box"], default=None)
    common.add_argument("--dim", dest="d", type=int, default=None)
    common.add_argument("--lambda", dest="lam", type=float, default=None)
    common.add_argument("--levels", type=_levels, default=None, help="comma-separated, e.g. 2,4,8")
    common.add_argument("--replicates", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--depth-cap", dest="depth_cap", type=int, default=None)
    common.add_argument("--output", "-o", default=None)
    common.add_argument("--format", choices=["csv", "json"], default=None)
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--law", default=None, help="power, logplus or logminus")
    common.add_argument("--couple", type=float, default=None, help="thinning rate lambda' for the coupling check")

    parser = _Parser(prog="poisson-fractal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("exact", parents=[common], help="closed-form exponents and moments")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo coverage statistics")
    sub.add_parser("be", parents=[common], help="integral-criterion emptiness verdict")
    sub.add_parser("couple-check", parents=[common], help="per-replicate thinning monotonicity")
    sub.add_parser("soup-dump", parents=[common], help="write one sampled soup as text")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        aliases = {"lambda": "lam", "dim": "d", "depth-cap": "depth_cap"}
        names = {f.name for f in fields(RunConfig)}
        for key, val in loaded.items():
            key = aliases.get(key, key)
            if key not in names:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = val
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            values[f.name] = val
    try:
        cfg = RunConfig(**values)
        cfg.levels = [int(n) for n in cfg.levels]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad configuration: {exc}") from None
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        if args.command == "exact":
            text = render_rows(cmd_exact(cfg), cfg.format)
        elif args.command == "simulate":
            text = render_rows(cmd_simulate(cfg), cfg.format)
        elif args.command == "be":
            res = cmd_be(cfg)
            if cfg.format == "json":
                text = json.dumps(res, indent=1) + "\n"
            else:
                text = "".join(f"{k}: {_fmt(v)}\n" for k, v in res.items())
        elif args.command == "couple-check":
            text = render_rows(cmd_couple_check(cfg), cfg.format, COUPLE_FIELDS)
        else:
            buf = io.StringIO()
            write_soup(sample_soup(cfg.spec(), None, cfg.levels[0], cfg.seed), buf)
            text = buf.getvalue()
        emit(text, cfg.output)
    except UsageError as exc:
        print(f"poisson-fractal: {exc}", file=sys.stderr)
        return 1
    except (BudgetError, UnsupportedModelError, UnsupportedLawError, InsufficientResolutionError,
            ValueError, OSError) as exc:
        print(f"poisson-fractal: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
