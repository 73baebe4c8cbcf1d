"""Experiment runner: parameter sweeps over the theory, landscape, and
Monte Carlo modules, written as machine-readable CSV/JSON tables.

Subcommands: theory, bayes, hebb, simulate, landscape, phase, and
`figure <1..5>` which bundles the sweeps behind each standard figure.
Grids use the syntax `lo:hi:Nlog` / `lo:hi:Nlin` or explicit comma lists;
exactly one parameter may be swept per invocation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
from dataclasses import dataclass, field, replace
from functools import partial
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, TextIO

from .landscape import alpha_star, minimize_landscape
from .losses import DomainError, NumericalError, get_loss
from .observables import (bayes_error, generalization_error,
                          hebb_estimator_theory)
from .simulator import (SolverConfig, fit_iterative, fit_ridge, generate,
                        measure)
from .state_evolution import (FixedPointConfig, ModelParams,
                              solve_fixed_point, solve_square_closed_form)

log = logging.getLogger("gmm")

#: CSV header, fixed order
FIELDS = [
    "mode", "loss", "alpha", "delta", "rho", "lambda",
    "m", "q", "b", "gamma", "eps_gen", "train_loss", "eps_bayes",
    "converged", "d", "replicates", "stderr_eps", "seed",
]

AXES = ("alpha", "delta", "rho", "lambda")
MODES = ("theory", "bayes", "hebb", "simulate", "landscape", "phase")

#: numeric columns carry this token instead of inf/nan
DIVERGED = "diverged"


@dataclass(frozen=True)
class SimSpec:
    d: int = 1000
    replicates: int = 20
    seed: int = 0
    test_size: int = 100_000

    def __post_init__(self):
        if self.d < 1 or self.replicates < 1 or self.test_size < 0:
            raise DomainError("d and replicates must be >= 1, "
                              "test_size >= 0")


@dataclass(frozen=True)
class SweepSpec:
    """One swept axis, everything else fixed."""

    axis: str
    grid: tuple
    fixed: Dict[str, object]  # alpha, delta, rho, lambda, loss (name)
    modes: tuple
    sim: Optional[SimSpec] = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise DomainError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.grid:
            raise DomainError("grid must be nonempty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise DomainError("grid must be strictly increasing")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise DomainError(f"unknown modes {sorted(unknown)}")
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "modes", tuple(self.modes))

    def params_at(self, value: float) -> ModelParams:
        kw = dict(self.fixed)
        kw[self.axis] = value
        return ModelParams(alpha=kw["alpha"], delta=kw["delta"],
                           rho=kw["rho"], lam=kw["lambda"],
                           loss=kw.get("loss", "square"))


@dataclass
class ResultRow:
    mode: str
    loss: str = ""
    alpha: Optional[float] = None
    delta: Optional[float] = None
    rho: Optional[float] = None
    lam: Optional[float] = None
    m: Optional[float] = None
    q: Optional[float] = None
    b: Optional[float] = None
    gamma: Optional[float] = None
    eps_gen: Optional[float] = None
    train_loss: Optional[float] = None
    eps_bayes: Optional[float] = None
    converged: Optional[bool] = None
    d: Optional[int] = None
    replicates: Optional[int] = None
    stderr_eps: Optional[float] = None
    seed: Optional[int] = None

    _ATTRS = ["mode", "loss", "alpha", "delta", "rho", "lam", "m", "q", "b",
              "gamma", "eps_gen", "train_loss", "eps_bayes", "converged",
              "d", "replicates", "stderr_eps", "seed"]

    def values(self) -> list:
        return [getattr(self, a) for a in self._ATTRS]


def _fmt(v) -> str:
    """CSV cell: '' for absent, 'diverged' for non-finite, 17 significant
    digits for floats."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    f = float(v)
    if not math.isfinite(f):
        return DIVERGED
    return format(f, ".17g")


def _jsonable(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    f = float(v)
    return f if math.isfinite(f) else DIVERGED


def emit(rows: Sequence[ResultRow], fmt: str, out: TextIO) -> None:
    """Serialize rows; CSV uses RFC-4180 quoting with LF line endings."""
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n",
                            quoting=csv.QUOTE_MINIMAL)
        writer.writerow(FIELDS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row.values()])
    elif fmt == "json":
        payload = [dict(zip(FIELDS, map(_jsonable, row.values())))
                   for row in rows]
        json.dump(payload, out, indent=1)
        out.write("\n")
    else:
        raise DomainError(f"unknown format {fmt!r}")


def parse_rows(text: str) -> List[ResultRow]:
    """Inverse of csv emit (used by tests and downstream consumers)."""
    reader = csv.reader(text.splitlines())
    header = next(reader)
    if header != FIELDS:
        raise DomainError(f"unexpected header {header}")
    rows = []
    for rec in reader:
        kw = {}
        for attr, name, cell in zip(ResultRow._ATTRS, FIELDS, rec):
            if cell == "":
                kw[attr] = None
            elif name in ("mode", "loss"):
                kw[attr] = cell
            elif name == "converged":
                kw[attr] = cell == "true"
            elif cell == DIVERGED:
                kw[attr] = math.inf
            elif name in ("d", "replicates", "seed"):
                kw[attr] = int(cell)
            else:
                kw[attr] = float(cell)
        rows.append(ResultRow(**kw))
    return rows


# ----------------------------------------------------------------------------
# row builders
# ----------------------------------------------------------------------------

def _base_row(mode: str, p: ModelParams, with_loss: bool = True) -> ResultRow:
    return ResultRow(mode=mode,
                     loss=p.loss.kind.value if with_loss else "",
                     alpha=p.alpha, delta=p.delta, rho=p.rho, lam=p.lam)


def theory_row(p: ModelParams,
               warm: Optional[FixedPointConfig] = None) -> ResultRow:
    if p.loss.kind.value == "square":
        rep = solve_square_closed_form(p)
    else:
        rep = solve_fixed_point(p, warm or FixedPointConfig())
        if not rep.converged and rep.status == "max_iter":
            # stalled, not diverging: near the separability transition at
            # weak regularization the iteration converges but slowly, so
            # retry from the stalled state with a larger budget
            retry = FixedPointConfig(init=rep.overlaps, max_iter=60000)
            rep = solve_fixed_point(p, retry)
    row = _base_row("theory", p)
    ov = rep.overlaps
    row.m, row.q, row.b, row.gamma = ov.m, ov.q, ov.b, ov.gamma
    row.eps_gen, row.train_loss = rep.eps_gen, rep.train_loss
    row.eps_bayes = bayes_error(p).eps_bo
    # a diverging Lagrange multiplier below the separability transition is a
    # physical terminal state, not a solver failure
    row.converged = rep.converged or rep.status == "diverging-gamma"
    row._report = rep  # noqa: SLF001 -- warm-start handoff, not serialized
    return row


def bayes_row(p: ModelParams) -> ResultRow:
    bp = bayes_error(p)
    row = _base_row("bayes", p, with_loss=False)
    row.lam = None
    row.m, row.q, row.b = bp.m_bo, bp.q_bo, bp.b_bo
    row.eps_gen = row.eps_bayes = bp.eps_bo
    row.converged = True
    return row


def hebb_row(p: ModelParams) -> ResultRow:
    m, q, b, eps = hebb_estimator_theory(p)
    row = _base_row("hebb", p, with_loss=False)
    row.lam = None
    row.m, row.q, row.b = m, q, b
    row.eps_gen, row.eps_bayes = eps, bayes_error(p).eps_bo
    row.converged = True
    return row


def landscape_row(p: ModelParams) -> ResultRow:
    pt = minimize_landscape(p)
    row = _base_row("landscape", p)
    row.m, row.q, row.b, row.gamma = pt.m, pt.q, pt.b, pt.gamma_star
    row.train_loss = pt.energy
    row.eps_gen = generalization_error(pt.m, pt.q, pt.b, p)
    row.eps_bayes = bayes_error(p).eps_bo
    row.converged = pt.status == "ok"
    return row


def phase_row(p: ModelParams) -> ResultRow:
    pb = alpha_star(p.delta, p.rho)
    row = ResultRow(mode="phase", delta=pb.delta, rho=pb.rho)
    row.alpha = pb.alpha_star
    row.m, row.b = pb.r_star, pb.b_star
    row.converged = not pb.boundary_hit
    return row


def simulate_row(p: ModelParams, sim: SimSpec) -> ResultRow:
    eps, ms, qs, bs, trains = [], [], [], [], []
    all_converged = True
    for rep_idx in range(sim.replicates):
        seed = sim.seed + rep_idx
        data = generate(p, sim.d, seed)
        if p.loss.kind.value == "square":
            fit = fit_ridge(data, p.lam)
        else:
            fit = fit_iterative(data, p.loss, p.lam)
        fit = measure(fit, data, sim.test_size, seed)
        eps.append(fit.test_error_emp)
        ms.append(fit.m_emp)
        qs.append(fit.q_emp)
        bs.append(fit.bias)
        trains.append(fit.train_loss_emp)
        all_converged &= fit.converged
    row = _base_row("simulate", p)
    row.m, row.q, row.b = statistics.fmean(ms), statistics.fmean(qs), \
        statistics.fmean(bs)
    row.eps_gen = statistics.fmean(eps)
    row.train_loss = statistics.fmean(trains)
    row.eps_bayes = bayes_error(p).eps_bo
    row.stderr_eps = (statistics.stdev(eps) / math.sqrt(len(eps))
                      if len(eps) > 1 else 0.0)
    row.d, row.replicates, row.seed = sim.d, sim.replicates, sim.seed
    row.converged = all_converged
    return row


def _point_rows(spec: SweepSpec, value: float,
                warm: Optional[FixedPointConfig] = None) -> List[ResultRow]:
    """All rows for a single grid point, in canonical mode order."""
    p = spec.params_at(value)
    rows: List[ResultRow] = []
    for mode in MODES:
        if mode not in spec.modes:
            continue
        try:
            if mode == "theory":
                rows.append(theory_row(p, warm))
            elif mode == "bayes":
                rows.append(bayes_row(p))
            elif mode == "hebb":
                rows.append(hebb_row(p))
            elif mode == "simulate":
                rows.append(simulate_row(p, spec.sim or SimSpec()))
            elif mode == "landscape":
                rows.append(landscape_row(p))
            elif mode == "phase":
                rows.append(phase_row(p))
        except (DomainError, NumericalError) as exc:
            log.warning("%s at %s=%.6g failed: %s", mode, spec.axis,
                        value, exc)
            row = _base_row(mode, p, with_loss=mode not in
                            ("bayes", "hebb", "phase"))
            row.converged = False
            rows.append(row)
    return rows


def run_sweep(spec: SweepSpec, jobs: int = 1) -> List[ResultRow]:
    """Rows for every grid point and mode, in (grid, mode) order.

    Sequential runs warm-start each theory solve from the previous grid
    point; parallel runs solve points independently (the fixed point does
    not depend on the start, so the outputs agree).
    """
    if jobs > 1:
        with Pool(jobs) as pool:
            chunks = pool.map(partial(_point_rows, spec), spec.grid)
    else:
        chunks = []
        warm = None
        for value in spec.grid:
            rows = _point_rows(spec, value, warm)
            for row in rows:
                rep = getattr(row, "_report", None)
                if rep is not None and rep.converged and \
                        math.isfinite(rep.overlaps.gamma):
                    warm = FixedPointConfig(init=rep.overlaps)
            chunks.append(rows)
    return [row for chunk in chunks for row in chunk]


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------

def parse_grid(text: str) -> List[float]:
    """`lo:hi:Nlog`, `lo:hi:Nlin`, or an explicit comma list / scalar."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise DomainError(f"bad grid {text!r}: want lo:hi:Nlog|Nlin")
        lo, hi, count = parts
        lo, hi = float(lo), float(hi)
        if count.endswith("log"):
            spacing = "log"
        elif count.endswith("lin"):
            spacing = "lin"
        else:
            raise DomainError(f"bad grid count {count!r}: want e.g. 20log")
        n = int(count[:-3])
        if n < 1:
            raise DomainError("grid count must be >= 1")
        if n == 1:
            return [lo]
        if spacing == "log":
            if lo <= 0:
                raise DomainError("log grid requires lo > 0")
            ratio = (hi / lo) ** (1.0 / (n - 1))
            return [lo * ratio ** i for i in range(n)]
        step = (hi - lo) / (n - 1)
        return [lo + step * i for i in range(n)]
    return [float(v) for v in text.split(",")]


def _read_config(path: str) -> Dict[str, str]:
    """Flat `key = value` file; '#' starts a comment."""
    out: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", default="1")
    common.add_argument("--delta", default="1")
    common.add_argument("--rho", default="0.5")
    common.add_argument("--lambda", dest="lam", default="0.01")
    common.add_argument("--loss", default="square",
                        choices=["square", "logistic", "hinge"])
    common.add_argument("--out", default="-",
                        help="output path, '-' for stdout")
    common.add_argument("--format", default="csv", choices=["csv", "json"])
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--seed", type=int,
                        default=int(os.environ.get("GMM_SEED", "0")))
    common.add_argument("--config", default=None,
                        help="key=value file; flags override file keys")
    verb = common.add_mutually_exclusive_group()
    verb.add_argument("--quiet", action="store_true")
    verb.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="gmm",
        description="Sharp asymptotics of regularized classification on a "
                    "two-cluster Gaussian mixture, plus finite-size "
                    "Monte Carlo cross-checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("theory", "bayes", "hebb", "landscape", "phase"):
        sub.add_parser(name, parents=[common])
    sim = sub.add_parser("simulate", parents=[common])
    sim.add_argument("--d", type=int, default=1000)
    sim.add_argument("--replicates", type=int, default=20)
    sim.add_argument("--test-size", type=int, default=100_000,
                     help="Monte Carlo test-set size; 0 reports the exact "
                          "population error of each fitted classifier")
    fig = sub.add_parser("figure", parents=[common])
    fig.add_argument("number", type=int, choices=[1, 2, 3, 4, 5])
    return parser


def _apply_config(argv: List[str], parser: argparse.ArgumentParser
                  ) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        file_values = _read_config(args.config)
        # flags given on the command line win over file keys
        given = {a.lstrip("-").split("=")[0].replace("-", "_")
                 for a in argv if a.startswith("--")}
        for key, value in file_values.items():
            if key not in given and hasattr(args, key):
                default = parser.parse_args([args.command] + (
                    ["1"] if args.command == "figure" else []))
                current = getattr(args, key)
                if current == getattr(default, key):
                    cast = type(getattr(default, key))
                    setattr(args, key,
                            cast(value) if cast is not bool
                            else value.lower() in ("1", "true", "yes"))
    return args


def _spec_from_args(args: argparse.Namespace, mode: str) -> SweepSpec:
    grids = {name: parse_grid(getattr(args, attr))
             for name, attr in zip(AXES, ("alpha", "delta", "rho", "lam"))}
    swept = [name for name, g in grids.items() if len(g) > 1]
    if len(swept) > 1:
        raise DomainError(f"only one parameter may be swept, got {swept}")
    axis = swept[0] if swept else ("delta" if mode == "phase" else "alpha")
    fixed = {name: g[0] for name, g in grids.items() if name != axis}
    fixed["loss"] = args.loss
    sim = None
    if mode == "simulate":
        sim = SimSpec(d=args.d, replicates=args.replicates, seed=args.seed,
                      test_size=args.test_size)
    return SweepSpec(axis=axis, grid=tuple(grids[axis]), fixed=fixed,
                     modes=(mode,), sim=sim)


# ----------------------------------------------------------------------------
# figure bundles
# ----------------------------------------------------------------------------

def figure_specs(number: int, seed: int) -> List[SweepSpec]:
    """Sweep bundles behind the five standard figures.

    1: eps_gen vs alpha at weak regularization, with Bayes baseline,
       Monte Carlo markers for the square loss, and the separability
       threshold.
    2: eps_gen vs alpha for all losses across a regularization family
       (interpolation peak smoothing).
    3: eps_gen vs lambda for hinge vs logistic, below and above the
       separability threshold (max-margin convergence).
    4: eps_gen vs lambda near rho=1/2 for the square loss (plateau at
       min(rho, 1-rho)).
    5: separability threshold alpha_star vs delta for several rho.
    """
    if number == 1:
        alphas = tuple(parse_grid("0.2:6:25log"))
        fixed = {"delta": 1.0, "rho": 0.5, "lambda": 1e-7}
        return [
            SweepSpec("alpha", alphas, {**fixed, "loss": "square"},
                      ("theory", "bayes")),
            SweepSpec("alpha", alphas, {**fixed, "loss": "logistic",
                                        "lambda": 1e-3}, ("theory",)),
            SweepSpec("alpha", tuple(parse_grid("0.3:5:9log")),
                      {**fixed, "loss": "square"}, ("simulate",),
                      sim=SimSpec(d=1000, replicates=5, seed=seed)),
            SweepSpec("delta", (1.0,), {"alpha": 1.0, "rho": 0.5,
                                        "lambda": 1e-7}, ("phase",)),
        ]
    if number == 2:
        alphas = tuple(parse_grid("0.2:6:25log"))
        specs = []
        for loss in ("square", "logistic", "hinge"):
            for lam in (1e-4, 1e-2, 1e-1, 1.0):
                specs.append(SweepSpec("alpha", alphas,
                                       {"delta": 1.0, "rho": 0.5,
                                        "lambda": lam, "loss": loss},
                                       ("theory",)))
        specs.append(SweepSpec("alpha", (1.0,),
                               {"delta": 1.0, "rho": 0.5, "lambda": 1e-4},
                               ("bayes",)))
        return specs
    if number == 3:
        lams = tuple(parse_grid("1e-7:1:8log"))
        return [SweepSpec("lambda", lams,
                          {"alpha": a, "delta": 1.0, "rho": 0.5,
                           "loss": loss}, ("theory",))
                for loss in ("hinge", "logistic") for a in (2.0, 10.0)]
    if number == 4:
        lams = tuple(parse_grid("1e-3:1e5:30log"))
        return [SweepSpec("lambda", lams,
                          {"alpha": 2.0, "delta": 0.3, "rho": rho,
                           "loss": "square"}, ("theory", "bayes"))
                for rho in (0.4, 0.49, 0.499)]
    if number == 5:
        deltas = tuple(parse_grid("0.05:100:16log"))
        return [SweepSpec("delta", deltas, {"alpha": 1.0, "rho": rho,
                                            "lambda": 1e-7}, ("phase",))
                for rho in (0.5, 0.35, 0.2)]
    raise DomainError(f"unknown figure {number}")


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = _apply_config(list(sys.argv[1:] if argv is None else argv),
                         parser)
    level = (logging.ERROR if args.quiet
             else logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(message)s")

    try:
        if args.command == "figure":
            specs = figure_specs(args.number, args.seed)
        else:
            specs = [_spec_from_args(args, args.command)]
        rows: List[ResultRow] = []
        for spec in specs:
            rows.extend(run_sweep(spec, jobs=args.jobs))
    except (DomainError, NumericalError) as exc:
        log.error("%s", exc)
        return 2

    if args.out == "-":
        emit(rows, args.format, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            emit(rows, args.format, fh)
        log.info("wrote %d rows to %s", len(rows), args.out)

    failures = sum(1 for r in rows if r.converged is False)
    if failures:
        log.warning("%d of %d rows did not converge", failures, len(rows))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
