"""Command line driver: iteration-count tables and verification oracles.

Examples::

    hdivmg --table 1 --levels 3-6
    hdivmg --degree 2 --levels 4 --cycle standard --smoothing-steps 2
    hdivmg --oracles div-relation,equivalence
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field, replace
import logging
import os
from pathlib import Path
import sys

import numpy as np

from .assembly import INHERITED, NONINHERITED, PenaltyConfig
from .krylov import gmres, richardson
from .mesh import build_hierarchy
from .multigrid import STANDARD, VARIABLE, build_level_operators, build_multigrid
from .smoother import MIXED, SmootherConfig
from . import verify

log = logging.getLogger("hdivmg")

THREADS_ENV = "HDIVMG_THREADS"
NOT_CONVERGED = "—"
ORACLES = ("div-relation", "dense-sparse", "helmholtz", "inf-sup", "equivalence", "smoother", "contraction")


@dataclass(frozen=True)
class ExperimentConfig:
    degree: int = 1
    max_level: int = 3
    cycle: str = VARIABLE
    m_L: int = 1
    penalty: str = INHERITED
    sigma_bar: float | None = None
    eta: float = 0.5
    solver: str = "richardson"
    epsilon: float = 0.0
    tol: float = 1e-6
    max_iter: int = 100
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)
    rhs: tuple = (1.0, 1.0)
    boundary_patches: bool = True


@dataclass
class RunResult:
    config: ExperimentConfig
    report: object
    divergence_ratio: float
    n_unknowns: int
    velocity_max: float = np.nan  # max-norm of the velocity part of the iterate
    solution_max: float = np.nan  # max-norm of the whole iterate

    @property
    def cell(self) -> str:
        return str(self.report.iterations) if self.report.converged else NOT_CONVERGED


class OperatorCache:
    """Level operators keyed by (L, k, penalty, sigma_bar, domain); one hierarchy at a time."""

    def __init__(self):
        self._store = {}

    def get(self, cfg: ExperimentConfig):
        key = (cfg.max_level, cfg.degree, cfg.penalty, cfg.sigma_bar, cfg.domain)
        if key not in self._store:
            if len(self._store) > 4:
                self._store.clear()
            hier = build_hierarchy(cfg.domain, cfg.max_level)
            penalty = PenaltyConfig.for_hierarchy(hier, cfg.degree, cfg.penalty, cfg.sigma_bar)
            self._store[key] = build_level_operators(hier, cfg.degree, penalty)
        return self._store[key]


def run_experiment(cfg: ExperimentConfig, cache: OperatorCache | None = None) -> RunResult:
    """Assemble, build the V-cycle and run the outer solver from a zero initial guess."""
    ops = (cache or OperatorCache()).get(cfg)
    smoother = SmootherConfig(cfg.eta, MIXED, cfg.boundary_patches)
    mg = build_multigrid(ops, cfg.cycle, cfg.m_L, smoother, epsilon=cfg.epsilon)
    fine = ops[-1]
    b = np.concatenate([fine.rhs(cfg.rhs), np.zeros(fine.dofs.n_pressure)])
    solve = gmres if cfg.solver == "gmres" else richardson
    x, report = solve(mg.finest.matrix, mg, b, cfg.tol, cfg.max_iter)
    u = x[: fine.dofs.n_free]
    ratio = verify.divergence_ratio(fine, u)
    log.info("L=%d k=%d %s m=%d %s %s: %d its (%s)", cfg.max_level, cfg.degree, cfg.cycle, cfg.m_L,
             cfg.penalty, cfg.solver, report.iterations, "ok" if report.converged else "no convergence")
    return RunResult(cfg, report, ratio, len(b), float(np.abs(u).max()), float(np.abs(x).max()))


# -- tables ---------------------------------------------------------------------

def table_columns(table: int) -> list[tuple[str, dict]]:
    """Column labels and config overrides for tables 1, 2, 4 and 6."""
    rt = lambda k: {"degree": k}  # noqa: E731
    if table == 1:
        return [(f"RT_{k}", rt(k)) for k in (1, 2)]
    if table == 2:
        return [(f"m=1 RT_{k}", {**rt(k), "cycle": STANDARD, "m_L": 1}) for k in (1, 2)] + [
            (f"m=2 RT_{k}", {**rt(k), "cycle": STANDARD, "m_L": 2}) for k in (1, 2)
        ]
    if table == 4:
        return [(f"variable RT_{k}", {**rt(k), "penalty": NONINHERITED}) for k in (1, 2)] + [
            (f"standard RT_{k}", {**rt(k), "penalty": NONINHERITED, "cycle": STANDARD}) for k in (1, 2)
        ]
    if table == 6:
        base = {"solver": "gmres"}
        return (
            [(f"variable RT_{k}", {**base, **rt(k)}) for k in (1, 2)]
            + [(f"standard RT_{k}", {**base, **rt(k), "cycle": STANDARD}) for k in (1, 2)]
            + [(f"noninherited RT_{k}", {**base, **rt(k), "cycle": STANDARD, "penalty": NONINHERITED}) for k in (1, 2)]
        )
    raise ValueError(f"no table {table}")


@dataclass
class TableResult:
    table: int
    labels: list[str]
    rows: dict = field(default_factory=dict)  # level -> list[RunResult]

    @property
    def all_converged(self) -> bool:
        return all(r.report.converged for row in self.rows.values() for r in row)

    def markdown(self) -> str:
        head = "| level | " + " | ".join(self.labels) + " |"
        sep = "|" + "---|" * (len(self.labels) + 1)
        body = [f"| {L} | " + " | ".join(r.cell for r in row) + " |" for L, row in sorted(self.rows.items())]
        return "\n".join([f"Table {self.table}", "", head, sep, *body]) + "\n"

    def write(self, out: Path) -> tuple[Path, Path]:
        out.mkdir(parents=True, exist_ok=True)
        md = out / f"table{self.table}.md"
        md.write_text(self.markdown())
        path = out / f"table{self.table}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "column", "iterations", "converged", "reduction", "div_ratio", "unknowns", "seconds"])
            for L, row in sorted(self.rows.items()):
                for label, r in zip(self.labels, row):
                    rep = r.report
                    w.writerow([L, label, rep.iterations, int(rep.converged), f"{rep.reduction_achieved:.3e}",
                                f"{r.divergence_ratio:.3e}", r.n_unknowns, f"{rep.wall_time:.2f}"])
        return md, path


def run_table(table: int, levels, base: ExperimentConfig = ExperimentConfig(), columns=None) -> TableResult:
    """Iteration counts for every level in ``levels`` and every column of ``table``."""
    columns = table_columns(table) if columns is None else columns
    result = TableResult(table, [label for label, _ in columns])
    cache = OperatorCache()
    for L in levels:
        result.rows[L] = [run_experiment(replace(base, max_level=L, **over), cache) for _, over in columns]
    return result


# -- oracles ------------------------------------------------------------------------

def run_oracles(selection=(), degrees=(1, 2), out: Path | None = None) -> list:
    """Run the selected oracles (all when empty) on small levels and optionally write JSON lines."""
    selection = tuple(selection) or ORACLES
    unknown = set(selection) - set(ORACLES)
    if unknown:
        raise ValueError(f"unknown oracles: {sorted(unknown)}")
    reports = []
    for k in degrees:
        ops3 = verify.level_operators(3, k)
        if "div-relation" in selection:
            reports += [verify.check_div_relation(ops3[l]) for l in (1, 2)]
        if "dense-sparse" in selection:
            reports += [verify.check_dense_sparse(ops3[l]) for l in (1, 2)]
        if "helmholtz" in selection:
            reports += [verify.check_helmholtz(ops3[l]) for l in (1, 2, 3)]
        if "equivalence" in selection:
            reports += [verify.check_equivalence(ops3[l], e) for l in (1, 2, 3) for e in (1.0, 1e-2, 1e-4)]
        if "smoother" in selection:
            reports += [verify.check_smoother_conditions(ops3, l, e) for l in (1, 2, 3) for e in (1e-2, 1e-4)]
    if "inf-sup" in selection:
        reports.append(verify.check_inf_sup_trend(verify.level_operators(4, 1)))
    if "contraction" in selection:
        reports.append(contraction_report())
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        verify.write_results(reports, out / "oracles.jsonl")
    return reports


def contraction_report(levels=(3, 4, 5), epsilons=(1e-2, 1e-4, 1e-6), eta=0.5, spread=0.1):
    """Energy-norm contraction of the elliptic variable V-cycle over levels and epsilon."""
    factors = {}
    for L in levels:
        ops = verify.level_operators(L, 1)
        for e in epsilons:
            mg = build_multigrid(ops, VARIABLE, 1, SmootherConfig(eta, "elliptic"), epsilon=e)
            factors[f"L={L},eps={e:g}"] = verify.contraction_factor(mg)
    vals = np.array(list(factors.values()))
    return verify.OracleReport(
        "contraction",
        {"levels": list(levels), "epsilons": list(epsilons), "eta": eta, "k": 1},
        {"factors": factors, "spread": float(vals.max() - vals.min())},
        {"spread": spread, "max": 1.0},
        bool(vals.max() < 1 and vals.max() - vals.min() <= spread),
    )


# -- argument handling ------------------------------------------------------------

def parse_levels(text: str) -> list[int]:
    """``"3-6"`` -> [3, 4, 5, 6]; ``"3,5"`` -> [3, 5]; ``"4"`` -> [4]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdivmg", description="Multigrid for H(div)-conforming DG Stokes discretizations.")
    p.add_argument("--degree", type=int, default=1, help="RT_k / Q_k degree (default 1)")
    p.add_argument("--levels", type=parse_levels, default=None,
                   help="finest level, or a range such as 3-6 for tables (default 3, tables 3-6)")
    p.add_argument("--cycle", choices=(STANDARD, VARIABLE), default=VARIABLE)
    p.add_argument("--smoothing-steps", type=int, default=1, help="m(L), smoothing steps on the finest level")
    p.add_argument("--penalty", choices=(INHERITED, NONINHERITED), default=INHERITED)
    p.add_argument("--sigma-bar", type=float, default=None, help="penalty constant (default (k+1)(k+2))")
    p.add_argument("--eta", type=float, default=0.5, help="Schwarz relaxation factor")
    p.add_argument("--solver", choices=("richardson", "gmres"), default="richardson")
    p.add_argument("--epsilon", type=float, default=0.0, help="pressure regularization (0 = Stokes)")
    p.add_argument("--tol", type=float, default=1e-6, help="residual reduction")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--table", type=int, choices=(1, 2, 4, 6), default=None, help="reproduce a table")
    p.add_argument("--oracles", nargs="?", const="", default=None,
                   help=f"comma separated subset of {','.join(ORACLES)}; empty runs all")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    limiter = _thread_limit()
    try:
        return _run(args)
    finally:
        if limiter is not None:
            limiter.unregister()


def _run(args) -> int:
    base = ExperimentConfig(
        degree=args.degree,
        cycle=args.cycle,
        m_L=args.smoothing_steps,
        penalty=args.penalty,
        sigma_bar=args.sigma_bar,
        eta=args.eta,
        solver=args.solver,
        epsilon=args.epsilon,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    status = 0
    if args.oracles is not None:
        names = [s for s in args.oracles.split(",") if s]
        reports = run_oracles(names, out=args.out)
        for r in reports:
            print(r)
        status |= 0 if all(r.passed for r in reports) else 1
        print(f"oracle results written to {args.out / 'oracles.jsonl'}")
    if args.table is not None:
        result = run_table(args.table, args.levels or [3, 4, 5, 6], base)
        md, path = result.write(args.out)
        print(result.markdown())
        print(f"written {md} and {path}")
        status |= 0 if result.all_converged else 2
    elif args.oracles is None:
        levels = args.levels or [3]
        for L in levels:
            r = run_experiment(replace(base, max_level=L))
            rep = r.report
            print(f"L={L} k={base.degree} unknowns={r.n_unknowns} iterations={r.cell} "
                  f"reduction={rep.reduction_achieved:.2e} div={r.divergence_ratio:.1e} time={rep.wall_time:.2f}s")
            status |= 0 if rep.converged else 2
    return status


if __name__ == "__main__":
    sys.exit(main())
