"""Experiment driver: one configuration in, one JSON-ready report out.

Also rebuilds the iteration-count and eigenvalue tables as CSV rows.
Table ids follow document order: 3/4 Maxwell source (cube/hole),
5/6 Maxwell eigenvalues, 7/8 Maxwell LOBPCG counts, 9/10 grad-div source,
11/12 grad-div eigenvalues, 13/14 grad-div LOBPCG counts.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .auxscheme import SolverConfig, solve_eigen, solve_source
from .fem import ComplexOperators, build_auxiliary_matrix, build_operators
from .krylov import cg
from .mesh import DomainKind, build_mesh
from .precond import ILU0Preconditioner
from .sparse import write_mtx

__all__ = [
    "PROBLEMS",
    "ExperimentConfig",
    "mesh_info",
    "default_load",
    "exact_eigenvalues",
    "run_experiment",
    "dump_operators",
    "TABLES",
    "reproduce_table",
    "reproduce_tables",
    "write_table",
]

PROBLEMS = {"maxwell": 1, "graddiv": 2}
MODES = ("source", "eigen", "mesh-info")
MAX_LEVEL = 5
LARGE_LEVEL = 5


@dataclass
class ExperimentConfig:
    problem: str = "maxwell"
    domain: str = "cube"
    level: int = 1
    mode: str = "source"
    solver: str = "cg"
    precond: str = "none"
    c: float = 1.0
    tol: float = 1e-8
    nev: int = 20
    block: int = 25
    seed: int = 0
    output: str = "json"

    def __post_init__(self):
        self.domain = DomainKind.parse(self.domain).value
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {sorted(PROBLEMS)}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 1 <= self.level <= MAX_LEVEL:
            raise ValueError(f"level must lie in 1..{MAX_LEVEL}")
        if self.mode == "eigen" and self.solver != "cg":
            raise ValueError("eigen mode runs LOBPCG; the stand-alone multigrid solver is source-only")
        if self.mode == "source" and self.c <= 0:
            raise ValueError("source mode needs c > 0")
        if self.nev > self.block:
            raise ValueError("nev must not exceed the block size")
        if self.output not in ("json", "csv"):
            raise ValueError(f"unknown output format {self.output!r}")

    @property
    def k(self) -> int:
        return PROBLEMS[self.problem]

    def solver_config(self) -> SolverConfig:
        return SolverConfig(solver=self.solver, precond=self.precond, tol=self.tol,
                            nev=self.nev, block=self.block, seed=self.seed)


def mesh_info(domain, level: int) -> dict:
    mesh = build_mesh(domain, level)
    return mesh.summary()


def default_load(n: int, seed: int = 0) -> np.ndarray:
    """Seeded standard-normal load vector used by every source experiment."""
    return np.random.default_rng(seed).standard_normal(n)


def exact_eigenvalues(problem: str, count: int) -> list:
    """Smallest nonzero continuous eigenvalues on the cube [0, pi]^3, with multiplicity.

    curl curl: m^2 + n^2 + p^2 over index triples with at least two nonzero
    entries, one mode per triple with a zero entry and two otherwise.
    grad div: triples with all entries positive, one mode each.
    """
    vals = []
    top = int(math.isqrt(4 * count)) + 3
    for m, n, p in itertools.product(range(top), repeat=3):
        nonzero = (m > 0) + (n > 0) + (p > 0)
        if problem == "maxwell":
            mult = {2: 1, 3: 2}.get(nonzero, 0)
        elif problem == "graddiv":
            mult = 1 if nonzero == 3 else 0
        else:
            raise ValueError(f"unknown problem {problem!r}")
        vals.extend([m * m + n * n + p * p] * mult)
    vals.sort()
    return [float(v) for v in vals[:count]]


def _source_report(cfg: ExperimentConfig, ops: ComplexOperators) -> dict:
    f = default_load(ops.n, cfg.seed)
    sol = solve_source(ops, f, cfg.solver_config(), raise_on_failure=False)
    rep = sol.aux_report
    converged = rep.converged and sol.mass_report.converged
    return {
        "iterations": rep.iterations,
        "residual_history": rep.residual_history,
        "converged": converged,
        "status": rep.status,
        "mass_iterations": sol.mass_report.iterations,
        "mass_converged": sol.mass_report.converged,
        "residual_original": sol.residual_original,
    }


def _eigen_report(cfg: ExperimentConfig, ops: ComplexOperators) -> dict:
    sol = solve_eigen(ops, cfg=cfg.solver_config())
    rep = sol.report
    return {
        "iterations": rep.iterations,
        "residual_history": [float(max(r[: cfg.nev])) for r in rep.residual_history],
        "converged": rep.converged,
        "eigenpairs": [p.to_dict() for p in sol.pairs],
        "type_counts": {str(t): n for t, n in sol.type_counts().items()},
    }


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configuration; the report carries ``converged`` for the exit code."""
    head = {"problem": cfg.problem, "domain": cfg.domain, "level": cfg.level, "mode": cfg.mode}
    if cfg.mode == "mesh-info":
        return {**head, **mesh_info(cfg.domain, cfg.level), "converged": True}
    mesh = build_mesh(cfg.domain, cfg.level)
    ops = build_operators(mesh, cfg.k, c=cfg.c if cfg.mode == "source" else 1.0)
    head.update(solver=cfg.solver if cfg.mode == "source" else "lobpcg", precond=cfg.precond,
                dof=ops.n, h=mesh.h, c=cfg.c, tol=cfg.tol, seed=cfg.seed)
    body = _source_report(cfg, ops) if cfg.mode == "source" else _eigen_report(cfg, ops)
    return {**head, **body}


def dump_operators(cfg: ExperimentConfig, directory) -> list:
    """Write the complex matrices of ``cfg`` as Matrix Market files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ops = build_operators(build_mesh(cfg.domain, cfg.level), cfg.k, c=cfg.c)
    mats = {"A": ops.A, "B": ops.B, "Mk": ops.Mk, "Mkm1": ops.Mkm1, "U": ops.U,
            "Dk": ops.Dk, "Dkm1": ops.Dkm1, "S": build_auxiliary_matrix(ops)}
    tag = f"{cfg.problem}_{cfg.domain}_l{cfg.level}"
    return [write_mtx(directory / f"{tag}_{name}.mtx", M) for name, M in mats.items()]


# -- tables -----------------------------------------------------------------

TABLES = {
    3: ("source", "maxwell", "cube"),
    4: ("source", "maxwell", "hole"),
    5: ("values", "maxwell", "cube"),
    6: ("values", "maxwell", "hole"),
    7: ("eigen", "maxwell", "cube"),
    8: ("eigen", "maxwell", "hole"),
    9: ("source", "graddiv", "cube"),
    10: ("source", "graddiv", "hole"),
    11: ("values", "graddiv", "cube"),
    12: ("values", "graddiv", "hole"),
    13: ("eigen", "graddiv", "cube"),
    14: ("eigen", "graddiv", "hole"),
}

SOURCE_COLUMNS = ["level", "h", "dof", "original_cg", "original_ilu0", "aux_cg", "aux_ilu0",
                  "aux_sait", "aux_mgpcg", "aux_mg", "mass_cg", "mass_ilu0"]
EIGEN_COLUMNS = ["level", "h", "dof", "none", "ilu0", "sait", "mg"]
VALUE_COLUMNS = ["exact", "lambda_h", "lambda_original", "lambda_auxiliary", "type"]

ORIGINAL_MAXIT = 5000


def _count(report) -> str:
    return str(report.iterations) if report.converged else "inf"


def _h_label(level: int) -> str:
    return f"pi/{2 ** (level + 1)}"


def _source_row(problem: str, domain: str, level: int, seed: int = 0) -> list:
    k = PROBLEMS[problem]
    ops = build_operators(build_mesh(domain, level), k, c=1.0)
    f = default_load(ops.n, seed)
    row = [f"l={level}", _h_label(level), ops.n]
    S0 = ops.original_matrix()
    _, r = cg(S0, f, tol=1e-8, maxit=ORIGINAL_MAXIT)
    row.append(_count(r))
    _, r = cg(S0, f, precond=ILU0Preconditioner(S0).as_operator(), tol=1e-8, maxit=ORIGINAL_MAXIT)
    row.append(_count(r))
    for solver, pc in (("cg", "none"), ("cg", "ilu0"), ("cg", "sait"), ("cg", "mg"), ("mg", "none")):
        if level == 1 and "mg" in (solver, pc):
            row.append("")  # one-level hierarchy is a direct solve
            continue
        sol = solve_source(ops, f, SolverConfig(solver=solver, precond=pc), raise_on_failure=False)
        row.append(_count(sol.aux_report))
    _, r = cg(ops.Mk, f, tol=1e-8)
    row.append(_count(r))
    _, r = cg(ops.Mk, f, precond=ILU0Preconditioner(ops.Mk).as_operator(), tol=1e-8)
    row.append(_count(r))
    return row


def _eigen_row(problem: str, domain: str, level: int, seed: int = 0) -> list:
    ops = build_operators(build_mesh(domain, level), PROBLEMS[problem], c=1.0)
    row = [f"l={level}", _h_label(level), ops.n]
    for pc in ("none", "ilu0", "sait", "mg"):
        rep = solve_eigen(ops, cfg=SolverConfig(precond=pc, seed=seed)).report
        row.append(str(rep.iterations) if rep.converged else "inf")
    return row


def _value_rows(problem: str, domain: str, level: int, seed: int = 0) -> list:
    ops = build_operators(build_mesh(domain, level), PROBLEMS[problem], c=1.0)
    sol = solve_eigen(ops, cfg=SolverConfig(precond="mg", seed=seed))
    exact = exact_eigenvalues(problem, len(sol.pairs)) if domain == "cube" else []
    rows, j = [], 0
    for p in sol.pairs:
        ex = ""
        if domain == "cube" and p.kind == 1 and j < len(exact):
            ex = f"{exact[j]:g}"
            j += 1
        rows.append([ex, f"{p.lambda_h:.6f}", f"{p.lambda_tilde:.6e}",
                     f"{p.lambda_aux:.6e}", f"Type {int(p.kind)}"])
    return rows


def reproduce_table(which: int, max_level: int = 3, seed: int = 0):
    """Rows of table ``which`` for levels up to ``max_level``.

    Eigenvalue tables list the first pairs at ``max_level`` only.
    Returns ``(header, rows)``.
    """
    if which not in TABLES:
        raise ValueError(f"unknown table id {which}; expected one of {sorted(TABLES)}")
    if not 1 <= max_level <= MAX_LEVEL:
        raise ValueError(f"max_level must lie in 1..{MAX_LEVEL}")
    kind, problem, domain = TABLES[which]
    if kind == "values":
        return VALUE_COLUMNS, _value_rows(problem, domain, max_level, seed)
    make = _source_row if kind == "source" else _eigen_row
    header = SOURCE_COLUMNS if kind == "source" else EIGEN_COLUMNS
    return header, [make(problem, domain, lev, seed) for lev in range(1, max_level + 1)]


def write_table(header, rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def reproduce_tables(which, max_level: int = 3, out_dir=None, seed: int = 0) -> dict:
    """Rebuild one or several tables; returns ``{id: csv text}``.

    With ``out_dir`` each table is also written to ``table_<id>.csv``.
    """
    ids = [which] if isinstance(which, int) else list(which)
    out = {}
    for t in ids:
        header, rows = reproduce_table(t, max_level, seed=seed)
        path = None if out_dir is None else Path(out_dir) / f"table_{t}.csv"
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
        out[t] = write_table(header, rows, path)
    return out


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
