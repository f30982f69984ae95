"""Command line front end: mesh generation, assembly, solves, and studies.

Exit codes: 0 on success, 1 for usage errors (bad flags, invalid levels or
coefficients), 2 for numerical failures (factorization or convergence).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from .analysis import ReferenceSpec, run_convergence_study
from .eigen import (ConvergenceFailureError, DEFAULT_SEED, DEFAULT_TOL,
                    NotPositiveDefiniteError, Pencil, solve_pencil)
from .fem import (CR, CoefficientField, InvalidCoefficientError, P1, affine,
                  assemble_boundary_mass, assemble_stiffness, build_dof_map,
                  write_matrix)
from .mesh import DomainSpec, InvalidLevelError, generate_mesh, write_mesh

__all__ = ["RunConfig", "main"]

_DOMAINS = ("square", "lshape", "slit")
_FAMILIES = (P1, CR)
BASE_STUDY_LEVEL = 8


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved study configuration."""

    domain: str
    family: str
    min_level: int = 8
    max_level: int = 128
    eig_index: int = 2
    reference_mode: str = "auto"
    reference_level: int = 512
    alpha: tuple[float, float, float] = (1.0, 0.0, 0.0)
    beta: tuple[float, float, float] = (1.0, 0.0, 0.0)
    tol: float = DEFAULT_TOL
    seed: int = DEFAULT_SEED
    out: str | None = None
    format: str = "csv"

    def __post_init__(self) -> None:
        for name, lvl in (("min-level", self.min_level), ("max-level", self.max_level)):
            if lvl < BASE_STUDY_LEVEL or lvl & (lvl - 1) or lvl % BASE_STUDY_LEVEL:
                raise ValueError(
                    f"--{name} must be {BASE_STUDY_LEVEL} times a power of two, got {lvl}")
        if self.min_level > self.max_level:
            raise ValueError("--min-level must not exceed --max-level")
        if self.max_level >= self.reference_level:
            raise ValueError("--ref-level must exceed --max-level")
        if self.eig_index < 1:
            raise ValueError("--eig-index must be at least 1")

    @property
    def levels(self) -> list[int]:
        levels = [self.min_level]
        while levels[-1] < self.max_level:
            levels.append(2 * levels[-1])
        return levels

    @property
    def coefficients(self) -> CoefficientField:
        return CoefficientField(alpha=affine(*self.alpha), beta=affine(*self.beta))


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_affine_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected c0,c1,c2 but got {text!r}")
    try:
        c0, c1, c2 = (float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return (c0, c1, c2)


def _add_coefficient_flags(sub) -> None:
    sub.add_argument("--alpha", type=float, default=None,
                     help="constant diffusion coefficient (default 1)")
    sub.add_argument("--beta", type=float, default=None,
                     help="constant reaction coefficient (default 1)")
    sub.add_argument("--alpha-affine", type=_parse_affine_triple, default=None,
                     metavar="C0,C1,C2", help="affine diffusion c0 + c1*x1 + c2*x2")
    sub.add_argument("--beta-affine", type=_parse_affine_triple, default=None,
                     metavar="C0,C1,C2", help="affine reaction c0 + c1*x1 + c2*x2")


def _coefficient_triples(args) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    if args.alpha is not None and args.alpha_affine is not None:
        raise ValueError("--alpha and --alpha-affine are mutually exclusive")
    if args.beta is not None and args.beta_affine is not None:
        raise ValueError("--beta and --beta-affine are mutually exclusive")
    alpha = args.alpha_affine if args.alpha_affine is not None else \
        (args.alpha if args.alpha is not None else 1.0, 0.0, 0.0)
    beta = args.beta_affine if args.beta_affine is not None else \
        (args.beta if args.beta is not None else 1.0, 0.0, 0.0)
    return tuple(alpha), tuple(beta)


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="\n"), True


def _write_text(path: str | None, text: str) -> None:
    stream, close = _open_out(path)
    try:
        stream.write(text)
    finally:
        if close:
            stream.close()


def cmd_mesh(args) -> int:
    mesh = generate_mesh(DomainSpec(args.domain), args.level)
    stream, close = _open_out(args.out)
    try:
        write_mesh(mesh, stream)
    finally:
        if close:
            stream.close()
    return 0


def cmd_assemble(args) -> int:
    mesh = generate_mesh(DomainSpec(args.domain), args.level)
    dofmap = build_dof_map(mesh, args.element)
    alpha, beta = _coefficient_triples(args)
    coeff = CoefficientField(alpha=affine(*alpha), beta=affine(*beta))
    if args.which == "stiffness":
        matrix = assemble_stiffness(mesh, dofmap, coeff)
    else:
        matrix = assemble_boundary_mass(mesh, dofmap)
    stream, close = _open_out(args.out)
    try:
        write_matrix(matrix, stream)
    finally:
        if close:
            stream.close()
    return 0


def cmd_solve(args) -> int:
    mesh = generate_mesh(DomainSpec(args.domain), args.level)
    dofmap = build_dof_map(mesh, args.element)
    alpha, beta = _coefficient_triples(args)
    coeff = CoefficientField(alpha=affine(*alpha), beta=affine(*beta))
    pencil = Pencil(assemble_stiffness(mesh, dofmap, coeff),
                    assemble_boundary_mass(mesh, dofmap))
    solution = solve_pencil(pencil, args.k, tol=args.tol, seed=args.seed)
    lines = []
    for j, (lam, res) in enumerate(zip(solution.eigenvalues, solution.residual_norms), start=1):
        lines.append(f"lambda_{j} = {lam:.8f}   residual = {res:.8e}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_study(args) -> int:
    alpha, beta = _coefficient_triples(args)
    config = RunConfig(domain=args.domain, family=args.element,
                       min_level=args.min_level, max_level=args.max_level,
                       eig_index=args.eig_index, reference_mode=args.reference,
                       reference_level=args.ref_level, alpha=alpha, beta=beta,
                       tol=args.tol, seed=args.seed, out=args.out, format=args.format)
    table = run_convergence_study(
        DomainSpec(config.domain), config.family, config.levels,
        eig_index=config.eig_index, coeff=config.coefficients,
        reference=ReferenceSpec(config.reference_mode, config.reference_level),
        tol=config.tol, seed=config.seed)
    text = table.to_csv() if config.format == "csv" else table.to_markdown()
    _write_text(config.out, text)

    finest = table.rows[-2] if len(table.rows) > 1 else None
    report = [f"reference lambda_{config.eig_index} = {table.reference_lambda:.8f} "
              f"({table.reference_mode}, trace level {table.reference_level})"]
    if finest is not None and finest.lambda_ratio is not None:
        report.append(f"observed ratio(lambda) at finest pair = {finest.lambda_ratio:.8f}   "
                      f"target 2r = {table.expected_lambda_rate:.8f}")
    if finest is not None and finest.u_ratio is not None:
        report.append(f"observed ratio(u) at finest pair      = {finest.u_ratio:.8f}   "
                      f"target r + 1/2 = {table.expected_u_rate:.8f}")
    for warning in table.warnings:
        report.append(f"warning: {warning}")
    print("\n".join(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="steklovfem",
                     description="P1/Crouzeix-Raviart discretization of Steklov "
                                 "eigenvalue problems with convergence studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate a mesh and write its dump")
    p_mesh.add_argument("--domain", choices=_DOMAINS, required=True)
    p_mesh.add_argument("--level", type=int, required=True)
    p_mesh.add_argument("--out", default=None, help="output path (default stdout)")
    p_mesh.set_defaults(func=cmd_mesh)

    p_asm = sub.add_parser("assemble", help="assemble a matrix and write its dump")
    p_asm.add_argument("--domain", choices=_DOMAINS, required=True)
    p_asm.add_argument("--level", type=int, required=True)
    p_asm.add_argument("--element", choices=_FAMILIES, required=True)
    p_asm.add_argument("--which", choices=("stiffness", "boundary-mass"),
                       default="stiffness")
    _add_coefficient_flags(p_asm)
    p_asm.add_argument("--out", default=None)
    p_asm.set_defaults(func=cmd_assemble)

    p_solve = sub.add_parser("solve", help="solve the eigenproblem")
    p_solve.add_argument("--domain", choices=_DOMAINS, required=True)
    p_solve.add_argument("--level", type=int, required=True)
    p_solve.add_argument("--element", choices=_FAMILIES, required=True)
    p_solve.add_argument("--k", type=int, default=5, help="number of eigenpairs")
    p_solve.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p_solve.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_coefficient_flags(p_solve)
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_study = sub.add_parser("study", help="run a convergence study")
    p_study.add_argument("--domain", choices=_DOMAINS, required=True)
    p_study.add_argument("--element", choices=_FAMILIES, required=True)
    p_study.add_argument("--min-level", type=int, default=8)
    p_study.add_argument("--max-level", type=int, default=128)
    p_study.add_argument("--ref-level", type=int, default=512,
                         help="reference trace level (must exceed --max-level)")
    p_study.add_argument("--eig-index", type=int, default=2)
    p_study.add_argument("--reference", choices=("auto", "bracket", "richardson"),
                         default="auto",
                         help="reference eigenvalue mode: tabulated enclosure "
                              "midpoint or Richardson extrapolation")
    p_study.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p_study.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_coefficient_flags(p_study)
    p_study.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p_study.add_argument("--out", default=None)
    p_study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidLevelError, InvalidCoefficientError, ValueError) as exc:
        print(f"steklovfem: error: {exc}", file=sys.stderr)
        return 1
    except (NotPositiveDefiniteError, ConvergenceFailureError) as exc:
        print(f"steklovfem: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
