"""Norms, reference transfer, boundary errors, and convergence studies.

Error measurement against a finer reference never relocates points
geometrically: the meshes are nested by construction, so every fine triangle
knows its coarse ancestor through the refinement chain, and all boundary
quadrature runs on the fine partition (whose edges subdivide the coarse
ones).  This keeps the error of the transfer itself at rounding level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fem
from .eigen import DEFAULT_SEED, DEFAULT_TOL, Pencil, solve_pencil
from .fem import (CR, P1, CoefficientField, DofMap, UNIT_COEFFICIENTS,
                  assemble_boundary_mass, assemble_stiffness, build_dof_map,
                  evaluate_fe_many)
from .interp import PointFunction, as_point_function
from .mesh import (DomainSpec, Mesh, Refinement, edge_slit_sides,
                   generate_mesh, refine)

__all__ = [
    "FeFunction",
    "TransferredTrace",
    "ReferenceSpec",
    "ReferenceSolution",
    "ConvergenceRow",
    "ConvergenceTable",
    "AmbiguousAlignmentError",
    "NestingError",
    "UndefinedRatioError",
    "REFERENCE_INTERVALS",
    "boundary_l2_norm",
    "broken_h1_norm",
    "align_sign",
    "transfer_reference",
    "boundary_l2_error",
    "convergence_ratio",
    "compute_reference",
    "run_convergence_study",
]

# Reference enclosures for the second Steklov eigenvalue with unit
# coefficients, from independent high-accuracy computations.  The midpoint
# serves as the reference value; the enclosure width bounds its error.
REFERENCE_INTERVALS: dict[tuple[str, int], tuple[float, float]] = {
    ("lshape", 2): (0.89364476, 0.89364690),
    ("slit", 2): (0.734554376, 0.73455822),
}

CLUSTER_GAP_TOL = 1e-8


class AmbiguousAlignmentError(Exception):
    """Raised when a sign alignment inner product is too small to trust."""


class NestingError(ValueError):
    """Raised when meshes handed to a transfer are not nested as claimed."""


class UndefinedRatioError(ValueError):
    """Raised when a convergence ratio is requested for nonpositive errors."""


@dataclass
class FeFunction:
    """A finite element function: a mesh, a dof map, and dof values."""

    mesh: Mesh
    dofmap: DofMap
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.dofmap.n_dofs,):
            raise ValueError(
                f"expected {self.dofmap.n_dofs} dof values, got shape {self.values.shape}")
        if len(self.dofmap.cell_dofs) != self.mesh.n_triangles:
            raise ValueError("dof map does not belong to this mesh")

    def negated(self) -> "FeFunction":
        return FeFunction(self.mesh, self.dofmap, -self.values)


def _boundary_gauss(mesh: Mesh):
    """Per-boundary-edge Gauss data: triangles, barycentric points, weights,
    physical points, and slit-side flags."""
    tris = mesh.boundary_edges[:, 0]
    locs = mesh.boundary_edges[:, 1]
    bary = fem._boundary_gauss_bary(locs)
    weights = mesh.boundary_edge_lengths()[:, None] * fem.EDGE_GAUSS_WEIGHTS[None, :]
    corners = mesh.triangle_corners()[tris]
    points = np.einsum("egc,ecd->egd", bary, corners)
    ends = mesh.boundary_edge_vertices()
    side = edge_slit_sides(mesh, ends[:, 0], ends[:, 1])
    return tris, bary, weights, points, side


def _trace_values(f: FeFunction, tris, bary) -> np.ndarray:
    return evaluate_fe_many(f.values, f.dofmap, tris, bary)


def boundary_l2_norm(f, mesh: Mesh | None = None) -> float:
    """The L2 norm over the boundary, by edge-wise two-point Gauss quadrature.

    ``f`` may be an :class:`FeFunction` (its own mesh is used) or a point
    function together with an explicit ``mesh``.
    """
    if isinstance(f, FeFunction):
        tris, bary, weights, _, _ = _boundary_gauss(f.mesh)
        vals = _trace_values(f, tris[:, None], bary)
    else:
        if mesh is None:
            raise ValueError("a mesh is required to integrate a point function")
        _, _, weights, points, side = _boundary_gauss(mesh)
        pf = as_point_function(f)
        vals = pf(points[..., 0], points[..., 1], side[:, None])
    return float(math.sqrt((weights * vals**2).sum()))


def broken_h1_norm(f: FeFunction) -> float:
    """The broken H1 norm: elementwise gradients plus the L2 part.

    For the conforming P1 family this is the usual H1 norm; for
    Crouzeix-Raviart the gradient is taken triangle by triangle.
    """
    corners, area, grads = fem._geometry(f.mesh)
    if f.dofmap.family == CR:
        grads = -2.0 * grads
    coef = f.values[f.dofmap.cell_dofs]
    grad = np.einsum("ta,tad->td", coef, grads)
    semi = (area * (grad**2).sum(axis=1)).sum()
    basis = fem._basis_at_bary(fem.TRIANGLE_QUADRATURE_BARY, f.dofmap.family)
    at_quad = coef @ basis.T
    mass = ((area[:, None] / 3.0) * at_quad**2).sum()
    return float(math.sqrt(semi + mass))


@dataclass
class TransferredTrace:
    """A fine-mesh function viewed from a coarse mesh through nesting.

    Wraps a reference :class:`FeFunction` on the fine end of a refinement
    chain; errors against coarse functions integrate on the fine boundary
    partition, evaluating the coarse function through the composed
    parent-triangle map.
    """

    fn: FeFunction
    chain: tuple[Refinement, ...]
    ancestor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.chain = tuple(self.chain)
        for ref in self.chain:
            if 2 * ref.coarse.level != ref.fine.level or ref.coarse.domain.kind != ref.fine.domain.kind:
                raise NestingError("refinement chain link is not a doubling of the same domain")
        for prev, nxt in zip(self.chain, self.chain[1:]):
            if prev.fine.level != nxt.coarse.level or prev.fine.domain.kind != nxt.coarse.domain.kind:
                raise NestingError("refinement chain links do not connect")
        if self.chain:
            last = self.chain[-1]
            if last.fine.level != self.fn.mesh.level or last.fine.domain.kind != self.fn.mesh.domain.kind:
                raise NestingError("refinement chain does not end at the reference mesh")
        anc = np.arange(self.fn.mesh.n_triangles)
        for ref in reversed(self.chain):
            anc = ref.parent_of[anc]
        self.ancestor = anc

    @property
    def coarse_mesh(self) -> Mesh:
        return self.chain[0].coarse if self.chain else self.fn.mesh


def transfer_reference(fn: FeFunction, chain: Sequence[Refinement],
                       coarse_mesh: Mesh | None = None) -> TransferredTrace:
    """Attach a refinement chain to a fine reference function.

    If ``coarse_mesh`` is given it must be the coarse end of the chain.

    Raises
    ------
    NestingError
        If the chain links do not connect, do not end at the mesh of ``fn``,
        or do not start at ``coarse_mesh``.
    """
    trace = TransferredTrace(fn=fn, chain=tuple(chain))
    if coarse_mesh is not None:
        got = trace.coarse_mesh
        if got.level != coarse_mesh.level or got.domain.kind != coarse_mesh.domain.kind:
            raise NestingError(
                f"chain starts at {got.domain.kind} level {got.level}, not "
                f"{coarse_mesh.domain.kind} level {coarse_mesh.level}")
    return trace


def _bary_in_triangles(mesh: Mesh, tris: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of given points inside given triangles."""
    corners = mesh.triangle_corners()[tris]
    d1 = corners[..., 1, :] - corners[..., 0, :]
    d2 = corners[..., 2, :] - corners[..., 0, :]
    dp = points - corners[..., 0, :]
    det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    l1 = (dp[..., 0] * d2[..., 1] - dp[..., 1] * d2[..., 0]) / det
    l2 = (d1[..., 0] * dp[..., 1] - d1[..., 1] * dp[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _paired_boundary_values(u: FeFunction, ref) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature weights and paired trace values of ``u`` and ``ref``.

    Dispatches on the reference type; all quadrature happens on the finest
    partition available so that every integrand is piecewise polynomial on
    every quadrature cell.
    """
    if isinstance(ref, TransferredTrace):
        coarse = ref.coarse_mesh
        if u.mesh.level != coarse.level or u.mesh.domain.kind != coarse.domain.kind:
            raise ValueError("function lives on a different mesh than the transferred trace")
        fine = ref.fn.mesh
        tris, bary, weights, points, _ = _boundary_gauss(fine)
        ref_vals = _trace_values(ref.fn, tris[:, None], bary)
        coarse_tris = ref.ancestor[tris]
        coarse_bary = _bary_in_triangles(u.mesh, coarse_tris[:, None], points)
        u_vals = evaluate_fe_many(u.values, u.dofmap, coarse_tris[:, None], coarse_bary)
        return weights, u_vals, ref_vals
    if isinstance(ref, FeFunction):
        if u.mesh.level != ref.mesh.level or u.mesh.domain.kind != ref.mesh.domain.kind:
            raise ValueError("functions live on different meshes; transfer one first")
        tris, bary, weights, _, _ = _boundary_gauss(u.mesh)
        return weights, _trace_values(u, tris[:, None], bary), _trace_values(ref, tris[:, None], bary)
    tris, bary, weights, points, side = _boundary_gauss(u.mesh)
    pf = as_point_function(ref)
    ref_vals = pf(points[..., 0], points[..., 1], side[:, None])
    return weights, _trace_values(u, tris[:, None], bary), ref_vals


def boundary_l2_error(u, ref) -> float:
    """Boundary L2 distance between a function and a reference.

    Symmetric in its arguments when both are finite element functions; a
    :class:`TransferredTrace` may appear on either side.
    """
    if isinstance(u, TransferredTrace) and not isinstance(ref, TransferredTrace):
        u, ref = ref, u
    weights, u_vals, ref_vals = _paired_boundary_values(u, ref)
    return float(math.sqrt((weights * (u_vals - ref_vals) ** 2).sum()))


def align_sign(u: FeFunction, ref) -> FeFunction:
    """Flip the sign of ``u`` so its boundary inner product with ``ref`` is positive.

    Raises
    ------
    AmbiguousAlignmentError
        If the inner product is below 1e-12 in absolute value, which signals
        a mismatched eigenpair rather than a sign ambiguity.
    """
    weights, u_vals, ref_vals = _paired_boundary_values(u, ref)
    ip = float((weights * u_vals * ref_vals).sum())
    if abs(ip) < 1e-12:
        raise AmbiguousAlignmentError(
            f"boundary inner product {ip:.3e} is too small to fix a sign")
    return u if ip > 0.0 else u.negated()


def convergence_ratio(coarse_error: float, fine_error: float) -> float:
    """The observed order ``log2(coarse/fine)`` for one refinement step."""
    if not (coarse_error > 0.0 and fine_error > 0.0) or not (
            math.isfinite(coarse_error) and math.isfinite(fine_error)):
        raise UndefinedRatioError(
            f"convergence ratio needs positive finite errors, got {coarse_error!r}, {fine_error!r}")
    return math.log2(coarse_error / fine_error)


@dataclass(frozen=True)
class ReferenceSpec:
    """How a study obtains its reference eigenvalue and eigenfunction.

    ``mode`` is ``"bracket"`` (midpoint of a tabulated enclosure),
    ``"richardson"`` (extrapolation from the three finest conforming
    eigenvalues at the theoretical rate), or ``"auto"`` (bracket when one is
    tabulated, otherwise richardson).  ``level`` is the reference mesh level
    for the eigenfunction trace.
    """

    mode: str = "auto"
    level: int = 512

    def __post_init__(self) -> None:
        if self.mode not in ("bracket", "richardson", "auto"):
            raise ValueError(f"unknown reference mode {self.mode!r}")

    def resolve_mode(self, domain: DomainSpec, eig_index: int) -> str:
        if self.mode == "auto":
            return "bracket" if (domain.kind, eig_index) in REFERENCE_INTERVALS else "richardson"
        return self.mode


@dataclass
class ReferenceSolution:
    """A conforming eigenfunction on the reference mesh, sign-normalized."""

    domain: DomainSpec
    level: int
    eig_index: int
    fn: FeFunction
    lambda_h: float


def _solve_level(mesh: Mesh, family: str, coeff: CoefficientField,
                 k: int, tol: float, seed: int):
    dofmap = build_dof_map(mesh, family)
    pencil = Pencil(assemble_stiffness(mesh, dofmap, coeff),
                    assemble_boundary_mass(mesh, dofmap))
    return dofmap, solve_pencil(pencil, k, tol=tol, seed=seed)


def compute_reference(domain: DomainSpec, level: int, eig_index: int = 2,
                      coeff: CoefficientField = UNIT_COEFFICIENTS,
                      tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED) -> ReferenceSolution:
    """Solve the conforming P1 problem on the reference mesh.

    The eigenfunction sign is normalized so that its largest-magnitude
    boundary dof value is positive, making the reference deterministic.
    """
    mesh = generate_mesh(domain, level)
    dofmap, sol = _solve_level(mesh, P1, coeff, eig_index + 1, tol, seed)
    values = sol.eigenvectors[:, eig_index - 1].copy()
    bvals = values[dofmap.boundary_dofs]
    if bvals[np.argmax(np.abs(bvals))] < 0.0:
        values = -values
    return ReferenceSolution(domain=domain, level=level, eig_index=eig_index,
                             fn=FeFunction(mesh, dofmap, values),
                             lambda_h=float(sol.eigenvalues[eig_index - 1]))


def _richardson_fit(levels: Sequence[int], lambdas: Sequence[float], rate: float) -> float:
    """Least-squares fit of ``lambda_h = lambda + C h**rate``."""
    h = np.array([math.sqrt(2.0) / n for n in levels])
    design = np.column_stack([np.ones_like(h), h**rate])
    coefs, *_ = np.linalg.lstsq(design, np.asarray(lambdas, dtype=float), rcond=None)
    return float(coefs[0])


@dataclass
class ConvergenceRow:
    """One study level: eigenvalue, boundary trace error, and observed orders."""

    level: int
    h: float
    lambda_h: float
    lambda_error: float
    lambda_ratio: float | None
    u_error: float
    u_ratio: float | None


@dataclass
class ConvergenceTable:
    """The outcome of a convergence study, with serialization helpers."""

    domain: DomainSpec
    family: str
    eig_index: int
    reference_mode: str
    reference_level: int
    reference_lambda: float
    rows: list[ConvergenceRow]
    warnings: list[str]

    @property
    def expected_lambda_rate(self) -> float:
        return 2.0 * self.domain.expected_r

    @property
    def expected_u_rate(self) -> float:
        return self.domain.expected_r + 0.5

    def to_csv(self) -> str:
        lines = ["h,lambda,ratio_lambda,err_boundary,ratio_u"]
        for row in self.rows:
            rl = "" if row.lambda_ratio is None else f"{row.lambda_ratio:.8f}"
            ru = "" if row.u_ratio is None else f"{row.u_ratio:.8f}"
            lines.append(f"sqrt2/{row.level},{row.lambda_h:.8f},{rl},{row.u_error:.8f},{ru}")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        head = (f"| h | lambda_{self.eig_index} | ratio | err(u_{self.eig_index}) | ratio |\n"
                "|---|---|---|---|---|\n")
        body = []
        for row in self.rows:
            rl = "" if row.lambda_ratio is None else f"{row.lambda_ratio:.8f}"
            ru = "" if row.u_ratio is None else f"{row.u_ratio:.8f}"
            body.append(f"| sqrt2/{row.level} | {row.lambda_h:.8f} | {rl} | "
                        f"{row.u_error:.8f} | {ru} |")
        return head + "\n".join(body) + "\n"


def _validate_levels(levels: Sequence[int], reference_level: int) -> list[int]:
    levels = [int(n) for n in levels]
    if not levels:
        raise ValueError("a study needs at least one level")
    for a, b in zip(levels, levels[1:]):
        if b != 2 * a:
            raise ValueError(f"study levels must double: {a} is followed by {b}")
    top = levels[-1]
    if reference_level <= top:
        raise ValueError(
            f"reference level {reference_level} must exceed the finest study level {top}")
    ratio = reference_level / top
    if 2 ** round(math.log2(ratio)) * top != reference_level:
        raise ValueError(
            f"reference level {reference_level} must be a power-of-two multiple of {top}")
    return levels


def run_convergence_study(domain: DomainSpec, family: str, levels: Sequence[int],
                          eig_index: int = 2,
                          coeff: CoefficientField = UNIT_COEFFICIENTS,
                          reference: ReferenceSpec = ReferenceSpec(),
                          tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED,
                          reference_solution: ReferenceSolution | None = None) -> ConvergenceTable:
    """Reproduce one eigenvalue/eigenfunction convergence table.

    For each level the pencil is solved for ``eig_index + 1`` pairs, the
    target eigenfunction is sign-aligned to the transferred reference, and
    the boundary L2 error is measured on the reference partition.  Ratios
    compare a level with the next finer one and sit on the coarser row; the
    finest row has none.

    Parameters
    ----------
    levels : sequence of int
        Ascending, each double the previous.
    reference_solution : ReferenceSolution, optional
        Reuse of a precomputed reference (its domain, level, and eigenvalue
        index must match; it must have been computed with the same
        coefficients).
    """
    if eig_index < 1:
        raise ValueError(f"eig_index must be at least 1, got {eig_index}")
    levels = _validate_levels(levels, reference.level)
    warnings: list[str] = []

    if reference_solution is None:
        reference_solution = compute_reference(domain, reference.level, eig_index,
                                               coeff=coeff, tol=tol, seed=seed)
    else:
        ok = (reference_solution.domain.kind == domain.kind
              and reference_solution.level == reference.level
              and reference_solution.eig_index == eig_index)
        if not ok:
            raise ValueError("reference solution does not match the study configuration")

    # Meshes and refinements along the doubling chain up to the reference.
    chain_levels = [levels[0]]
    while chain_levels[-1] < reference.level:
        chain_levels.append(2 * chain_levels[-1])
    meshes = {levels[0]: generate_mesh(domain, levels[0])}
    refinements: dict[int, Refinement] = {}
    for lvl in chain_levels[:-1]:
        r = refine(meshes[lvl])
        refinements[lvl] = r
        meshes[2 * lvl] = r.fine

    lambda_hs: list[float] = []
    u_errors: list[float] = []
    conforming_lambdas: dict[int, float] = {}
    for lvl in levels:
        mesh = meshes[lvl]
        dofmap, sol = _solve_level(mesh, family, coeff, eig_index + 1, tol, seed)
        lam = sol.eigenvalues
        target = float(lam[eig_index - 1])
        for nb in (eig_index - 2, eig_index):
            if 0 <= nb < len(lam):
                gap = abs(target - float(lam[nb])) / max(abs(target), 1.0)
                if gap < CLUSTER_GAP_TOL:
                    warnings.append(
                        f"level {lvl}: eigenvalue {eig_index} sits in a cluster "
                        f"(relative gap {gap:.2e}); pairing with the reference may be unstable")
        if family == P1:
            conforming_lambdas[lvl] = target
        u_h = FeFunction(mesh, dofmap, sol.eigenvectors[:, eig_index - 1])
        chain = [refinements[l] for l in chain_levels if l >= lvl and l < reference.level]
        trace = transfer_reference(reference_solution.fn, chain)
        u_h = align_sign(u_h, trace)
        u_errors.append(boundary_l2_error(u_h, trace))
        lambda_hs.append(target)

    mode = reference.resolve_mode(domain, eig_index)
    if mode == "bracket":
        try:
            lo, hi = REFERENCE_INTERVALS[(domain.kind, eig_index)]
        except KeyError:
            raise ValueError(
                f"no reference enclosure for ({domain.kind}, eigenvalue {eig_index}); "
                "use richardson") from None
        reference_lambda = 0.5 * (lo + hi)
    else:
        fit_levels = levels[-3:]
        if len(fit_levels) < 3:
            raise ValueError("richardson extrapolation needs at least three study levels")
        for lvl in fit_levels:
            if lvl not in conforming_lambdas:
                conforming_lambdas[lvl] = _solve_level(
                    meshes[lvl], P1, coeff, eig_index + 1, tol, seed)[1].eigenvalues[eig_index - 1]
        reference_lambda = _richardson_fit(
            fit_levels, [conforming_lambdas[l] for l in fit_levels],
            2.0 * domain.expected_r)

    rows: list[ConvergenceRow] = []
    lambda_errors = [abs(lh - reference_lambda) for lh in lambda_hs]
    for i, lvl in enumerate(levels):
        lam_ratio: float | None = None
        u_ratio: float | None = None
        if i + 1 < len(levels):
            try:
                lam_ratio = convergence_ratio(lambda_errors[i], lambda_errors[i + 1])
            except UndefinedRatioError:
                warnings.append(f"level {lvl}: eigenvalue ratio undefined (zero error)")
            try:
                u_ratio = convergence_ratio(u_errors[i], u_errors[i + 1])
            except UndefinedRatioError:
                warnings.append(f"level {lvl}: trace error ratio undefined (zero error)")
        rows.append(ConvergenceRow(level=lvl, h=math.sqrt(2.0) / lvl,
                                   lambda_h=lambda_hs[i], lambda_error=lambda_errors[i],
                                   lambda_ratio=lam_ratio, u_error=u_errors[i],
                                   u_ratio=u_ratio))
    return ConvergenceTable(domain=domain, family=family, eig_index=eig_index,
                            reference_mode=mode, reference_level=reference.level,
                            reference_lambda=reference_lambda, rows=rows,
                            warnings=warnings)
