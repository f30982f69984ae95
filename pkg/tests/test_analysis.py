import math

import numpy as np
import pytest

from steklovfem import (
    AmbiguousAlignmentError,
    CR,
    DomainSpec,
    FeFunction,
    NestingError,
    P1,
    PointFunction,
    ReferenceSpec,
    UndefinedRatioError,
    align_sign,
    boundary_l2_error,
    boundary_l2_norm,
    broken_h1_norm,
    build_dof_map,
    compute_reference,
    convergence_ratio,
    generate_mesh,
    interpolate_cr,
    interpolate_p1,
    refine,
    run_convergence_study,
    singular_model,
    solve_pencil,
    transfer_reference,
)
from steklovfem.analysis import _richardson_fit

from _utils import GAUSS2, boundary_edge_data, boundary_error_brute, eval_fe_brute


def p1_interpolant(mesh, f):
    dm = build_dof_map(mesh, P1)
    return FeFunction(mesh=mesh, dofmap=dm, values=interpolate_p1(mesh, dm, f))


def cr_interpolant(mesh, f):
    dm = build_dof_map(mesh, CR)
    return FeFunction(mesh=mesh, dofmap=dm, values=interpolate_cr(mesh, dm, f))


def random_fe(mesh, family, seed):
    dm = build_dof_map(mesh, family)
    rng = np.random.default_rng(seed)
    return FeFunction(mesh=mesh, dofmap=dm, values=rng.standard_normal(dm.n_dofs))


def chain_to(mesh, fine_level):
    """Refine ``mesh`` repeatedly up to ``fine_level``; returns (chain, fine mesh)."""
    chain = []
    while mesh.level < fine_level:
        r = refine(mesh)
        chain.append(r)
        mesh = r.fine
    return chain, mesh


class TestFeFunction:
    def test_value_shape_checked(self, get_mesh, get_dofmap):
        mesh = get_mesh("square", 2)
        dm = get_dofmap("square", 2, P1)
        with pytest.raises(ValueError, match="dof values"):
            FeFunction(mesh=mesh, dofmap=dm, values=np.zeros(dm.n_dofs + 1))

    def test_dofmap_mesh_consistency_checked(self, get_mesh, get_dofmap):
        dm2 = get_dofmap("square", 2, P1)
        mesh4 = get_mesh("square", 4)
        with pytest.raises(ValueError, match="does not belong"):
            FeFunction(mesh=mesh4, dofmap=dm2, values=np.zeros(dm2.n_dofs))

    def test_negated(self, get_mesh):
        fn = random_fe(get_mesh("square", 2), P1, seed=0)
        assert np.array_equal(fn.negated().values, -fn.values)


class TestBoundaryL2Norm:
    def test_constant_on_square(self, get_mesh):
        mesh = get_mesh("square", 4)
        assert boundary_l2_norm(lambda x, y: np.ones_like(x), mesh) == pytest.approx(2.0, rel=1e-12)

    def test_constant_on_slit(self, get_mesh):
        # The slit contributes both sides: perimeter 5, norm sqrt(5).
        mesh = get_mesh("slit", 4)
        assert boundary_l2_norm(lambda x, y: np.ones_like(x), mesh) == pytest.approx(
            math.sqrt(5.0), rel=1e-12)

    def test_fe_function_path(self, get_mesh):
        mesh = get_mesh("lshape", 4)
        fn = p1_interpolant(mesh, lambda x, y: np.ones_like(x))
        assert boundary_l2_norm(fn) == pytest.approx(2.0, rel=1e-12)  # perimeter 4

    def test_point_function_needs_mesh(self):
        with pytest.raises(ValueError, match="mesh"):
            boundary_l2_norm(lambda x, y: x)

    def test_norm_squared_equals_b_quadratic_form(self, get_mesh, get_pencil):
        mesh = get_mesh("lshape", 8)
        pencil = get_pencil("lshape", 8, P1)
        fn = random_fe(mesh, P1, seed=1)
        quad = float(fn.values @ (pencil.b @ fn.values))
        assert boundary_l2_norm(fn) ** 2 == pytest.approx(quad, rel=1e-12)

    def test_normalized_eigenvector_has_unit_trace_norm(self, get_mesh, get_pencil):
        mesh = get_mesh("lshape", 8)
        pencil = get_pencil("lshape", 8, P1)
        sol = solve_pencil(pencil, 2)
        fn = FeFunction(mesh=mesh, dofmap=build_dof_map(mesh, P1),
                        values=sol.eigenvectors[:, 1])
        assert boundary_l2_norm(fn) == pytest.approx(1.0, abs=1e-10)


class TestBrokenH1Norm:
    def test_constant_on_square(self, get_mesh):
        fn = p1_interpolant(get_mesh("square", 4), lambda x, y: np.ones_like(x))
        assert broken_h1_norm(fn) == pytest.approx(1.0, rel=1e-12)

    def test_linear_on_square(self, get_mesh):
        fn = p1_interpolant(get_mesh("square", 4), lambda x, y: x)
        assert broken_h1_norm(fn) == pytest.approx(math.sqrt(4.0 / 3.0), rel=1e-12)

    def test_constant_on_lshape(self, get_mesh):
        fn = p1_interpolant(get_mesh("lshape", 4), lambda x, y: np.ones_like(x))
        assert broken_h1_norm(fn) == pytest.approx(math.sqrt(0.75), rel=1e-12)

    def test_cr_linear_on_lshape(self, get_mesh):
        # int(x^2) over the L-shape is 3/16; the gradient part adds the area.
        fn = cr_interpolant(get_mesh("lshape", 4), lambda x, y: x)
        assert broken_h1_norm(fn) == pytest.approx(math.sqrt(0.75 + 3.0 / 16.0), rel=1e-12)


class TestTransfer:
    def test_constant_transfers_exactly(self, get_mesh):
        coarse = get_mesh("square", 4)
        chain, fine = chain_to(coarse, 8)
        u = p1_interpolant(coarse, lambda x, y: np.ones_like(x))
        ref = p1_interpolant(fine, lambda x, y: np.ones_like(x))
        trace = transfer_reference(ref, chain, coarse_mesh=coarse)
        assert boundary_l2_error(u, trace) == pytest.approx(0.0, abs=1e-13)

    def test_linear_transfers_exactly_two_hops(self, get_mesh):
        coarse = get_mesh("lshape", 4)
        chain, fine = chain_to(coarse, 16)
        u = p1_interpolant(coarse, lambda x, y: 2.0 * x - y)
        ref = p1_interpolant(fine, lambda x, y: 2.0 * x - y)
        trace = transfer_reference(ref, chain)
        assert trace.coarse_mesh.level == 4
        assert boundary_l2_error(u, trace) == pytest.approx(0.0, abs=1e-12)

    def test_cr_against_p1_reference(self, get_mesh):
        coarse = get_mesh("slit", 4)
        chain, fine = chain_to(coarse, 8)
        u = cr_interpolant(coarse, lambda x, y: x + y)
        ref = p1_interpolant(fine, lambda x, y: x + y)
        trace = transfer_reference(ref, chain)
        assert boundary_l2_error(u, trace) == pytest.approx(0.0, abs=1e-12)

    def test_empty_chain_degenerates_to_same_mesh(self, get_mesh):
        mesh = get_mesh("square", 4)
        u = p1_interpolant(mesh, lambda x, y: x)
        trace = transfer_reference(u, [])
        assert trace.coarse_mesh is mesh
        assert boundary_l2_error(u, trace) == pytest.approx(0.0, abs=1e-14)

    def test_chain_must_connect(self, get_mesh):
        r4 = refine(get_mesh("square", 4))
        r16 = refine(get_mesh("square", 16))
        fine = r16.fine
        ref = p1_interpolant(fine, lambda x, y: x)
        with pytest.raises(NestingError, match="connect"):
            transfer_reference(ref, [r4, r16])

    def test_chain_must_end_at_reference_mesh(self, get_mesh):
        r4 = refine(get_mesh("square", 4))
        ref16 = p1_interpolant(get_mesh("square", 16), lambda x, y: x)
        with pytest.raises(NestingError, match="end at the reference"):
            transfer_reference(ref16, [r4])

    def test_coarse_mesh_mismatch(self, get_mesh):
        coarse = get_mesh("square", 4)
        chain, fine = chain_to(coarse, 8)
        ref = p1_interpolant(fine, lambda x, y: x)
        with pytest.raises(NestingError, match="starts at"):
            transfer_reference(ref, chain, coarse_mesh=get_mesh("square", 8))
        with pytest.raises(NestingError, match="starts at"):
            transfer_reference(ref, chain, coarse_mesh=get_mesh("lshape", 4))

    def test_mismatched_function_mesh_rejected(self, get_mesh):
        coarse = get_mesh("square", 4)
        chain, fine = chain_to(coarse, 8)
        trace = transfer_reference(p1_interpolant(fine, lambda x, y: x), chain)
        stranger = p1_interpolant(get_mesh("square", 8), lambda x, y: x)
        with pytest.raises(ValueError, match="different mesh"):
            boundary_l2_error(stranger, trace)


class TestBoundaryL2Error:
    @pytest.mark.parametrize("kind,family", [
        ("lshape", P1), ("square", P1), ("slit", CR),
    ])
    def test_matches_brute_force_across_levels(self, get_mesh, kind, family):
        coarse = get_mesh(kind, 4)
        chain, fine = chain_to(coarse, 8)
        u = random_fe(coarse, family, seed=7)
        ref = random_fe(fine, P1, seed=8)
        trace = transfer_reference(ref, chain)
        got = boundary_l2_error(u, trace)
        expected = boundary_error_brute(u, ref)
        assert got == pytest.approx(expected, rel=1e-12)
        # The trace may sit on either side.
        assert boundary_l2_error(trace, u) == pytest.approx(got, rel=1e-14)

    def test_same_mesh_symmetry(self, get_mesh):
        mesh = get_mesh("lshape", 4)
        a = random_fe(mesh, P1, seed=2)
        b = random_fe(mesh, P1, seed=3)
        assert boundary_l2_error(a, b) == pytest.approx(boundary_l2_error(b, a), rel=1e-15)

    def test_triangle_inequality(self, get_mesh):
        mesh = get_mesh("square", 4)
        a = random_fe(mesh, P1, seed=4)
        b = random_fe(mesh, P1, seed=5)
        c = random_fe(mesh, P1, seed=6)
        assert boundary_l2_error(a, c) <= boundary_l2_error(a, b) + boundary_l2_error(b, c) + 1e-12

    def test_point_function_reference_with_slit_sides(self, get_mesh):
        mesh = get_mesh("slit", 8)
        model = singular_model(mesh.domain)
        u = p1_interpolant(mesh, model)
        got = boundary_l2_error(u, model)
        # Independent quadrature via brute-force evaluation.
        pa, pb, lengths, side = boundary_edge_data(mesh)
        total = 0.0
        for a, b, length, s in zip(pa, pb, lengths, side):
            for t, w in GAUSS2:
                pt = (1.0 - t) * a + t * b
                diff = eval_fe_brute(u, pt, side=int(s)) - float(model(pt[0], pt[1], side=int(s)))
                total += w * length * diff * diff
        assert got == pytest.approx(math.sqrt(total), rel=1e-12)
        assert got > 0.0

    def test_mismatched_same_level_meshes_rejected(self, get_mesh):
        a = p1_interpolant(get_mesh("square", 4), lambda x, y: x)
        b = p1_interpolant(get_mesh("lshape", 4), lambda x, y: x)
        with pytest.raises(ValueError, match="different meshes"):
            boundary_l2_error(a, b)


class TestAlignSign:
    def test_aligned_function_unchanged(self, get_mesh):
        mesh = get_mesh("square", 4)
        u = p1_interpolant(mesh, lambda x, y: np.ones_like(x))
        assert align_sign(u, u) is u

    def test_flipped_function_restored(self, get_mesh):
        mesh = get_mesh("square", 4)
        u = p1_interpolant(mesh, lambda x, y: 1.0 + x)
        flipped = align_sign(u.negated(), u)
        assert np.array_equal(flipped.values, u.values)

    def test_against_transferred_trace(self, get_mesh):
        coarse = get_mesh("lshape", 4)
        chain, fine = chain_to(coarse, 8)
        trace = transfer_reference(p1_interpolant(fine, lambda x, y: 1.0 + x), chain)
        u = p1_interpolant(coarse, lambda x, y: -(1.0 + x))
        aligned = align_sign(u, trace)
        assert np.array_equal(aligned.values, -u.values)

    def test_boundary_zero_function_is_ambiguous(self, get_mesh, get_dofmap):
        mesh = get_mesh("square", 4)
        dm = get_dofmap("square", 4, P1)
        values = np.zeros(dm.n_dofs)
        interior = np.setdiff1d(np.arange(dm.n_dofs), dm.boundary_dofs)
        values[interior[0]] = 1.0
        bump = FeFunction(mesh=mesh, dofmap=dm, values=values)
        ref = p1_interpolant(mesh, lambda x, y: np.ones_like(x))
        with pytest.raises(AmbiguousAlignmentError):
            align_sign(bump, ref)


class TestConvergenceRatio:
    def test_halving_is_first_order(self):
        assert convergence_ratio(0.4, 0.2) == pytest.approx(1.0)

    def test_published_trace_ratio_arithmetic(self):
        assert convergence_ratio(0.02800065, 0.01287370) == pytest.approx(1.12103345, abs=1e-6)

    @pytest.mark.parametrize("coarse,fine", [
        (0.0, 0.1), (0.1, 0.0), (-0.1, 0.1), (math.inf, 0.1), (math.nan, 0.1),
    ])
    def test_undefined_ratios(self, coarse, fine):
        with pytest.raises(UndefinedRatioError):
            convergence_ratio(coarse, fine)


class TestReferenceSpec:
    def test_auto_resolution(self):
        spec = ReferenceSpec()
        assert spec.resolve_mode(DomainSpec("lshape"), 2) == "bracket"
        assert spec.resolve_mode(DomainSpec("slit"), 2) == "bracket"
        assert spec.resolve_mode(DomainSpec("square"), 2) == "richardson"
        assert spec.resolve_mode(DomainSpec("lshape"), 3) == "richardson"

    def test_explicit_mode_wins(self):
        spec = ReferenceSpec(mode="richardson")
        assert spec.resolve_mode(DomainSpec("lshape"), 2) == "richardson"

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="reference mode"):
            ReferenceSpec(mode="exact")


class TestComputeReference:
    def test_sign_convention_and_determinism(self):
        ref = compute_reference(DomainSpec("lshape"), 16, eig_index=2)
        again = compute_reference(DomainSpec("lshape"), 16, eig_index=2)
        assert np.array_equal(ref.fn.values, again.fn.values)
        bvals = ref.fn.values[ref.fn.dofmap.boundary_dofs]
        assert bvals[np.argmax(np.abs(bvals))] > 0.0
        assert ref.level == 16 and ref.eig_index == 2

    def test_richardson_fit_recovers_exact_model(self):
        levels = [8, 16, 32]
        h = [math.sqrt(2.0) / n for n in levels]
        lams = [3.0 + 5.0 * hh**1.5 for hh in h]
        assert _richardson_fit(levels, lams, 1.5) == pytest.approx(3.0, abs=1e-10)


@pytest.fixture(scope="module")
def square_table():
    return run_convergence_study(
        DomainSpec("square"), P1, [8, 16, 32], eig_index=1,
        reference=ReferenceSpec(level=128))


class TestRunConvergenceStudy:
    def test_table_structure(self, square_table):
        table = square_table
        assert table.reference_mode == "richardson"
        assert table.reference_level == 128
        assert table.expected_lambda_rate == pytest.approx(2.0)
        assert table.expected_u_rate == pytest.approx(1.5)
        assert [row.level for row in table.rows] == [8, 16, 32]
        assert table.rows[0].h == pytest.approx(math.sqrt(2.0) / 8)
        assert table.rows[-1].lambda_ratio is None and table.rows[-1].u_ratio is None
        assert all(row.u_error > 0.0 for row in table.rows)
        assert table.warnings == []

    def test_conforming_lambdas_decrease(self, square_table):
        lams = [row.lambda_h for row in square_table.rows]
        assert lams[0] >= lams[1] >= lams[2]

    def test_csv_round_trip(self, square_table):
        csv = square_table.to_csv()
        lines = csv.strip().splitlines()
        assert lines[0] == "h,lambda,ratio_lambda,err_boundary,ratio_u"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "sqrt2/8"
        assert float(first[1]) == pytest.approx(square_table.rows[0].lambda_h, abs=5e-9)
        assert float(first[2]) == pytest.approx(square_table.rows[0].lambda_ratio, abs=5e-9)
        last = lines[3].split(",")
        assert last[2] == "" and last[4] == ""

    def test_markdown_structure(self, square_table):
        md = square_table.to_markdown()
        lines = md.strip().splitlines()
        assert lines[0].startswith("| h | lambda_1 |")
        assert lines[1].startswith("|---")
        assert len(lines) == 5
        assert lines[2].startswith("| sqrt2/8 |")

    def test_deterministic(self, square_table):
        again = run_convergence_study(
            DomainSpec("square"), P1, [8, 16, 32], eig_index=1,
            reference=ReferenceSpec(level=128))
        assert again.to_csv() == square_table.to_csv()

    def test_near_degenerate_pair_warns(self, monkeypatch):
        # The square's second and third eigenvalues differ by O(h^2); widening
        # the cluster tolerance to cover that gap must trigger the warning.
        import steklovfem.analysis as analysis

        monkeypatch.setattr(analysis, "CLUSTER_GAP_TOL", 1e-2)
        table = run_convergence_study(
            DomainSpec("square"), P1, [8, 16, 32], eig_index=2,
            reference=ReferenceSpec(level=64))
        assert any("cluster" in w for w in table.warnings)

    def test_level_validation(self):
        with pytest.raises(ValueError, match="must double"):
            run_convergence_study(DomainSpec("square"), P1, [8, 24],
                                  reference=ReferenceSpec(level=128))
        with pytest.raises(ValueError, match="must exceed"):
            run_convergence_study(DomainSpec("square"), P1, [8, 16],
                                  reference=ReferenceSpec(level=16))
        with pytest.raises(ValueError, match="power-of-two multiple"):
            run_convergence_study(DomainSpec("square"), P1, [8],
                                  reference=ReferenceSpec(level=24))
        with pytest.raises(ValueError, match="eig_index"):
            run_convergence_study(DomainSpec("square"), P1, [8], eig_index=0,
                                  reference=ReferenceSpec(level=16))

    def test_richardson_needs_three_levels(self):
        with pytest.raises(ValueError, match="three study levels"):
            run_convergence_study(DomainSpec("square"), P1, [8, 16],
                                  reference=ReferenceSpec(level=64), eig_index=1)

    def test_reference_solution_reuse_and_validation(self):
        domain = DomainSpec("square")
        ref = compute_reference(domain, 64, eig_index=1)
        table = run_convergence_study(
            domain, P1, [8, 16, 32], eig_index=1,
            reference=ReferenceSpec(level=64), reference_solution=ref)
        fresh = run_convergence_study(
            domain, P1, [8, 16, 32], eig_index=1, reference=ReferenceSpec(level=64))
        assert table.to_csv() == fresh.to_csv()
        with pytest.raises(ValueError, match="does not match"):
            run_convergence_study(domain, P1, [8, 16, 32], eig_index=1,
                                  reference=ReferenceSpec(level=128),
                                  reference_solution=ref)
        with pytest.raises(ValueError, match="does not match"):
            run_convergence_study(DomainSpec("lshape"), P1, [8, 16, 32], eig_index=1,
                                  reference=ReferenceSpec(level=64),
                                  reference_solution=ref)
