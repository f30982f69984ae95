import pytest

from steklovfem import (
    DomainSpec,
    Pencil,
    assemble_boundary_mass,
    assemble_stiffness,
    build_dof_map,
    generate_mesh,
)

KINDS = ("square", "lshape", "slit")

_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collect one pass/fail line per acceptance criterion.

    The lines are replayed in the terminal summary so they stay visible in a
    plain ``pytest -v`` run regardless of output capturing.
    """

    def report(criterion: int, passed: bool, detail: str) -> None:
        verdict = "PASS" if passed else "FAIL"
        _acceptance_lines.append(f"criterion {criterion}: {verdict}  {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def get_mesh():
    cache = {}

    def get(kind, level):
        key = (kind, level)
        if key not in cache:
            cache[key] = generate_mesh(DomainSpec(kind), level)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def get_dofmap(get_mesh):
    cache = {}

    def get(kind, level, family):
        key = (kind, level, family)
        if key not in cache:
            cache[key] = build_dof_map(get_mesh(kind, level), family)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def get_pencil(get_mesh, get_dofmap):
    cache = {}

    def get(kind, level, family):
        key = (kind, level, family)
        if key not in cache:
            mesh = get_mesh(kind, level)
            dofmap = get_dofmap(kind, level, family)
            cache[key] = Pencil(assemble_stiffness(mesh, dofmap),
                                assemble_boundary_mass(mesh, dofmap))
        return cache[key]

    return get
