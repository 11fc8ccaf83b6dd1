import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vhl import fem
from vhl.geometry import KernelParams

# quadratic forms of the N = 8 stiffness matrices against an independent
# nested adaptive quadrature of 1/2 int int (u(x)-u(y))^2 B K on (0,1)^2
MIX = np.array([1.0, -1.0, 2.0, 0.0, 1.0, -2.0, 1.0])
ORACLE_N8 = [
    # s, sigma, beta, variant, vector, value
    (0.75, 0.5, 2.0, "vanishing-horizon", "e1", 9.124217421740399),
    (0.75, 0.5, 2.0, "vanishing-horizon", "e4", 6.719908871913831),
    (0.75, 0.5, 2.0, "vanishing-horizon", "mix", 140.3827618882575),
    (0.6, 1.0, 1.0, "vanishing-horizon", "e1", 2.7546218029142664),
    (0.6, 1.0, 1.0, "vanishing-horizon", "e4", 3.999220693988839),
    (0.6, 1.0, 1.0, "vanishing-horizon", "mix", 59.49493624447811),
    (0.75, 0.5, 2.0, "regional", "e1", 15.132411091266984),
    (0.75, 0.5, 2.0, "regional", "e4", 8.335133169138503),
    (0.75, 0.5, 2.0, "regional", "mix", 186.65659045546107),
    (0.9, 0.3, 3.0, "vanishing-horizon", "e1", 193.0797703287972),
    (0.9, 0.3, 3.0, "vanishing-horizon", "e4", 21.257964154693916),
    (0.9, 0.3, 3.0, "vanishing-horizon", "mix", 1137.9534907131172),
]


def _vector(name):
    if name == "mix":
        return MIX
    v = np.zeros(7)
    v[int(name[1:]) - 1] = 1.0
    return v


def test_mesh_examples():
    m = fem.build_mesh(8, 1)
    assert m.nodes.tolist() == [k / 8 for k in range(9)]
    assert fem.build_mesh(8, 2).nodes[1] == 1 / 32
    m = fem.build_mesh(1024, fem.auto_grading(0.75))
    assert m.grading_beta == 4.0
    assert m.nodes[1] == 0.5 * (2 / 1024) ** 4
    assert m.nodes[0] == 0.0 and m.nodes[-1] == 1.0
    assert m.n_interior == 1023


@pytest.mark.parametrize("n,beta", [(7, 1.0), (9, 2.0), (6, 1.0), (8, 0.5)])
def test_mesh_errors(n, beta):
    with pytest.raises(ValueError):
        fem.build_mesh(n, beta)


@given(st.integers(4, 200).map(lambda k: 2 * k), st.floats(1.0, 6.0))
def test_mesh_invariants(n, beta):
    m = fem.build_mesh(n, beta)
    assert np.all(np.diff(m.nodes) >= 0)
    assert np.all(m.widths > 0)
    assert np.allclose(m.dist, np.minimum(m.nodes, 1 - m.nodes), rtol=0, atol=1e-15)
    assert np.array_equal(m.dist, m.dist[::-1])
    assert abs(m.widths.sum() - 1.0) < 1e-14


def test_auto_grading_cap():
    assert fem.auto_grading(0.6) == 6.0
    assert fem.auto_grading(0.9) == pytest.approx(2.5)


@pytest.mark.parametrize("s,sigma,beta,variant,name,ref", ORACLE_N8)
def test_quadratic_form_matches_oracle(s, sigma, beta, variant, name, ref):
    A = fem.assemble_stiffness(fem.build_mesh(8, beta), KernelParams(s, sigma), variant).matrix
    q = _vector(name)
    assert q @ A @ q == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("variant", fem.VARIANTS)
@pytest.mark.parametrize("s,sigma,beta", [(0.6, 1.0, 6.0), (0.75, 0.5, 4.0), (0.9, 0.3, 2.5)])
def test_symmetric_positive_definite(variant, s, sigma, beta):
    A = fem.assemble_stiffness(fem.build_mesh(64, beta), KernelParams(s, sigma), variant).matrix
    assert np.array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0


def test_variant_validation():
    with pytest.raises(ValueError):
        fem.assemble_stiffness(fem.build_mesh(8, 1.0), KernelParams(0.75, 0.5), "full")


def test_zero_vector_has_zero_energy():
    mesh = fem.build_mesh(16, 2.0)
    params = KernelParams(0.75, 0.5)
    field = fem.SolutionField(mesh, np.zeros(15), params)
    assert fem.energy(field) == 0.0
    assert fem.energy(field, "regional") == 0.0


def test_deep_hat_diagonal_equals_regional():
    # restricted to the cells of its own support the hat never leaves the
    # saturation neighbourhood, so the weight is 1 throughout
    mesh = fem.build_mesh(64, 1.0)
    params = KernelParams(0.75, 0.5)
    i = 32
    cells = [i - 1, i]
    a = fem.assemble_stiffness(mesh, params, cells=cells).matrix
    r = fem.assemble_stiffness(mesh, params, "regional", cells=cells).matrix
    assert a[i - 1, i - 1] == pytest.approx(r[i - 1, i - 1], rel=1e-6)


def test_full_diagonal_gap_shrinks_with_refinement():
    # the far field seen by a central hat weighs less as the hat narrows
    params = KernelParams(0.75, 0.5)
    gaps = []
    for n in (32, 64, 128):
        mesh = fem.build_mesh(n, 1.0)
        i = n // 2 - 1
        a = fem.assemble_stiffness(mesh, params).matrix[i, i]
        r = fem.assemble_stiffness(mesh, params, "regional").matrix[i, i]
        assert a < r
        gaps.append((r - a) / r)
    assert gaps[0] > gaps[1] > gaps[2]


def test_interior_rows_agree_within_saturation():
    mesh = fem.build_mesh(64, 1.0)
    params = KernelParams(0.75, 0.5)
    a = fem.assemble_stiffness(mesh, params).matrix
    r = fem.assemble_stiffness(mesh, params, "regional").matrix
    i = 31  # node x = 1/2
    for k in range(2, 6):
        for j in (i - k, i + k):
            assert a[i, j] == pytest.approx(r[i, j], rel=1e-12)


@pytest.mark.parametrize("s,sigma", [(0.6, 1.0), (0.75, 0.5), (0.9, 0.3)])
def test_diagonal_dominated_by_regional(s, sigma):
    mesh = fem.build_mesh(64, 2.0)
    params = KernelParams(s, sigma)
    a = fem.assemble_stiffness(mesh, params).matrix
    r = fem.assemble_stiffness(mesh, params, "regional").matrix
    assert np.all(np.abs(np.diag(a)) <= np.abs(np.diag(r)) * (1 + 1e-10))
    # the difference is a positive semidefinite form
    assert np.linalg.eigvalsh(r - a).min() >= -1e-9 * np.abs(r).max()


@given(st.lists(st.floats(-1, 1), min_size=31, max_size=31), st.sampled_from([0.3, 0.5, 1.0]))
def test_quadratic_form_dominance(q, sigma):
    q = np.array(q)
    mesh = fem.build_mesh(32, 2.0)
    params = KernelParams(0.75, sigma)
    a = q @ fem.assemble_stiffness(mesh, params).matrix @ q
    r = q @ fem.assemble_stiffness(mesh, params, "regional").matrix @ q
    assert a >= 0
    assert a <= r * (1 + 1e-8) + 1e-300


def test_assembly_independent_of_worker_count(monkeypatch):
    mesh = fem.build_mesh(96, 3.0)
    params = KernelParams(0.6, 1.0)
    out = []
    for threads in ("1", "3"):
        monkeypatch.setattr(fem, "_CACHE", {})
        monkeypatch.setenv("VHL_THREADS", threads)
        out.append(fem.assemble_stiffness(mesh, params).matrix.copy())
    assert np.array_equal(out[0], out[1])


def test_load_vector_examples():
    mesh = fem.build_mesh(8, 1.0)
    h = 1 / 8
    assert np.all(fem.assemble_load(mesh, lambda x: np.zeros_like(x)) == 0.0)
    assert fem.assemble_load(mesh, np.ones_like) == pytest.approx(np.full(7, h), rel=1e-14)
    assert fem.assemble_load(mesh, lambda x: x) == pytest.approx(h * mesh.nodes[1:-1], rel=1e-14)


def test_load_vector_graded_mesh_hat_integrals():
    mesh = fem.build_mesh(16, 3.0)
    b = fem.assemble_load(mesh, np.ones_like)
    assert b == pytest.approx(0.5 * (mesh.widths[:-1] + mesh.widths[1:]), rel=1e-14)


def test_solve_zero_load():
    A = fem.assemble_stiffness(fem.build_mesh(16, 2.0), KernelParams(0.75, 0.5))
    field, rep = fem.solve_dirichlet(A, np.zeros(15))
    assert np.all(field.coefficients == 0.0)
    assert rep.linf_norm == 0.0 and rep.residual_norm == 0.0


def test_solve_positive_with_small_residual():
    mesh = fem.build_mesh(1024, 4.0)
    A = fem.assemble_stiffness(mesh, KernelParams(0.75, 1.0))
    field, rep = fem.solve_dirichlet(A, fem.assemble_load(mesh, np.ones_like))
    u = field.coefficients
    assert u.min() > 0
    assert rep.residual_norm <= 1e-10 * np.linalg.norm(A.matrix, 2) * np.linalg.norm(u)
    vals = field.nodal_values()
    assert vals[0] == 0.0 and vals[-1] == 0.0 and len(vals) == 1025


def test_energy_increases_under_refinement():
    # nested graded meshes: the Galerkin energy grows toward its limit
    params = KernelParams(0.75, 1.0)
    energies = []
    for n in (16, 32, 64, 128):
        mesh = fem.build_mesh(n, 2.0)
        A = fem.assemble_stiffness(mesh, params)
        field, _ = fem.solve_dirichlet(A, fem.assemble_load(mesh, np.ones_like))
        energies.append(fem.energy(field))
    assert all(b > a for a, b in zip(energies, energies[1:]))
    steps = np.diff(energies)
    assert all(b < a for a, b in zip(steps, steps[1:]))


def test_energy_bounded_by_regional_energy():
    mesh = fem.build_mesh(64, 2.0)
    params = KernelParams(0.6, 0.5)
    field = fem.SolutionField.from_function(mesh, params, lambda x, d: d**0.2 * np.cos(3 * x))
    assert fem.energy(field) <= fem.energy(field, "regional") * (1 + 1e-8)


def test_non_positive_definite_matrix_is_rejected():
    mesh = fem.build_mesh(8, 1.0)
    bad = fem.StiffnessMatrix(-np.eye(7), "vanishing-horizon", mesh, KernelParams(0.75, 0.5))
    with pytest.raises(fem.AssemblyError, match="pivot"):
        fem.solve_dirichlet(bad, np.ones(7))


def test_csv_serialisation():
    mesh = fem.build_mesh(8, 2.0)
    params = KernelParams(0.75, 0.5)
    field = fem.SolutionField.from_function(mesh, params, lambda x, d: np.sqrt(d) / 3)
    lines = field.to_csv().splitlines()
    assert lines[0] == "node,x,u"
    assert len(lines) == 10
    assert lines[1] == "0,0,0" and lines[-1] == "8,1,0"
    for k, line in enumerate(lines[1:]):
        node, x, u = line.split(",")
        assert int(node) == k
        assert float(x) == mesh.nodes[k]
        assert float(u) == field.nodal_values()[k]
    A = fem.assemble_stiffness(mesh, params)
    rows = A.to_csv().splitlines()
    assert rows[0] == "i,j,value" and len(rows) == 50
    i, j, v = rows[9].split(",")
    assert float(v) == A.matrix[int(i), int(j)]
