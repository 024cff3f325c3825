import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import uniform_field
from signms import assembly, auxspace, coarse, coeffs, msbasis
from signms.errors import ConfigurationError
from signms.mesh import build_mesh


def fine_system(mesh, field, k):
    a = assembly.assemble_stiffness(mesh, field, "signed")
    m = assembly.assemble_mass(mesh, field, "signed", 1.0)
    return (a - k**2 * m).tocsr()


def test_single_element_coarse_system():
    mesh = build_mesh(4, 1)
    fld = uniform_field(mesh)
    aux = auxspace.build_auxiliary_space(mesh, fld, 1)
    system = fine_system(mesh, fld, 1.0)
    basis = msbasis.build_multiscale_basis(aux, system, 1)
    mat, _ = coarse.assemble_coarse_system(
        basis, system, np.zeros(mesh.num_nodes)
    )
    assert mat.shape == (1, 1)
    phi = basis.column(0, 0)
    assert mat[0, 0] == pytest.approx(phi @ (system @ phi), rel=1e-14)


def test_coarse_symmetry():
    mesh = build_mesh(16, 4)
    fld = coeffs.flat_interface(mesh)
    aux = auxspace.build_auxiliary_space(mesh, fld, 2)
    system = fine_system(mesh, fld, 4.0)
    basis = msbasis.build_multiscale_basis(aux, system, 1)
    mat, _ = coarse.assemble_coarse_system(basis, system, np.zeros(mesh.num_nodes))
    assert abs(mat - mat.T).max() <= 1e-10 * abs(mat).max()


def test_distant_patches_decouple_exactly():
    mesh = build_mesh(32, 8)
    fld = uniform_field(mesh)
    aux = auxspace.build_auxiliary_space(mesh, fld, 2)
    system = fine_system(mesh, fld, 1.0)
    m = 1
    basis = msbasis.build_multiscale_basis(aux, system, m)
    mat, _ = coarse.assemble_coarse_system(basis, system, np.zeros(mesh.num_nodes))
    dense = mat.toarray()
    nc = mesh.n_coarse
    for p in range(mesh.num_coarse):
        for q in range(mesh.num_coarse):
            dist = max(abs(p % nc - q % nc), abs(p // nc - q // nc))
            if dist > 2 * m + 1:
                block = dense[
                    p * aux.l_star:(p + 1) * aux.l_star,
                    q * aux.l_star:(q + 1) * aux.l_star,
                ]
                assert np.all(block == 0.0)


def test_solve_ms_zero_source(unit_square_16_4):
    mesh, fld = unit_square_16_4
    aux = auxspace.build_auxiliary_space(mesh, fld, 2)
    system = fine_system(mesh, fld, 1.0)
    basis = msbasis.build_multiscale_basis(aux, system, 2)
    u = coarse.solve_ms(
        coarse.assemble_coarse_system(basis, system, np.zeros(mesh.num_nodes)), basis
    )
    assert np.all(u == 0.0)


def test_galerkin_orthogonality(unit_square_16_4):
    mesh, fld = unit_square_16_4
    k = 1.0
    aux = auxspace.build_auxiliary_space(mesh, fld, 3)
    system = fine_system(mesh, fld, k)
    src = coeffs.gaussian_source(mesh, (0.4, 0.6), 0.15, True)
    load = assembly.assemble_load(mesh, src)
    u_ref = assembly.solve_reference(mesh, fld, k, src)
    basis = msbasis.build_multiscale_basis(aux, system, 2)
    u_ms = coarse.solve_ms(coarse.assemble_coarse_system(basis, system, load), basis)
    a_abs = assembly.assemble_stiffness(mesh, fld, "absolute")
    resid = system @ (u_ref - u_ms)
    scale = coarse.quad_norm(a_abs, u_ref)
    for col in range(aux.dim):
        phi = np.asarray(basis.matrix.getcol(col).todense()).ravel()
        b_val = phi @ resid
        assert abs(b_val) <= 1e-8 * scale * max(coarse.quad_norm(a_abs, phi), 1e-30)


def test_norms_trivial_cases(unit_square_16_4):
    mesh, fld = unit_square_16_4
    zero = np.zeros(mesh.num_nodes)
    assert coarse.energy_norm(mesh, fld, zero) == 0.0
    assert coarse.l2_norm(mesh, zero) == 0.0
    a_abs = assembly.assemble_stiffness(mesh, fld, "absolute")
    mass = assembly.unweighted_mass(mesh)
    u = np.linspace(0, 1, mesh.num_nodes)
    ea, el2 = coarse.relative_errors(u, u.copy(), a_abs, mass)
    assert ea == 0.0 and el2 == 0.0
    with pytest.raises(ConfigurationError):
        coarse.relative_errors(zero, u, a_abs, mass)


def test_energy_of_linear_interpolant(unit_square_16_4):
    mesh, fld = unit_square_16_4
    x = mesh.node_coords()[:, 0]
    assert coarse.energy_norm(mesh, fld, x) == pytest.approx(1.0, rel=1e-12)


def test_f_sinv_examples():
    mesh = build_mesh(20, 20)  # H = 1/20
    fld = uniform_field(mesh)
    zero = coeffs.SourceField(f=np.zeros(mesh.num_nodes))
    assert coarse.f_sinv_norm(mesh, fld, zero) == 0.0
    ones = coeffs.SourceField(f=np.ones(mesh.num_nodes))
    assert coarse.f_sinv_norm(mesh, fld, ones) == pytest.approx(
        (1.0 / 9600.0) ** 0.5, rel=1e-12
    )
    mesh2 = build_mesh(40, 40)  # halve H at fixed f, c
    fld2 = uniform_field(mesh2)
    ones2 = coeffs.SourceField(f=np.ones(mesh2.num_nodes))
    assert coarse.f_sinv_norm(mesh2, fld2, ones2) == pytest.approx(
        0.5 * (1.0 / 9600.0) ** 0.5, rel=1e-12
    )


def test_resolution_ratio():
    rho = coarse.resolution_ratio(4.0, 1.0 / 20.0, 1.0, 24.0)
    assert rho == pytest.approx(16.0 / 9600.0, rel=1e-14)
    assert coarse.resolution_ratio(8.0, 1.0 / 20.0, 1.0, 24.0) == pytest.approx(4 * rho)
    assert coarse.resolution_ratio(4.0, 1.0 / 40.0, 1.0, 24.0) == pytest.approx(rho / 4)
    with pytest.raises(ConfigurationError):
        coarse.resolution_ratio(-1.0, 0.05, 1.0)
    assert coarse.resolution_ok(rho)
    assert not coarse.resolution_ok(rho, threshold=1e-4)


@given(scale=st.floats(0.1, 10.0))
def test_rho_quadratic_scalings(scale):
    base = coarse.resolution_ratio(2.0, 0.1, 0.5)
    assert coarse.resolution_ratio(2.0 * scale, 0.1, 0.5) == pytest.approx(
        scale**2 * base, rel=1e-12
    )
    assert coarse.resolution_ratio(2.0, 0.1 * scale, 0.5) == pytest.approx(
        scale**2 * base, rel=1e-12
    )


def test_csv_rendering():
    report = coarse.SolveReport(
        experiment="flat_interface", n_fine=400, n_coarse=20, m=3, l_star=3,
        k=4.0, mu_msh=24.0, energy_rel=2.604e-3, l2_rel=3.22e-5,
        lambda_gap=0.8242, upsilon=1 / 3, rho=1.667e-3,
        seconds={"basis": 10.0},
    )
    text = coarse.render_error_table([report])
    header, row = text.strip().split("\n")
    assert header.startswith("H,m,l_star,k,energy_rel,l2_rel,lambda,upsilon,rho")
    assert "2.604e-03" in row and "5.000e-02" in row
    timed = coarse.render_error_table([report], include_timings=True)
    assert "seconds_basis" in timed.splitlines()[0]
    # failed rows render their message and empty numbers
    bad = coarse.SolveReport(
        experiment="x", n_fine=8, n_coarse=2, m=1, l_star=1, k=1.0, mu_msh=24.0,
        error="boom",
    )
    assert "boom" in coarse.render_error_table([bad])
