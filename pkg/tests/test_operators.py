import math

import numpy as np
import pytest

from pelliptic.ellipticity import MatrixField, sector_angle
from pelliptic.operators import (
    BoundaryCondition,
    Grid,
    assemble,
    lp_dissipativity,
    numerical_range_angle,
    stiffness_matrix,
)
from pelliptic.potentials import Potential

rng = np.random.default_rng(808)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((2,))
    with pytest.raises(ValueError):
        Grid((3, 3, 3))
    g = Grid((5, 9), extents=((0, 2), (0, 1)))
    assert g.h == (0.5, 0.125)
    assert g.nnodes == 45
    assert g.ncells == 32


def test_bc_presets_and_validation():
    g = Grid((5, 5))
    assert BoundaryCondition.dirichlet(g).dirichlet_mask.sum() == 16
    assert BoundaryCondition.neumann(g).dirichlet_mask.sum() == 0
    assert BoundaryCondition.mixed_left_edge(g).dirichlet_mask.sum() == 5
    bad = np.zeros(g.nnodes, dtype=bool)
    bad[g.nnodes // 2] = True    # interior node
    with pytest.raises(ValueError):
        BoundaryCondition(bad).validate(g)
    with pytest.raises(ValueError):
        BoundaryCondition.by_name("nope", g)


def test_1d_dirichlet_tridiagonal_entrywise():
    n = 9
    g = Grid((n,))
    L = assemble(g, np.eye(1), None, "dirichlet")
    h = g.h[0]
    expect = (np.diag(2.0 * np.ones(n - 2)) + np.diag(-np.ones(n - 3), 1)
              + np.diag(-np.ones(n - 3), -1)) / h**2
    assert np.array_equal(L.dense().real, expect)
    assert np.abs(L.dense().imag).max() == 0


def test_neumann_constants_in_kernel():
    g = Grid((9,))
    L = assemble(g, np.eye(1), None, "neumann")
    c = np.ones(L.nfree, dtype=complex)
    assert abs(L.form(c, c)) == 0.0
    g2 = Grid((6, 7))
    L2 = assemble(g2, np.eye(2), None, "neumann")
    c2 = np.ones(L2.nfree, dtype=complex)
    assert abs(L2.form(c2, c2)) < 1e-12


def test_stiffness_row_sums_vanish_for_constant_A():
    g = Grid((7, 6))
    F = stiffness_matrix(g, MatrixField(np.eye(2)))
    assert np.abs(np.asarray(F.sum(axis=1))).max() < 1e-12


def test_form_ellipticity_transfer():
    A = MatrixField(np.eye(2) + 0.3 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))))
    g = Grid((9, 9))
    L = assemble(g, A, None, "dirichlet")
    for _ in range(10):
        u = rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
        assert L.form(u, u).real >= A.lam * L.grad_norm_sq(u) - 1e-10


def test_form_adjoint_symmetry():
    A = MatrixField(np.eye(2) + 0.4 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))))
    g = Grid((6, 6))
    x = g.coords[:, 0]
    V = Potential.from_values(g, np.sin(5 * x))
    L = assemble(g, A, V, "dirichlet")
    Ladj = assemble(g, A.adjoint(), V, "dirichlet")
    u = rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
    v = rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
    assert Ladj.form(u, v) == pytest.approx(np.conj(L.form(v, u)), rel=1e-12)


def test_galerkin_consistency_rate():
    """Manufactured smooth field: a_h(u, u) converges to the continuum energy
    integral at second order."""
    A = MatrixField(np.array([[2.0, 0.3], [0.3, 1.0]]))

    def energy(n):
        g = Grid((n, n))
        L = assemble(g, A, None, "neumann")
        x, y = g.coords[:, 0], g.coords[:, 1]
        u = np.cos(np.pi * x) * np.cos(2 * np.pi * y)
        return L.form(u.astype(complex), u.astype(complex)).real

    # continuum value: int <A grad u, grad u> over the unit square
    target = 2.0 * np.pi**2 / 4 + 1.0 * (2 * np.pi) ** 2 / 4
    errs = [abs(energy(n) - target) for n in (9, 17, 33)]
    rate1 = math.log2(errs[0] / errs[1])
    rate2 = math.log2(errs[1] / errs[2])
    assert rate1 > 1.7 and rate2 > 1.8


def test_dirichlet_mask_monotonicity():
    """Growing the Dirichlet set never decreases the bottom eigenvalue of the
    symmetric part."""
    g = Grid((17,))
    A = MatrixField(np.eye(1))
    bcs = ["neumann", "mixed-left-edge", "dirichlet"]
    bottoms = []
    for bc in bcs:
        L = assemble(g, A, None, bc)
        H = 0.5 * (L.dense() + L.dense().conj().T).real
        bottoms.append(np.linalg.eigvalsh(H)[0])
    assert bottoms[0] <= bottoms[1] + 1e-12 <= bottoms[2] + 2e-12


def test_nonelliptic_A_flagged_not_raised():
    L = assemble(Grid((5,)), MatrixField(np.array([[-1.0]])), None, "dirichlet")
    assert not L.accretive_flag


def test_numerical_range_angle_examples():
    g = Grid((9,))
    x = g.coords[:, 0]
    Vp = Potential.from_values(g, 5.0 * np.abs(np.sin(3 * x)))
    L = assemble(g, np.eye(1), Vp, "dirichlet")
    assert numerical_range_angle(L) < 1e-12

    A = MatrixField(np.eye(1) * np.exp(0.4j))
    LA = assemble(g, A, None, "dirichlet")
    ang = numerical_range_angle(LA)
    assert ang == pytest.approx(0.4, abs=1e-9)
    assert ang <= sector_angle(A, 0.0) + 1e-9

    # adding V_+ to the diagonal cannot push the angle past the sector bound
    LAV = assemble(g, A, Vp, "dirichlet")
    assert numerical_range_angle(LAV) <= sector_angle(A, 0.0) + 1e-9


def test_numerical_range_angle_2d_real_nonsymmetric():
    g = Grid((6, 6))
    A = MatrixField(np.array([[1.0, 0.5], [-0.5, 1.0]]))
    L = assemble(g, A, None, "dirichlet")
    ang = numerical_range_angle(L)
    assert 0.0 < ang <= sector_angle(A, 0.0) + 1e-9


def test_lp_dissipativity_examples():
    g = Grid((17,))
    L = assemble(g, np.eye(1), None, "dirichlet")
    for p in (1.4, 2.0, 3.0, 7.0):
        for _ in range(10):
            u = rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
            assert lp_dissipativity(L, p, u) >= -1e-11
    with pytest.raises(ValueError):
        lp_dissipativity(L, 1.0, np.ones(L.nfree))


def test_lp_dissipativity_within_perturbed_window():
    """Complex coefficients plus certified negative part: the dissipativity
    integrand stays nonnegative for exponents inside the perturbed window."""
    from pelliptic.potentials import solve_subcritical

    g = Grid((65,))
    x = g.coords[:, 0]
    well = ((x > 0.4) & (x < 0.6)).astype(float)
    V = Potential(g, np.zeros(g.nnodes), 2.0 * well)
    alpha = solve_subcritical(V, "dirichlet", betas=(0.0,)).alpha_curve[0][1]
    A = MatrixField(np.exp(0.2j) * np.eye(1))
    p = 3.0
    q = p / (p - 1)
    from pelliptic.ellipticity import is_perturbed_p_elliptic
    assert is_perturbed_p_elliptic(A, alpha, p).is_strict
    L = assemble(g, A, V, "dirichlet")
    r = np.random.default_rng(5)
    xs = g.coords[L.free, 0]
    for k in range(20):
        u = sum((r.standard_normal() + 1j * r.standard_normal()) * np.sin((j + 1) * np.pi * xs)
                for j in range(4))
        val = lp_dissipativity(L, p, u)
        assert val >= -1e-8 * L.lp_norm(u, p) ** p


def test_garding_constant_identity_case():
    g = Grid((9,))
    L = assemble(g, np.eye(1), None, "dirichlet")
    assert L.garding_constant() == pytest.approx(1.0, abs=1e-10)


def test_accretivity_lower_bound_with_certificate():
    """Re a_h(u,u) >= lambda(A - alpha I)||grad_h u||^2 + (1-beta)||V_+^{1/2}u||^2
    whenever the discrete subcritical certificate (alpha, beta) holds."""
    from pelliptic.potentials import solve_subcritical

    g = Grid((65,))
    x = g.coords[:, 0]
    well = 3.0 * ((x > 0.4) & (x < 0.6)).astype(float)
    ridge = 2.0 * ((x > 0.1) & (x < 0.3)).astype(float)
    V = Potential(g, ridge, well)
    beta = 0.5
    alpha = solve_subcritical(V, "dirichlet", betas=(beta,)).alpha_curve[0][1]
    A = MatrixField(np.exp(0.15j) * np.eye(1))
    L = assemble(g, A, V, "dirichlet")
    lam_shift = A.lam - alpha
    vol = g.node_volume
    vplus = V.v_plus[L.free]
    for _ in range(20):
        u = rng.standard_normal(L.nfree) + 1j * rng.standard_normal(L.nfree)
        lhs = L.form(u, u).real
        rhs = lam_shift * L.grad_norm_sq(u) + (1 - beta) * vol * float(np.sum(vplus * np.abs(u) ** 2))
        assert lhs >= rhs - 1e-9 * abs(lhs)


def test_numerical_range_vs_sector_cross_check():
    """Constant-field cross-check of the sector angle against the sampled and
    refined numerical-range angle, including a non-Hermitian complex matrix."""
    g = Grid((7, 7))
    for mat in (np.array([[1.0, 1j], [-1j, 2.0]]),          # Hermitian: real range
                np.array([[1.0, 0.6j], [0.1j, 2.0]])):      # genuinely rotated range
        A = MatrixField(mat)
        if A.lam <= 0:
            continue
        L = assemble(g, A, None, "dirichlet")
        ang = numerical_range_angle(L)
        th = sector_angle(A, 0.0)
        assert ang <= th + 1e-9
    herm = MatrixField(np.array([[1.0, 1j], [-1j, 2.0]]))
    Lh = assemble(g, herm, None, "dirichlet")
    assert numerical_range_angle(Lh) < 1e-10


def test_varying_cell_field_assembly_and_delta_p():
    """Piecewise-constant coefficient fields: per-cell values drive both the
    ellipticity scan (worst cell) and the assembled form."""
    from pelliptic.ellipticity import delta_p

    g = Grid((7, 7))
    r = np.random.default_rng(3)
    vals = np.stack([np.eye(2) + 0.25 * (r.standard_normal((2, 2)) + 1j * r.standard_normal((2, 2)))
                     for _ in range(g.ncells)])
    A = MatrixField(vals, grid=g)
    rep = delta_p(A, 3.0, restarts=8)
    per_cell = [delta_p(MatrixField(vals[i]), 3.0, restarts=8).delta_p for i in range(g.ncells)]
    assert rep.delta_p == pytest.approx(min(per_cell), abs=1e-8)

    F = stiffness_matrix(g, A)
    assert np.abs(np.asarray(F.sum(axis=1))).max() < 1e-11   # row sums vanish cellwise
    L = assemble(g, A, None, "dirichlet")
    u = np.random.default_rng(4).standard_normal(L.nfree) + 0j
    assert L.form(u, u).real >= A.lam * L.grad_norm_sq(u) - 1e-10
