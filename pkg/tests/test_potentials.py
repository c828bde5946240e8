import math

import numpy as np
import pytest

from pelliptic.operators import BoundaryCondition, Grid
from pelliptic.potentials import (
    Potential,
    halfspace_kernel,
    hardy_preset,
    solve_subcritical,
    truncate,
    vol_norm,
)


@pytest.fixture(scope="module")
def grid1d():
    return Grid((65,))


def test_potential_canonical_split(grid1d):
    values = np.sin(np.linspace(0, 7, grid1d.nnodes))
    V = Potential.from_values(grid1d, values)
    assert np.all(V.v_plus >= 0) and np.all(V.v_minus >= 0)
    assert np.all(V.v_plus * V.v_minus == 0)
    assert np.allclose(V.values, values)
    with pytest.raises(ValueError):
        Potential(grid1d, np.ones(grid1d.nnodes), np.ones(grid1d.nnodes))


def test_truncate(grid1d):
    vm = np.linspace(0, 10, grid1d.nnodes)
    V = Potential(grid1d, np.zeros(grid1d.nnodes), vm)
    assert np.all(truncate(V, 0.0).v_minus == 0)
    assert np.allclose(truncate(V, 100.0).v_minus, vm)
    assert truncate(V, 4.0).v_minus.max() == 4.0
    with pytest.raises(ValueError):
        truncate(V, -1.0)


def test_hardy_preset_values(grid1d):
    D = np.zeros(grid1d.nnodes, dtype=bool)
    D[0] = True
    V = hardy_preset(grid1d, D, 2.0)
    h = grid1d.h[0]
    assert V.v_minus[1] == pytest.approx(h**-2)     # one cell from D
    assert V.v_minus[0] == pytest.approx(h**-2)     # capped at the one-cell value
    assert np.all(V.v_plus == 0)
    # symmetric on symmetric grids with D the full boundary
    Vfull = hardy_preset(grid1d, grid1d.boundary_nodes(), 2.0)
    assert np.allclose(Vfull.v_minus, Vfull.v_minus[::-1])
    with pytest.raises(ValueError):
        hardy_preset(grid1d, np.zeros(grid1d.nnodes, dtype=bool), 2.0)


def test_subcritical_zero_negative_part(grid1d):
    V = Potential(grid1d, np.abs(np.sin(np.linspace(0, 3, grid1d.nnodes))), np.zeros(grid1d.nnodes))
    cert = solve_subcritical(V, "dirichlet", betas=(0.0, 0.5, 0.9))
    assert all(a == 0.0 for _, a in cert.alpha_curve)


def test_subcritical_scaling_homogeneity(grid1d):
    x = grid1d.coords[:, 0]
    vm = ((x > 0.3) & (x < 0.7)).astype(float)
    V1 = Potential(grid1d, np.zeros(grid1d.nnodes), vm)
    V3 = Potential(grid1d, np.zeros(grid1d.nnodes), 3.0 * vm)
    a1 = solve_subcritical(V1, "dirichlet", betas=(0.0,)).alpha_curve[0][1]
    a3 = solve_subcritical(V3, "dirichlet", betas=(0.0,)).alpha_curve[0][1]
    assert a3 == pytest.approx(3.0 * a1, rel=1e-8)


def test_subcritical_monotone_in_beta(grid1d):
    x = grid1d.coords[:, 0]
    well = ((x > 0.4) & (x < 0.6)).astype(float)
    ridge = 5.0 * ((x > 0.1) & (x < 0.35)).astype(float)
    V = Potential(grid1d, ridge, 8.0 * well)
    cert = solve_subcritical(V, "dirichlet", betas=(0.0, 0.3, 0.6, 0.9))
    alphas = [a for _, a in cert.alpha_curve]
    assert all(b <= a + 1e-10 for a, b in zip(alphas, alphas[1:]))
    assert max(cert.residuals) < 1e-8


def test_subcritical_dirichlet_set_monotonicity(grid1d):
    """Enlarging the Dirichlet set shrinks the form domain and cannot
    increase alpha."""
    x = grid1d.coords[:, 0]
    V = Potential(grid1d, np.zeros(grid1d.nnodes), 4.0 * ((x > 0.3) & (x < 0.8)))
    a_neu = solve_subcritical(V, "neumann", betas=(0.0,)).alpha_curve[0][1]
    a_mix = solve_subcritical(V, "mixed-left-edge", betas=(0.0,)).alpha_curve[0][1]
    a_dir = solve_subcritical(V, "dirichlet", betas=(0.0,)).alpha_curve[0][1]
    assert a_dir <= a_mix + 1e-10
    assert a_mix <= a_neu + 1e-10 if math.isfinite(a_neu) else True


def test_subcritical_truncation_monotone(grid1d):
    x = grid1d.coords[:, 0]
    V = Potential(grid1d, np.zeros(grid1d.nnodes), 10.0 * ((x > 0.35) & (x < 0.65)))
    alphas = []
    for n in (1.0, 2.5, 5.0, 10.0):
        cert = solve_subcritical(truncate(V, n), "dirichlet", betas=(0.0,))
        alphas.append(cert.alpha_curve[0][1])
    assert all(a <= b + 1e-10 for a, b in zip(alphas, alphas[1:]))
    full = solve_subcritical(V, "dirichlet", betas=(0.0,)).alpha_curve[0][1]
    assert alphas[-1] == pytest.approx(full, rel=1e-10)


def test_subcritical_neumann_constant_mode(grid1d):
    x = grid1d.coords[:, 0]
    V = Potential(grid1d, np.zeros(grid1d.nnodes), np.ones(grid1d.nnodes))
    cert = solve_subcritical(V, "neumann", betas=(0.0,))
    assert cert.unbounded
    assert not math.isfinite(cert.alpha_curve[0][1])
    assert cert.deflated_constant


def test_vol_norm_zero_and_scaling(grid1d):
    V0 = Potential.zero(grid1d)
    assert vol_norm(V0, 3.0, 3.0)["value"] == 0.0
    x = grid1d.coords[:, 0]
    vm = ((x > 0.2) & (x < 0.5)).astype(float)
    V1 = Potential(grid1d, np.zeros(grid1d.nnodes), vm)
    V4 = Potential(grid1d, np.zeros(grid1d.nnodes), 4.0 * vm)
    r1 = vol_norm(V1, 4.0, 2.5, model="polynomial", d=3)
    r4 = vol_norm(V4, 4.0, 2.5, model="polynomial", d=3)
    assert r4["value"] == pytest.approx(2.0 * r1["value"], rel=1e-9)


def test_vol_norm_finite_vs_divergent_tails(grid1d):
    """Compactly supported bounded V_-: finite iff r1 > d > r2 (polynomial
    volume); r1 = r2 = d is flagged divergent by the tail slopes."""
    x = grid1d.coords[:, 0]
    V = Potential(grid1d, np.zeros(grid1d.nnodes), ((x > 0.2) & (x < 0.5)).astype(float))
    good = vol_norm(V, 4.0, 2.5, model="polynomial", d=3)
    assert good["finite"]
    bad = vol_norm(V, 3.0, 3.0, model="polynomial", d=3)
    assert not bad["finite"]
    with pytest.raises(ValueError):
        vol_norm(V, 2.0, 3.0)


def test_halfspace_kernel_mass_symmetry_semigroup():
    t, d = 0.1, 2
    x = np.array([0.3, 0.4])
    # mass: quadrature over R x R_+
    s = math.sqrt(2 * t)
    g1 = np.linspace(x[0] - 10 * s, x[0] + 10 * s, 401)
    g2 = np.linspace(0.0, x[1] + 12 * s, 481)
    Y1, Y2 = np.meshgrid(g1, g2, indexing="ij")
    Y = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
    vals = halfspace_kernel(t, x, Y, d)
    grid_vals = vals.reshape(Y1.shape)
    mass = np.trapezoid(np.trapezoid(grid_vals, g2, axis=1), g1)
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(vals >= 0)

    y = np.array([0.9, 0.2])
    assert halfspace_kernel(t, x, y, d) == halfspace_kernel(t, y, x, d)

    # semigroup composition at t = s = 0.1
    ks = halfspace_kernel(t, Y, np.broadcast_to(y, Y.shape), d)
    prod = (vals * ks).reshape(Y1.shape)
    comp = float(np.trapezoid(np.trapezoid(prod, g2, axis=1), g1))
    assert comp == pytest.approx(halfspace_kernel(2 * t, x, y, d), abs=1e-4)

    with pytest.raises(ValueError):
        halfspace_kernel(0.0, x, y, d)


def test_halfspace_kernel_gaussian_upper_bound():
    """Fitted Gaussian domination |k_t| <= C e^{-c|x-y|^2/t} / v(x, sqrt t)."""
    from pelliptic.potentials import volume_model

    d = 2
    vm = volume_model("half-space", d)
    rng = np.random.default_rng(0)
    C_fit, c_const = 4.0, 0.24
    for _ in range(300):
        t = 10.0 ** rng.uniform(-2, 1)
        x = np.array([rng.uniform(-2, 2), rng.uniform(0.01, 3)])
        y = np.array([rng.uniform(-2, 2), rng.uniform(0.01, 3)])
        k = halfspace_kernel(t, x, y, d)
        bound = C_fit * math.exp(-c_const * float(np.sum((x - y) ** 2)) / t) / vm(x, math.sqrt(t))
        assert k <= bound * (1 + 1e-9)
