"""Propagation e^{-zL} for real and complex z, contractivity sweeps,
analyticity-cone checks, off-diagonal decay bounds, and truncation
convergence.

Small systems use an exact-exponential path (cached eigendecomposition,
falling back to scaling-and-squaring when ill-conditioned); systems above
4096 unknowns use Crank-Nicolson with 1e-3*t substeps.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .operators import DiscreteOperator
from .potentials import Potential, truncate

DENSE_LIMIT = 4096


class _Propagator:
    """Cached exact propagator for one assembled operator."""

    def __init__(self, L: DiscreteOperator):
        self.L = L
        self._eig = None
        self._expm_cache = {}

    def _spectral(self):
        if self._eig is None:
            M = self.L.dense()
            scale = max(np.abs(M).max(), 1e-300)
            if np.abs(M - M.conj().T).max() <= 1e-14 * scale:
                lam, X = np.linalg.eigh(0.5 * (M + M.conj().T))
                self._eig = (lam.astype(complex), X, X.conj().T, True)
                return self._eig
            lam, X = np.linalg.eig(M)
            try:
                Xi = np.linalg.inv(X)
                resid = np.linalg.norm(X @ (lam[:, None] * Xi) - M) / max(np.linalg.norm(M), 1e-300)
                cond = np.linalg.cond(X)
            except np.linalg.LinAlgError:
                resid, cond = np.inf, np.inf
            self._eig = (lam, X, Xi, resid < 1e-10 and cond < 1e9)
        return self._eig

    def apply(self, z: complex, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=complex)
        if z == 0:
            return B.copy()
        if self.L.nfree <= DENSE_LIMIT:
            lam, X, Xi, ok = self._spectral()
            if ok:
                return X @ (np.exp(-z * lam)[:, None] * (Xi @ B)) if B.ndim == 2 \
                    else X @ (np.exp(-z * lam) * (Xi @ B))
            key = complex(z)
            if key not in self._expm_cache:
                if len(self._expm_cache) > 32:
                    self._expm_cache.clear()
                self._expm_cache[key] = scipy.linalg.expm(-z * self.L.dense())
            return self._expm_cache[key] @ B
        return _crank_nicolson(self.L, z, B)


def _crank_nicolson(L: DiscreteOperator, z: complex, B: np.ndarray,
                    substep_frac: float = 1e-3) -> np.ndarray:
    m = max(int(round(1.0 / substep_frac)), 1)
    dz = z / m
    A = L.matrix().tocsc()
    n = A.shape[0]
    I = sp.identity(n, format="csc", dtype=complex)
    lu = splu((I + 0.5 * dz * A).tocsc())
    right = (I - 0.5 * dz * A).tocsc()
    U = np.asarray(B, dtype=complex)
    for _ in range(m):
        U = lu.solve(right @ U)
    return U


def _propagator(L: DiscreteOperator) -> _Propagator:
    prop = getattr(L, "_propagator", None)
    if prop is None:
        prop = _Propagator(L)
        L._propagator = prop
    return prop


def admissible(L: DiscreteOperator, z: complex, margin: float = 0.0) -> bool:
    """z = 0, positive reals, and rays with |arg z| < pi/2 - theta0."""
    if z == 0:
        return True
    if z.real <= 0 and z.imag == 0:
        return False
    return abs(cmath.phase(complex(z))) < math.pi / 2 - L.theta0 - margin


def propagate(L: DiscreteOperator, f: np.ndarray, z: complex, check: bool = False) -> np.ndarray:
    """e^{-zL} f on the free nodes; complex z must satisfy the cone gate."""
    z = complex(z)
    if z.imag != 0 and not admissible(L, z):
        raise ValueError(f"arg(z) = {cmath.phase(z):.4f} lies outside the analyticity cone "
                         f"(pi/2 - theta0 = {math.pi / 2 - L.theta0:.4f})")
    u = _propagator(L).apply(z, np.asarray(f, dtype=complex))
    if check and z != 0:
        defect = propagation_defect(L, f, z)
        if defect > 1e-6:
            raise ArithmeticError(f"propagation defect {defect:.2e} exceeds 1e-6")
    return u


def propagation_defect(L: DiscreteOperator, f: np.ndarray, z: complex,
                       rel_eps: float = 1e-6) -> float:
    """Relative defect ||(d/dz + L) u|| / ||f|| at the checkpoint z (directional
    derivative along z/|z|)."""
    z = complex(z)
    eps = rel_eps * abs(z)
    direction = z / abs(z)
    prop = _propagator(L)
    up = prop.apply(z + eps * direction, f)
    um = prop.apply(z - eps * direction, f)
    u = prop.apply(z, f)
    du = (up - um) / (2 * eps * direction)
    r = du + L.apply(u)
    return float(np.linalg.norm(r) / max(np.linalg.norm(f), 1e-300))


@dataclass
class Trajectory:
    times: list
    norms: dict                      # r -> list of ||T_t f||_r
    states: list | None = None

    def to_csv(self, path):
        import csv
        rs = sorted(self.norms)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_re", "time_im"] + [f"norm_{r}" for r in rs])
            for i, t in enumerate(self.times):
                t = complex(t)
                w.writerow([repr(t.real), repr(t.imag)] + [repr(self.norms[r][i]) for r in rs])


def trajectory(L: DiscreteOperator, f: np.ndarray, times, r_values=(2.0,),
               keep_states: bool = False) -> Trajectory:
    times = [complex(t) for t in times]
    if times[0] != 0:
        times = [0.0 + 0.0j] + times
    prop = _propagator(L)
    norms = {r: [] for r in r_values}
    states = [] if keep_states else None
    for t in times:
        u = prop.apply(t, f)
        for r in r_values:
            norms[r].append(L.lp_norm(u, r))
        if keep_states:
            states.append(u)
    return Trajectory(times=times, norms=norms, states=states)


def contractivity_sweep(L: DiscreteOperator, p_list, f_samples, t_grid,
                        tol: float = 1e-8) -> dict:
    """max over samples and times of ||T_t f||_p / ||f||_p per exponent."""
    F = np.stack([np.asarray(f, dtype=complex) for f in f_samples], axis=1)
    prop = _propagator(L)
    worst = {p: 0.0 for p in p_list}
    base = {p: np.array([L.lp_norm(F[:, j], p) for j in range(F.shape[1])]) for p in p_list}
    for t in t_grid:
        U = prop.apply(complex(t), F)
        for p in p_list:
            r = np.array([L.lp_norm(U[:, j], p) for j in range(U.shape[1])]) / base[p]
            worst[p] = max(worst[p], float(r.max()))
    return {
        "max_ratio": worst,
        "contractive": {p: worst[p] <= 1.0 + tol for p in p_list},
        "tol": tol,
    }


def offdiagonal_check(L: DiscreteOperator, E, F, z_list, n_samples: int = 8,
                      seed: int = 0) -> dict:
    """Decay of ||T_z f||_{l2(F)} / ||f||_{l2(E)} against e^{-d(E,F)/(4C|z|)}.

    E, F are disjoint full-grid node index sets; C is built from the
    ellipticity constants and the fitted discrete Garding constant.
    """
    E = np.asarray(E, dtype=int)
    F = np.asarray(F, dtype=int)
    if np.intersect1d(E, F).size:
        raise ValueError("E and F must be disjoint")
    coords = L.grid.coords
    d2 = ((coords[E][:, None, :] - coords[F][None, :, :]) ** 2).sum(axis=2)
    dist = math.sqrt(float(d2.min()))
    if dist <= 0:
        raise ValueError("d(E, F) must be positive")

    free_pos = -np.ones(L.grid.nnodes, dtype=int)
    free_pos[L.free] = np.arange(L.nfree)
    Ef = free_pos[E]; Ef = Ef[Ef >= 0]
    Ff = free_pos[F]; Ff = Ff[Ff >= 0]
    rng = np.random.default_rng(seed)
    samples = [np.zeros(L.nfree, dtype=complex) for _ in range(n_samples)]
    for s in samples:
        s[Ef] = rng.standard_normal(Ef.size) + 1j * rng.standard_normal(Ef.size)
    samples[0][Ef] = 1.0    # indicator of E

    lam, Lam = L.A.lam, L.A.Lam
    c = L.garding_constant()
    prop = _propagator(L)
    results = []
    for z in z_list:
        z = complex(z)
        psi = abs(cmath.phase(z)) if z != 0 else 0.0
        denom = c * math.cos(psi + L.theta0)
        C = Lam + (Lam**2 * math.cos(psi)) / denom if denom > 0 else math.inf
        bound = math.exp(-dist / (4.0 * C * abs(z))) if math.isfinite(C) else 1.0
        worst = 0.0
        for s in samples:
            u = prop.apply(z, s)
            num = float(np.linalg.norm(u[Ff]))
            den = float(np.linalg.norm(s[Ef]))
            worst = max(worst, num / den)
        # computed decay saturates at the propagator's roundoff floor, so ratios
        # below it count as passes even when the bound is astronomically small
        floor = 64 * np.finfo(float).eps
        results.append({"z": z, "ratio": worst, "bound": bound,
                        "pass": worst <= max(bound + 1e-12, floor)})
    return {"d_EF": dist, "C_offdiag": C, "results": results,
            "all_pass": all(r["pass"] for r in results)}


def truncation_convergence(grid, A, V: Potential, bc, f, z: complex, n_list,
                           alpha: float = 0.0, beta: float = 0.0) -> dict:
    """Discrepancies of the truncated semigroups against the untruncated one:

        grad_n = || grad_h(T_z^{V_n} f - T_z^V f) ||_2
        pot_n  = || |V_n|^{1/2} T_z^{V_n} f - |V|^{1/2} T_z^V f ||_2

    z must lie in the common analyticity cone of the uniformly sectorial
    truncation family.
    """
    from .operators import assemble

    L_full = assemble(grid, A, V, bc)
    L_full.alpha, L_full.beta = alpha, beta
    z = complex(z)
    if z.imag != 0 and not admissible(L_full, z):
        raise ValueError("z lies outside the common analyticity cone of the truncations")
    f = np.asarray(f, dtype=complex)
    u_full = propagate(L_full, f, z)
    vol = grid.node_volume
    w_full = np.sqrt(np.abs(V.values))[L_full.free] * u_full

    rows = []
    for n in n_list:
        Vn = truncate(V, float(n))
        Ln = assemble(grid, A, Vn, bc)
        Ln.alpha, Ln.beta = alpha, beta
        un = propagate(Ln, f, z)
        grad_disc = math.sqrt(max(L_full.grad_norm_sq(un - u_full), 0.0))
        wn = np.sqrt(np.abs(Vn.values))[Ln.free] * un
        pot_disc = math.sqrt(vol * float(np.sum(np.abs(wn - w_full) ** 2)))
        rows.append({"n": float(n), "grad": grad_disc, "pot": pot_disc})
    return {"z": z, "rows": rows}
