"""Ellipticity constants and the p-ellipticity machinery.

Computes lambda(A), Lambda(A), Delta_p(A), the perturbed-p-ellipticity
verdict for pairs (A, alpha), the sector angle of the associated form, the
admissible exponent window for the identity matrix, and rotation margins.

Delta_p(A) restricted to the complex unit sphere is a real quadratic form
on R^{2d}; the sphere minimum is found by multi-start projected gradient
descent seeded with the exact symmetric-part eigenvector, with an optional
dense quasi-random sweep for d <= 3 as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import real_form

VERDICT_TOL = 1e-8

P_PLUS_UNBOUNDED = math.inf


class MatrixField:
    """Piecewise-constant complex matrix field: one d x d value per grid cell.

    ``values`` may be a single matrix (constant field) or a stack of cell
    values with shape (ncells, d, d).  ``grid`` is only required when the
    field is used to assemble an operator.
    """

    def __init__(self, values, grid=None):
        values = np.asarray(values, dtype=complex)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError("values must be (ncells, d, d) or a single (d, d) matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix entries must be finite")
        self.values = values
        self.grid = grid
        self._lam = None
        self._Lam = None

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def ncells(self) -> int:
        return self.values.shape[0]

    def cell(self, i: int) -> np.ndarray:
        return self.values[i % self.ncells]

    def is_constant(self) -> bool:
        return self.ncells == 1 or bool(np.all(self.values == self.values[:1]))

    def unique_values(self, limit: int = 256):
        """Distinct cell matrices (deterministic subsample beyond ``limit``)."""
        seen, out = set(), []
        for i in range(self.ncells):
            key = self.values[i].tobytes()
            if key not in seen:
                seen.add(key)
                out.append(self.values[i])
        if len(out) > limit:
            idx = np.linspace(0, len(out) - 1, limit).astype(int)
            out = [out[i] for i in idx]
        return out

    def shifted(self, s: complex) -> "MatrixField":
        """A - s*I, cellwise."""
        eye = np.eye(self.d)
        return MatrixField(self.values - s * eye, grid=self.grid)

    def scaled(self, z: complex) -> "MatrixField":
        return MatrixField(z * self.values, grid=self.grid)

    def adjoint(self) -> "MatrixField":
        return MatrixField(np.conj(np.swapaxes(self.values, 1, 2)), grid=self.grid)

    @property
    def lam(self) -> float:
        """lambda(A): min over cells and |xi|=1 of Re<A xi, xi>."""
        if self._lam is None:
            herm = 0.5 * (self.values + np.conj(np.swapaxes(self.values, 1, 2)))
            self._lam = float(min(np.linalg.eigvalsh(h)[0] for h in herm))
        return self._lam

    @property
    def Lam(self) -> float:
        """Lambda(A): max over cells of the spectral norm."""
        if self._Lam is None:
            self._Lam = float(max(np.linalg.norm(v, 2) for v in self.values))
        return self._Lam


def as_field(A, grid=None) -> MatrixField:
    if isinstance(A, MatrixField):
        return A
    return MatrixField(A, grid=grid)


@dataclass
class EllipticityReport:
    p: float
    delta_p: float
    alpha: float = 0.0
    verdict: str = ""
    witness_cell: int = 0
    witness_xi: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        if not self.verdict:
            self.verdict = classify(self.delta_p)

    @property
    def is_strict(self) -> bool:
        return self.verdict == "p-elliptic"


def classify(value: float, tol: float = VERDICT_TOL) -> str:
    if value > tol:
        return "p-elliptic"
    if value >= -tol:
        return "weakly p-elliptic"
    return "not p-elliptic"


def _form_matrix(A: np.ndarray, gamma: float) -> np.ndarray:
    """Symmetric 2d x 2d matrix of v -> Re<A xi, xi + gamma conj(xi)>."""
    d = A.shape[0]
    M = real_form(A)
    J = np.diag(np.concatenate([np.ones(d), -np.ones(d)]))
    Q = M + gamma * (J @ M)
    return 0.5 * (Q + Q.T)


def _min_on_sphere(Q: np.ndarray, restarts: int, rng, sweep: bool):
    """Minimize v^T Q v over the unit sphere of R^{2d}.

    Exact minimum is the smallest eigenvalue of the symmetric Q; the
    eigenvector seeds the multi-start projected gradient descent, whose
    restarts (plus an optional quasi-random sweep) act as cross-checks.
    """
    m = Q.shape[0]
    evals, evecs = np.linalg.eigh(Q)
    best_val, best_v = evals[0], evecs[:, 0]

    starts = [best_v] + [rng.standard_normal(m) for _ in range(restarts)]
    lam_max = evals[-1]
    step = 1.0 / max(lam_max - evals[0], 1e-12)
    for v in starts:
        v = v / np.linalg.norm(v)
        for _ in range(200):
            g = Q @ v
            val = v @ g
            w = v - step * (g - val * v)    # project gradient to tangent, step, renormalize
            w /= np.linalg.norm(w)
            if np.linalg.norm(w - v) < 1e-14:
                v = w
                break
            v = w
        val = v @ Q @ v
        if val < best_val:
            best_val, best_v = val, v

    if sweep:
        n = 100_000
        pts = _quasi_sphere(m, n)
        vals = np.einsum("ij,jk,ik->i", pts, Q, pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_v = vals[i], pts[i]
    return float(best_val), best_v


def _quasi_sphere(m: int, n: int) -> np.ndarray:
    """Quasi-random points on S^{m-1} from a Halton-like lattice through the gaussian map."""
    from scipy.stats import qmc, norm

    sampler = qmc.Halton(d=m, scramble=False, seed=0)
    u = sampler.random(n)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    x = norm.ppf(u)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def delta_p(A, p: float, restarts: int = 64, seed: int = 0, sweep: bool | None = None) -> EllipticityReport:
    """Delta_p(A) = min over cells of min_{|xi|=1} Re<A(x) xi, xi + |1-2/p| conj(xi)>."""
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    A = as_field(A)
    gamma = abs(1.0 - 2.0 / p)
    rng = np.random.default_rng(seed)
    if sweep is None:
        sweep = A.d <= 3 and A.ncells == 1

    best = math.inf
    wcell, wxi = 0, None
    for i, Acell in enumerate(A.unique_values()):
        val, v = _min_on_sphere(_form_matrix(Acell, gamma), restarts, rng, sweep)
        if val < best:
            best = val
            wcell = i
            d = A.d
            wxi = v[:d] + 1j * v[d:]
    return EllipticityReport(p=p, delta_p=best, alpha=0.0, witness_cell=wcell, witness_xi=wxi)


def is_perturbed_p_elliptic(A, alpha: float, p: float, **kw) -> EllipticityReport:
    """Report on Delta_p(A - alpha*(pq/4)*I): the negative-part-compensated condition."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    A = as_field(A)
    q = p / (p - 1.0)
    rep = delta_p(A.shifted(alpha * p * q / 4.0), p, **kw)
    rep.alpha = alpha
    return rep


def exponent_window(alpha: float) -> tuple[float, float]:
    """Admissible exponent interval (p_-, p_+) = (2/(1+sqrt(1-a)), 2/(1-sqrt(1-a)))."""
    if not 0 <= alpha < 1:
        raise ValueError(f"window requires 0 <= alpha < 1 (supercritical perturbation: {alpha})")
    s = math.sqrt(1.0 - alpha)
    p_minus = 2.0 / (1.0 + s)
    p_plus = P_PLUS_UNBOUNDED if alpha == 0 else 2.0 / (1.0 - s)
    return p_minus, p_plus


def sector_angle(A, alpha: float = 0.0) -> float:
    """arctan( sqrt(Lambda^2 - lambda^2) / lambda(A - alpha I) ), in [0, pi/2)."""
    A = as_field(A)
    lam_shift = A.lam - alpha
    if lam_shift <= 0:
        raise ValueError("A - alpha*I is not accretive; sector angle undefined")
    num = math.sqrt(max(A.Lam**2 - A.lam**2, 0.0))
    return math.atan2(num, lam_shift)


def openness_epsilon(A, p: float, max_eps: float = 16.0, tol: float = 1e-3, **kw) -> float:
    """Largest eps (bisection) with Delta_{p+eps}(A) > 0; exploits that the
    p-elliptic range of exponents is an interval around 2."""
    A = as_field(A)
    if delta_p(A, p, **kw).delta_p <= VERDICT_TOL:
        return 0.0
    lo, hi = 0.0, max_eps
    if delta_p(A, p + hi, **kw).delta_p > VERDICT_TOL:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if delta_p(A, p + mid, **kw).delta_p > VERDICT_TOL:
            lo = mid
        else:
            hi = mid
    return lo


def rotation_margin(A, alpha: float, p: float, tol: float = 1e-4, n_phi: int = 33, **kw) -> float:
    """Largest theta with Delta_p(e^{i phi} A - alpha cos(phi) (pq/4) I) > 0 on [-theta, theta].

    Uses alpha*cos(phi) as the conservative bound for the rotated potential
    strength.  Bisection to ``tol`` radians over the sampled-phi predicate.
    """
    A = as_field(A)
    q = p / (p - 1.0)

    def ok(phi: float) -> bool:
        shifted = MatrixField(
            np.exp(1j * phi) * A.values - alpha * math.cos(phi) * (p * q / 4.0) * np.eye(A.d),
            grid=A.grid,
        )
        return delta_p(shifted, p, **kw).delta_p > VERDICT_TOL

    if not ok(0.0):
        return 0.0
    lo, hi = 0.0, math.pi / 2 - 1e-12
    if all(ok(phi) for phi in np.linspace(-hi, hi, n_phi)):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if all(ok(phi) for phi in np.linspace(-mid, mid, n_phi)):
            lo = mid
        else:
            hi = mid
    return lo
