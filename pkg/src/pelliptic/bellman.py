"""The two-variable Nazarov-Treil Bellman function and its calculus.

Exact evaluation of Q, its first derivatives and piecewise Hessian, the
weight tau, the auxiliary forms F_r, b_p, g_p, h_p, K_q, the chain-rule
gradient of G_p(u, v) = u * max{|u|^{p/2-1}, |v|^{1-q/2}}, and sampled
certification of the generalized-convexity lower bound with matrix-shift
compensators.

Branch convention: the "above" formulas apply on |zeta|^p >= |eta|^q
(ties included); the two branches agree there, which the tests assert.
All evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ellipticity import as_field
from .linalg import gen_hessian_batch

DEFAULT_DELTA = 0.05
DELTA_SWEEP = (0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625)


@dataclass(frozen=True)
class BellmanParams:
    p: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0,1), got {self.delta}")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass
class PointSample:
    zeta: complex
    eta: complex
    X: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    Y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    regime: str = ""

    @staticmethod
    def regime_of(params: BellmanParams, zeta, eta, tol: float = 1e-12) -> str:
        s = abs(zeta) ** params.p - abs(eta) ** params.q
        scale = abs(zeta) ** params.p + abs(eta) ** params.q
        if abs(s) <= tol * max(scale, 1e-300):
            return "boundary"
        return "above" if s > 0 else "below"


def _above(params: BellmanParams, az, ae):
    return az**params.p >= ae**params.q


def q_value(params: BellmanParams, zeta, eta):
    """Q(zeta, eta); continuous across |zeta|^p = |eta|^q."""
    p, q, d = params.p, params.q, params.delta
    az = np.abs(np.asarray(zeta, dtype=complex))
    ae = np.abs(np.asarray(eta, dtype=complex))
    above = _above(params, az, ae)
    corr = np.where(above, (2.0 / p) * az**p + (2.0 / q - 1.0) * ae**q, az**2 * ae ** (2.0 - q))
    out = az**p + ae**q + d * corr
    return out if out.ndim else float(out)


def q_grad(params: BellmanParams, zeta, eta):
    """Wirtinger derivatives (d_zeta Q, d_eta Q), the piecewise closed forms."""
    p, q, d = params.p, params.q, params.delta
    zeta = np.asarray(zeta, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    az, ae = np.abs(zeta), np.abs(eta)
    above = _above(params, az, ae)

    brz = np.where(above, az ** (p - 2.0), ae ** (2.0 - q))
    dz = 0.5 * np.conj(zeta) * (p * az ** (p - 2.0) + 2.0 * d * brz)

    ez = ae == 0
    ae_s = np.where(ez, 1.0, ae)
    bre = np.where(above, ae_s ** (q - 2.0), az**2 * ae_s ** (-q))
    de = 0.5 * np.conj(eta) * (q * ae_s ** (q - 2.0) + (2.0 - q) * d * bre)
    de = np.where(ez, 0.0, de)

    if dz.ndim == 0:
        return complex(dz), complex(de)
    return dz, de


def tau(params: BellmanParams, zeta, eta):
    """tau = max{|zeta|^{p-2}, |eta|^{2-q}} (0^0 read as 1)."""
    az = np.abs(np.asarray(zeta, dtype=complex))
    ae = np.abs(np.asarray(eta, dtype=complex))
    out = np.maximum(az ** (params.p - 2.0), ae ** (2.0 - params.q))
    return out if out.ndim else float(out)


def tau_cd(params: BellmanParams, D: float, zeta, eta):
    """Branch-weighted variant: (p-1)|zeta|^{p-2} above, D|eta|^{2-q} below."""
    p, q = params.p, params.q
    az = np.abs(np.asarray(zeta, dtype=complex))
    ae = np.abs(np.asarray(eta, dtype=complex))
    out = np.where(_above(params, az, ae), (p - 1.0) * az ** (p - 2.0), D * ae ** (2.0 - q))
    return out if out.ndim else float(out)


def tau_cd_reciprocal(params: BellmanParams, D: float, zeta, eta):
    t = tau_cd(params, D, zeta, eta)
    if np.any(np.asarray(t) == 0.0):
        raise ZeroDivisionError("reciprocal of tau requested at a zero of tau")
    return 1.0 / t


def _sign(z):
    az = np.abs(z)
    azs = np.where(az == 0, 1.0, az)
    return np.where(az == 0, 0.0, z / azs)


def hess_Fr(r: float, zeta, X):
    """H_{F_r}^{I_d}[zeta; X] = (r^2/2)|zeta|^{r-2}((2/r')|Re(s X)|^2 + (2/r)|Im(s X)|^2),
    with s = e^{-i arg zeta}."""
    if r <= 1:
        raise ValueError("r must exceed 1")
    zeta = np.asarray(zeta, dtype=complex)
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[None]
    zeta = np.atleast_1d(zeta)
    if r == 2.0:
        out = 2.0 * np.sum(np.abs(X) ** 2, axis=-1)
        return out if out.size > 1 else float(out[0])
    az = np.abs(zeta)
    if r < 2.0 and np.any(az == 0):
        raise ZeroDivisionError("H_{F_r} is singular at zeta = 0 for r < 2")
    rp = r / (r - 1.0)
    w = np.conj(_sign(zeta))[:, None] * X
    re2 = np.sum(w.real**2, axis=-1)
    im2 = np.sum(w.imag**2, axis=-1)
    out = (r * r / 2.0) * az ** (r - 2.0) * ((2.0 / rp) * re2 + (2.0 / r) * im2)
    return out if out.size > 1 else float(out[0])


def _radial_hessian(r: float, z: np.ndarray) -> np.ndarray:
    """2x2 real Hessian of |z|^r in (x, y) coordinates, batched over z (n,)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = z.size
    H = np.zeros((n, 2, 2))
    if r == 0.0:
        return H
    rho = np.abs(z)
    pos = rho > 0
    if r == 2.0:
        H[:, 0, 0] = H[:, 1, 1] = 2.0
        return H
    if r < 2.0 and np.any(~pos):
        raise ZeroDivisionError(f"Hessian of |z|^{r} singular at 0")
    rp = np.where(pos, rho, 1.0)
    a = np.where(pos, r * rp ** (r - 2.0), 0.0)
    b = np.where(pos, r * (r - 2.0) * rp ** (r - 4.0), 0.0)
    x, y = z.real, z.imag
    H[:, 0, 0] = a + b * x * x
    H[:, 1, 1] = a + b * y * y
    H[:, 0, 1] = H[:, 1, 0] = b * x * y
    return H


def q_hessian(params: BellmanParams, zeta, eta) -> np.ndarray:
    """4x4 real Hessian of Q at (zeta, eta), batched; valid off the singular set."""
    p, q, d = params.p, params.q, params.delta
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    az, ae = np.abs(zeta), np.abs(eta)
    above = _above(params, az, ae)
    n = zeta.size

    Hp = _radial_hessian(p, zeta)
    ae_s = np.where(ae == 0, 1.0, ae)
    Hq = np.zeros((n, 2, 2))
    pos = ae > 0
    if np.any(~pos & ~above):
        raise ZeroDivisionError("Hessian of Q requested on the singular set {eta = 0}")
    Hq[pos] = _radial_hessian(q, eta[pos])
    if np.any(~pos):
        # above branch at eta = 0: |eta|^q has vanishing Hessian there for q > 1
        Hq[~pos] = 0.0

    H = np.zeros((n, 4, 4))
    # above: (1 + 2 delta / p) F_p  (+)  (1 + (2/q - 1) delta) F_q
    ca, ce = 1.0 + 2.0 * d / p, 1.0 + (2.0 / q - 1.0) * d
    H[above, :2, :2] = ca * Hp[above]
    H[above, 2:, 2:] = ce * Hq[above]

    bel = ~above
    if np.any(bel):
        H2q = _radial_hessian(2.0 - q, eta[bel]) if q != 2.0 else np.zeros((bel.sum(), 2, 2))
        H[bel, :2, :2] = Hp[bel] + (2.0 * d * ae[bel] ** (2.0 - q))[:, None, None] * np.eye(2)
        H[bel, 2:, 2:] = Hq[bel] + (d * az[bel] ** 2)[:, None, None] * H2q
        # mixed block: delta * grad(|zeta|^2) (x) grad(|eta|^{2-q})
        gz = 2.0 * np.stack([zeta[bel].real, zeta[bel].imag], axis=1)
        ge = (2.0 - q) * ae_s[bel, None] ** (-q) * np.stack([eta[bel].real, eta[bel].imag], axis=1)
        mix = d * gz[:, :, None] * ge[:, None, :]
        H[bel, :2, 2:] = mix
        H[bel, 2:, :2] = np.swapaxes(mix, 1, 2)
    return H


def hgb_values(params: BellmanParams, zeta, eta, X, Y):
    """(b_p, g_p, h_p, K_q) at a single point; eta must be nonzero for b_p, K_q."""
    p, q = params.p, params.q
    zeta, eta = complex(zeta), complex(eta)
    X = np.atleast_1d(np.asarray(X, dtype=complex))
    Y = np.atleast_1d(np.asarray(Y, dtype=complex))
    if eta == 0:
        raise ZeroDivisionError("b_p and K_q are undefined at eta = 0")
    az, ae = abs(zeta), abs(eta)
    se = eta / ae
    sz = zeta / az if az > 0 else 0.0

    reX = (np.conj(sz) * X).real
    reY = (np.conj(se) * Y).real
    c = 1.0 - q / 2.0
    b_p = (
        ae ** (2.0 - q) * float(np.sum(np.abs(X) ** 2))
        + c**2 * az**2 * ae ** (-q) * float(np.sum(reY**2))
        + 2.0 * c * az * ae ** (1.0 - q) * float(np.sum(reX * reY))
    )
    g_p = g_p_value(params, zeta, X)
    h_p = g_p if az**p >= ae**q else b_p
    nX = math.sqrt(float(np.sum(np.abs(X) ** 2)))
    nY = math.sqrt(float(np.sum(np.abs(Y) ** 2)))
    K_q = ae ** (2.0 - q) * nX**2 + 2.0 * c * nX * nY + c**2 * ae ** (q - 2.0) * nY**2
    return b_p, g_p, h_p, K_q


def g_p_value(params: BellmanParams, zeta, X) -> float:
    """g_p[zeta; X] = (p/2)|zeta|^{p-2}((p/2)|Re(s X)|^2 + (2/p)|Im(s X)|^2)."""
    p = params.p
    zeta = complex(zeta)
    X = np.atleast_1d(np.asarray(X, dtype=complex))
    az = abs(zeta)
    if az == 0:
        # |zeta|^{p-2} kills the bracket for p > 2; p = 2 reduces to |X|^2
        return float(np.sum(np.abs(X) ** 2)) if p == 2.0 else 0.0
    w = np.conj(zeta / az) * X
    return (p / 2.0) * az ** (p - 2.0) * float(
        (p / 2.0) * np.sum(w.real**2) + (2.0 / p) * np.sum(w.imag**2)
    )


def h_p_batch(params: BellmanParams, zeta, eta, X, Y):
    """Vectorized h_p over samples: zeta, eta (n,), X, Y (n, d)."""
    p, q = params.p, params.q
    zeta = np.asarray(zeta, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    az, ae = np.abs(zeta), np.abs(eta)
    above = _above(params, az, ae)

    az_s = np.where(az == 0, 1.0, az)
    sz = np.where(az == 0, 0.0, zeta / az_s)
    wX = np.conj(sz)[:, None] * X
    g = (p / 2.0) * az ** (p - 2.0) * (
        (p / 2.0) * np.sum(wX.real**2, axis=1) + (2.0 / p) * np.sum(wX.imag**2, axis=1)
    )

    ae_s = np.where(ae == 0, 1.0, ae)
    se = np.where(ae == 0, 0.0, eta / ae_s)
    reX = (np.conj(sz)[:, None] * X).real
    reY = (np.conj(se)[:, None] * Y).real
    c = 1.0 - q / 2.0
    b = (
        ae_s ** (2.0 - q) * np.sum(np.abs(X) ** 2, axis=1)
        + c**2 * az**2 * ae_s ** (-q) * np.sum(reY**2, axis=1)
        + 2.0 * c * az * ae_s ** (1.0 - q) * np.sum(reX * reY, axis=1)
    )
    return np.where(above, g, b)


def chain_grad_Gp(params: BellmanParams, u, v, Xu, Xv) -> np.ndarray:
    """Gradient of G_p(u, v) = u * max{|u|^{p/2-1}, |v|^{1-q/2}} given values and gradients.

    Indicator conventions zero out the singular rotation terms where the
    corresponding base vanishes; the "above" branch applies on |u|^p >= |v|^q.
    """
    p, q = params.p, params.q
    u, v = complex(u), complex(v)
    Xu = np.atleast_1d(np.asarray(Xu, dtype=complex))
    Xv = np.atleast_1d(np.asarray(Xv, dtype=complex))
    au, av = abs(u), abs(v)
    if au**p >= av**q:
        if au == 0:
            return (1.0 if p == 2.0 else 0.0) * Xu
        su = u / au
        rad = (np.conj(su) * Xu).real
        return au ** (p / 2.0 - 1.0) * (Xu + (p / 2.0 - 1.0) * su * rad)
    if av == 0:
        return (1.0 if q == 2.0 else 0.0) * Xu
    sv = v / av
    rad = (np.conj(sv) * Xv).real
    return av ** (1.0 - q / 2.0) * (Xu + (1.0 - q / 2.0) * (u / av) * rad)


# ---------------------------------------------------------------------------
# sampled convexity certification
# ---------------------------------------------------------------------------

@dataclass
class ConvexityCertificate:
    params: BellmanParams
    mu: float
    sigma: float
    Ctilde: float
    samples_tested: int
    worst_slack: float
    worst_ratio: float
    worst_witness: PointSample
    seed: int

    @property
    def passed(self) -> bool:
        return self.worst_slack >= 0.0 and self.worst_ratio >= 0.0

    def to_dict(self) -> dict:
        w = self.worst_witness
        return {
            "p": self.params.p,
            "q": self.params.q,
            "delta": self.params.delta,
            "mu": self.mu,
            "sigma": self.sigma,
            "Ctilde": self.Ctilde,
            "samples_tested": self.samples_tested,
            "worst_slack": self.worst_slack,
            "worst_ratio": self.worst_ratio,
            "passed": self.passed,
            "seed": self.seed,
            "worst_witness": {
                "zeta": [w.zeta.real, w.zeta.imag],
                "eta": [w.eta.real, w.eta.imag],
                "X": [[c.real, c.imag] for c in np.atleast_1d(w.X)],
                "Y": [[c.real, c.imag] for c in np.atleast_1d(w.Y)],
                "regime": w.regime,
            },
        }


def sample_points(params: BellmanParams, d: int, n: int, rng,
                  mod_range=(-3.0, 3.0), upsilon_gap: float = 1e-6):
    """Quasi-uniform certificate samples: log-uniform moduli for (zeta, eta),
    joint directions for (X, Y); points too close to the singular set are
    nudged off it by rescaling eta."""
    zmod = 10.0 ** rng.uniform(*mod_range, size=n)
    emod = 10.0 ** rng.uniform(*mod_range, size=n)
    zeta = zmod * np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    eta = emod * np.exp(1j * rng.uniform(0, 2 * np.pi, n))

    s = np.abs(zeta) ** params.p - np.abs(eta) ** params.q
    scale = np.abs(zeta) ** params.p + np.abs(eta) ** params.q
    close = np.abs(s) <= upsilon_gap * scale
    eta[close] *= 1.05

    X = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    Y = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    t = rng.uniform(0, np.pi / 2, n)
    X *= (np.cos(t) / np.maximum(np.linalg.norm(X, axis=1), 1e-300))[:, None]
    Y *= (np.sin(t) / np.maximum(np.linalg.norm(Y, axis=1), 1e-300))[:, None]
    return zeta, eta, X, Y


def _slack_terms(params: BellmanParams, Acell, Bcell, mu, sigma, zeta, eta, X, Y):
    """(lhs - compensators, tau|X|^2 + tau^{-1}|Y|^2) for one (A, B) cell pair."""
    p, q, d = params.p, params.q, params.delta
    hess = q_hessian(params, zeta, eta)
    Xi = np.stack([X, Y], axis=1)
    lhs = gen_hessian_batch(hess, [Acell, Bcell], Xi)

    hp = h_p_batch(params, zeta, eta, X, Y)
    az, ae = np.abs(zeta), np.abs(eta)
    sz = np.where(az == 0, 0.0, zeta / np.where(az == 0, 1.0, az))
    wX = np.conj(sz)[:, None] * X
    HFp = (p * p / 2.0) * az ** (p - 2.0) * (
        (2.0 * (p - 1.0) / p) * np.sum(wX.real**2, axis=1) + (2.0 / p) * np.sum(wX.imag**2, axis=1)
    )
    se = np.where(ae == 0, 0.0, eta / np.where(ae == 0, 1.0, ae))
    wY = np.conj(se)[:, None] * Y
    HFq = (q * q / 2.0) * ae ** (q - 2.0) * (
        (2.0 / p) * np.sum(wY.real**2, axis=1) + (2.0 / q) * np.sum(wY.imag**2, axis=1)
    )

    rhs = mu * ((p * q / 4.0) * HFp + 2.0 * d * hp) + sigma * (q + (2.0 - q) * d) * (p / 4.0) * HFq
    tz = np.maximum(az ** (p - 2.0), ae ** (2.0 - q))
    gauge = tz * np.sum(np.abs(X) ** 2, axis=1) + (1.0 / tz) * np.sum(np.abs(Y) ** 2, axis=1)
    return lhs - rhs, gauge


def certify_convexity(params: BellmanParams, A, B, mu: float, sigma: float,
                      n_samples: int = 100_000, refine: bool = False,
                      seed: int = 0) -> ConvexityCertificate:
    """Sampled certificate for the convexity lower bound of Q.

    The slack is lhs - rhs with the Ctilde-term omitted; ``Ctilde`` is then
    the largest constant (bisection) for which every sampled slack stays
    nonnegative once Ctilde*(tau|X|^2 + tau^{-1}|Y|^2) is charged.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    A, B = as_field(A), as_field(B)
    if A.d != B.d:
        raise ValueError("A and B must share the dimension d")
    rng = np.random.default_rng(seed)
    zeta, eta, X, Y = sample_points(params, A.d, n_samples, rng)

    pairs = [(a, b) for a in A.unique_values(limit=16) for b in B.unique_values(limit=16)]
    slack = np.full(n_samples, np.inf)
    gauge = None
    for Ac, Bc in pairs:
        s, g = _slack_terms(params, Ac, Bc, mu, sigma, zeta, eta, X, Y)
        take = s < slack
        slack = np.where(take, s, slack)
        gauge = g if gauge is None else np.where(take, g, gauge)

    ratio = slack / gauge
    iworst = int(np.argmin(ratio))
    worst_slack = float(np.min(slack))
    worst_ratio = float(ratio[iworst])

    if refine and len(pairs) == 1:
        worst_ratio = min(worst_ratio, _refine_worst(params, pairs[0], mu, sigma,
                                                     zeta[iworst], eta[iworst],
                                                     X[iworst], Y[iworst]))

    # largest Ctilde >= 0 with min(slack - Ctilde * gauge) >= 0
    if worst_ratio <= 0:
        ct = 0.0
    else:
        lo, hi = 0.0, worst_ratio * (1.0 + 1e-9)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.min(slack - mid * gauge) >= 0:
                lo = mid
            else:
                hi = mid
        ct = lo

    wit = PointSample(
        zeta=complex(zeta[iworst]), eta=complex(eta[iworst]),
        X=X[iworst], Y=Y[iworst],
        regime=PointSample.regime_of(params, zeta[iworst], eta[iworst]),
    )
    return ConvexityCertificate(
        params=params, mu=mu, sigma=sigma, Ctilde=ct,
        samples_tested=n_samples, worst_slack=worst_slack,
        worst_ratio=worst_ratio, worst_witness=wit, seed=seed,
    )


def _refine_worst(params, pair, mu, sigma, z0, e0, X0, Y0) -> float:
    """Local Nelder-Mead polish of the worst normalized slack."""
    from scipy.optimize import minimize

    d = X0.size
    Ac, Bc = pair

    def unpack(t):
        z = math.exp(t[0]) * np.exp(1j * t[1])
        e = math.exp(t[2]) * np.exp(1j * t[3])
        X = t[4:4 + d] + 1j * t[4 + d:4 + 2 * d]
        Y = t[4 + 2 * d:4 + 3 * d] + 1j * t[4 + 3 * d:4 + 4 * d]
        return z, e, X, Y

    def objective(t):
        z, e, X, Y = unpack(t)
        if abs(z) ** params.p == abs(e) ** params.q or e == 0:
            return np.inf
        s, g = _slack_terms(params, Ac, Bc, mu, sigma,
                            np.array([z]), np.array([e]), X[None], Y[None])
        return float(s[0] / g[0])

    t0 = np.concatenate([
        [math.log(abs(z0)), np.angle(z0), math.log(abs(e0)), np.angle(e0)],
        X0.real, X0.imag, Y0.real, Y0.imag,
    ])
    res = minimize(objective, t0, method="Nelder-Mead",
                   options={"maxiter": 400, "xatol": 1e-10, "fatol": 1e-14})
    return float(min(res.fun, objective(t0)))


def select_delta(p: float, A, B, mu: float, sigma: float,
                 n_samples: int = 20_000, deltas=DELTA_SWEEP,
                 seed: int = 0):
    """Largest delta in the geometric sweep whose certificate passes.

    Returns (delta, certificate); falls back to the smallest swept delta
    (with its failing certificate) if none passes.
    """
    last = None
    for d in deltas:
        cert = certify_convexity(BellmanParams(p, d), A, B, mu, sigma,
                                 n_samples=n_samples, seed=seed)
        last = (d, cert)
        if cert.passed:
            return last
    return last


def fit_growth_constant(params: BellmanParams, n: int = 20_000, seed: int = 123) -> float:
    """Empirical constant C for the growth bounds
    Q <= C(|z|^p + |e|^q), |dQ/dz| <= C max{|z|^{p-1}, |e|}, |dQ/de| <= C|e|^{q-1}."""
    rng = np.random.default_rng(seed)
    z, e, _, _ = sample_points(params, 1, n, rng)
    qv = q_value(params, z, e)
    dz, de = q_grad(params, z, e)
    az, ae = np.abs(z), np.abs(e)
    c0 = np.max(qv / (az**params.p + ae**params.q))
    c1 = np.max(np.abs(dz) / np.maximum(az ** (params.p - 1.0), ae))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(de) / ae ** (params.q - 1.0)
    c2 = np.nanmax(np.where(ae > 0, r, 0.0))
    return float(max(c0, c1, c2))
