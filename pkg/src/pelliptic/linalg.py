"""Complex/real linear-algebra substrate.

Identification maps between C^k and R^{2k}, real 2dx2d forms of complex
matrices, and the generalized Hessian form

    H[omega; Xi] = < (D2Phi(omega) (x) I_d) W(Xi), (M(A_1) + ... + M(A_k)) W(Xi) >

evaluated blockwise so the Kronecker factor is never materialized.
"""

from __future__ import annotations

import numpy as np

SYMMETRY_RTOL = 1e-12


def identify(xi: np.ndarray | complex) -> np.ndarray:
    """Map a complex k-vector to the real 2k-vector (Re xi, Im xi)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    return np.concatenate([xi.real, xi.imag])


def identify_inverse(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`identify`; round-trips bit-exactly."""
    v = np.asarray(v, dtype=float)
    if v.size % 2:
        raise ValueError("real vector must have even length")
    k = v.size // 2
    return v[:k] + 1j * v[k:]


def interleave(xis) -> np.ndarray:
    """Stack per-variable identifications: (xi^1, .., xi^k) -> rows
    [Re xi^1; Im xi^1; Re xi^2; Im xi^2; ...] of shape (2k, d)."""
    xis = [np.atleast_1d(np.asarray(x, dtype=complex)) for x in xis]
    rows = []
    for x in xis:
        rows.append(x.real)
        rows.append(x.imag)
    return np.stack(rows)


def real_form(A: np.ndarray) -> np.ndarray:
    """Real form [[Re A, -Im A], [Im A, Re A]] of a complex d x d matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def check_hessian_stencil(H: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Validate a 2k x 2k real symmetric second-derivative matrix."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] % 2:
        raise ValueError(f"hessian stencil must be square of even size, got {H.shape}")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.T).max() > rtol * scale:
        raise ValueError("hessian stencil is not symmetric within tolerance")
    return H


def gen_hessian(hess: np.ndarray, mats, Xi) -> float:
    """Generalized Hessian form of Phi with respect to (A_1, ..., A_k).

    ``hess`` is the 2k x 2k real Hessian of Phi in W-coordinates at omega,
    ``mats`` a list of k complex d x d matrices and ``Xi`` a complex
    k*d-vector (or a (k, d) array).  The Kronecker lift acts blockwise:
    row blocks of W(Xi) are multiplied by ``hess`` while each A_j acts on
    its own complex block, using M(A) V(xi) = V(A xi).
    """
    hess = check_hessian_stencil(hess)
    mats = [np.atleast_2d(np.asarray(A, dtype=complex)) for A in mats]
    k = len(mats)
    if hess.shape[0] != 2 * k:
        raise ValueError(f"hessian is {hess.shape[0]}x{hess.shape[0]} but {k} matrices given")
    d = mats[0].shape[0]
    for A in mats:
        if A.shape != (d, d):
            raise ValueError("matrices must share a common square shape")
    Xi = np.asarray(Xi, dtype=complex).reshape(k, d)

    W = interleave(Xi)                      # (2k, d)
    AXi = np.stack([mats[j] @ Xi[j] for j in range(k)])
    MW = interleave(AXi)                    # (M(A_1) + ... + M(A_k)) W(Xi)
    return float(np.sum((hess @ W) * MW))


def gen_hessian_batch(hess: np.ndarray, mats, Xi: np.ndarray) -> np.ndarray:
    """Vectorized :func:`gen_hessian` over a leading sample axis.

    ``hess``: (n, 2k, 2k); ``Xi``: (n, k, d); each entry of ``mats`` is one
    d x d matrix shared by all samples, or a per-sample stack (n, d, d).
    Returns shape (n,).
    """
    hess = np.asarray(hess, dtype=float)
    Xi = np.asarray(Xi, dtype=complex)
    n, k, d = Xi.shape
    W = np.empty((n, 2 * k, d))
    MW = np.empty((n, 2 * k, d))
    for j, A in enumerate(mats):
        A = np.asarray(A, dtype=complex)
        W[:, 2 * j] = Xi[:, j].real
        W[:, 2 * j + 1] = Xi[:, j].imag
        if A.ndim == 3:
            AXi = np.einsum("nkl,nl->nk", A, Xi[:, j])
        else:
            AXi = Xi[:, j] @ np.atleast_2d(A).T
        MW[:, 2 * j] = AXi.real
        MW[:, 2 * j + 1] = AXi.imag
    return np.einsum("nij,njd,nid->n", hess, W, MW)


def numeric_hessian(f, omega: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Hessian of f: R^m -> R at omega.

    Used as the independent oracle against closed-form stencils.
    """
    omega = np.asarray(omega, dtype=float)
    m = omega.size
    H = np.empty((m, m))
    f0 = f(omega)
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = step
        H[i, i] = (f(omega + ei) - 2.0 * f0 + f(omega - ei)) / step**2
        for j in range(i + 1, m):
            ej = np.zeros(m)
            ej[j] = step
            H[i, j] = H[j, i] = (
                f(omega + ei + ej) - f(omega + ei - ej)
                - f(omega - ei + ej) + f(omega - ei - ej)
            ) / (4.0 * step**2)
    return 0.5 * (H + H.T)
