"""Dense linear-algebra helpers: deflated restricted inverses, cheap
operator-norm and smallest-singular-value estimates.

Restricted inverses are computed on an orthonormal basis of Ran(I - Pi)
rather than by pseudo-inversion, so the algebraic identities of the
block-inverse formulas hold to round-off even for oblique projections.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError

__all__ = [
    "complement_basis", "deflated_inverse", "opnorm_est", "sigma_min",
    "herm_part", "max_herm_eig",
]

_SEED = 1770


def complement_basis(Pi_blocks):
    """Per-node orthonormal bases of Ran(I - Pi(x)).

    Pi_blocks: (n, d, d) stacked projection matrices of rank N each.
    Returns (n, d, d-N) stacked bases (left singular vectors of I - Pi
    with singular value > 1/2).
    """
    n, d, _ = Pi_blocks.shape
    hat = np.eye(d)[None, :, :] - Pi_blocks
    U, s, _ = np.linalg.svd(hat)
    k = int(np.round(np.median(np.sum(s > 0.5, axis=1))))
    if not np.all(np.sum(s > 0.5, axis=1) == k):
        raise ConditioningError("complement rank varies across nodes")
    return U[:, :, :k]


def _expand_blockdiag(blocks):
    """(n, d, k) stacked blocks -> (n*d, n*k) block-diagonal matrix."""
    n, d, k = blocks.shape
    out = np.zeros((n * d, n * k), dtype=blocks.dtype)
    for i in range(n):
        out[i * d:(i + 1) * d, i * k:(i + 1) * k] = blocks[i]
    return out


def deflated_inverse(A, V, Pi, check_sv=True):
    """X = V W^{-1} V^* hatPi with W = V^* hatPi A V.

    A: operator on the full space; V: orthonormal basis (columns) of
    Ran hatPi, hatPi = I - Pi.  The result satisfies exactly

        Pi X = X Pi = 0,
        hatPi A hatPi X = hatPi = X hatPi A hatPi.

    Raises ConditioningError when the restricted operator is numerically
    singular (smallest singular value below 1e-12 of scale).
    """
    hatPi = np.eye(A.shape[0], dtype=complex) - Pi
    Vh_hat = V.conj().T @ hatPi
    W = Vh_hat @ A @ V
    try:
        lu, piv = sla.lu_factor(W)
    except sla.LinAlgError as exc:  # pragma: no cover
        raise ConditioningError(f"restricted operator not factorizable: {exc}")
    if check_sv:
        smin = _sigma_min_from_lu(W, lu, piv)
        scale = max(1.0, float(np.abs(W).max()))
        if smin < 1e-12 * scale:
            raise ConditioningError(
                f"restricted operator near-singular: sigma_min={smin:.3e}, scale={scale:.3e}"
            )
    X = V @ sla.lu_solve((lu, piv), Vh_hat)
    return X


def _sigma_min_from_lu(W, lu, piv, iters=8):
    """Smallest singular value estimate via inverse power iteration on W W^*."""
    rng = np.random.default_rng(_SEED)
    m = W.shape[0]
    v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    v /= np.linalg.norm(v)
    est = np.inf
    for _ in range(iters):
        w = sla.lu_solve((lu, piv), v)
        w = sla.lu_solve((lu, piv), w, trans=2)
        nw = np.linalg.norm(w)
        if nw == 0.0 or not np.isfinite(nw):
            return 0.0
        est = 1.0 / np.sqrt(nw)
        v = w / nw
    return est


def opnorm_est(A, tol=1e-3, maxit=200):
    """Spectral-norm estimate by power iteration on A^* A (seeded start).

    Relative tolerance 1e-3: norms are only needed to check strict
    inequalities with margin.
    """
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    if min(A.shape) <= 64:
        return float(np.linalg.norm(A, 2))
    rng = np.random.default_rng(_SEED)
    v = rng.standard_normal(A.shape[1]) + 1j * rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(maxit):
        w = A @ v
        est = float(np.linalg.norm(w))  # ||Av|| with ||v|| = 1
        u = A.conj().T @ w
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        if abs(est - prev) <= tol * max(est, 1e-300):
            return est
        prev = est
    return float(prev)


def sigma_min(A):
    """Exact smallest singular value (dense SVD; use on reduced operators)."""
    return float(np.linalg.svd(np.asarray(A), compute_uv=False)[-1])


def herm_part(A):
    return 0.5 * (A + A.conj().T)


def max_herm_eig(A):
    """Largest eigenvalue of the Hermitian part."""
    return float(sla.eigvalsh(herm_part(np.asarray(A, dtype=complex)))[-1])
