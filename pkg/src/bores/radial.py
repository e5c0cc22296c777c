"""Partial-wave radial blocks of the reduced operator.

After the substitution v = r u the channel-ell block acts on
L^2(R_+, dr) with a Dirichlet condition at 0 (the grid excludes the
origin) and reads, at principal order plus the exact centrifugal term,

    -h^2 (d/((1+omega')dr))^2 + h^2 l(l+1)/tau(r)^2 + M_mu(r),

where M_mu(r) = W(tau)^T [psi1 L(tau) + (lambda0+delta0)(1-psi1)] W(tau)
carries the scaled curves outside W0 and the elliptic floor inside.
The centrifugal term is kept exactly although it is O(h^2) at fixed l:
it costs nothing and makes l > 0 channels quantitative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cutoffs import build_cutoffs
from .curves import CurveSet
from .distortion import DistortionField, distorted_curves, distorted_kinetic
from .errors import ConfigurationError, NumericalError
from .gridops import Grid, GridSpec, build_grid

__all__ = ["CurveMatrix", "build_curve_matrix", "RadialBlock",
           "partial_wave_block", "radial_operator", "eigen_window"]

_DENSE_LIMIT = 900


@dataclass
class CurveMatrix:
    """Per-node N x N channel matrix M_mu(r)."""

    M: np.ndarray          # (n, N, N) complex
    blend: np.ndarray      # (n, N) diagonal entries before mixing
    grid: Grid
    field: DistortionField
    lambda0: float
    delta0: float

    @property
    def N(self):
        return self.M.shape[1]

    def block(self, i):
        return self.M[i]


def build_curve_matrix(curves: CurveSet, grid: Grid, field: DistortionField, *,
                       lambda0, delta0, delta1) -> CurveMatrix:
    lam = distorted_curves(curves, grid, field)          # (n, N)
    psi1 = build_cutoffs(delta1, grid).psi1
    blend = psi1[:, None] * lam + (lambda0 + delta0) * (1.0 - psi1)[:, None]
    W = curves.mixing_matrix(field.tau(grid.radii))      # (n, N, N)
    M = np.einsum("nij,nj,njk->nik", np.transpose(W, (0, 2, 1)), blend, W)
    return CurveMatrix(M=M, blend=blend, grid=grid, field=field,
                       lambda0=lambda0, delta0=delta0)


@dataclass
class RadialBlock:
    """One angular-momentum channel of the reduced problem."""

    ell: int
    h: float
    n: int
    N: int
    grid: Grid
    field: DistortionField
    matrix: sp.csr_matrix      # (n N) x (n N), node-major ordering

    @property
    def dim(self):
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix.toarray()


def partial_wave_block(curve_matrix: CurveMatrix, field: DistortionField,
                       ell: int, h: float, grid: Grid) -> RadialBlock:
    if ell < 0:
        raise ConfigurationError([f"ell must be >= 0, got {ell}"])
    N = curve_matrix.N
    K = distorted_kinetic(grid, h, field)
    tau = field.tau(grid.radii)
    cent = (h * h) * ell * (ell + 1) / (tau * tau)
    A = sp.kron(sp.csr_matrix(K), sp.eye(N), format="lil")
    n = grid.n
    for i in range(n):
        blk = curve_matrix.M[i] + cent[i] * np.eye(N)
        A[i * N:(i + 1) * N, i * N:(i + 1) * N] += blk
    return RadialBlock(ell=ell, h=h, n=n, N=N, grid=grid, field=field,
                       matrix=A.tocsr())


def radial_operator(curves: CurveSet, *, n, r_max, h, ell=0, mu=0.0, R=None,
                    lambda0, delta0, delta1) -> RadialBlock:
    """One-call builder used by sweeps: grid + curves + field -> block."""
    grid = build_grid(GridSpec("radial", n, r_max))
    if R is None:
        R = 0.55 * r_max
    field = DistortionField(R=R, mu=mu)
    cm = build_curve_matrix(curves, grid, field, lambda0=lambda0, delta0=delta0,
                            delta1=delta1)
    return partial_wave_block(cm, field, ell, h, grid)


def _rayleigh_refine(Asp, z, v, target, iters=5):
    """Bilinear Rayleigh-quotient refinement for a complex-symmetric matrix.

    Iterates inverse steps until the relative residual drops below
    target; keeps the best iterate seen.
    """
    m = Asp.shape[0]
    eye = sp.identity(m, format="csc", dtype=complex)
    best = (np.linalg.norm(Asp @ v - z * v), z, v)
    for _ in range(iters):
        if best[0] <= target:
            break
        try:
            lu = spla.splu((Asp - z * eye).tocsc())
        except RuntimeError:
            break  # exactly singular: z is converged to machine precision
        w = lu.solve(v)
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            break
        v = w / nw
        quad = v @ v  # bilinear, no conjugation
        if abs(quad) > 1e-12:
            z = (v @ (Asp @ v)) / quad
        resid = np.linalg.norm(Asp @ v - z * v)
        if resid < best[0]:
            best = (resid, z, v)
    return best[1], best[2]


def eigen_window(block: RadialBlock, center, radius, *, k0=16, tol=1e-8,
                 im_floor=None):
    """All eigenpairs within |z - center| <= radius, residual-checked.

    Dense solve below _DENSE_LIMIT; shift-invert Arnoldi with a fixed
    deterministic start vector above it, escalating the subspace size
    until the window is covered with a buffer.  Pairs with Im z below
    im_floor (deep rotated-continuum states) are outside the requested
    set and are dropped without residual enforcement.
    """
    A = block.matrix
    m = A.shape[0]
    normA = spla.norm(A, np.inf)
    if m <= _DENSE_LIMIT:
        evals, evecs = sla.eig(A.toarray())
        sel = np.abs(evals - center) <= radius
        pairs = [(complex(evals[i]), evecs[:, i]) for i in np.flatnonzero(sel)]
    else:
        k = k0
        pairs = None
        v0 = np.ones(m) / np.sqrt(m)
        log = []
        while True:
            try:
                evals, evecs = spla.eigs(A, k=min(k, m - 2), sigma=center, v0=v0,
                                         tol=1e-12, maxiter=5000)
            except spla.ArpackNoConvergence as exc:
                log.append(f"k={k}: no convergence ({exc})")
                if k >= 96:
                    raise NumericalError("shift-invert iteration failed", log=log)
                k *= 2
                continue
            dist = np.abs(evals - center)
            if dist.max() > 1.2 * radius or k >= min(96, m - 2):
                sel = dist <= radius
                pairs = [(complex(evals[i]), evecs[:, i]) for i in np.flatnonzero(sel)]
                break
            log.append(f"k={k}: window not covered (max dist {dist.max():.3g})")
            k *= 2
        refined = []
        for z, v in pairs:
            z, v = _rayleigh_refine(A, z, v, target=0.5 * tol * normA)
            refined.append((z, v))
        pairs = refined
    out = []
    for z, v in sorted(pairs, key=lambda p: (p[0].real, p[0].imag)):
        if im_floor is not None and z.imag < im_floor:
            continue
        resid = np.linalg.norm(A @ v - z * v) / max(np.linalg.norm(v), 1e-300)
        if resid > tol * normA:
            raise NumericalError(
                f"eigenpair residual {resid:.3e} > {tol:.0e} * ||A|| = {tol * normA:.3e} "
                f"at z = {z:.6g}")
        out.append((z, v / np.linalg.norm(v)))
    return out
