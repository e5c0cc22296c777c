"""Discrete fibered operator: P = K0 (x) I + Q, with cutoffs, spectral
projections, section bases and the modified operators P0, P1.

The fiber at node x is the finite surrogate

    Q(x) = M(r)^T Dw(r) M(r),   M(r) = G(r) L(r),

where Dw carries the tracked curves (channel-mixed by the scenario's
analytic rotations) in its upper N x N block and constant continuum
levels (plus the shared repulsive core) below, L is a real rotation of
channels (N, N+1) supported deep inside W0 (it makes [Q, Pi] nonzero
there and nowhere else), and G is a real rotation of the same pair that
turns on past 2*delta1 and freezes before the scaling region (it makes
the projection family genuinely x-dependent, so [K0, Pi] = O(h)).

Eigenvalues of Q are rotation-independent: on W1 the lowest N levels
equal the curves exactly and the continuum sits at least `gap` above
them at every node, which is what lets one fixed contour rectangle
enclose the tracked spectrum everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.linalg as sla

from .cutoffs import CutoffSystem, build_cutoffs, step_up
from .curves import CurveSet
from .distortion import DistortionField, distorted_kinetic
from .errors import ConfigurationError, ContourError, HypothesisError, ModelError, NumericalError
from .gridops import Grid, GridSpec, build_grid
from .linalg import complement_basis, herm_part

__all__ = [
    "FiberFamily", "assemble_fiber_family",
    "ProjectionFamily", "build_projection_family",
    "SectionBasis", "build_section_basis",
    "assemble_full_operator", "assemble_modified",
    "ModelOperators", "build_model",
]

# rotation-profile breakpoints as multiples of delta1
_LOC_LO, _LOC_HI = 0.55, 0.95      # local mixer dies before delta1
_GLOB_LO, _GLOB_HI = 2.05, 3.90    # global mixer lives past 2*delta1, frozen by 3.9*delta1


def _plane_rotation(n, d, i, j, angles):
    """(n, d, d) stack of rotations by angles in the (i, j) plane."""
    R = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    c, s = np.cos(angles), np.sin(angles)
    R[:, i, i] = c
    R[:, j, j] = c
    R[:, i, j] = -s
    R[:, j, i] = s
    return R


@dataclass
class FiberFamily:
    """x-indexed family of fiber matrices plus construction metadata."""

    d: int
    N: int
    gap: float
    lambda0: float
    delta0: float
    delta1: float
    Q: np.ndarray                 # (n, d, d) complex fiber blocks at the field's mu
    tracked: np.ndarray           # (n, N) complex curve samples lambda_j(tau)
    continuum: np.ndarray         # (n, d-N) real continuum levels (core included)
    plateau: np.ndarray           # (d-N,) base continuum levels without the core
    mix: np.ndarray               # (n, d, d) real outer rotation M = G L
    contour_margin: float = 1.0   # rectangle margin on all four sides
    curves: CurveSet = None
    field: DistortionField | None = None
    local_angle: float = 0.4
    global_angle: float = 0.5

    def fiber_block(self, i):
        return self.Q[i]


def _rotation_stack(grid, delta1, d, N, local_angle, global_angle):
    r = grid.radii
    n = grid.n
    eta = local_angle * (1.0 - step_up(r, _LOC_LO * delta1, _LOC_HI * delta1))
    gam = global_angle * step_up(r, _GLOB_LO * delta1, _GLOB_HI * delta1)
    L = _plane_rotation(n, d, N - 1, N, eta)
    G = _plane_rotation(n, d, N - 1, N, gam)
    return np.einsum("nij,njk->nik", G, L), G


def _assemble_Q_blocks(curves, d, gap, grid, field, delta1, local_angle, global_angle):
    n = grid.n
    N = curves.N
    r = grid.radii
    if field is None:
        field = DistortionField(R=max(4.0 * delta1, 0.45 * grid.r_max), mu=0.0)
    tau = field.tau(r)
    tracked = curves.values_distorted(r, tau)                       # (n, N)
    W = curves.mixing_matrix(tau)                                   # (n, N, N)
    core_vals = curves.core.value(r) if curves.core is not None else np.zeros(n)
    # Contour margins proportional to the tracked spread keep every pole
    # at a distance comparable to the edge length, so the per-edge Gauss
    # quadrature converges fast enough for the 64-vs-128 refinement check.
    tracked_top = float(np.real(tracked).max())
    span = tracked_top - float(np.real(tracked).min())
    margin = max(0.5 * gap, 1.25 * span + 0.5)
    # the plateau clears the core-elevated tracked levels at every node,
    # so one fixed contour rectangle separates tracked from continuum
    plateau = tracked_top + 2.0 * margin + gap + 0.5 * gap * np.arange(d - N)
    continuum = core_vals[:, None] + plateau[None, :]               # (n, d-N) real

    Dw = np.zeros((n, d, d), dtype=complex)
    inner = np.einsum("nij,nj,njk->nik", np.transpose(W, (0, 2, 1)), tracked, W)
    Dw[:, :N, :N] = inner
    Dw[:, np.arange(N, d), np.arange(N, d)] = continuum
    M, G = _rotation_stack(grid, delta1, d, N, local_angle, global_angle)
    Q = np.einsum("nji,njk,nkl->nil", M, Dw, M)
    return Q, tracked, continuum, plateau, margin, M, G, field


def assemble_fiber_family(curves, d, gap, grid, distortion=None, *,
                          lambda0, delta0, delta1,
                          local_angle=0.4, global_angle=0.5,
                          validate=True) -> FiberFamily:
    """Build the fiber family; validates the gap and the elliptic floor."""
    N = curves.N
    problems = []
    if d < N + 2:
        problems.append(f"fiber.d must be >= N + 2 = {N + 2}, got {d}")
    if not gap > 0:
        problems.append(f"fiber.gap must be > 0, got {gap}")
    if problems:
        raise ConfigurationError(problems)

    Q, tracked, continuum, plateau, margin, M, G, field = _assemble_Q_blocks(
        curves, d, gap, grid, distortion, delta1, local_angle, global_angle)

    if validate:
        r = grid.radii
        w0 = r < 2.0 * delta1
        w1 = r > delta1
        floor = lambda0 + delta0
        if np.any(w0):
            min_herm = min(float(sla.eigvalsh(herm_part(Q[i]))[0]) for i in np.flatnonzero(w0))
            if min_herm < floor - 1e-10:
                raise ModelError(
                    f"elliptic floor violated on W0: min Re spec Q = {min_herm:.6g} "
                    f"<? lambda0 + delta0 = {floor:.6g} (increase the core strength)")
        # pointwise separation of continuum from tracked levels on W1
        sep = continuum[w1].min(axis=1) - np.real(tracked[w1]).max(axis=1)
        if np.any(sep < gap * (1.0 - 1e-9)):
            i = int(np.flatnonzero(w1)[np.argmin(sep)])
            raise ModelError(
                f"gap violated at node {i} (r={r[i]:.4g}): separation {sep.min():.6g} < {gap}")

    fam = FiberFamily(d=d, N=N, gap=gap, lambda0=lambda0, delta0=delta0, delta1=delta1,
                      Q=Q, tracked=tracked, continuum=continuum, plateau=plateau,
                      contour_margin=margin,
                      mix=M, curves=curves, field=field,
                      local_angle=local_angle, global_angle=global_angle)
    return fam


@dataclass
class ProjectionFamily:
    """Rank-N spectral projections, frozen inside W0.

    The pairing is bilinear once the operator is scaled (the fiber stays
    complex-symmetric), but the projections themselves come out real
    because the scaling never reaches the region where the fiber's
    eigenbasis still turns.
    """

    Pi: np.ndarray                # (n, d, d)
    N: int
    frozen_below: float           # radius below which the value is frozen
    refinement_residual: float
    Pi_prime: np.ndarray = None   # finite-difference derivative samples

    def block(self, i):
        return self.Pi[i]


def _rectangle_contour(tracked, margin):
    re_vals = np.real(tracked)
    im_stretch = 2.0 * float(np.abs(np.imag(tracked)).max())
    re_lo = float(re_vals.min()) - margin
    re_hi = float(re_vals.max()) + margin
    im_h = margin + im_stretch
    return re_lo, re_hi, im_h


def _contour_quadrature(re_lo, re_hi, im_h, n_points):
    """Per-edge Gauss-Legendre nodes/weights on the rectangle boundary,
    positively oriented.  Returns (z, dz*w) arrays."""
    per_edge = max(4, n_points // 4)
    x, w = np.polynomial.legendre.leggauss(per_edge)
    corners = [re_lo - 1j * im_h, re_hi - 1j * im_h, re_hi + 1j * im_h, re_lo + 1j * im_h]
    zs, ws = [], []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        zs.append(mid + half * x)
        ws.append(half * w)
    return np.concatenate(zs), np.concatenate(ws)


def _contour_project(blocks, zq, wq):
    """(1/2 pi i) sum_q w_q (z_q - Q)^{-1} for a (n, d, d) stack."""
    n, d, _ = blocks.shape
    out = np.zeros((n, d, d), dtype=complex)
    eye = np.eye(d)
    for z, w in zip(zq, wq):
        out += w * np.linalg.inv(z * eye[None, :, :] - blocks)
    return out / (2j * np.pi)


def build_projection_family(fiber: FiberFamily, N=None, contour=None, *,
                            grid: Grid, n_points=128, validate=True) -> ProjectionFamily:
    """Contour-integral spectral projections onto the tracked levels.

    Inside W0 the projection is frozen at its value on the boundary
    r = 2*delta1 (sampled there directly), so [Q, Pi] is supported in W0.
    """
    N = fiber.N if N is None else N
    if contour is None:
        contour = _rectangle_contour(fiber.tracked, fiber.contour_margin)
    re_lo, re_hi, im_h = contour

    # clearance >= gap/2 between the contour and every fiber spectrum
    half = 0.5 * fiber.gap * (1.0 - 1e-9)
    for i in range(grid.n):
        eigs = np.concatenate([fiber.tracked[i], fiber.continuum[i].astype(complex)])
        d_re = np.minimum(np.abs(eigs.real - re_lo), np.abs(eigs.real - re_hi))
        d_im = im_h - np.abs(eigs.imag)
        inside = (eigs.real > re_lo) & (eigs.real < re_hi) & (np.abs(eigs.imag) < im_h)
        border = np.where(inside, np.minimum(d_re, np.abs(d_im)),
                          np.maximum(np.maximum(eigs.real - re_hi, re_lo - eigs.real),
                                     np.abs(eigs.imag) - im_h))
        if border.min() < half:
            raise ContourError(
                f"fiber spectrum within {border.min():.4g} of the contour (< gap/2 = {half:.4g})",
                node=i)

    zq, wq = _contour_quadrature(re_lo, re_hi, im_h, n_points)
    Pi = _contour_project(fiber.Q, zq, wq)

    # frozen value from the analytic boundary sample at r = 2*delta1
    r_b = 2.0 * fiber.delta1
    Qb = _boundary_block(fiber, r_b)
    Pib = _contour_project(Qb[None, :, :], zq, wq)[0]
    frozen = grid.radii < r_b
    Pi[frozen] = Pib

    zq2, wq2 = _contour_quadrature(re_lo, re_hi, im_h, n_points // 2)
    Pi2 = _contour_project(fiber.Q, zq2, wq2)
    Pi2[frozen] = _contour_project(Qb[None, :, :], zq2, wq2)[0]
    resid = float(np.abs(Pi - Pi2).max())
    if resid > 1e-9:
        raise NumericalError(
            f"contour quadrature not converged: refinement residual {resid:.3e} > 1e-9")

    fam = ProjectionFamily(Pi=Pi, N=N, frozen_below=r_b, refinement_residual=resid)
    fam.Pi_prime = np.gradient(Pi, grid.spacing, axis=0)

    if validate:
        idem = np.abs(np.einsum("nij,njk->nik", Pi, Pi) - Pi).max()
        if idem > 1e-10:
            raise NumericalError(f"projection idempotency residual {idem:.3e} > 1e-10")
        ranks = np.round(np.real(np.trace(Pi, axis1=1, axis2=2))).astype(int)
        if not np.all(ranks == N):
            raise NumericalError(f"projection rank != {N} at nodes {np.flatnonzero(ranks != N)[:5]}")
        w1 = grid.radii > fiber.delta1
        comm = np.einsum("nij,njk->nik", fiber.Q[w1], Pi[w1]) \
            - np.einsum("nij,njk->nik", Pi[w1], fiber.Q[w1])
        if np.abs(comm).max() > 1e-10:
            raise NumericalError(
                f"[Q, Pi] = {np.abs(comm).max():.3e} > 1e-10 on W1")
    return fam


def _boundary_block(fiber: FiberFamily, r_b):
    """Assemble one fiber block at the exact radius r_b (not a grid node)."""
    curves = fiber.curves
    d, N = fiber.d, fiber.N
    tau = fiber.field.tau(np.array([r_b]))
    tracked = curves.values_distorted(np.array([r_b]), tau)
    W = curves.mixing_matrix(tau)
    core = curves.core.value(np.array([r_b]))[0] if curves.core is not None else 0.0
    Dw = np.zeros((d, d), dtype=complex)
    Dw[:N, :N] = W[0].T @ np.diag(tracked[0]) @ W[0]
    Dw[np.arange(N, d), np.arange(N, d)] = core + fiber.plateau
    eta = fiber.local_angle * (1.0 - step_up(np.array([r_b]), _LOC_LO * fiber.delta1,
                                             _LOC_HI * fiber.delta1))
    gam = fiber.global_angle * step_up(np.array([r_b]), _GLOB_LO * fiber.delta1,
                                       _GLOB_HI * fiber.delta1)
    L = _plane_rotation(1, d, N - 1, N, eta)[0]
    G = _plane_rotation(1, d, N - 1, N, gam)[0]
    M = G @ L
    return M.T @ Dw @ M


@dataclass
class SectionBasis:
    """Smooth bases of Ran Pi and their bilinear duals.

    Rm: (n*d, n*N) block-diagonal injection, Rp = Rm^T its dual; both
    real because the fiber's global rotation is frozen before the
    scaling region.
    """

    w: np.ndarray       # (n, d, N) section columns
    Rm: np.ndarray      # injection C^{nN} -> C^{nd}
    Rp: np.ndarray      # restriction, Rp = Rm.T


def build_section_basis(fiber: FiberFamily, grid: Grid) -> SectionBasis:
    n, d, N = grid.n, fiber.d, fiber.N
    _, G = _rotation_stack(grid, fiber.delta1, d, N, fiber.local_angle, fiber.global_angle)
    w = np.transpose(G, (0, 2, 1))[:, :, :N]     # columns G^T e_k
    Rm = np.zeros((n * d, n * N))
    for i in range(n):
        Rm[i * d:(i + 1) * d, i * N:(i + 1) * N] = w[i]
    return SectionBasis(w=w, Rm=Rm, Rp=Rm.T)


def assemble_full_operator(K0, fiber: FiberFamily):
    """P = K0 (x) I_d + blockdiag Q(x); dense with retrievable blocks."""
    n = K0.shape[0]
    d = fiber.d
    if fiber.Q.shape[0] != n:
        raise ConfigurationError(
            [f"dimension mismatch: kinetic has {n} nodes, fiber has {fiber.Q.shape[0]}"])
    P = np.kron(K0, np.eye(d)).astype(complex)
    for i in range(n):
        P[i * d:(i + 1) * d, i * d:(i + 1) * d] += fiber.Q[i]
    return P


def _expand_scalar(vec, d):
    """Grid-diagonal scalar -> operator diag on the full space."""
    return np.repeat(np.asarray(vec, dtype=float), d)


def assemble_modified(P, K0, fiber: FiberFamily, cutoffs: CutoffSystem, *,
                      lambda0, delta0, C0=None, validate=True):
    """The modified operators

        P0 = P + (lambda0 + delta0 + C0)(1 - psi0),
        P1 = K0 (x) I + Q psi1 + (lambda0 + delta0)(1 - psi1),

    with C0 read off from the fiber's lower semibound when not given.
    Verifies the two quadratic-form bounds that make the resolvent
    blocks well-posed.
    """
    n, d = cutoffs.phi0.size, fiber.d
    if C0 is None:
        low = min(float(sla.eigvalsh(herm_part(fiber.Q[i]))[0]) for i in range(n))
        C0 = max(0.0, -low) + 0.01
    shift0 = (lambda0 + delta0 + C0) * _expand_scalar(1.0 - cutoffs.psi0, d)
    P0 = P + np.diag(shift0)

    P1 = np.kron(K0, np.eye(d)).astype(complex)
    for i in range(n):
        P1[i * d:(i + 1) * d, i * d:(i + 1) * d] += cutoffs.psi1[i] * fiber.Q[i]
    P1 += np.diag((lambda0 + delta0) * _expand_scalar(1.0 - cutoffs.psi1, d))

    if validate:
        low0 = float(sla.eigvalsh(herm_part(P0))[0])
        if low0 < lambda0 + delta0 - 1e-8:
            raise HypothesisError(
                f"min Re spec P0 = {low0:.8g} below lambda0 + delta0 = {lambda0 + delta0}",
                bound="Re P0 >= lambda0 + delta0")
    return P0, P1, C0


@dataclass
class ModelOperators:
    """Everything the reduction machinery needs, assembled once."""

    grid: Grid
    cutoffs: CutoffSystem
    fiber: FiberFamily
    proj: ProjectionFamily
    sections: SectionBasis
    field: DistortionField
    h: float
    lambda0: float
    delta0: float
    delta1: float
    C0: float
    K0: np.ndarray          # n x n kinetic
    P: np.ndarray           # full operator, (nd) x (nd)
    P0: np.ndarray
    P1: np.ndarray
    Pi: np.ndarray          # block-diagonal projection on the full space
    hatPi: np.ndarray
    Rq: np.ndarray          # R = phi0 [Q, Pi] phi0, exactly W0-supported
    V: np.ndarray = None    # orthonormal basis of Ran hatPi (lazy)

    @property
    def n(self):
        return self.grid.n

    @property
    def d(self):
        return self.fiber.d

    @property
    def N(self):
        return self.fiber.N

    def scalar_diag(self, vec):
        """Grid scalar -> (nd) x (nd) diagonal operator."""
        return np.diag(_expand_scalar(vec, self.d))

    def section_diag(self, vec):
        """Grid scalar -> (nN) x (nN) diagonal operator on section space."""
        return np.diag(_expand_scalar(vec, self.N))

    def complement(self):
        if self.V is None:
            Vb = complement_basis(self.proj.Pi)
            n, d, k = Vb.shape
            V = np.zeros((n * d, n * k), dtype=complex)
            for i in range(n):
                V[i * d:(i + 1) * d, i * k:(i + 1) * k] = Vb[i]
            self.V = V
        return self.V


def build_model(curves, *, grid_spec: GridSpec, d, gap, h,
                lambda0, delta0, delta1, C0=None,
                field: DistortionField | None = None,
                local_angle=0.4, global_angle=0.5,
                contour_points=128, validate=True) -> ModelOperators:
    """Assemble the complete discrete model for one (h, mu) setting."""
    grid = build_grid(grid_spec)
    cutoffs = build_cutoffs(delta1, grid)
    fiber = assemble_fiber_family(
        curves, d, gap, grid, field, lambda0=lambda0, delta0=delta0, delta1=delta1,
        local_angle=local_angle, global_angle=global_angle, validate=validate)
    proj = build_projection_family(fiber, grid=grid, n_points=contour_points, validate=validate)
    sections = build_section_basis(fiber, grid)
    K0 = distorted_kinetic(grid, h, fiber.field)
    P = assemble_full_operator(K0, fiber)
    P0, P1, C0 = assemble_modified(P, K0, fiber, cutoffs,
                                   lambda0=lambda0, delta0=delta0, C0=C0, validate=validate)

    n, dd = grid.n, fiber.d
    Pi = np.zeros((n * dd, n * dd), dtype=complex)
    for i in range(n):
        Pi[i * dd:(i + 1) * dd, i * dd:(i + 1) * dd] = proj.Pi[i]
    hatPi = np.eye(n * dd) - Pi

    comm = np.einsum("nij,njk->nik", fiber.Q, proj.Pi) - np.einsum("nij,njk->nik", proj.Pi, fiber.Q)
    Rq = np.zeros((n * dd, n * dd), dtype=complex)
    for i in range(n):
        Rq[i * dd:(i + 1) * dd, i * dd:(i + 1) * dd] = \
            cutoffs.phi0[i] ** 2 * comm[i]
    model = ModelOperators(
        grid=grid, cutoffs=cutoffs, fiber=fiber, proj=proj, sections=sections,
        field=fiber.field, h=h, lambda0=lambda0, delta0=delta0, delta1=delta1, C0=C0,
        K0=K0, P=P, P0=P0, P1=P1, Pi=Pi, hatPi=hatPi, Rq=Rq)

    if validate:
        V = model.complement()
        A1 = V.conj().T @ hatPi @ (P1 - (lambda0 + delta1) * np.eye(n * dd)) @ hatPi @ V
        low1 = float(sla.eigvalsh(herm_part(A1))[0])
        if low1 < -1e-8:
            raise HypothesisError(
                f"min Re spec of hatPi(P1 - lambda0 - delta1)hatPi = {low1:.8g} < 0",
                bound="Re hatPi(P1 - lambda0 - delta1)hatPi >= 0")
    return model
