"""Exterior complex scaling: the distortion field, the scaled kinetic
operator, direct resonance extraction and parameter-stability checks.

The scaled kinetic operator is assembled in the symmetrized divergence
form

    K = h^2 diag(J^-1/2) Dh^T diag(1/J at midpoints) Dh diag(J^-1/2),
    J = 1 + mu*omega'(r),

with Dh the alias-free 4th-order staggered derivative.  K is exactly
complex-symmetric, 4th-order consistent with the contour-scaled
Laplacian conjugated by J^{1/2} (same spectrum, eigenvectors rescaled by
a diagonal), and reduces bit-exactly to h^2 Dh^T Dh at mu = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.linalg as sla

from .cutoffs import step_up, smoothstep_d1, smoothstep_d2
from .errors import ConfigurationError, DistortionError, ResolutionError
from .gridops import Grid, staggered_deriv_matrix

__all__ = [
    "DistortionField", "distorted_kinetic", "distorted_curves",
    "Resonance", "resonances_direct", "mu_stability_check",
]

MU_CAP = 0.3


@dataclass(frozen=True)
class DistortionField:
    """omega(x) = chi(|x|) x with chi a quintic blend from 0 at R to 1 at 2R."""

    R: float
    mu: complex

    def __post_init__(self):
        problems = []
        if not self.R > 0:
            problems.append(f"distortion.R must be > 0, got {self.R}")
        if abs(self.mu) > MU_CAP + 1e-12:
            problems.append(f"|mu| = {abs(self.mu):.3f} exceeds the validity cap {MU_CAP}")
        if self.mu.imag < 0:
            problems.append(f"Im mu must be >= 0, got {self.mu}")
        if problems:
            raise ConfigurationError(problems)

    def chi(self, r):
        return step_up(r, self.R, 2.0 * self.R)

    def chi_d1(self, r):
        return smoothstep_d1((np.asarray(r, float) - self.R) / self.R) / self.R

    def chi_d2(self, r):
        return smoothstep_d2((np.asarray(r, float) - self.R) / self.R) / self.R ** 2

    def omega(self, r):
        r = np.asarray(r, dtype=float)
        return self.chi(r) * r

    def omega_d1(self, r):
        r = np.asarray(r, dtype=float)
        return self.chi(r) + r * self.chi_d1(r)

    def omega_d2(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.chi_d1(r) + r * self.chi_d2(r)

    def tau(self, r):
        """Scaled coordinate r + mu*omega(r)."""
        r = np.asarray(r, dtype=float)
        if self.mu == 0:
            return r.astype(float)
        return r + self.mu * self.omega(r)

    def jacobian(self, r):
        return 1.0 + self.mu * self.omega_d1(r)


def distorted_kinetic(grid: Grid, h: float, field: DistortionField | None = None) -> np.ndarray:
    """Scaled kinetic matrix; equals h^2 Dh^T Dh when field is None or mu = 0."""
    Dh, mid_r = staggered_deriv_matrix(grid)
    if field is None or field.mu == 0:
        return (h * h) * (Dh.T @ Dh)
    r = grid.radii
    J = field.jacobian(r)
    J_mid = field.jacobian(mid_r)
    if np.any(np.abs(J) < 0.2) or np.any(np.abs(J_mid) < 0.2):
        i = int(np.argmin(np.abs(J)))
        raise DistortionError(
            f"1 + mu*omega'(r) = {J[i]:.4g} too close to 0 at node {i} (r={r[i]:.4g})"
        )
    q = J ** -0.5
    K = Dh.T @ ((1.0 / J_mid)[:, None] * Dh)
    K = q[:, None] * K * q[None, :]
    return (h * h) * K


def distorted_curves(curves, grid: Grid, field: DistortionField):
    """Sample lambda_j(r + mu*omega(r)) on the grid: (n, N) complex.

    Requires the scaling to stay off the core's support so the real-local
    core term equals its own continuation.
    """
    if curves.core is not None and field.R < curves.core.r_off - 1e-12:
        raise ConfigurationError(
            [f"distortion.R = {field.R} intrudes on the curve core (needs R >= {curves.core.r_off})"]
        )
    r = grid.radii
    return curves.values_distorted(r, field.tau(r))


@dataclass
class Resonance:
    """One accepted complex eigenvalue with provenance and diagnostics."""

    z: complex
    width: float
    ell: int
    h: float
    mu_used: complex
    grid_n: int
    margin: float
    drift: float | None = None
    flags: list = dfield(default_factory=list)


def _fit_continuum_rays(eigs, thresholds, mu):
    """Per-threshold ray angle of the discretized rotated continuum.

    Starts from the analytic prediction -2*arg(1+mu) and refines with the
    median angle of nearby eigenvalues.
    """
    predicted = -2.0 * np.angle(1.0 + mu)
    rays = {}
    for t in thresholds:
        w = eigs - t
        ok = (w.real > 1e-9) & (w.imag < -1e-12) & (np.abs(w) > 1e-6)
        ang = np.angle(w[ok])
        near = ang[np.abs(ang - predicted) < 0.5 * abs(predicted) + 1e-12]
        rays[float(t)] = float(np.median(near)) if near.size >= 5 else predicted
    return rays


def resonances_direct(H, window, threshold, *, field, thresholds, h, ell, grid_n,
                      margin_factor=0.1, max_eigs=None):
    """Eigenvalues of the scaled operator in a window, filtered to resonances.

    window: (re_lo, re_hi, im_lo) rectangle; candidates need Im z <= tol,
    Re z > threshold, and an angular margin from every fitted continuum
    ray of at least margin_factor*|Im mu|.  Eigenvalues inside the window
    but too close to a ray are returned in the ``ambiguous`` list.
    """
    eigs = sla.eigvals(np.asarray(H, dtype=complex))
    re_lo, re_hi, im_lo = window
    rays = _fit_continuum_rays(eigs, thresholds, field.mu)
    out, ambiguous = [], []
    min_margin = margin_factor * abs(field.mu.imag)
    sel = (eigs.real > max(re_lo, threshold)) & (eigs.real < re_hi) \
        & (eigs.imag <= 1e-9) & (eigs.imag > im_lo)
    for z in eigs[sel]:
        margins = []
        for t, ray in rays.items():
            if z.real > t and abs(z - t) > 1e-9:
                margins.append(abs(np.angle(z - t) - ray))
        margin = min(margins) if margins else np.pi
        res = Resonance(z=complex(z), width=float(-2.0 * z.imag), ell=ell, h=h,
                        mu_used=field.mu, grid_n=grid_n, margin=float(margin))
        if margin < min_margin:
            res.flags.append("near-continuum-ray")
            ambiguous.append(res)
        else:
            out.append(res)
    out.sort(key=lambda r: r.z.real)
    ambiguous.sort(key=lambda r: r.z.real)
    if max_eigs is not None:
        out = out[:max_eigs]
    return out, ambiguous


def _nearest_eig(H, z0, k=12):
    """Eigenvalue of H nearest z0 (dense solve; H moderate-sized)."""
    eigs = sla.eigvals(np.asarray(H, dtype=complex))
    return complex(eigs[int(np.argmin(np.abs(eigs - z0)))])


def mu_stability_check(make_matrix, z0, mu_list, grid_list, *, order=4,
                       tol_rel=1e-6, converge_frac=5e-4):
    """Track the eigenvalue nearest z0 across (mu, grid) and measure drift.

    make_matrix(mu, n) -> operator matrix.  For each mu the grid sequence
    is Richardson-extrapolated at the discretization order; failure to
    converge raises ResolutionError with the convergence table attached.
    Returns (drift, accepted, table).
    """
    if len(grid_list) < 2:
        raise ConfigurationError(["mu_stability_check needs at least two grids"])
    if any(abs(m) > MU_CAP + 1e-12 for m in mu_list):
        raise ConfigurationError(["mu value beyond validity cap in mu_list"])
    scale = max(1.0, abs(z0))
    table = []
    extrapolated = []
    for mu in mu_list:
        zs = []
        for n in grid_list:
            zs.append(_nearest_eig(make_matrix(mu, n), z0))
        steps = [abs(zs[i + 1] - zs[i]) for i in range(len(zs) - 1)]
        ratio = (grid_list[-1] / grid_list[-2]) ** order
        corr = (zs[-1] - zs[-2]) / (ratio - 1.0)
        z_star = zs[-1] + corr
        table.append({"mu": mu, "values": zs, "steps": steps, "extrapolated": z_star})
        if steps and steps[-1] > converge_frac * scale:
            raise ResolutionError(
                f"grid sequence not converged at mu={mu}: last step {steps[-1]:.3e} "
                f"(needs < {converge_frac * scale:.3e})", table=table)
        extrapolated.append(z_star)
    drift = 0.0
    for i in range(len(extrapolated)):
        for j in range(i + 1, len(extrapolated)):
            drift = max(drift, abs(extrapolated[i] - extrapolated[j]))
    drift /= scale
    return drift, bool(drift < tol_rel), table
