"""Decomposition of the effective Hamiltonian into pseudodifferential,
core-localized and exponentially small parts; the patched comparison
problem for locating its eigenvalues; the nonlinear root solve for
resonances; and the h-scaling studies.

The decomposition is exact surgery on the exact remainder: after
removing the explicit pseudodifferential base and the explicit
core-localized part, what is left is split by column support (inside or
outside {psi0 = 1}) and row support (core nodes or not).  The
cross-support piece is the exponentially small tail; everything
column-supported in {psi0 = 1} factors exactly through psi0 and joins
the localized part, whose Hermitian part stays O(h) above zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.linalg as sla

from .cutoffs import step_up
from .distortion import Resonance
from .errors import ConfigurationError, HypothesisError, NumericalError, TrackingError
from .fiber import ModelOperators
from .grushin import EffectiveHamiltonian, effective_hamiltonian
from .linalg import deflated_inverse, herm_part, max_herm_eig, opnorm_est

__all__ = [
    "Decomposition", "decompose", "hat_operator",
    "ComparisonSetup", "comparison_setup", "comparison_grushin",
    "secant_root", "solve_resonance", "ScalingStudy", "fit_log_width",
    "fit_power_law",
]


@dataclass
class Decomposition:
    z: complex
    Lambda: np.ndarray
    L: np.ndarray
    Theta: np.ndarray
    Ahat: np.ndarray
    eff: EffectiveHamiltonian = dfield(repr=False, default=None)
    norm_L: float = np.nan
    max_herm_L: float = np.nan
    norm_Theta: float = np.nan
    identity_residual: float = np.nan


def _q_shift_matrix(model: ModelOperators):
    """blockdiag (1 - psi1)(Q(x) - lambda0 - delta0) on the full space."""
    n, d = model.n, model.d
    out = np.zeros((n * d, n * d), dtype=complex)
    base = model.lambda0 + model.delta0
    for i in range(n):
        w = 1.0 - model.cutoffs.psi1[i]
        if w != 0.0:
            out[i * d:(i + 1) * d, i * d:(i + 1) * d] = \
                w * (model.fiber.Q[i] - base * np.eye(d))
    return out


def decompose(model: ModelOperators, z, eff: EffectiveHamiltonian | None = None) -> Decomposition:
    """Exact split  A(z) = Lambda + L psi0 + Theta on the section space."""
    if eff is None:
        eff = effective_hamiltonian(model, z)
    b = eff.bundle
    Rm, Rp = model.sections.Rm, model.sections.Rp
    m = model.P.shape[0]
    eye_full = np.eye(m)

    base = Rp @ (z * eye_full - model.P1) @ Rm
    phi1N = model.section_diag(model.cutoffs.phi1)
    Lam1 = -phi1N @ (Rp @ b.M1 @ b.X1 @ b.M1 @ Rm) @ phi1N
    Lambda_base = base + Lam1

    L0 = Rp @ (-model.Rq @ b.X0 @ model.Rq - _q_shift_matrix(model)) @ Rm
    psi0N = model.section_diag(model.cutoffs.psi0)
    Omega = eff.reduced - Lambda_base - L0 @ psi0N

    e1 = np.repeat(model.cutoffs.psi0 == 1.0, model.N).astype(float)
    core = np.repeat(model.grid.radii <= model.delta1, model.N).astype(float)
    Om_in = Omega * e1[None, :]
    Om_out = Omega - Om_in
    L = L0 + Om_in
    Theta = core[:, None] * Om_out
    Lambda = Lambda_base + (1.0 - core)[:, None] * Om_out
    Ahat = eff.reduced - L @ psi0N

    dec = Decomposition(z=z, Lambda=Lambda, L=L, Theta=Theta, Ahat=Ahat, eff=eff)
    dec.norm_L = opnorm_est(L)
    dec.max_herm_L = max_herm_eig(L)
    dec.norm_Theta = opnorm_est(Theta)
    dec.identity_residual = opnorm_est(eff.reduced - Lambda - L @ psi0N - Theta)
    return dec


def hat_operator(model: ModelOperators, z, eff=None, c_bound_factor=10.0):
    """A_hat(z) = A(z) - L(z) psi0 plus the decomposition diagnostics.

    Raises when the Hermitian part of L exceeds its O(h) budget by more
    than a factor c_bound_factor.
    """
    dec = decompose(model, z, eff)
    if dec.max_herm_L > c_bound_factor * model.h:
        raise HypothesisError(
            f"Re L = {dec.max_herm_L:.4g} exceeds {c_bound_factor} * h = "
            f"{c_bound_factor * model.h:.4g}", bound="Re L <= C h")
    return dec.Ahat, dec


@dataclass
class ComparisonSetup:
    """Cutoffs, shift and spectral data for the patched comparison problem."""

    chi1: np.ndarray
    chi2: np.ndarray
    chi3: np.ndarray
    C: float
    rho0: complex
    u0: np.ndarray
    B: np.ndarray
    dec: Decomposition = dfield(repr=False, default=None)
    isolation: float = np.nan
    norm_reduced_resolvent: float = np.nan


def _nested_cutoffs(model: ModelOperators, delta2=None):
    d1 = model.delta1
    r = model.grid.radii
    chi1 = step_up(r, 2.05 * d1, 2.95 * d1)
    chi2 = step_up(r, 3.05 * d1, 3.95 * d1)
    if delta2 is None:
        delta2 = 6.0 * d1
    # chi3 reaches 1 before the channel matrix dips toward lambda0
    mvals = np.array([float(np.linalg.eigvalsh(herm_part(
        model.sections.w[i].T @ ((model.cutoffs.psi1[i] * model.fiber.Q[i])
                                 + (model.lambda0 + model.delta0)
                                 * (1 - model.cutoffs.psi1[i]) * np.eye(model.d))
        @ model.sections.w[i]))[0]) for i in range(model.n)])
    low = np.flatnonzero((r > delta2) & (mvals <= model.lambda0 + 0.5 * model.delta0))
    if low.size == 0:
        r_on = min(delta2 * 1.5, model.grid.r_max * 0.5)
    else:
        r_on = r[low[0]]
        if r_on <= delta2 + 2 * model.grid.spacing:
            raise ConfigurationError(
                [f"channel matrix dips toward lambda0 at r = {r_on:.3f}, "
                 f"inside delta2 = {delta2:.3f}: no room for chi3"])
    chi3 = step_up(r, delta2, max(delta2 + 4 * model.grid.spacing, 0.97 * r_on))
    return chi1, chi2, chi3, mvals


def comparison_setup(model: ModelOperators, z, delta2=None, isolation_factor=10.0,
                     solver_tol=1e-12) -> ComparisonSetup:
    """Assemble cutoffs, the shifted elliptic operator B, and the isolated
    eigenvalue data of A_hat near 0."""
    dec = decompose(model, z)
    chi1, chi2, chi3, mvals = _nested_cutoffs(model, delta2)

    Ahat = dec.Ahat
    evals, evecs = sla.eig(Ahat)
    order = np.argsort(np.abs(evals))
    rho0 = complex(evals[order[0]])
    isolation = float(np.abs(evals[order[1]] - rho0)) if len(evals) > 1 else np.inf
    scale = opnorm_est(Ahat)
    if isolation < isolation_factor * solver_tol * scale:
        raise NumericalError(
            f"eigenvalue rho0 = {rho0:.6g} not isolated: gap {isolation:.3e} "
            f"< {isolation_factor} * solver tolerance")
    u0 = evecs[:, order[0]]
    quad = u0 @ u0
    if abs(quad) < 1e-8:
        raise NumericalError("comparison eigenvector is quasi-null for the bilinear pairing")
    u0 = u0 / np.sqrt(quad)

    C = model.lambda0 + model.delta0 + max(0.0, float(mvals.max()))
    chi3N = model.section_diag(chi3)
    for _ in range(8):
        B = dec.eff.reduced - C * chi3N
        top = max_herm_eig(B)
        if top <= -model.delta0 + 1e-8:
            break
        C += (top + model.delta0) + 0.5
    else:
        raise HypothesisError(f"could not push Re B below -delta0 (top {top:.4g})",
                              bound="Re B <= -delta0")
    return ComparisonSetup(chi1=chi1, chi2=chi2, chi3=chi3, C=C, rho0=rho0, u0=u0,
                           B=B, dec=dec, isolation=isolation)


def comparison_grushin(setup: ComparisonSetup, model: ModelOperators, rho=None):
    """Residual of the patched inverse of the comparison problem at rho.

    Builds G0(rho)^{-1} from the isolated-eigenvalue data, the candidate
    patched inverse F(rho), and returns ||G(rho) F(rho) - I|| together
    with the eigenvalue shift |rho1 - rho0| and its residual-based bound.
    """
    dec = setup.dec
    if rho is None:
        rho = setup.rho0
    m = dec.Ahat.shape[0]
    u0 = setup.u0
    Pi0 = np.outer(u0, u0)
    # Ran(I - Pi0) = {v : u0^T v = 0} is the orthocomplement of conj(u0)
    Qr, _ = np.linalg.qr(np.conj(u0).reshape(-1, 1), mode="complete")
    V0 = Qr[:, 1:]
    E0 = deflated_inverse(dec.Ahat - rho * np.eye(m), V0, Pi0)
    norm_E0 = opnorm_est(E0)

    chi1N = model.section_diag(setup.chi1)
    chi2N = model.section_diag(setup.chi2)
    Ful = chi1N @ E0 @ chi2N \
        + np.linalg.solve(setup.B - rho * np.eye(m), np.eye(m) - chi2N)
    F = np.zeros((m + 1, m + 1), dtype=complex)
    F[:m, :m] = Ful
    F[:m, m] = chi1N @ u0
    F[m, :m] = u0
    F[m, m] = rho - setup.rho0

    G = np.zeros((m + 1, m + 1), dtype=complex)
    G[:m, :m] = dec.eff.reduced - rho * np.eye(m)
    G[:m, m] = setup.chi1.repeat(model.N) * u0
    G[m, :m] = u0
    resid = opnorm_est(G @ F - np.eye(m + 1))

    evals = sla.eigvals(dec.eff.reduced)
    rho1 = complex(evals[int(np.argmin(np.abs(evals - setup.rho0)))])
    shift = abs(rho1 - setup.rho0)
    bound = 4.0 * resid + 1e-12
    return dict(residual=float(resid), rho0=setup.rho0, rho1=rho1, shift=float(shift),
                shift_bound=float(bound), shift_ok=bool(shift <= bound),
                norm_E0=float(norm_E0), C=setup.C)


def secant_root(f, z0, z1=None, *, tol, maxit=50):
    """Derivative-free secant iteration on a scalar complex map.

    Returns (root, trace); raises NumericalError on non-convergence.
    """
    if z1 is None:
        z1 = z0 + 1e-3 * (1.0 + abs(z0))
    f0, f1 = f(z0), f(z1)
    trace = [(z0, f0), (z1, f1)]
    for _ in range(maxit):
        if abs(f1) <= tol:
            return z1, trace
        denom = f1 - f0
        if denom == 0:
            raise NumericalError("secant iteration stalled (flat map)", log=trace)
        z2 = z1 - f1 * (z1 - z0) / denom
        z0, f0, z1 = z1, f1, z2
        f1 = f(z1)
        trace.append((z1, f1))
    raise NumericalError(f"secant iteration did not converge in {maxit} steps", log=trace)


def _tracked_eigenvalue(Ared, v_prev):
    """Eigenvalue of Ared nearest 0, tracked by eigenvector overlap."""
    evals, evecs = sla.eig(Ared)
    if v_prev is None:
        idx = int(np.argmin(np.abs(evals)))
    else:
        overlaps = np.abs(v_prev.conj() @ evecs)
        near = np.abs(evals) <= np.sort(np.abs(evals))[min(4, len(evals) - 1)] + 1e-30
        score = overlaps * near
        if score.max() <= 0:
            raise TrackingError("eigenvalue branch lost while tracking the root")
        idx = int(np.argmax(score))
    return complex(evals[idx]), evecs[:, idx] / np.linalg.norm(evecs[:, idx])


def solve_resonance(model: ModelOperators, z_seed, *, tol_factor=1e-10, maxit=50,
                    rho_fn=None) -> tuple[complex, list]:
    """Solve rho(z) = 0 by secant iteration with overlap tracking.

    rho(z) is the eigenvalue of the reduced effective operator nearest 0;
    rho_fn overrides it for synthetic tests.  Returns (z1, trace).
    """
    state = {"v": None, "scale": None}

    def rho(z):
        if rho_fn is not None:
            return rho_fn(z)
        eff = effective_hamiltonian(model, z)
        if state["scale"] is None:
            state["scale"] = max(1.0, opnorm_est(eff.reduced))
        val, vec = _tracked_eigenvalue(eff.reduced, state["v"])
        state["v"] = vec
        return val

    probe = rho(z_seed)
    scale = state["scale"] if state["scale"] is not None else 1.0
    z1, trace = secant_root(rho, z_seed, z_seed - probe, tol=tol_factor * scale, maxit=maxit)
    return z1, trace


@dataclass
class ScalingStudy:
    scenario: str
    ell: int
    h_list: list
    records: list                  # per-h dicts
    fit: dict                      # slope/exponents with CI and R^2
    oracle: dict = dfield(default_factory=dict)


def fit_log_width(hs, widths):
    """OLS fit log Gamma = -2S/h + c; returns (S, stderr, R2, intercept)."""
    x = 1.0 / np.asarray(hs, dtype=float)
    y = np.log(np.asarray(widths, dtype=float))
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(1, len(x) - 2)
    sigma2 = ss_res / dof
    var_slope = sigma2 / float(np.sum((x - x.mean()) ** 2))
    S = -0.5 * coef[0]
    return dict(S=float(S), slope=float(coef[0]), intercept=float(coef[1]),
                stderr_S=float(0.5 * np.sqrt(var_slope)), r2=float(r2))


def fit_power_law(hs, values):
    """OLS fit log v = p log h + c; returns exponent with stderr and R^2."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(1, len(x) - 2)
    var_slope = ss_res / dof / float(np.sum((x - x.mean()) ** 2))
    return dict(p=float(coef[0]), intercept=float(coef[1]),
                stderr=float(np.sqrt(var_slope)), r2=float(r2))


def window_resonances(block, center, radius, thresholds, *, margin_factor=0.1,
                      width_cap=np.inf, threshold_clearance=0.0):
    """Eigenvalues of a radial block in a disk, filtered by the angular
    margin from the predicted continuum rays.

    width_cap and threshold_clearance additionally reject the wide,
    threshold-hugging discretized-continuum states whose angles bend away
    from the asymptotic ray near its tip.
    """
    from .radial import eigen_window

    im_floor = -0.75 * width_cap if np.isfinite(width_cap) else None
    pairs = eigen_window(block, center, radius, im_floor=im_floor)
    mu = block.field.mu
    ray = -2.0 * np.angle(1.0 + mu)
    min_margin = margin_factor * abs(mu.imag)
    out = []
    for z, v in pairs:
        if z.imag > 1e-9 or -2.0 * z.imag > width_cap:
            continue
        if any(abs(z - t) < threshold_clearance for t in thresholds):
            continue
        margins = [abs(np.angle(z - t) - ray) for t in thresholds
                   if z.real > t and abs(z - t) > 1e-9]
        margin = min(margins) if margins else np.pi
        if margin >= min_margin:
            out.append(Resonance(z=z, width=float(-2.0 * z.imag), ell=block.ell,
                                 h=block.h, mu_used=mu, grid_n=block.n,
                                 margin=float(margin)))
    return out


def _grid_for(h, nodes_per_h=30.0, n_min=240, n_max=760):
    return int(np.clip(round(nodes_per_h / h), n_min, n_max))


def scaling_study(curves, h_list, ell=0, *, scenario=None, mu=0.25j, r_max=12.0,
                  lambda0, delta0, delta1, window_center, window_radius,
                  select="ground", nodes_per_h=30.0, n_min=240, n_max=760,
                  grid_factor=1.0, width_cap=np.inf,
                  threshold_clearance=0.0) -> ScalingStudy:
    """Track one resonance across an h sweep and fit its width law.

    select: "ground" follows the lowest accepted resonance by prediction
    from previous entries; "crossing" picks the widest accepted resonance
    near lambda0 (the one singled out by the level-crossing layer).
    """
    from .radial import radial_operator

    if len(h_list) < 4:
        raise ConfigurationError(["scaling_study needs at least 4 h values"])
    scenario = scenario or curves.tag
    thresholds = [t for t in curves.thresholds() if t < window_center + window_radius]
    records = []
    failures = []
    for h in sorted(h_list, reverse=True):
        n = int(round(_grid_for(h, nodes_per_h, n_min, n_max) * grid_factor))
        block = radial_operator(curves, n=n, r_max=r_max, h=h, ell=ell, mu=mu,
                                lambda0=lambda0, delta0=delta0, delta1=delta1)
        found = window_resonances(block, window_center, window_radius, thresholds,
                                  width_cap=width_cap,
                                  threshold_clearance=threshold_clearance)
        found = [r for r in found if r.width > 1e-13]
        if not found:
            failures.append((h, "no accepted resonance in window"))
            continue
        if select == "crossing":
            near = [r for r in found if abs(r.z.real - lambda0) <= window_radius]
            pick = max(near or found, key=lambda r: r.width)
        else:
            if len(records) >= 2:
                zs = [rec["z"] for rec in records[-2:]]
                hs = [rec["h"] for rec in records[-2:]]
                slope = (zs[-1].real - zs[-2].real) / (hs[-1] - hs[-2])
                pred = zs[-1].real + slope * (h - hs[-1])
            elif records:
                pred = records[-1]["z"].real
            else:
                pred = min(r.z.real for r in found)
            pick = min(found, key=lambda r: abs(r.z.real - pred))
        records.append(dict(h=h, n=n, z=pick.z, width=pick.width,
                            margin=pick.margin, ell=ell))
    if failures:
        raise NumericalError(
            "scaling study incomplete: " + "; ".join(f"h={h}: {msg}" for h, msg in failures),
            log=records)

    hs = [r["h"] for r in records]
    if scenario == "crossing":
        dists = [abs(r["z"].real - lambda0) for r in records]
        widths = [r["width"] for r in records]
        fit = dict(distance=fit_power_law(hs, dists), width=fit_power_law(hs, widths))
    else:
        widths = [r["width"] for r in records]
        fit = fit_log_width(hs, widths)
    return ScalingStudy(scenario=scenario, ell=ell, h_list=list(hs),
                        records=records, fit=fit)
