"""Exponential-weight admissibility, the leading symbol action on WKB
data, and the leading block of the weighted resolvent expansion.

Weights s(x) are admissible when |s'(x)|^2 <= theta(x, z) with theta the
pointwise minimum of the elliptic-floor margin and the spectral bottom
of the compressed fiber, minus half delta1.  Inadmissible weights make
the conjugated resolvent blocks lose ellipticity, so every operation
checks first and reports the violating nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, ConfigurationError
from .fiber import ModelOperators
from .gridops import deriv1_matrix
from .linalg import herm_part

__all__ = [
    "theta_bound", "WeightFunction", "WKBState",
    "leading_symbol_action", "wkb_residual", "x1_wkb_leading",
]


def theta_bound(model: ModelOperators, z):
    """Pointwise admissibility bound theta(x, z) on the grid.

    theta = min(lambda0 + delta0 - Re z,
                inf spec Re hatPi (Q(x) - z) hatPi) - delta1/2,
    computed nodewise with an orthonormal basis of Ran hatPi(x).
    """
    n, d, N = model.n, model.d, model.N
    branch1 = model.lambda0 + model.delta0 - np.real(z)
    out = np.empty(n)
    for i in range(n):
        hat = np.eye(d) - model.proj.Pi[i]
        U, s, _ = np.linalg.svd(hat)
        V = U[:, : d - N]
        C = V.conj().T @ (model.fiber.Q[i] - z * np.eye(d)) @ V
        branch2 = float(np.linalg.eigvalsh(herm_part(C))[0])
        out[i] = min(branch1, branch2) - 0.5 * model.delta1
    return out


@dataclass
class WeightFunction:
    """Real weight samples with derivative samples on the grid."""

    s: np.ndarray
    s_prime: np.ndarray

    @classmethod
    def from_samples(cls, s, grid):
        D1 = deriv1_matrix(grid)
        return cls(s=np.asarray(s, dtype=float), s_prime=D1 @ np.asarray(s, dtype=float))

    def check_admissible(self, theta):
        bad = np.flatnonzero(self.s_prime ** 2 > theta + 1e-12)
        if bad.size:
            raise AdmissibilityError(
                "weight violates |s'|^2 <= theta(x, z)", nodes=bad.tolist())


@dataclass
class WKBState:
    """Leading amplitude a0 (per-node N-vector) and its weight."""

    a0: np.ndarray           # (n, N)
    weight: WeightFunction
    support_pad: int = 8     # nodes eroded from each support edge in norms

    def support_mask(self):
        return np.any(np.abs(self.a0) > 0.0, axis=1)


def leading_symbol_action(state: WKBState, model: ModelOperators, curve_M, z):
    """b0(x) = (z + (s'/(1+mu*omega'))^2) a0 - M_mu(x) a0, nodewise.

    curve_M: (n, N, N) channel matrix samples (the reduced potential).
    """
    theta = theta_bound(model, z)
    state.weight.check_admissible(theta)
    J = model.field.jacobian(model.grid.radii)
    pref = z + (state.weight.s_prime / J) ** 2
    b0 = pref[:, None] * state.a0 - np.einsum("nij,nj->ni", curve_M, state.a0)
    return b0


def _weighted_apply(op, s_over_h, vec_flat):
    """exp(s/h) op (exp(-s/h) vec) with diagonal weights."""
    w = np.exp(s_over_h)
    return w * (op @ (vec_flat / w))


def wkb_residual(state_builder, model_builder, curve_M_builder, z, h_list,
                 fit_floor=1e-13):
    """Decay of r(h) = sup |e^{s/h} A(z)(a0 e^{-s/h}) - b0| over supp a0.

    The builders produce per-h grids, models and states so the sweep can
    tie resolution to h.  Returns (h, residual) records plus the fitted
    order; at least three h values are required.
    """
    from .grushin import effective_hamiltonian

    if len(h_list) < 3:
        raise ConfigurationError(["wkb_residual needs at least 3 h values"])
    records = []
    for h in h_list:
        model = model_builder(h)
        state = state_builder(model)
        curve_M = curve_M_builder(model)
        b0 = leading_symbol_action(state, model, curve_M, z)
        eff = effective_hamiltonian(model, z)
        s_over_h = np.repeat(state.weight.s / h, model.N)
        out = _weighted_apply(eff.reduced, s_over_h, state.a0.ravel())
        diff = (out - b0.ravel()).reshape(model.n, model.N)
        mask = state.support_mask()
        pad = state.support_pad
        idx = np.flatnonzero(mask)
        core = idx[(idx >= idx[0] + pad) & (idx <= idx[-1] - pad)]
        resid = float(np.abs(diff[core]).max()) if core.size else 0.0
        records.append((h, max(resid, fit_floor)))
    hs = np.array([r[0] for r in records])
    rs = np.array([r[1] for r in records])
    order = float(np.polyfit(np.log(hs), np.log(rs), 1)[0])
    return dict(records=records, order=order,
                decaying=bool(np.all(np.diff(rs[np.argsort(hs)]) >= -1e-14) or order > 0))


def x1_wkb_leading(model: ModelOperators, X1, a0_fiber, weight: WeightFunction, z):
    """Nodewise leading block of the weighted X1 action.

    b0(x) = [hatPi (Q1(x) - (s'/(1+mu*omega'))^2 - z) hatPi]^{-1} hatPi a0(x)

    computed with the per-node complement basis; compared by the caller
    against e^{s/h} X1 (a0 e^{-s/h}).  Raises on nodewise singularity.
    """
    theta = theta_bound(model, z)
    weight.check_admissible(theta)
    n, d, N = model.n, model.d, model.N
    J = model.field.jacobian(model.grid.radii)
    psi1 = model.cutoffs.psi1
    shift = (weight.s_prime / J) ** 2
    out = np.zeros((n, d), dtype=complex)
    for i in range(n):
        Q1_i = psi1[i] * model.fiber.Q[i] \
            + (model.lambda0 + model.delta0) * (1.0 - psi1[i]) * np.eye(d)
        hat = np.eye(d) - model.proj.Pi[i]
        U, s, _ = np.linalg.svd(hat)
        V = U[:, : d - N]
        C = V.conj().T @ hat @ (Q1_i - (shift[i] + z) * np.eye(d)) @ hat @ V
        rhs = V.conj().T @ (hat @ a0_fiber[i])
        sv = np.linalg.svd(C, compute_uv=False)
        if sv[-1] < 1e-12 * max(1.0, sv[0]):
            raise ConfigurationError(
                [f"compressed fiber operator singular at node {i}"])
        out[i] = hat @ (V @ np.linalg.solve(C, rhs))
    return out
