"""Cutoff profiles built from the C^2 quintic smoothstep.

The quadratic partition phi0^2 + phi1^2 = 1 is realized through an angle
blend theta = (pi/2) * smoothstep, phi0 = cos(theta), phi1 = sin(theta),
which keeps the identity exact to round-off while both profiles stay C^2.

Geometry relative to delta1 (W0 = {r < 2 delta1}, W1 = {r > delta1}):

    psi1 rises on (1.04, 1.22) * delta1   (so supp psi1 in W1)
    phi  blends on (1.25, 1.55) * delta1
    psi0 = 1 through 1.82 * delta1, falls to 0 by 1.97 * delta1

The pad between the phi transition and the psi0 shoulder absorbs the
4-node stencil spill of commutators [K0, phi_j], keeping their columns
inside {psi0 = 1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .gridops import Grid

__all__ = [
    "smoothstep", "smoothstep_d1", "smoothstep_d2", "step_up",
    "CutoffSystem", "build_cutoffs",
]

# transition breakpoints as multiples of delta1
PSI1_LO, PSI1_HI = 1.04, 1.22
PHI_LO, PHI_HI = 1.25, 1.55
PSI0_HI, PSI0_END = 1.82, 1.97


def smoothstep(t):
    """Quintic smoothstep: 0 for t<=0, 1 for t>=1, C^2 at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_d1(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    d = 30.0 * tc * tc * (tc - 1.0) ** 2
    return np.where(inside, d, 0.0)


def smoothstep_d2(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    d = 60.0 * tc * (2.0 * tc - 1.0) * (tc - 1.0)
    return np.where(inside, d, 0.0)


def step_up(r, a, b):
    """smoothstep((r - a)/(b - a)): exactly 0 below a, exactly 1 above b."""
    return smoothstep((np.asarray(r, dtype=float) - a) / (b - a))


@dataclass(frozen=True)
class CutoffSystem:
    """The four cutoff profiles sampled on the grid."""

    delta1: float
    phi0: np.ndarray
    phi1: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    # closed-form radial derivatives (diagnostics; commutators are
    # computed at the matrix level and do not use these)
    phi0_prime: np.ndarray
    phi1_prime: np.ndarray

    @property
    def w0_mask(self):
        return np.abs(self._radii) < 2.0 * self.delta1

    @property
    def w1_mask(self):
        return np.abs(self._radii) > self.delta1

    def __post_init__(self):
        for a in (self.phi0, self.phi1, self.psi0, self.psi1):
            a.setflags(write=False)


def build_cutoffs(delta1: float, grid: Grid) -> CutoffSystem:
    """Sample the cutoff system on a grid.

    Requires 2*delta1 < r_max/4 so that W0 occupies a proper inner
    fraction of the domain.
    """
    problems = []
    if not delta1 > 0:
        problems.append(f"cutoffs.delta1 must be > 0, got {delta1!r}")
    elif not 2.0 * delta1 < grid.r_max / 4.0:
        problems.append(
            f"cutoffs.delta1 too large for the grid: need 2*delta1 < r_max/4 "
            f"(delta1={delta1}, r_max={grid.r_max})"
        )
    if problems:
        raise ConfigurationError(problems)

    r = grid.radii
    theta = 0.5 * np.pi * step_up(r, PHI_LO * delta1, PHI_HI * delta1)
    phi0 = np.cos(theta)
    phi1 = np.sin(theta)
    psi1 = step_up(r, PSI1_LO * delta1, PSI1_HI * delta1)
    psi0 = 1.0 - step_up(r, PSI0_HI * delta1, PSI0_END * delta1)

    span = (PHI_HI - PHI_LO) * delta1
    tpar = (r - PHI_LO * delta1) / span
    theta_p = 0.5 * np.pi * smoothstep_d1(tpar) / span
    phi0_p = -theta_p * np.sin(theta)
    phi1_p = theta_p * np.cos(theta)

    cs = CutoffSystem(
        delta1=delta1, phi0=phi0, phi1=phi1, psi0=psi0, psi1=psi1,
        phi0_prime=phi0_p, phi1_prime=phi1_p,
    )
    object.__setattr__(cs, "_radii", r)
    return cs
