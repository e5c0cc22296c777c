"""Closed-form electronic curves with exact complex continuation.

Curves are sums of entire/rational primitives with real coefficients, so
values at conjugate arguments are conjugate and evaluation along the
scaled contour r + mu*omega(r) is the analytic continuation of the real
curve.  A separate repulsive core term (strength * decay(r) / r) lives
only near the origin; it is real-local and must never be sampled at a
complex argument, which is enforced by keeping the scaling field's
activation radius beyond the core's support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cutoffs import step_up
from .errors import SectorError

__all__ = [
    "Gauss", "FlatGauss", "Tail", "Const", "Curve", "CoreBarrier",
    "PlaneMixer", "CurveSet",
]


def _sector_guard(w, slope, min_re=0.0):
    w = np.asarray(w)
    if np.iscomplexobj(w):
        bad = np.abs(w.imag) > slope * np.abs(w.real) + 1e-12
        if np.any(bad):
            raise SectorError(
                f"evaluation outside sector |Im w| < {slope}*|Re w|: "
                f"worst point {w.flat[int(np.argmax(np.abs(w.imag) - slope * np.abs(w.real)))]}"
            )
        if np.any(w.real < min_re - 1e-12):
            raise SectorError(f"evaluation at Re w < {min_re}")


@dataclass(frozen=True)
class Gauss:
    """a * exp(-((w - center)/width)^2); entire."""
    a: float
    center: float
    width: float

    def value(self, w):
        u = (w - self.center) / self.width
        return self.a * np.exp(-u * u)

    def deriv(self, w):
        u = (w - self.center) / self.width
        return self.a * np.exp(-u * u) * (-2.0 * u) / self.width

    limit = 0.0


@dataclass(frozen=True)
class FlatGauss:
    """a * exp(-((w - center)/width)^4); entire, flat-topped."""
    a: float
    center: float
    width: float

    def value(self, w):
        u = (w - self.center) / self.width
        return self.a * np.exp(-(u ** 4))

    def deriv(self, w):
        u = (w - self.center) / self.width
        return self.a * np.exp(-(u ** 4)) * (-4.0 * u ** 3) / self.width

    limit = 0.0


@dataclass(frozen=True)
class Tail:
    """a / (w + offset); offset >= 0 keeps the pole out of the right sector."""
    a: float
    offset: float

    def value(self, w):
        return self.a / (w + self.offset)

    def deriv(self, w):
        return -self.a / (w + self.offset) ** 2

    limit = 0.0


@dataclass(frozen=True)
class Const:
    c: float

    def value(self, w):
        return self.c * np.ones_like(np.asarray(w, dtype=complex if np.iscomplexobj(w) else float))

    def deriv(self, w):
        return np.zeros_like(np.asarray(w, dtype=float if not np.iscomplexobj(w) else complex))

    @property
    def limit(self):
        return self.c


@dataclass(frozen=True)
class Curve:
    """Sum of primitives; analytic in the sector {|Im w| < slope*|Re w|}."""

    terms: tuple
    sector_slope: float = 0.5

    def value(self, w):
        _sector_guard(w, self.sector_slope)
        out = sum(t.value(w) for t in self.terms)
        return out

    def deriv(self, w):
        _sector_guard(w, self.sector_slope)
        return sum(t.deriv(w) for t in self.terms)

    @property
    def limit(self):
        """Value as Re w -> +infinity inside the sector."""
        return float(sum(t.limit for t in self.terms))

    def __call__(self, w):
        return self.value(w)


@dataclass(frozen=True)
class CoreBarrier:
    """Repulsive core strength*decay(r)/r, supported in r < r_off.

    decay = 1 below r_on and 0 above r_off (C^2 blend), mirroring the
    nuclear-repulsion growth near the collision set while leaving the
    large-r curves untouched.
    """

    strength: float
    r_on: float
    r_off: float

    def value(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        dec = 1.0 - step_up(r, self.r_on, self.r_off)
        out = np.zeros_like(r)
        inside = dec > 0.0
        out[inside] = self.strength * dec[inside] / r[inside]
        return out


@dataclass(frozen=True)
class PlaneMixer:
    """Rotation in channels (i, j) by an analytic, localized angle.

    angle(w) = amp * exp(-((w - center)/width)^2).  The rotation is
    complex-orthogonal for complex w, so mixed curve matrices remain
    complex-symmetric under scaling.
    """

    i: int
    j: int
    amp: float
    center: float
    width: float

    def angle(self, w):
        u = (np.asarray(w) - self.center) / self.width
        return self.amp * np.exp(-u * u)


@dataclass(frozen=True)
class CurveSet:
    """N tracked curves, core term, channel mixers, scenario metadata."""

    curves: tuple            # analytic bounded parts, one Curve per channel
    core: CoreBarrier | None = None
    mixers: tuple = ()
    lambda0: float = 0.0
    tag: str = "custom"
    params: dict = field(default_factory=dict)
    special_radii: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.curves)

    def thresholds(self):
        """Asymptotic limits lambda_j^inf (core excluded: it vanishes)."""
        return np.array([c.limit for c in self.curves])

    def values(self, r):
        """Real curve samples lambda_j(r), core included: (len(r), N)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.stack([np.real(np.atleast_1d(c.value(r))) for c in self.curves], axis=-1)
        if self.core is not None:
            out = out + self.core.value(r)[..., None]
        return out

    def values_distorted(self, r, tau):
        """lambda_j(r + mu*omega(r)) given precomputed tau = r + mu*omega.

        The analytic parts are evaluated at tau; the core at real r,
        which equals its continuation because the scaling field vanishes
        on the core's support (validated at model assembly).
        """
        out = np.stack([np.asarray(c.value(tau), dtype=complex) for c in self.curves], axis=-1)
        if self.core is not None:
            out = out + self.core.value(np.asarray(r, dtype=float))[..., None]
        return out

    def derivs(self, r):
        return np.stack([np.real(c.deriv(r)) for c in self.curves], axis=-1)

    def mixing_matrix(self, w):
        """W(w): product of plane rotations, complex-orthogonal N x N.

        Returns (len(w), N, N).
        """
        w = np.atleast_1d(w)
        n = w.shape[0]
        dt = complex if np.iscomplexobj(w) else float
        W = np.broadcast_to(np.eye(self.N, dtype=dt), (n, self.N, self.N)).copy()
        for mx in self.mixers:
            b = mx.angle(w)
            cb, sb = np.cos(b), np.sin(b)
            Rot = np.broadcast_to(np.eye(self.N, dtype=dt), (n, self.N, self.N)).copy()
            Rot[:, mx.i, mx.i] = cb
            Rot[:, mx.j, mx.j] = cb
            Rot[:, mx.i, mx.j] = -sb
            Rot[:, mx.j, mx.i] = sb
            W = np.einsum("nij,njk->nik", Rot, W)
        return W
