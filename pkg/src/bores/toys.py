"""Synthetic single-purpose model configurations used by the test and
acceptance suites: confining toy wells for the abstract reduction
machinery and randomized instances for the inverse-formula checks.

These live at coarser grids and wider core radii than the scenario
families; the reduction identities are exact linear algebra, so they do
not need scenario-scale resolution.
"""

from __future__ import annotations

import numpy as np

from .curves import Const, CoreBarrier, Curve, CurveSet, Gauss
from .distortion import DistortionField
from .fiber import ModelOperators, build_model
from .gridops import GridSpec

__all__ = ["toy_curveset", "toy_model", "random_toy_model"]


def toy_curveset(N=1, delta1=1.2, depth=1.3, center=6.5, width=2.0,
                 core_strength=6.0, lambda0=0.0, sea=0.0):
    """Confining wells with a repulsive core; levels below lambda0.

    Curve j dips to about sea - depth * 0.8^j; the asymptotic value sea
    sits at lambda0 by default so a window below lambda0 contains only
    discrete well levels.
    """
    curves = []
    for j in range(N):
        scale = 0.8 ** j
        curves.append(Curve((Const(sea + 0.35 * j),
                             Gauss(-depth * scale, center, width))))
    core = CoreBarrier(strength=core_strength, r_on=2.0 * delta1, r_off=4.0 * delta1)
    return CurveSet(curves=tuple(curves), core=core, lambda0=lambda0, tag="toy",
                    params=dict(delta1=delta1))


def toy_model(n=32, d=4, N=1, h=0.3, mu=0.0, r_max=14.0, delta1=1.2,
              gap=2.0, lambda0=0.0, delta0=1.0, local_angle=0.4,
              global_angle=0.5, R=None, validate=True, **curve_kw) -> ModelOperators:
    """Standard confining toy: d-channel fiber over a radial grid."""
    curves = toy_curveset(N=N, delta1=delta1, lambda0=lambda0, **curve_kw)
    if R is None:
        R = max(4.0 * delta1, 0.6 * r_max)
    field = DistortionField(R=R, mu=mu)
    return build_model(
        curves, grid_spec=GridSpec("radial", n, r_max), d=d, gap=gap, h=h,
        lambda0=lambda0, delta0=delta0, delta1=delta1, field=field,
        local_angle=local_angle, global_angle=global_angle, validate=validate)


def random_toy_model(rng: np.random.Generator, validate=False) -> tuple[ModelOperators, complex]:
    """Randomized instance for the inverse-formula checks.

    Returns (model, z) with z in the admissible window below lambda0.
    """
    n = int(rng.choice([16, 32]))
    d = int(rng.choice([3, 6]))
    N = int(rng.choice([1, 2]))
    if d < N + 2:
        d = N + 2
    depth = float(rng.uniform(0.9, 1.6))
    width = float(rng.uniform(1.6, 2.6))
    center = float(rng.uniform(5.5, 7.5))
    local_angle = float(rng.uniform(0.2, 0.6))
    global_angle = float(rng.uniform(0.2, 0.7))
    mu = complex(0.0, float(rng.choice([0.0, 0.1, 0.2])))
    h = float(rng.uniform(0.15, 0.4))
    model = toy_model(n=n, d=d, N=N, h=h, mu=mu, depth=depth, width=width,
                      center=center, local_angle=local_angle,
                      global_angle=global_angle, validate=validate)
    z = complex(rng.uniform(-1.4, -0.05), rng.uniform(-0.15, 0.15))
    return model, z
