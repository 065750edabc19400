"""Importance samplers shared by the collision integrals.

All collision integrals carry the measure (I I*)^alpha dv dI dv* dI* and the
collision weight (r(1-r))^alpha (1-R)^(2alpha+1) R^(1/2) dr dR dw.  States
are drawn from a Maxwellian of temperature ``tau`` and the parameters from
the normalized collision weight, so the importance weight of a state only
involves the reduced density ``exp(-(v^2/2 + I)/tau)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .quadrature import collision_weight_mass, sample_collision_params


def maxwell_constant(alpha: float) -> float:
    """1 / ((2 pi)^(3/2) Gamma(alpha + 1)), the normalization of M."""
    return 1.0 / ((2.0 * math.pi) ** 1.5 * special.gamma(alpha + 1.0))


def reduced_maxwellian(v, I, alpha):
    """M / I^alpha for the normalized Maxwellian."""
    v = np.asarray(v, dtype=float)
    return maxwell_constant(alpha) * np.exp(-0.5 * np.einsum("...i,...i->...", v, v) - np.asarray(I, dtype=float))


def sample_states(rng, m, alpha, tau=1.0):
    """Draw (v, I) with density proportional to I^alpha exp(-(v^2/2 + I)/tau).

    Returns ``v, I, inv`` where ``inv`` is ``I^alpha / density``, so
    ``mean(inv * F)`` estimates ``int F I^alpha dv dI``.
    """
    v = math.sqrt(tau) * rng.standard_normal((m, 3))
    I = rng.gamma(alpha + 1.0, tau, m)
    log_c = math.log(maxwell_constant(alpha)) - (alpha + 2.5) * math.log(tau)
    inv = np.exp(-log_c + (0.5 * np.einsum("ij,ij->i", v, v) + I) / tau)
    return v, I, inv


@dataclass
class CollisionSample:
    """A batch of points of (v, I, v*, I*, r, R, omega) with importance weights.

    ``weight`` already contains the collision-weight mass and the state
    importance ratios so that ``mean(weight * F)`` estimates the collision
    integral of F against (I I*)^alpha and the collision weight.
    """

    v: np.ndarray
    I: np.ndarray
    vs: np.ndarray
    Is: np.ndarray
    r: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    weight: np.ndarray


def sample_partners(rng, m, alpha, v, I, tau=1.0, margin=0.0):
    """Partners and parameters for fixed (v, I); weight excludes I^alpha."""
    vs, Is, inv = sample_states(rng, m, alpha, tau)
    r, R, omega, w = sample_collision_params(rng, m, alpha, margin)
    v = np.broadcast_to(np.asarray(v, float), (m, 3))
    I = np.broadcast_to(np.asarray(I, float), (m,))
    return CollisionSample(v, I, vs, Is, r, R, omega, w * inv)


def sample_pairs(rng, m, alpha, tau=1.0, margin=0.0):
    """Both states and parameters drawn jointly."""
    v, I, inv = sample_states(rng, m, alpha, tau)
    vs, Is, inv_s = sample_states(rng, m, alpha, tau)
    r, R, omega, w = sample_collision_params(rng, m, alpha, margin)
    return CollisionSample(v, I, vs, Is, r, R, omega, w * inv * inv_s)


__all__ = ["maxwell_constant", "reduced_maxwellian", "sample_states", "CollisionSample",
           "sample_partners", "sample_pairs", "collision_weight_mass"]
