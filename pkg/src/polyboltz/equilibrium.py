"""Maxwellian equilibria, moments and the entropy production functional."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kinematics as kin
from .cross_section import CrossSectionModel, GasSpec, eval_B_arrays
from .errors import DomainError, NumericalError
from .quadrature import MCResult, QuadratureSpec, gauss_jacobi_power, gauss_legendre, mc_mean_scaled
from .sampling import maxwell_constant, sample_pairs


class TruncationWarning(UserWarning):
    """The quadrature box cuts off a non-negligible part of the integrand."""


@dataclass(frozen=True)
class MaxwellianParams:
    n: float = 1.0
    u: tuple = (0.0, 0.0, 0.0)
    T: float = 1.0

    def __post_init__(self):
        if not (self.n > 0 and self.T > 0):
            raise DomainError("Maxwellian needs n > 0 and T > 0")
        u = tuple(float(x) for x in self.u)
        if len(u) != 3:
            raise DomainError("u must have three components")
        object.__setattr__(self, "u", u)


@dataclass(frozen=True)
class Distribution:
    """A distribution f(v, I) = I^alpha * reduced(v, I).

    The reduced density f / I^alpha is the primitive: it stays finite as
    I -> 0 for every admissible f, and the collision integrand only needs
    reduced values.  ``v_max`` and ``i_max`` declare the support used by
    deterministic quadrature.  ``reduced`` must be thread-safe.
    """

    reduced: Callable
    alpha: float
    v_max: float = 10.0
    i_max: float = 60.0

    def __call__(self, v, I):
        I = np.asarray(I, dtype=float)
        return np.power(I, self.alpha) * self.reduced(np.asarray(v, dtype=float), I)

    def scaled(self, factor: float) -> "Distribution":
        base = self.reduced
        return Distribution(lambda v, I: factor * base(v, I), self.alpha, self.v_max, self.i_max)

    def perturbed(self, factor: Callable, floor: float | None = None) -> "Distribution":
        """f * factor(v, I), optionally clipped below at ``floor`` times f."""
        base = self.reduced

        def reduced(v, I):
            k = np.asarray(factor(v, I), dtype=float)
            if floor is not None:
                k = np.maximum(k, floor)
            return base(v, I) * k

        return Distribution(reduced, self.alpha, self.v_max, self.i_max)


def eval_maxwellian(params: MaxwellianParams, spec: GasSpec, s: kin.ParticleState):
    return maxwellian(params, spec.alpha)(s.v, s.I)


def maxwellian(params: MaxwellianParams = MaxwellianParams(), alpha: float = 0.0) -> Distribution:
    """M_{n,u,T} = n / ((2 pi)^(3/2) Gamma(alpha+1) T^(alpha+5/2)) I^alpha exp(-(|v-u|^2/2 + I)/T)."""
    u = np.asarray(params.u)
    scale = params.n * maxwell_constant(alpha) * params.T ** (-(alpha + 2.5))

    def reduced(v, I):
        d = v - u
        return scale * np.exp(-(0.5 * np.einsum("...i,...i->...", d, d) + I) / params.T)

    return Distribution(reduced, alpha, v_max=max(10.0, 10.0 * math.sqrt(params.T) + float(np.abs(u).max())),
                        i_max=max(60.0, 60.0 * params.T))


def log_maxwellian_concavity(alpha, v, I, direction, h=1e-4):
    """Second difference of log M along ``direction`` in (v, I) (negative if concave)."""
    f = maxwellian(MaxwellianParams(), alpha)
    x = np.concatenate([np.asarray(v, float), [float(I)]])
    d = np.asarray(direction, float)

    def logf(p):
        return math.log(float(f(p[:3], p[3])))

    return (logf(x + h * d) - 2 * logf(x) + logf(x - h * d)) / h**2


@dataclass(frozen=True)
class Moments:
    n: float
    u: np.ndarray
    energy: float
    tail: float

    def __iter__(self):
        yield self.n
        yield self.u
        yield self.energy


def _tensor_grid(f: Distribution, quad: QuadratureSpec):
    V = min(quad.v_max, f.v_max) if quad.v_max else f.v_max
    L = min(quad.i_max, f.i_max) if quad.i_max else f.i_max
    x, wx = gauss_legendre(quad.nodes, -V, V)
    e, we = gauss_jacobi_power(quad.nodes, f.alpha, L)
    return x, wx, e, we, V, L


def moments(f: Distribution, spec: GasSpec, quad: QuadratureSpec) -> Moments:
    """Density, bulk velocity and (|v-u|^2/2 + I)-moment by tensor quadrature.

    Gauss-Legendre in each velocity component times Gauss-Jacobi in I with
    the I^alpha weight absorbed into the rule.  A warning is issued when more
    than 1e-6 of the mass sits in the outermost tenth of the box.
    """
    if not math.isclose(f.alpha, spec.alpha):
        raise DomainError("distribution and gas disagree on alpha")
    x, wx, e, we, V, L = _tensor_grid(f, quad)
    X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
    v = np.stack([X1.ravel(), X2.ravel(), X3.ravel()], axis=1)
    wv = np.einsum("i,j,k->ijk", wx, wx, wx).ravel()
    # rows: velocity nodes, columns: energy nodes
    vals = np.stack([f.reduced(v, np.full(len(v), ei)) for ei in e], axis=1)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("distribution returned non-finite values on the quadrature grid")
    dens_v = vals @ we
    n = float(wv @ dens_v)
    if n == 0:
        raise NumericalError("zero mass on the quadrature grid")
    u = (wv * dens_v) @ v / n
    d = v - u
    kin_e = 0.5 * np.einsum("ij,ij->i", d, d)
    energy = float(wv @ (kin_e * dens_v) + wv @ (vals @ (we * e)))
    outer = (np.abs(v) > 0.9 * V).any(axis=1)
    tail = float(abs(wv[outer] @ np.abs(dens_v[outer])) + abs(wv @ (np.abs(vals[:, e > 0.9 * L]) @ we[e > 0.9 * L])))
    tail /= abs(n)
    if tail > 1e-6:
        warnings.warn(f"truncation box too small: tail mass fraction {tail:.3g}", TruncationWarning, stacklevel=2)
    return Moments(n, u, energy, tail)


def entropy_production(f: Distribution, spec: GasSpec, model: CrossSectionModel, quad: QuadratureSpec,
                       key=(7,), tau: float = 1.0) -> MCResult:
    """D(f) = int Q(f, f) log(f / I^alpha) dv dI by joint Monte Carlo.

    The logarithm is taken of the reduced density.  Since log of the reduced
    normalized Maxwellian is a combination of collision invariants its
    integral against Q vanishes; it is subtracted to cut the variance.  The
    gain and loss terms are integrated separately (no symmetrization).
    """
    alpha = f.alpha
    c0 = math.log(maxwell_constant(alpha))

    def integrand(rng, m):
        p = sample_pairs(rng, m, alpha, tau, quad.margin)
        vp, vps, Ip, Ips = kin.collide(p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
        fh, fhs = f.reduced(p.v, p.I), f.reduced(p.vs, p.Is)
        if np.any(fh <= 0):
            raise DomainError("entropy production needs f > 0 on the sampled support")
        gain = f.reduced(vp, Ip) * f.reduced(vps, Ips)
        loss = fh * fhs
        log_ratio = np.log(fh) - (c0 - 0.5 * np.einsum("ij,ij->i", p.v, p.v) - p.I)
        wb = p.weight * eval_B_arrays(model, spec.gamma, p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
        return wb * (gain - loss) * log_ratio, wb * loss * (1.0 + np.abs(np.log(fh)))

    return mc_mean_scaled(integrand, quad, key)


__all__ = ["MaxwellianParams", "Distribution", "Moments", "TruncationWarning", "eval_maxwellian",
           "maxwellian", "moments", "entropy_production", "log_maxwellian_concavity"]
