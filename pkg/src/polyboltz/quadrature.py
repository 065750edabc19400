"""Deterministic Monte Carlo and tensor quadrature machinery.

Every stochastic estimate in the package goes through :func:`mc_mean`, which
splits the sample budget into fixed-size chunks.  Chunk ``i`` draws from its
own generator seeded by ``SeedSequence(seed, spawn_key=key + (i,))`` and the
chunk statistics are merged in chunk order, so results depend only on the
seed, the key and the sample count, never on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ConfigError, NumericalError

SCHEMES = ("MonteCarlo", "Tensor")


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration settings.

    ``samples`` drives Monte Carlo estimates, ``nodes`` the number of tensor
    nodes per dimension.  ``v_max`` and ``i_max`` truncate velocity and
    internal energy for tensor rules.  ``margin`` restricts ``(r, R)`` to
    ``[margin, 1 - margin]**2``.
    """

    scheme: str = "MonteCarlo"
    samples: int = 200_000
    nodes: int = 40
    v_max: float = 10.0
    i_max: float = 60.0
    seed: int | None = 20240601
    margin: float = 0.0
    chunk: int = 50_000
    threads: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.samples < 2:
            raise ConfigError("samples must be >= 2")
        if self.nodes < 1:
            raise ConfigError("nodes must be >= 1")
        if not 0.0 <= self.margin < 0.5:
            raise ConfigError("margin must lie in [0, 0.5)")
        if self.chunk < 1 or self.threads < 1:
            raise ConfigError("chunk and threads must be positive")
        if self.v_max <= 0 or self.i_max <= 0:
            raise ConfigError("truncation radii must be positive")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a fixed seed is required for deterministic quadrature")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return int(self.seed)

    def with_(self, **changes) -> "QuadratureSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class MCResult:
    """Sample mean with its standard error (arrays for vector integrands)."""

    mean: np.ndarray | float
    stderr: np.ndarray | float
    n: int
    scale: float = float("nan")

    def __iter__(self):
        yield self.mean
        yield self.stderr

    def __float__(self):
        return float(self.mean)

    def within(self, target, k: float = 3.0, atol: float = 0.0):
        """True where ``|mean - target| <= k * stderr + atol``."""
        return np.abs(np.asarray(self.mean) - target) <= k * np.asarray(self.stderr) + atol

    def is_zero(self, k: float = 3.0, rounding: float = 1e-12):
        """Zero within ``k`` standard errors, allowing a rounding floor.

        Integrands that cancel exactly in exact arithmetic leave a bias of
        order machine epsilon times the magnitude ``scale`` of the cancelling
        terms; that floor is added to the tolerance when ``scale`` is known.
        """
        floor = rounding * self.scale if np.isfinite(self.scale) else 0.0
        return self.within(0.0, k, floor)


def _merge(a, b):
    # Chan et al. pairwise update of (count, mean, M2).
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * (nb / n)
    m2 = sa + sb + delta**2 * (na * nb / n)
    return n, mean, m2


def _tree_reduce(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = [_merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def chunk_rng(seed: int, key: Sequence[int], index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key) + (int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def mc_mean(
    integrand: Callable[[np.random.Generator, int], np.ndarray],
    quad: QuadratureSpec,
    key: Sequence[int] = (),
    samples: int | None = None,
) -> MCResult:
    """Average ``integrand(rng, m)`` over ``samples`` draws.

    ``integrand`` returns an array of shape ``(m,)`` or ``(m, k)``.
    """
    seed = quad.require_seed()
    total = int(samples if samples is not None else quad.samples)
    sizes = [quad.chunk] * (total // quad.chunk)
    if total % quad.chunk:
        sizes.append(total % quad.chunk)

    def run(i):
        values = np.asarray(integrand(chunk_rng(seed, key, i), sizes[i]), dtype=float)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"non-finite integrand values in chunk {i} (key={tuple(key)})")
        m = values.shape[0]
        mean = values.mean(axis=0)
        m2 = ((values - mean) ** 2).sum(axis=0)
        return m, mean, m2

    if quad.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=quad.threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    n, mean, m2 = _tree_reduce(parts)
    var = m2 / (n - 1)
    stderr = np.sqrt(var / n)
    if np.ndim(mean) == 0:
        return MCResult(float(mean), float(stderr), n)
    return MCResult(mean, stderr, n)


def mc_mean_scaled(integrand, quad: QuadratureSpec, key: Sequence[int] = (), samples: int | None = None) -> MCResult:
    """Like :func:`mc_mean` for an integrand returning ``(values, magnitudes)``.

    The mean of ``magnitudes`` (the size of the terms that cancel inside
    ``values``) is stored as ``scale`` on the result.
    """

    def stacked(rng, m):
        values, mags = integrand(rng, m)
        return np.stack([values, np.abs(mags)], axis=1)

    res = mc_mean(stacked, quad, key, samples)
    return MCResult(float(res.mean[0]), float(res.stderr[0]), res.n, float(res.mean[1]))


# -- random variates -------------------------------------------------------

def sample_sphere(rng: np.random.Generator, m: int) -> np.ndarray:
    z = rng.standard_normal((m, 3))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_ball(rng: np.random.Generator, m: int) -> np.ndarray:
    return sample_sphere(rng, m) * rng.random(m)[:, None] ** (1.0 / 3.0)


def collision_weight_mass(alpha: float) -> float:
    """Total mass of (r(1-r))^a (1-R)^(2a+1) R^(1/2) dr dR dw over (0,1)^2 x S^2."""
    return 4.0 * math.pi * special.beta(alpha + 1.0, alpha + 1.0) * special.beta(1.5, 2.0 * alpha + 2.0)


def sample_collision_params(rng: np.random.Generator, m: int, alpha: float, margin: float = 0.0):
    """Draw (r, R, omega) from the normalized collision weight.

    Returns ``r, R, omega, w`` where ``mean(w * F)`` estimates
    ``int F (r(1-r))^a (1-R)^(2a+1) R^(1/2) dr dR dw``.
    """
    r = rng.beta(alpha + 1.0, alpha + 1.0, m)
    R = rng.beta(1.5, 2.0 * alpha + 2.0, m)
    omega = sample_sphere(rng, m)
    w = np.full(m, collision_weight_mass(alpha))
    if margin > 0.0:
        inside = (r >= margin) & (r <= 1 - margin) & (R >= margin) & (R <= 1 - margin)
        w = np.where(inside, w, 0.0)
    return r, R, omega, w


# -- tensor rules ----------------------------------------------------------

def gauss_legendre(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_jacobi_power(n: int, alpha: float, length: float):
    """Nodes/weights for int_0^L f(I) I^alpha dI."""
    x, w = special.roots_jacobi(n, 0.0, alpha)
    nodes = 0.5 * length * (x + 1.0)
    return nodes, w * (0.5 * length) ** (alpha + 1.0)


def gauss_hermite_normal(n: int):
    """Nodes/weights for E[f(X)], X ~ N(0, 1)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


def gauss_laguerre_gamma(n: int, alpha: float):
    """Nodes/weights for E[f(I)], I ~ Gamma(alpha + 1, 1)."""
    x, w = special.roots_genlaguerre(n, alpha)
    return x, w / special.gamma(alpha + 1.0)


def log_graded_rule(n: int, eps: float):
    """Rule on [eps, 1 - eps] graded toward both endpoints.

    Each half is integrated in the variable log(t), which resolves algebraic
    endpoint singularities such as t^(-1).
    """
    u, wu = gauss_legendre(n, math.log(eps), math.log(0.5))
    t = np.exp(u)
    wt = wu * t
    nodes = np.concatenate([t, 1.0 - t[::-1]])
    weights = np.concatenate([wt, wt[::-1]])
    return nodes, weights


def sample_boundary_mixture(rng: np.random.Generator, m: int, a: float, b: float, delta: float = 1e-7):
    """Draw t in (0, 1) from an equal mixture of Beta(a, b) and a log-uniform
    law piled up at both endpoints; returns ``t`` and its density.

    The log-uniform half has density 1 / (2 L min(t, 1-t)) with L = log(1/delta)
    on (delta/2, 1 - delta/2), which makes endpoint singularities like 1/t
    have bounded importance weights.
    """
    L = math.log(1.0 / delta)
    beta = rng.beta(a, b, m)
    s = np.exp(-L * rng.random(m)) * 0.5
    edge = np.where(rng.random(m) < 0.5, s, 1.0 - s)
    t = np.where(rng.random(m) < 0.5, beta, edge)
    near = np.minimum(t, 1.0 - t)
    edge_pdf = np.where(near > 0.5 * delta, 1.0 / (2.0 * L * np.maximum(near, 1e-300)), 0.0)
    log_beta = (a - 1.0) * np.log(t) + (b - 1.0) * np.log1p(-t) - special.betaln(a, b)
    return t, 0.5 * np.exp(log_beta) + 0.5 * edge_pdf


def collision_weight(r, R, alpha):
    """(r(1-r))^a (1-R)^(2a+1) R^(1/2)."""
    return (r * (1.0 - r)) ** alpha * (1.0 - R) ** (2.0 * alpha + 1.0) * np.sqrt(R)


def sample_collision_params_heavy(rng: np.random.Generator, m: int, alpha: float, delta: float = 1e-7):
    """(r, R, omega) with boundary-heavy fractions; ``w`` is the importance
    weight of the collision weight (including the 4 pi of the sphere)."""
    r, pr = sample_boundary_mixture(rng, m, alpha + 1.0, alpha + 1.0, delta)
    R, pR = sample_boundary_mixture(rng, m, 1.5, 2.0 * alpha + 2.0, delta)
    omega = sample_sphere(rng, m)
    w = 4.0 * math.pi * collision_weight(r, R, alpha) / (pr * pR)
    return r, R, omega, w
