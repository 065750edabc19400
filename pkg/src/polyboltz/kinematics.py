"""Borgnakke-Larsen collision kinematics with a continuous internal energy.

Units are normalized (unit mass, kT = 1).  All functions are pure and
vectorized: velocities have shape ``(..., 3)`` and scalars broadcast against
the leading dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError

UNIT_TOL = 1e-12
BRANCHES = ("K2", "K3")


def _vec(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape[-1:] != (3,):
        raise DomainError(f"expected vectors with trailing dimension 3, got shape {a.shape}")
    return a


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _norm(a):
    return np.sqrt(_dot(a, a))


@dataclass(frozen=True)
class ParticleState:
    """Velocity ``v`` in R^3 and internal energy ``I >= 0`` (possibly batched)."""

    v: np.ndarray
    I: np.ndarray

    def __post_init__(self):
        v = _vec(self.v)
        I = np.asarray(self.I, dtype=float)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(I))):
            raise DomainError("particle state must be finite")
        if np.any(I < 0):
            raise DomainError("internal energy must be nonnegative")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "I", I)


@dataclass(frozen=True)
class CollisionParams:
    """Energy fractions ``r, R`` in (0, 1) and unit scattering direction ``omega``."""

    r: np.ndarray
    R: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        R = np.asarray(self.R, dtype=float)
        omega = _vec(self.omega)
        if np.any((r <= 0) | (r >= 1)) or np.any((R <= 0) | (R >= 1)):
            raise DomainError("r and R must lie in the open interval (0, 1)")
        _require_unit(omega, "omega")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True)
class SigmaParams:
    """Post-collisional direction ``sigma`` and the measure factor dω/dσ.

    ``weight`` is ``1 / (2 |sigma - g_hat|)``; it is ``inf`` where sigma equals
    g_hat (flagged in ``singular``).  ``cos_abs`` is ``|omega . g_hat|`` which
    equals ``|sigma - g_hat| / 2``.
    """

    sigma: np.ndarray
    weight: np.ndarray
    cos_abs: np.ndarray
    singular: np.ndarray


@dataclass(frozen=True)
class CenterOfMass:
    G: np.ndarray
    E: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class HAnchor:
    """Fixed arguments ``(v, I, r, R, sigma)`` of the kernel maps h and h-tilde."""

    v: np.ndarray
    I: np.ndarray
    r: np.ndarray
    R: np.ndarray
    sigma: np.ndarray


def _require_unit(u, name):
    if np.any(np.abs(_norm(u) - 1.0) > UNIT_TOL):
        raise DomainError(f"{name} must be a unit vector")


def unit_or_default(g: np.ndarray) -> np.ndarray:
    """g / |g|, with the convention e_3 where g = 0 (a null set)."""
    n = _norm(g)[..., None]
    safe = np.where(n > 0, n, 1.0)
    e3 = np.zeros_like(g)
    e3[..., 2] = 1.0
    return np.where(n > 0, g / safe, e3)


def energy(v, vs, I, Is):
    """Total center-of-mass energy |v - v*|^2/4 + I + I* (array form)."""
    d = np.asarray(v) - np.asarray(vs)
    return 0.25 * _dot(d, d) + I + Is


def total_energy(s: ParticleState, s_star: ParticleState):
    return energy(s.v, s_star.v, s.I, s_star.I)


def center_of_mass(s: ParticleState, s_star: ParticleState) -> CenterOfMass:
    return CenterOfMass(0.5 * (s.v + s_star.v), total_energy(s, s_star), s.v - s_star.v)


def reflect(z, omega):
    """Reflection z - 2 (z . omega) omega through the plane orthogonal to omega."""
    omega = _vec(omega)
    _require_unit(omega, "omega")
    return _reflect(_vec(z), omega)


def _reflect(z, omega):
    return z - 2.0 * _dot(z, omega)[..., None] * omega


def collide(v, vs, I, Is, r, R, omega):
    """Array form of :func:`post_collision`; returns ``(v', v'*, I', I'*)``.

    Inputs are not validated.  Where E = 0 the input is returned unchanged.
    """
    v = np.asarray(v, dtype=float)
    vs = np.asarray(vs, dtype=float)
    g = v - vs
    E = 0.25 * _dot(g, g) + I + Is
    G = 0.5 * (v + vs)
    direction = _reflect(unit_or_default(g), omega)
    speed = np.sqrt(R * E)[..., None]
    vp = G + speed * direction
    vps = G - speed * direction
    Ip = r * (1.0 - R) * E
    Ips = (1.0 - r) * (1.0 - R) * E
    zero = (E == 0)
    if np.any(zero):
        vp = np.where(zero[..., None], v, vp)
        vps = np.where(zero[..., None], vs, vps)
        Ip = np.where(zero, I, Ip)
        Ips = np.where(zero, Is, Ips)
    return vp, vps, Ip, Ips


def post_collision(s: ParticleState, s_star: ParticleState, p: CollisionParams):
    """Post-collisional pair for parameters ``(r, R, omega)``.

    Momentum and total energy are conserved; ``|v' - v'*|^2 / 4 = R E`` and
    ``I' = r (1 - R) E``, ``I'* = (1 - r)(1 - R) E``.
    """
    vp, vps, Ip, Ips = collide(s.v, s_star.v, s.I, s_star.I, p.r, p.R, p.omega)
    return ParticleState(vp, np.maximum(Ip, 0.0)), ParticleState(vps, np.maximum(Ips, 0.0))


def pre_fractions(s: ParticleState, s_star: ParticleState):
    """Fractions ``(r', R')`` that describe the given pair as a post-collision state."""
    E = np.asarray(total_energy(s, s_star))
    if np.any(E <= 0):
        raise DomainError("fractions are undefined at zero total energy")
    g = s.v - s_star.v
    Rp = np.clip(0.25 * _dot(g, g) / E, 0.0, 1.0)
    internal = (1.0 - Rp) * E
    if np.any((internal <= 0) & (s.I > 0)):
        raise NumericalError("R' = 1 while I > 0: inconsistent energy bookkeeping")
    safe = np.where(internal > 0, internal, 1.0)
    rp = np.where(s.I > 0, s.I / safe, 0.0)
    return np.clip(rp, 0.0, 1.0), Rp


def sigma_of_omega(g, omega) -> SigmaParams:
    """Change of variables omega -> sigma = T_omega(g / |g|)."""
    g = _vec(g)
    omega = _vec(omega)
    _require_unit(omega, "omega")
    if np.any(_norm(g) == 0):
        raise DomainError("relative velocity must be nonzero")
    gh = g / _norm(g)[..., None]
    sigma = _reflect(gh, omega)
    dist = _norm(sigma - gh)
    singular = dist == 0
    with np.errstate(divide="ignore"):
        weight = np.where(singular, np.inf, 0.5 / np.where(singular, 1.0, dist))
    return SigmaParams(sigma, weight, 0.5 * dist, singular)


def bl_jacobian(R, E):
    """Jacobian (1/16) R^(1/2) (1 - R) E^(5/2) of (v,v*,I,I*,r,R,sigma) -> (v,G,E,I,v',I')."""
    R = np.asarray(R, dtype=float)
    E = np.asarray(E, dtype=float)
    if np.any((R < 0) | (R > 1)) or np.any(E < 0):
        raise DomainError("need 0 <= R <= 1 and E >= 0")
    return np.sqrt(R) * (1.0 - R) * E**2.5 / 16.0


# -- kernel maps h (K2 branch) and h-tilde (K3 branch) --------------------

def _check_branch(branch):
    if branch not in BRANCHES:
        raise DomainError(f"branch must be one of {BRANCHES}, got {branch!r}")


def h_scale(branch, r, R):
    """a = 1/((1-r)(1-R)) for K2, 1/(r(1-R)) for K3: E = a * y."""
    _check_branch(branch)
    share = (1.0 - r) if branch == "K2" else r
    return 1.0 / (share * (1.0 - R))


def h_jacobian(branch, r, R):
    """|d(v*, I*) / d(x, y)| = 8 a."""
    return 8.0 * h_scale(branch, r, R)


def h_forward(branch, v, I, r, R, sigma, vs, Is):
    """Array form of :func:`h_map`."""
    _check_branch(branch)
    E = energy(v, vs, I, Is)
    G = 0.5 * (np.asarray(v) + np.asarray(vs))
    shift = np.sqrt(R * E)[..., None] * sigma
    if branch == "K2":
        return G - shift, (1.0 - R) * (1.0 - r) * E
    return G + shift, r * (1.0 - R) * E


def h_backward(branch, v, I, r, R, sigma, x, y):
    """Array form of the inverse map; returns ``(v*, I*)`` without clamping."""
    a = h_scale(branch, r, R)
    s = np.sqrt(R * a * y)[..., None] * sigma
    sign = 1.0 if branch == "K2" else -1.0
    vs = 2.0 * x + 2.0 * sign * s - v
    d = x - v + sign * s
    Is = a * y - I - _dot(d, d)
    return vs, Is


def h_map(branch, anchor: HAnchor, s_star: ParticleState):
    """Image ``(x, y)`` of ``(v*, I*)``: the partner's post-collision state for K2
    (x = v'*, y = I'*) or the particle's own post-collision state for K3."""
    _require_unit(_vec(anchor.sigma), "sigma")
    E = total_energy(ParticleState(anchor.v, anchor.I), s_star)
    if np.any(E <= 0):
        raise DomainError("h is defined for E > 0")
    return h_forward(branch, anchor.v, anchor.I, anchor.r, anchor.R, anchor.sigma, s_star.v, s_star.I)


def h_inverse(branch, anchor: HAnchor, x, y, strict: bool = True):
    """Reconstruct ``(v*, I*)`` from ``(x, y)``.

    With ``strict`` a reconstructed ``I* <= 0`` (point outside the admissible
    set H) raises :class:`DomainError`; otherwise raw values are returned.
    """
    vs, Is = h_backward(branch, anchor.v, anchor.I, anchor.r, anchor.R, anchor.sigma, _vec(x), np.asarray(y, float))
    if strict and np.any(Is <= 0):
        raise DomainError("(x, y) lies outside the image H: reconstructed I* <= 0")
    return vs, Is


def in_domain(branch, anchor: HAnchor, x, y):
    """True where (x, y) belongs to H, i.e. the reconstructed I* is positive."""
    y = np.asarray(y, dtype=float)
    _, Is = h_backward(branch, anchor.v, anchor.I, anchor.r, anchor.R, anchor.sigma, _vec(x), np.maximum(y, 0.0))
    return (y > 0) & (Is > 0)


def h_companion(branch, r, R, sigma, x, y):
    """The other post-collision state implied by (x, y).

    K2: ``(v', I')`` from ``(v'*, I'*) = (x, y)``; K3: ``(v'*, I'*)`` from
    ``(v', I') = (x, y)``.
    """
    a = h_scale(branch, r, R)
    s = np.sqrt(R * a * y)[..., None] * sigma
    if branch == "K2":
        return x + 2.0 * s, r / (1.0 - r) * y
    return x - 2.0 * s, (1.0 - r) / r * y
