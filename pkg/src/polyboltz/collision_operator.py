"""Monte Carlo evaluation of the quadratic collision operator Q(f, f).

Two independent charts are provided.  :func:`eval_Q` integrates over the
partner state and the collision parameters (r, R, omega).  :func:`eval_Q_equiv`
integrates over the center-of-mass variables (G, E) and the post-collision
state (v', I') with the weight W, sampled by a completely different proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kinematics as kin
from .cross_section import CrossSectionModel, GasSpec, eval_B_arrays
from .equilibrium import Distribution
from .errors import DomainError, NumericalError
from .quadrature import MCResult, QuadratureSpec, mc_mean_scaled, sample_ball
from .sampling import sample_pairs, sample_partners

# Collision invariants as functions of (v, I).
INVARIANTS: dict[str, Callable] = {
    "1": lambda v, I: np.ones_like(np.asarray(I, dtype=float)),
    "v1": lambda v, I: v[..., 0],
    "v2": lambda v, I: v[..., 1],
    "v3": lambda v, I: v[..., 2],
    "energy": lambda v, I: 0.5 * np.einsum("...i,...i->...", v, v) + I,
}


def _check_finite(values, what):
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericalError(f"non-finite {what} at {int(bad.sum())} nodes")


def _gain_loss(f: Distribution, v, I, vs, Is, vp, Ip, vps, Ips):
    gain = f.reduced(vp, Ip) * f.reduced(vps, Ips)
    _check_finite(gain, "gain term f'f'*/(I'I'*)^alpha")
    loss = f.reduced(v, I) * f.reduced(vs, Is)
    _check_finite(loss, "loss term f f*/(I I*)^alpha")
    return gain - loss, loss


def eval_Q(f: Distribution, s: kin.ParticleState, spec: GasSpec, model: CrossSectionModel,
           quad: QuadratureSpec, key=(1,), tau: float = 1.0) -> MCResult:
    """Q(f, f)(v, I) in the (v*, I*, r, R, omega) chart."""
    v = np.asarray(s.v, dtype=float).reshape(3)
    I = float(s.I)
    alpha = spec.alpha

    def integrand(rng, m):
        p = sample_partners(rng, m, alpha, v, I, tau, quad.margin)
        vp, vps, Ip, Ips = kin.collide(p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
        diff, loss = _gain_loss(f, p.v, p.I, p.vs, p.Is, vp, Ip, vps, Ips)
        wb = p.weight * eval_B_arrays(model, spec.gamma, p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
        return wb * diff, wb * loss

    res = mc_mean_scaled(integrand, quad, key)
    scale = I**alpha
    return MCResult(res.mean * scale, res.stderr * scale, res.n, res.scale * scale)


def weak_residual(f: Distribution, phi: Callable, spec: GasSpec, model: CrossSectionModel,
                  quad: QuadratureSpec, key=(2,), tau: float = 1.0) -> MCResult:
    """int int Q(f, f) phi dv dI with gain and loss integrated separately.

    The sample is drawn over (v, I, v*, I*, r, R, omega); phi is evaluated at
    the pre-collision state only, so conservation is a genuine test of the
    collision measure and not an algebraic identity.
    """
    alpha = spec.alpha

    def integrand(rng, m):
        p = sample_pairs(rng, m, alpha, tau, quad.margin)
        vp, vps, Ip, Ips = kin.collide(p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
        diff, loss = _gain_loss(f, p.v, p.I, p.vs, p.Is, vp, Ip, vps, Ips)
        wb = p.weight * eval_B_arrays(model, spec.gamma, p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
        ph = phi(p.v, p.I)
        return wb * diff * ph, wb * loss * ph

    return mc_mean_scaled(integrand, quad, key)


# -- center-of-mass chart ---------------------------------------------------

@dataclass(frozen=True)
class Reconstruction:
    """All collision variables implied by (v, I, v', I', G, E)."""

    vs: np.ndarray
    Is: np.ndarray
    vps: np.ndarray
    Ips: np.ndarray
    r: np.ndarray
    R: np.ndarray
    sigma: np.ndarray
    dist: np.ndarray


def reconstruct(v, I, vp, Ip, G, E, strict=True) -> Reconstruction:
    v, vp, G = (np.asarray(a, dtype=float) for a in (v, vp, G))
    I, Ip, E = (np.asarray(a, dtype=float) for a in (I, Ip, E))
    vs = 2.0 * G - v
    vps = 2.0 * G - vp
    d = v - G
    Is = E - I - np.einsum("...i,...i->...", d, d)
    u = vp - G
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.einsum("...i,...i->...", u, u) / E
        Ips = (1.0 - R) * E - Ip
        r = Ip / ((1.0 - R) * E)
    if strict:
        checks = [(np.asarray(E <= 0), "E > 0"), (np.asarray(Is < 0), "I* >= 0"),
                  (np.asarray((R <= 0) | (R >= 1)), "0 < R < 1"), (np.asarray(Ip < 0), "I' >= 0"),
                  (np.asarray(Ips < 0), "I'* >= 0")]
        for bad, name in checks:
            if np.any(bad):
                raise DomainError(f"inadmissible reconstruction: violates {name}")
    sigma = kin.unit_or_default(u)
    ghat = kin.unit_or_default(d)
    dist = np.linalg.norm(sigma - ghat, axis=-1)
    return Reconstruction(vs, Is, vps, Ips, r, R, sigma, dist)


def _w_value(model, spec, I, Ip, E, rec: Reconstruction, v):
    alpha = spec.alpha
    gnorm = np.linalg.norm(v - rec.vs, axis=-1)
    b_over = model.over_sigma_distance(gnorm, rec.dist, I, rec.Is, rec.r, rec.R, spec.gamma)
    energies = np.power(Ip * rec.Ips * I * rec.Is, alpha) if alpha else 1.0
    return 8.0 * b_over * energies * np.power(E, -2.5 - 2.0 * alpha)


def eval_W(spec: GasSpec, model: CrossSectionModel, v, I, vp, Ip, G, E):
    """W = 8 / |sigma - g^| (I' I'* I I*)^alpha E^(-5/2-2alpha) B, with the
    singular pair B / |sigma - g^| fused for models carrying |omega . g^|."""
    rec = reconstruct(v, I, vp, Ip, G, E)
    return _w_value(model, spec, np.asarray(I, float), np.asarray(Ip, float), np.asarray(E, float), rec,
                    np.asarray(v, float))


def eval_Q_equiv(f: Distribution, s: kin.ParticleState, spec: GasSpec, model: CrossSectionModel,
                 quad: QuadratureSpec, key=(3,), double_count: bool = True) -> MCResult:
    """Q(f, f)(v, I) in the (G, E, v', I') chart with weight W.

    Each sigma corresponds to two opposite omegas, so the omega integral picks
    up the measure factor twice; ``double_count=False`` drops this factor and
    exists only as a regression guard.

    Proposal: G ~ N(v/2, I_3/4) (v* standard normal), I* ~ Gamma(alpha+1),
    v' - G uniform in the ball of radius sqrt(E), I' uniform on (0, (1-R)E).
    """
    v = np.asarray(s.v, dtype=float).reshape(3)
    I = float(s.I)
    alpha = spec.alpha
    factor = 2.0 if double_count else 1.0
    log_gamma = math.lgamma(alpha + 1.0)

    def integrand(rng, m):
        G = 0.5 * v + 0.5 * rng.standard_normal((m, 3))
        Is = rng.gamma(alpha + 1.0, 1.0, m)
        d = v - G
        E = I + Is + np.einsum("ij,ij->i", d, d)
        u = sample_ball(rng, m)
        R = np.einsum("ij,ij->i", u, u)
        vp = G + np.sqrt(E)[:, None] * u
        Ip = rng.random(m) * (1.0 - R) * E
        # log density of the proposal in (G, E, v', I')
        dG = G - 0.5 * v
        log_p = (1.5 * math.log(2.0 / math.pi) - 2.0 * np.einsum("ij,ij->i", dG, dG)
                 + (alpha * np.log(Is) if alpha else 0.0) - Is - log_gamma
                 + math.log(3.0 / (4.0 * math.pi)) - 2.5 * np.log(E) - np.log1p(-R))
        rec = reconstruct(np.broadcast_to(v, (m, 3)), np.full(m, I), vp, Ip, G, E, strict=False)
        ok = (rec.Is > 0) & (rec.Ips > 0) & (R > 0) & (R < 1)
        W = np.where(ok, _w_value(model, spec, np.full(m, I), Ip, E, rec, v), 0.0)
        diff, loss = _gain_loss(f, np.broadcast_to(v, (m, 3)), np.full(m, I), rec.vs, np.maximum(rec.Is, 0.0),
                                vp, Ip, rec.vps, np.maximum(rec.Ips, 0.0))
        w = np.where(ok, factor * W * np.exp(-log_p), 0.0)
        return w * diff, w * loss

    return mc_mean_scaled(integrand, quad, key)


def eval_Q_many(f, points, spec, model, quad, chart="direct"):
    """Evaluate Q at several (v, I) points with distinct deterministic keys."""
    fn = eval_Q if chart == "direct" else eval_Q_equiv
    base = 1 if chart == "direct" else 3
    return [fn(f, kin.ParticleState(v, I), spec, model, quad, key=(base, i)) for i, (v, I) in enumerate(points)]
