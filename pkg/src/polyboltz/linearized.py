"""The linearized operator L = K - nu Id with K = K3 + K2 - K1.

Perturbations g are handled through their reduced form g / I^(alpha/2),
which stays finite at I = 0.  With m the reduced normalized Maxwellian,
M^(1/2) / I^(alpha/2) = m^(1/2), and the three parts of K act as

    K1 g = I^(a/2) int g^*  m^(1/2) m*^(1/2) I*^a rho B,
    K2 g = I^(a/2) int g^'* m*^(1/2) m'^(1/2) I*^a rho B,
    K3 g = I^(a/2) int g^'  m*^(1/2) m'*^(1/2) I*^a rho B,

where rho is the collision weight and the integral runs over
(r, R, omega, v*, I*).  The kernels k1, k2, k3 are the same integrals written
as integral operators in the second argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kinematics as kin
from .cross_section import CrossSectionModel, GasSpec, eval_B_arrays, verify_assumptions
from .errors import AssumptionError, DomainError
from .quadrature import (MCResult, QuadratureSpec, collision_weight, collision_weight_mass, gauss_jacobi_power,
                         gauss_legendre, mc_mean, mc_mean_scaled, sample_collision_params,
                         sample_collision_params_heavy, sample_sphere)
from .sampling import maxwell_constant, reduced_maxwellian, sample_pairs, sample_partners, sample_states

I_STAR_FLOOR = 1e-300
HS_LADDER = (1e-2, 1e-3, 1e-4, 1e-5)
KERNELS = ("k1", "k2", "k3")


def kernel_prefactor(alpha: float) -> float:
    """1 / (Gamma(alpha+1) (2 pi)^(3/2)), shared by k1, k2, k3 and nu."""
    return maxwell_constant(alpha)


def _sq(a):
    return np.einsum("...i,...i->...", a, a)


@dataclass(frozen=True)
class Perturbation:
    """A perturbation g(v, I) = I^(alpha/2) * reduced(v, I)."""

    reduced: Callable
    alpha: float
    label: str = field(default="g", compare=False)

    def __call__(self, v, I):
        I = np.asarray(I, dtype=float)
        return np.power(I, 0.5 * self.alpha) * self.reduced(np.asarray(v, float), I)

    @classmethod
    def half_maxwellian(cls, psi: Callable, alpha: float, label="M^(1/2) psi") -> "Perturbation":
        """g = M^(1/2) psi for a function psi(v, I)."""
        return cls(lambda v, I: np.sqrt(reduced_maxwellian(v, I, alpha)) * psi(v, I), alpha, label)

    @classmethod
    def from_function(cls, g: Callable, alpha: float, label="g") -> "Perturbation":
        """Wrap g directly; requires I > 0 where alpha > 0."""
        if alpha == 0:
            return cls(g, alpha, label)
        return cls(lambda v, I: g(v, I) / np.power(I, 0.5 * alpha), alpha, label)


# -- kernels ----------------------------------------------------------------

def eval_k1(spec: GasSpec, model: CrossSectionModel, v, I, v_star, I_star, quad: QuadratureSpec,
            key=(21,)) -> MCResult:
    """k1 = c e^(-(v^2+v*^2)/4-(I+I*)/2) (I I*)^(a/2) int rho B dr dR dw."""
    a = spec.alpha
    v, vs = np.asarray(v, float).reshape(3), np.asarray(v_star, float).reshape(3)
    pref = (kernel_prefactor(a) * math.exp(-0.25 * (_sq(v) + _sq(vs)) - 0.5 * (I + I_star))
            * (I * I_star) ** (0.5 * a))

    def integrand(rng, m):
        r, R, omega, w = sample_collision_params(rng, m, a, quad.margin)
        return w * eval_B_arrays(model, spec.gamma, np.broadcast_to(v, (m, 3)), np.broadcast_to(vs, (m, 3)),
                                 I, I_star, r, R, omega)

    res = mc_mean(integrand, quad, key)
    return MCResult(res.mean * pref, res.stderr * pref, res.n)


def _kernel_sigma_terms(branch, spec, model, v, I, x, y, r, R, sigma):
    """Integrand of k2 / k3 over (r, R, sigma) without the collision weight.

    Returns zero outside the admissible slice (reconstructed I* below the
    floor).  The pair B / |sigma - g^| is evaluated in fused form.
    """
    a = spec.alpha
    vs, Is = kin.h_backward(branch, v, I, r, R, sigma, x, y)
    inside = (y > 0) & (Is > I_STAR_FLOOR)
    Is_ok = np.where(inside, Is, 1.0)
    xc, yc = kin.h_companion(branch, r, R, sigma, x, y)
    g = v - vs
    gnorm = np.linalg.norm(g, axis=-1)
    dist = np.linalg.norm(sigma - kin.unit_or_default(g), axis=-1)
    b_over = model.over_sigma_distance(gnorm, dist, I, Is_ok, r, R, spec.gamma)
    expo = -0.5 * Is_ok - 0.5 * yc - 0.25 * _sq(vs) - 0.25 * _sq(xc)
    val = (kernel_prefactor(a) * np.power(I, 0.5 * a) * np.power(y, -0.5 * a) * np.power(Is_ok, a)
           * kin.h_jacobian(branch, r, R) * b_over * np.exp(expo))
    return np.where(inside, val, 0.0)


def _eval_k_sigma(branch, spec, model, v, I, x, y, quad, key):
    v, x = np.asarray(v, float).reshape(3), np.asarray(x, float).reshape(3)
    if y <= 0:
        raise DomainError("kernel second argument needs y > 0")

    def integrand(rng, m):
        r, R, sigma, w = sample_collision_params(rng, m, spec.alpha, quad.margin)
        return w * _kernel_sigma_terms(branch, spec, model, np.broadcast_to(v, (m, 3)), I,
                                       np.broadcast_to(x, (m, 3)), y, r, R, sigma)

    return mc_mean(integrand, quad, key)


def _eval_k_partner(branch, spec, model, v, I, x, y, quad, key):
    """Same kernel integrated over the partner (v*, I*) instead of (r, R, sigma).

    At fixed (v, I, x, y) the partner determines G, E and hence
    R = |G - x|^2 / E (K2) or |x - G|^2 / E (K3), sigma and r; the measure
    transforms with factor (1-r) / (4 R^(1/2) E^(5/2)) for K2 and
    r / (4 R^(1/2) E^(5/2)) for K3.
    """
    a = spec.alpha
    v, x = np.asarray(v, float).reshape(3), np.asarray(x, float).reshape(3)
    if y <= 0:
        raise DomainError("kernel second argument needs y > 0")

    def integrand(rng, m):
        vs, Is, inv = sample_states(rng, m, a)
        G = 0.5 * (v + vs)
        E = kin.energy(v, vs, I, Is)
        u = (G - x) if branch == "K2" else (x - G)
        R = _sq(u) / E
        with np.errstate(divide="ignore", invalid="ignore"):
            share = y / ((1.0 - R) * E)
            r = 1.0 - share if branch == "K2" else share
        ok = (R > 0) & (R < 1) & (r > 0) & (r < 1)
        r = np.where(ok, r, 0.5)
        R = np.where(ok, R, 0.5)
        sigma = kin.unit_or_default(u)
        terms = _kernel_sigma_terms(branch, spec, model, np.broadcast_to(v, (m, 3)), I,
                                    np.broadcast_to(x, (m, 3)), y, r, R, sigma)
        share = (1.0 - r) if branch == "K2" else r
        jac = share / (4.0 * np.sqrt(R) * E**2.5)
        vals = terms * collision_weight(r, R, a) * jac * inv / np.where(Is > 0, Is, 1.0) ** a
        return np.where(ok, vals, 0.0)

    return mc_mean(integrand, quad, key)


def eval_k2(spec, model, v, I, x, y, quad: QuadratureSpec, key=(22,), chart="sigma") -> MCResult:
    """Kernel of K2 at ((v, I), (x, y)) with (x, y) = (v'*, I'*).

    ``chart="sigma"`` integrates over (r, R, sigma) restricted to the slice
    where the reconstructed I* is positive; ``chart="partner"`` is an
    independent route through (v*, I*).
    """
    fn = _eval_k_sigma if chart == "sigma" else _eval_k_partner
    return fn("K2", spec, model, v, I, x, y, quad, key)


def eval_k3(spec, model, v, I, x, y, quad: QuadratureSpec, key=(23,), chart="sigma") -> MCResult:
    """Kernel of K3 at ((v, I), (x, y)) with (x, y) = (v', I')."""
    fn = _eval_k_sigma if chart == "sigma" else _eval_k_partner
    return fn("K3", spec, model, v, I, x, y, quad, key)


def kernel_form_apply(which: str, g: Perturbation, s: kin.ParticleState, spec, model, quad: QuadratureSpec,
                      key=(24,), tau: float = 1.5) -> MCResult:
    """int k(v, I, x, y) g(x, y) dx dy with (x, y) sampled from a broad
    Maxwellian proposal and the kernel's own parameters sampled jointly."""
    a = spec.alpha
    v = np.asarray(s.v, float).reshape(3)
    I = float(s.I)
    branch = {"k2": "K2", "k3": "K3"}[which]

    def integrand(rng, m):
        x = math.sqrt(tau) * rng.standard_normal((m, 3))
        y = rng.exponential(tau, m)
        log_q = -1.5 * math.log(2 * math.pi * tau) - 0.5 * _sq(x) / tau - math.log(tau) - y / tau
        r, R, sigma, w = sample_collision_params(rng, m, a, quad.margin)
        k = _kernel_sigma_terms(branch, spec, model, np.broadcast_to(v, (m, 3)), I, x, y, r, R, sigma)
        return w * k * g(x, y) * np.exp(-log_q)

    return mc_mean(integrand, quad, key)


# -- operators --------------------------------------------------------------

def _k_parts(g: Perturbation, spec, model, p):
    """Per-sample integrands of K1, K2, K3 and the multiplication part (without I^(a/2))."""
    a = spec.alpha
    vp, vps, Ip, Ips = kin.collide(p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
    B = eval_B_arrays(model, spec.gamma, p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)
    sm = np.sqrt(reduced_maxwellian(p.v, p.I, a))
    sms = np.sqrt(reduced_maxwellian(p.vs, p.Is, a))
    smp = np.sqrt(reduced_maxwellian(vp, Ip, a))
    smps = np.sqrt(reduced_maxwellian(vps, Ips, a))
    k1 = g.reduced(p.vs, p.Is) * sm * sms
    k2 = g.reduced(vps, Ips) * sms * smp
    k3 = g.reduced(vp, Ip) * sms * smps
    nu = g.reduced(p.v, p.I) * sms * sms
    return k1 * B, k2 * B, k3 * B, nu * B


def apply_K(g: Perturbation, s: kin.ParticleState, spec, model, quad: QuadratureSpec, key=(25,),
            parts: bool = False):
    """(K3 + K2 - K1) g at (v, I) by direct quadrature over (r, R, omega, v*, I*).

    With ``parts=True`` returns a dict with the three pieces as well.
    """
    v = np.asarray(s.v, float).reshape(3)
    I = float(s.I)
    scale = I ** (0.5 * spec.alpha)

    def integrand(rng, m):
        p = sample_partners(rng, m, spec.alpha, v, I, 1.0, quad.margin)
        k1, k2, k3, _ = _k_parts(g, spec, model, p)
        w = p.weight
        return np.stack([w * (k3 + k2 - k1), w * k1, w * k2, w * k3], axis=1)

    res = mc_mean(integrand, quad, key)
    out = {name: MCResult(float(res.mean[i]) * scale, float(res.stderr[i]) * scale, res.n)
           for i, name in enumerate(("K", "K1", "K2", "K3"))}
    return out if parts else out["K"]


def apply_L(g: Perturbation, s: kin.ParticleState, spec, model, quad: QuadratureSpec, key=(26,)) -> MCResult:
    """(K - nu) g at (v, I), integrated jointly so that cancellations on the
    collision invariants happen sample by sample."""
    v = np.asarray(s.v, float).reshape(3)
    I = float(s.I)
    scale = I ** (0.5 * spec.alpha)

    def integrand(rng, m):
        p = sample_partners(rng, m, spec.alpha, v, I, 1.0, quad.margin)
        k1, k2, k3, nu = _k_parts(g, spec, model, p)
        w = p.weight
        return w * (k3 + k2 - k1 - nu), w * (np.abs(k1) + np.abs(k2) + np.abs(k3) + np.abs(nu))

    res = mc_mean_scaled(integrand, quad, key)
    return MCResult(res.mean * scale, res.stderr * scale, res.n, res.scale * scale)


def inner(g: Perturbation, h: Perturbation, quad: QuadratureSpec | None = None, v_max=10.0, i_max=60.0,
          nodes=40) -> float:
    """<g, h> in L^2(R^3 x R_+) by tensor Gauss-Legendre x Gauss-Jacobi quadrature."""
    if quad is not None:
        v_max, i_max, nodes = quad.v_max, quad.i_max, quad.nodes
    a = g.alpha
    x, wx = gauss_legendre(nodes, -v_max, v_max)
    e, we = gauss_jacobi_power(nodes, a, i_max)
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wv = np.einsum("i,j,k->ijk", wx, wx, wx).ravel()
    total = 0.0
    for ei, wi in zip(e, we):
        Ie = np.full(len(X), ei)
        total += wi * float(wv @ (g.reduced(X, Ie) * h.reduced(X, Ie)))
    return total


def bilinear_form(g: Perturbation, h: Perturbation, spec, model, quad: QuadratureSpec, key=(27,),
                  operator: str = "K") -> MCResult:
    """<A g, h> for A = K or L by joint Monte Carlo over both states."""
    a = spec.alpha

    def integrand(rng, m):
        p = sample_pairs(rng, m, a, 1.0, quad.margin)
        k1, k2, k3, nu = _k_parts(g, spec, model, p)
        body = k3 + k2 - k1 - (nu if operator == "L" else 0.0)
        mags = np.abs(k1) + np.abs(k2) + np.abs(k3) + (np.abs(nu) if operator == "L" else 0.0)
        hv = h.reduced(p.v, p.I) * p.weight
        return hv * body, hv * mags

    return mc_mean_scaled(integrand, quad, key)


# -- Hilbert-Schmidt norms --------------------------------------------------

@dataclass
class HSResult:
    which: str
    status: str
    margins: list
    values: list
    stderrs: list
    growth: list
    increment_stderrs: list
    samples: int
    inner: int

    def to_dict(self):
        return dict(self.__dict__)


def _margin_masks(r, R, ladder):
    near = np.minimum(np.minimum(r, 1 - r), np.minimum(R, 1 - R))
    return np.stack([near >= e for e in ladder], axis=1)


def _inner_kernel(branch, spec, model, v, I, x, y, rng, inner, ladder):
    """Unbiased estimates of k(v, I, x, y) restricted to each margin (shape (m, L))."""
    m = len(I)
    acc = np.zeros((m, len(ladder)))
    for _ in range(inner):
        r, R, sigma, w = sample_collision_params_heavy(rng, m, spec.alpha)
        if branch == "k1":
            vals = w * eval_B_arrays(model, spec.gamma, v, x, I, y, r, R, sigma)
        else:
            vals = w * _kernel_sigma_terms(branch.upper(), spec, model, v, I, x, y, r, R, sigma)
        acc += vals[:, None] * _margin_masks(r, R, ladder)
    return acc / inner


def _classify(values, growth):
    if len(values) < 2 or not np.all(np.isfinite(values)):
        return "INCONCLUSIVE"
    if abs(growth[-1]) <= 0.05:
        return "FINITE"
    if growth[-1] > 0.10 and all(gr > 0 for gr in growth):
        return "DIVERGENT"
    return "INCONCLUSIVE"


def hs_norm_estimate(which: str, spec: GasSpec, model: CrossSectionModel, quad: QuadratureSpec,
                     ladder=HS_LADDER, inner: int = 8, tau: float = 1.5, key=(28,),
                     check_assumptions: bool = True) -> HSResult:
    """Squared Hilbert-Schmidt norm of k1, k2 or k3 on a shrinking-margin ladder.

    The norm is written as int dv dI [K(k(v, I, .))](v, I): the outer
    integral runs over (v, I, v*, I*, theta1) with the kernel evaluated at the
    collision image of (v*, I*), and the kernel value itself is an
    independent inner estimate over theta2.  The product is unbiased.  At
    each margin eps both theta1 and theta2 are restricted to
    [eps, 1 - eps]^2, using the same samples for the whole ladder.

    FINITE when the last two rungs agree within 5 %, DIVERGENT when monotone
    growth above 10 % persists at the last rung, INCONCLUSIVE otherwise.
    With ``check_assumptions`` the model must first pass the sandwich bound
    and, for k2 / k3, the corresponding integrability condition.
    """
    if which not in KERNELS:
        raise DomainError(f"kernel must be one of {KERNELS}")
    if check_assumptions:
        report = verify_assumptions(model, spec, quad)
        needed = ["sandwich"] + ({"k2": ["k2condition"], "k3": ["k3condition"]}.get(which, []))
        for name in needed:
            if not report[name].passed:
                raise AssumptionError(f"{which}: cross-section fails the {name} assumption", condition=name)
    a = spec.alpha
    ladder = tuple(ladder)
    nl = len(ladder)

    def integrand(rng, m):
        v, I, inv = sample_states(rng, m, a, tau)
        vs, Is, inv_s = sample_states(rng, m, a, 1.0)
        r, R, omega, w = sample_collision_params_heavy(rng, m, a)
        B = eval_B_arrays(model, spec.gamma, v, vs, I, Is, r, R, omega)
        if which == "k1":
            # ||k1||^2 = E_{M x M}[S^2] with S = int rho B; (v, I) importance-weighted.
            mm = reduced_maxwellian(v, I, a)
            outer = w * B * inv * mm
            ker = _inner_kernel("k1", spec, model, v, I, vs, Is, rng, inner, ladder)
        else:
            vp, vps, Ip, Ips = kin.collide(v, vs, I, Is, r, R, omega)
            x, y = (vps, Ips) if which == "k2" else (vp, Ip)
            companion = vp if which == "k2" else vps
            comp_I = Ip if which == "k2" else Ips
            ms = reduced_maxwellian(vs, Is, a)
            mc = reduced_maxwellian(companion, comp_I, a)
            # Delta-form weight of K applied to F = k(v, I, ., .) at (x, y)
            outer = (w * B * inv * inv_s * np.power(I, -0.5 * a) * np.power(np.maximum(y, 1e-300), -0.5 * a)
                     * np.sqrt(ms * mc))
            ker = _inner_kernel(which, spec, model, v, I, x, np.maximum(y, 1e-300), rng, inner, ladder)
        vals = outer[:, None] * _margin_masks(r, R, ladder) * ker
        return np.concatenate([vals, np.diff(vals, axis=1)], axis=1)

    res = mc_mean(integrand, quad, key)
    values = [float(x) for x in res.mean[:nl]]
    stderrs = [float(x) for x in res.stderr[:nl]]
    inc = [float(x) for x in res.mean[nl:]]
    inc_se = [float(x) for x in res.stderr[nl:]]
    growth = [d / values[i] if values[i] != 0 else math.inf for i, d in enumerate(inc)]
    return HSResult(which, _classify(values, growth), list(ladder), values, stderrs, growth, inc_se, res.n, inner)


__all__ = ["Perturbation", "kernel_prefactor", "eval_k1", "eval_k2", "eval_k3", "kernel_form_apply", "apply_K",
           "apply_L", "inner", "bilinear_form", "hs_norm_estimate", "HSResult", "I_STAR_FLOOR", "HS_LADDER",
           "collision_weight_mass", "sample_sphere"]
