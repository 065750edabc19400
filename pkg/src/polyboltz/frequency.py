"""Collision frequency nu(v, I): evaluation, coercivity and monotony."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .cross_section import CrossSectionModel, GasSpec, eval_B_arrays
from .errors import DomainError
from .quadrature import MCResult, QuadratureSpec, mc_mean
from .sampling import reduced_maxwellian, sample_partners

NU_KEY = 31


def eval_nu(v, I, spec: GasSpec, model: CrossSectionModel, quad: QuadratureSpec, key=(NU_KEY,)) -> MCResult:
    """nu(v, I) = int B M* rho dr dR dw dI* dv* (rho the collision weight)."""
    v = np.asarray(v, dtype=float).reshape(3)
    if I < 0:
        raise DomainError("internal energy must be nonnegative")

    def integrand(rng, m):
        p = sample_partners(rng, m, spec.alpha, v, I, 1.0, quad.margin)
        # weights integrate against I*^a; the reduced Maxwellian makes it M*
        return p.weight * reduced_maxwellian(p.vs, p.Is, spec.alpha) * eval_B_arrays(
            model, spec.gamma, p.v, p.vs, p.I, p.Is, p.r, p.R, p.omega)

    return mc_mean(integrand, quad, key)


def maxwell_molecule_nu(alpha: float, c: float = 1.0) -> float:
    """Exact nu for the total-energy model with gamma = 0.

    B = 3 c |w . g^| so nu = 3 c B(a+1, a+1) B(3/2, 2a+2) 2 pi.
    """
    return 3.0 * c * special.beta(alpha + 1, alpha + 1) * special.beta(1.5, 2 * alpha + 2) * 2.0 * math.pi


@dataclass
class NuProfile:
    """nu on a (|v|, I) grid; ``v`` points along a fixed unit direction.

    All grid points share the same random numbers, so differences between
    points carry much less noise than the points themselves; their standard
    errors are in ``diff_stderr_speed`` / ``diff_stderr_energy``.
    """

    speeds: np.ndarray
    energies: np.ndarray
    nu: np.ndarray
    stderr: np.ndarray
    diff_speed: np.ndarray = field(default=None)
    diff_stderr_speed: np.ndarray = field(default=None)
    diff_energy: np.ndarray = field(default=None)
    diff_stderr_energy: np.ndarray = field(default=None)

    def rows(self):
        for i, s in enumerate(self.speeds):
            for j, e in enumerate(self.energies):
                yield s, e, self.nu[i, j], self.stderr[i, j]


def profile(speeds, energies, spec: GasSpec, model: CrossSectionModel, quad: QuadratureSpec,
            direction=(1.0, 0.0, 0.0), key=(NU_KEY,)) -> NuProfile:
    """nu on a grid with common random numbers across grid points."""
    speeds = np.asarray(speeds, dtype=float)
    energies = np.asarray(energies, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    ns, ne = len(speeds), len(energies)
    a = spec.alpha

    def integrand(rng, m):
        p = sample_partners(rng, m, a, np.zeros(3), 0.0, 1.0, quad.margin)
        w = p.weight * reduced_maxwellian(p.vs, p.Is, a)
        out = np.empty((m, ns, ne))
        for i, s in enumerate(speeds):
            v = np.broadcast_to(s * d, (m, 3))
            for j, e in enumerate(energies):
                out[:, i, j] = w * eval_B_arrays(model, spec.gamma, v, p.vs, np.full(m, e), p.Is, p.r, p.R, p.omega)
        flat = out.reshape(m, -1)
        ds = np.diff(out, axis=1).reshape(m, -1)
        de = np.diff(out, axis=2).reshape(m, -1)
        return np.concatenate([flat, ds, de], axis=1)

    res = mc_mean(integrand, quad, key)
    n0, n1 = ns * ne, (ns - 1) * ne
    mean, se = np.asarray(res.mean), np.asarray(res.stderr)
    return NuProfile(speeds, energies, mean[:n0].reshape(ns, ne), se[:n0].reshape(ns, ne),
                     mean[n0:n0 + n1].reshape(ns - 1, ne), se[n0:n0 + n1].reshape(ns - 1, ne),
                     mean[n0 + n1:].reshape(ns, ne - 1), se[n0 + n1:].reshape(ns, ne - 1))


@dataclass
class CoercivityFit:
    c_hat: float
    c_hat_stderr: float
    argmin: tuple
    ratios: np.ndarray
    ratio_stderr: np.ndarray
    passed: bool


def coercivity_fit(spec: GasSpec, model: CrossSectionModel, speeds, energies, quad: QuadratureSpec,
                   prof: NuProfile | None = None) -> CoercivityFit:
    """Grid minimum of nu / (|v|^gamma + I^(gamma/2) + 1) with its error bar."""
    speeds = np.asarray(speeds, float)
    energies = np.asarray(energies, float)
    if len(speeds) < 10 or len(energies) < 10:
        raise DomainError("coercivity grid needs at least 10 x 10 points")
    prof = prof or profile(speeds, energies, spec, model, quad)
    g = spec.gamma
    S, E = np.meshgrid(speeds, energies, indexing="ij")
    denom = (S**g if g else 1.0) + (E ** (g / 2) if g else 1.0) + 1.0
    ratios = prof.nu / denom
    rse = prof.stderr / denom
    idx = np.unravel_index(np.argmin(ratios), ratios.shape)
    c_hat = float(ratios[idx])
    c_se = float(rse[idx])
    passed = bool(np.all(ratios - 3.0 * rse > 0))
    return CoercivityFit(c_hat, c_se, (float(speeds[idx[0]]), float(energies[idx[1]])), ratios, rse, passed)


@dataclass
class MonotonyReport:
    speed: str
    energy: str
    overall: str
    speed_signs: np.ndarray
    energy_signs: np.ndarray


def _classify(diffs, stderr, k=3.0):
    signs = np.where(diffs > k * stderr, 1, np.where(diffs < -k * stderr, -1, 0))
    if np.all(signs == 0):
        return "CONSTANT", signs
    if np.all(signs >= 0):
        return "MONOTONE-INCREASING", signs
    if np.all(signs <= 0):
        return "MONOTONE-DECREASING", signs
    return "MIXED", signs


def monotony_check(spec: GasSpec, model: CrossSectionModel, speeds, energies, quad: QuadratureSpec,
                   prof: NuProfile | None = None) -> MonotonyReport:
    """Noise-aware sign classification of nu along |v| rays and along I lines.

    Differences within three standard errors of the paired difference count
    as ties.
    """
    prof = prof or profile(speeds, energies, spec, model, quad)
    s_cls, s_signs = _classify(prof.diff_speed, prof.diff_stderr_speed)
    e_cls, e_signs = _classify(prof.diff_energy, prof.diff_stderr_energy)
    overall = s_cls if s_cls == e_cls else "MIXED"
    if {s_cls, e_cls} <= {"MONOTONE-INCREASING", "CONSTANT"} and s_cls != e_cls:
        overall = "MONOTONE-INCREASING"
    return MonotonyReport(s_cls, e_cls, overall, s_signs, e_signs)
