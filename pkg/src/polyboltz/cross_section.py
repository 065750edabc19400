"""Collision cross-section models and numerical checks of their hypotheses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kinematics as kin
from .errors import ConfigError, DomainError
from .quadrature import QuadratureSpec, chunk_rng, log_graded_rule, sample_sphere

KINDS = ("TotalEnergyForm", "PartitionedForm", "AngularWeighted", "Custom")
DIVERGENCE_LADDER = (1e-2, 1e-3, 1e-4, 1e-5)
DIVERGENCE_GROWTH = 0.10


@dataclass(frozen=True)
class Molecule:
    N: int
    vibrating: bool
    linear: bool


def alpha_from_molecule(N: int, vibrating: bool, linear: bool) -> float:
    """Internal-energy exponent alpha = (D - 5) / 2 from the molecular structure."""
    if int(N) != N or N < 2:
        raise DomainError("a polyatomic molecule needs N >= 2 atoms")
    if vibrating:
        return (3 * N - 5) / 2.0
    return 0.0 if linear else 0.5


@dataclass(frozen=True)
class GasSpec:
    alpha: float
    gamma: float = 0.0
    molecule: Molecule | None = None

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise DomainError("alpha and gamma must be nonnegative")
        if self.molecule is not None:
            m = self.molecule
            expected = alpha_from_molecule(m.N, m.vibrating, m.linear)
            if not math.isclose(expected, self.alpha, abs_tol=1e-14):
                raise ConfigError(f"alpha={self.alpha} inconsistent with molecule (expected {expected})")

    @classmethod
    def from_molecule(cls, N, vibrating, linear, gamma=0.0):
        return cls(alpha_from_molecule(N, vibrating, linear), gamma, Molecule(N, vibrating, linear))


def _pow(x, p):
    # x**p with 0**0 = 1 and exact zeros for p > 0.
    x = np.asarray(x, dtype=float)
    if p == 0:
        return np.ones_like(x)
    return np.power(np.maximum(x, 0.0), p)


@dataclass(frozen=True)
class CrossSectionModel:
    """A collision cross-section B and its envelopes Phi_gamma <= Psi_gamma.

    ``TotalEnergyForm``: c |w.g^| (|g|^gamma + I^(gamma/2) + I*^(gamma/2)), or
    c |w.g^| E^gamma with ``energy_form=True``.
    ``PartitionedForm``: c |w.g^| (R^(gamma/2)|g|^gamma + (r(1-R)I)^(gamma/2)
    + ((1-r)(1-R)I*)^(gamma/2)).
    ``AngularWeighted``: same bracket with a constant angular factor b = c.
    ``Custom``: ``func(gnorm, cos_abs, I, Is, r, R)`` plus envelope callables.
    """

    kind: str = "TotalEnergyForm"
    c: float = 1.0
    energy_form: bool = False
    func: Callable | None = field(default=None, compare=False)
    phi: Callable | None = field(default=None, compare=False)
    psi: Callable | None = field(default=None, compare=False)
    cos_factor: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown cross-section kind {self.kind!r}")
        if self.c <= 0:
            raise ConfigError("scaling constant c must be positive")
        if self.kind == "Custom" and self.func is None:
            raise ConfigError("Custom model requires func")
        if self.kind == "AngularWeighted":
            object.__setattr__(self, "cos_factor", False)

    @property
    def has_cos_factor(self) -> bool:
        return self.cos_factor

    def bracket(self, gnorm, I, Is, r, R, gamma):
        """B with the angular factor stripped (B = angular * bracket)."""
        h = gamma / 2.0
        if self.kind == "TotalEnergyForm":
            if self.energy_form:
                return _pow(0.25 * np.asarray(gnorm) ** 2 + I + Is, gamma)
            return _pow(gnorm, gamma) + _pow(I, h) + _pow(Is, h)
        if self.kind in ("PartitionedForm", "AngularWeighted"):
            return (_pow(R, h) * _pow(gnorm, gamma) + _pow(r * (1 - R) * I, h)
                    + _pow((1 - r) * (1 - R) * Is, h))
        raise DomainError("Custom models have no separate bracket")

    def evaluate(self, gnorm, cos_abs, I, Is, r, R, gamma):
        """B from |g|, |omega . g^|, energies and fractions."""
        if self.kind == "Custom":
            return np.asarray(self.func(gnorm, cos_abs, I, Is, r, R), dtype=float)
        ang = self.c * np.abs(cos_abs) if self.cos_factor else self.c
        return ang * self.bracket(gnorm, I, Is, r, R, gamma)

    def over_sigma_distance(self, gnorm, dist, I, Is, r, R, gamma):
        """B / |sigma - g^| with |omega . g^| = |sigma - g^| / 2 cancelled exactly.

        Only models carrying the |omega . g^| factor have a finite closed form;
        for the others the singular factor is kept explicitly.
        """
        if self.kind == "Custom":
            if self.cos_factor:
                with np.errstate(invalid="ignore", divide="ignore"):
                    out = self.func(gnorm, 0.5 * dist, I, Is, r, R) / dist
                return np.where(dist > 0, out, 0.0)
            return np.asarray(self.func(gnorm, 0.5 * dist, I, Is, r, R)) / dist
        if self.cos_factor:
            return 0.5 * self.c * self.bracket(gnorm, I, Is, r, R, gamma)
        return self.c * self.bracket(gnorm, I, Is, r, R, gamma) / dist

    def envelopes(self, r, R, gamma):
        """(Phi_gamma(r, R), Psi_gamma(r, R)), including the constant c."""
        r = np.asarray(r, dtype=float)
        R = np.asarray(R, dtype=float)
        h = gamma / 2.0
        if self.kind == "Custom":
            if self.phi is None or self.psi is None:
                raise ConfigError("Custom model requires phi and psi envelopes")
            return np.asarray(self.phi(r, R), float), np.asarray(self.psi(r, R), float)
        if self.kind == "TotalEnergyForm":
            if self.energy_form and gamma != 0:
                # E^gamma is not comparable to |g|^gamma + I^(gamma/2) + ... ;
                # no constant envelope exists.
                one = np.full(np.broadcast(r, R).shape, np.nan)
                return one, one
            k = self.c / 3.0 if self.energy_form else self.c
            full = np.full(np.broadcast(r, R).shape, k)
            return full, full
        phi = self.c * _pow(np.minimum(R, 1 - R), h) * _pow(np.minimum(r, 1 - r), h)
        psi = self.c * _pow(np.maximum(np.maximum(R, r * (1 - R)), (1 - r) * (1 - R)), h)
        return phi, psi


def literal_partitioned_psi(r, R, gamma, c=1.0):
    """Upper envelope max{R^(g/2), (r(1-R))^(g/2)} exactly as printed for the
    partitioned model; it is not symmetric in r and does not bound B."""
    h = gamma / 2.0
    return c * np.maximum(_pow(R, h), _pow(np.asarray(r) * (1 - np.asarray(R)), h))


def eval_B(model: CrossSectionModel, spec: GasSpec, s: kin.ParticleState, s_star: kin.ParticleState,
           p: kin.CollisionParams):
    g = s.v - s_star.v
    gnorm = np.linalg.norm(g, axis=-1)
    cos_abs = np.where(gnorm > 0, np.abs(np.einsum("...i,...i->...", kin.unit_or_default(g), p.omega)), 0.0)
    return model.evaluate(gnorm, cos_abs, s.I, s_star.I, p.r, p.R, spec.gamma)


def eval_B_arrays(model, gamma, v, vs, I, Is, r, R, omega):
    """Array form of :func:`eval_B` (no validation)."""
    g = v - vs
    gnorm = np.linalg.norm(g, axis=-1)
    cos_abs = np.abs(np.einsum("...i,...i->...", kin.unit_or_default(g), omega))
    cos_abs = np.where(gnorm > 0, cos_abs, 0.0)
    return model.evaluate(gnorm, cos_abs, I, Is, r, R, gamma)


# -- assumption checks ----------------------------------------------------

@dataclass
class CheckItem:
    name: str
    passed: bool
    evidence: dict


@dataclass
class AssumptionReport:
    items: list

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def failures(self):
        return [i.name for i in self.items if not i.passed]

    def __getitem__(self, name) -> CheckItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self):
        return {"passed": self.passed, "failures": self.failures(),
                "items": [{"name": i.name, "passed": i.passed, "evidence": i.evidence} for i in self.items]}


def weighted_square_integral(weight: Callable, eps: float, nodes: int = 200) -> float:
    """Integral of weight(r, R) over [eps, 1 - eps]^2 on a log-graded tensor rule."""
    x, w = log_graded_rule(nodes, eps)
    r, R = np.meshgrid(x, x, indexing="ij")
    vals = np.asarray(weight(r, R), dtype=float)
    return float(np.einsum("i,ij,j->", w, vals, w))


def divergence_ladder(weight: Callable, ladder=DIVERGENCE_LADDER, nodes: int = 200) -> dict:
    """Integrals over shrinking boundary margins; divergent when the last
    refinement still grows by more than 10 %."""
    values = [weight_value for weight_value in (weighted_square_integral(weight, e, nodes) for e in ladder)]
    growth = [(b - a) / abs(a) if a != 0 else math.inf for a, b in zip(values, values[1:])]
    divergent = bool(growth and growth[-1] > DIVERGENCE_GROWTH)
    return {"margins": list(ladder), "values": values, "growth": growth, "divergent": divergent}


def condition_weights(model: CrossSectionModel, spec: GasSpec) -> dict:
    a, g = spec.alpha, spec.gamma
    lo = min(2 * a - 1 - g, a - 1)

    def psi2(r, R):
        return model.envelopes(r, R, g)[1] ** 2

    def phi(r, R):
        return model.envelopes(r, R, g)[0]

    return {
        "k2condition": lambda r, R: psi2(r, R) * (r * (1 - r)) ** lo * R * (1 - R) ** (3 * a - g),
        "k3condition": lambda r, R: psi2(r, R) * (1 - r) ** (2 * a - 1 - g) * r ** (a - 1) * R * (1 - R) ** (3 * a - g),
        "phi_integrability": lambda r, R: phi(r, R) * (r * (1 - r)) ** a * np.sqrt(R) * (1 - R) ** (2 * a + 1),
        "phi_square_condition": lambda r, R: phi(r, R) ** 2 * (r * (1 - r)) ** (2 * a - 1 - g) * R * (1 - R) ** (3 * a - g),
    }


def _probe_states(rng, m):
    v = 2.0 * rng.standard_normal((m, 3))
    vs = 2.0 * rng.standard_normal((m, 3))
    I = rng.exponential(2.0, m)
    Is = rng.exponential(2.0, m)
    r = rng.uniform(1e-6, 1 - 1e-6, m)
    R = rng.uniform(1e-6, 1 - 1e-6, m)
    omega = sample_sphere(rng, m)
    return v, vs, I, Is, r, R, omega


def verify_assumptions(model: CrossSectionModel, spec: GasSpec, probes: QuadratureSpec,
                       n_probes: int = 10_000) -> AssumptionReport:
    """Numerical evidence for every hypothesis placed on B.

    Sandwich bounds, envelope symmetry, both microreversibility identities on
    random probes, and the L^1 conditions on the envelopes via the
    shrinking-margin divergence ladder.
    """
    seed = probes.require_seed()
    rng = chunk_rng(seed, (11,), 0)
    v, vs, I, Is, r, R, omega = _probe_states(rng, n_probes)
    gam = spec.gamma
    items = []

    B = eval_B_arrays(model, gam, v, vs, I, Is, r, R, omega)
    gnorm = np.linalg.norm(v - vs, axis=1)
    cos_abs = np.abs(np.einsum("ij,ij->i", kin.unit_or_default(v - vs), omega))
    std = _pow(gnorm, gam) + _pow(I, gam / 2) + _pow(Is, gam / 2)
    phi, psi = model.envelopes(r, R, gam)
    lower = phi * cos_abs * std
    upper = psi * cos_abs * std
    tol = 1e-12 * np.maximum(np.abs(B), 1e-300)
    if np.all(np.isfinite(phi)) and np.all(np.isfinite(psi)):
        lower_ok = lower <= B + tol
        upper_ok = B <= upper + tol
        order_ok = np.all(phi <= psi * (1 + 1e-14)) and np.all(phi > 0)
        items.append(CheckItem("sandwich", bool(lower_ok.all() and upper_ok.all() and order_ok), {
            "probes": n_probes, "lower_violations": int((~lower_ok).sum()),
            "upper_violations": int((~upper_ok).sum()), "phi_le_psi": bool(order_ok)}))
    else:
        items.append(CheckItem("sandwich", False, {"probes": n_probes, "reason": "no finite envelopes"}))

    sym_phi = np.max(np.abs(model.envelopes(1 - r, R, gam)[0] - phi), initial=0.0)
    sym_psi = np.max(np.abs(model.envelopes(1 - r, R, gam)[1] - psi), initial=0.0)
    scale = max(float(np.nanmax(np.abs(psi), initial=0.0)), 1.0)
    sym_ok = bool(np.isfinite(sym_phi) and np.isfinite(sym_psi) and max(sym_phi, sym_psi) <= 1e-14 * scale)
    items.append(CheckItem("symmetry", sym_ok, {"max_phi_defect": float(sym_phi), "max_psi_defect": float(sym_psi)}))

    swapped = eval_B_arrays(model, gam, vs, v, Is, I, 1 - r, R, -omega)
    d1 = np.abs(swapped - B) / np.maximum(np.abs(B), 1e-300)
    items.append(CheckItem("reversibility_exchange", bool(np.all(d1 <= 1e-10)),
                           {"max_rel_defect": float(d1.max())}))

    vp, vps, Ip, Ips = kin.collide(v, vs, I, Is, r, R, omega)
    Ep = kin.energy(vp, vps, Ip, Ips)
    Rp = np.clip(0.25 * np.einsum("ij,ij->i", v - vs, v - vs) / Ep, 0, 1)
    rp = I / ((1 - Rp) * Ep)
    post = eval_B_arrays(model, gam, vp, vps, Ip, Ips, rp, Rp, omega)
    d2 = np.abs(post - B) / np.maximum(np.abs(B), 1e-300)
    items.append(CheckItem("reversibility_collision", bool(np.all(d2 <= 1e-8)),
                           {"max_rel_defect": float(d2.max())}))

    if np.all(np.isfinite(psi)):
        weights = condition_weights(model, spec)
        for name in ("k2condition", "k3condition"):
            lad = divergence_ladder(weights[name])
            items.append(CheckItem(name, not lad["divergent"], lad))
        for name in ("phi_integrability", "phi_square_condition"):
            lad = divergence_ladder(weights[name])
            items.append(CheckItem(name, not lad["divergent"], lad))
    else:
        for name in ("k2condition", "k3condition"):
            items.append(CheckItem(name, False, {"reason": "no finite envelope"}))
    return AssumptionReport(items)
