"""Galerkin discretization of L = K - nu Id on Hermite x Laguerre functions.

Basis functions are p_i = M^(1/2) phi_i with phi_i a product of normalized
probabilists' Hermite polynomials in each velocity component (total degree
at most n_v) and a normalized generalized Laguerre polynomial L_n^(alpha)(I)
(degree at most n_I).  They are orthonormal in L^2(dv dI) because the phi_i
are orthonormal under the Maxwellian.  Matrix entries reduce to

    <p_i, L p_j> = int M M* rho B phi_i (phi_j' + phi_j'* - phi_j* - phi_j),

which is sampled with both states drawn from M and (r, R, omega) from the
normalized collision weight.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from . import kinematics as kin
from .cross_section import CrossSectionModel, GasSpec, eval_B_arrays
from .errors import BasisError, NumericalError
from .quadrature import QuadratureSpec, chunk_rng, collision_weight_mass, gauss_hermite_normal, gauss_laguerre_gamma, \
    sample_collision_params

MAX_DIMENSION = 600
SPECTRAL_KEY = 41


class RefinementWarning(UserWarning):
    """Monte Carlo noise in the assembled matrix is large relative to its entries."""


@dataclass(frozen=True)
class BasisSpec:
    n_v: int = 4
    n_I: int = 4
    alpha: float = 0.5

    def __post_init__(self):
        if self.n_v < 0 or self.n_I < 0:
            raise BasisError("basis degrees must be nonnegative")
        if self.dimension > MAX_DIMENSION:
            raise BasisError(f"basis dimension {self.dimension} exceeds the cap {MAX_DIMENSION}")

    @property
    def velocity_indices(self):
        return [k for k in itertools.product(range(self.n_v + 1), repeat=3) if sum(k) <= self.n_v]

    @property
    def indices(self):
        return [(k, n) for n in range(self.n_I + 1) for k in sorted(self.velocity_indices, key=lambda t: (sum(t), t))]

    @property
    def dimension(self) -> int:
        return math.comb(self.n_v + 3, 3) * (self.n_I + 1)

    def enlarged(self, by: int = 2) -> "BasisSpec":
        return BasisSpec(self.n_v + by, self.n_I + by, self.alpha)

    def index_of(self, k, n) -> int:
        return self.indices.index((tuple(k), n))


def hermite_table(x, n):
    """Normalized probabilists' Hermite values He_k(x)/sqrt(k!), k = 0..n, shape (..., n+1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = x
    for k in range(1, n):
        out[..., k + 1] = x * out[..., k] - k * out[..., k - 1]
    return out / np.sqrt(special.factorial(np.arange(n + 1)))


def laguerre_table(x, n, alpha):
    """Generalized Laguerre values normalized under Gamma(alpha+1), shape (..., n+1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = 1.0 + alpha - x
    for k in range(1, n):
        out[..., k + 1] = ((2 * k + 1 + alpha - x) * out[..., k] - (k + alpha) * out[..., k - 1]) / (k + 1)
    ks = np.arange(n + 1)
    norms = np.exp(special.gammaln(ks + alpha + 1) - special.gammaln(ks + 1) - special.gammaln(alpha + 1))
    return out / np.sqrt(norms)


class Basis:
    """Evaluates the polynomial factors phi_i at batches of points."""

    def __init__(self, spec: BasisSpec):
        self.spec = spec
        idx = spec.indices
        self.vk = np.array([k for k, _ in idx])
        self.nI = np.array([n for _, n in idx])

    def __len__(self):
        return len(self.nI)

    def phi(self, v, I):
        H = hermite_table(v, self.spec.n_v)  # (m, 3, n_v+1)
        Lg = laguerre_table(I, self.spec.n_I, self.spec.alpha)  # (m, n_I+1)
        return H[:, 0, self.vk[:, 0]] * H[:, 1, self.vk[:, 1]] * H[:, 2, self.vk[:, 2]] * Lg[:, self.nI]

    def tensor_rule(self, extra: int = 2):
        """Exact rule for products of two basis polynomials under M."""
        x, wx = gauss_hermite_normal(self.spec.n_v + extra)
        e, we = gauss_laguerre_gamma(self.spec.n_I + extra, self.spec.alpha)
        V = np.array(list(itertools.product(x, x, x)))
        WV = np.array([a * b * c for a, b, c in itertools.product(wx, wx, wx)])
        v = np.repeat(V, len(e), axis=0)
        I = np.tile(e, len(V))
        w = np.repeat(WV, len(e)) * np.tile(we, len(V))
        return v, I, w

    def gram(self):
        v, I, w = self.tensor_rule()
        P = self.phi(v, I)
        return (P * w[:, None]).T @ P

    def project(self, psi):
        """Coefficients of M^(1/2) psi and the captured fraction of its squared norm."""
        v, I, w = self.tensor_rule(extra=4)
        P = self.phi(v, I)
        vals = psi(v, I)
        coef = (P * w[:, None]).T @ vals
        total = float(w @ vals**2)
        return coef, float(coef @ coef) / total if total > 0 else 1.0


def invariant_functions():
    return {
        "1": lambda v, I: np.ones(len(I)),
        "v1": lambda v, I: v[:, 0],
        "v2": lambda v, I: v[:, 1],
        "v3": lambda v, I: v[:, 2],
        "energy": lambda v, I: 0.5 * np.einsum("ij,ij->i", v, v) + I,
    }


@dataclass
class OperatorMatrix:
    matrix: np.ndarray
    stderr: np.ndarray
    raw: np.ndarray
    raw_stderr: np.ndarray
    samples: int
    basis: BasisSpec

    @property
    def tol0(self) -> float:
        return max(10.0 * float(self.stderr.max()), 1e-6)

    def asymmetry(self):
        """(max |A_ij - A_ji|, fraction of pairs beyond 3 combined s.e., passed).

        With tens of thousands of pairs a few 3-sigma excursions are expected
        (0.27 % under normality); the check passes while at most 1 % exceed.
        """
        iu = np.triu_indices(len(self.raw), 1)
        d = np.abs(self.raw - self.raw.T)[iu]
        # rounding floor for pairs of invariant columns, whose standard errors vanish
        floor = 1e-12 * float(np.abs(self.raw).max(initial=0.0))
        bound = 3.0 * np.sqrt(self.raw_stderr**2 + self.raw_stderr.T**2)[iu] + floor
        frac = float(np.mean(d > bound)) if len(d) else 0.0
        return float(d.max(initial=0.0)), frac, frac <= 0.01


def constant_frequency(spec: GasSpec, model: CrossSectionModel):
    """nu0 when B averaged over (r, R, omega) does not depend on the states, else None.

    With gamma = 0 every built-in bracket equals 3, so nu = 3 c mass <|omega.g^|>.
    """
    if spec.gamma != 0 or model.kind == "Custom":
        return None
    return 3.0 * model.c * collision_weight_mass(spec.alpha) * (0.5 if model.has_cos_factor else 1.0)


def _sample_mixture(rng, m, a, tau):
    """(v, I) from the even mixture of M and its tempered copy M_tau.

    Returns the states and M / proposal, which is bounded by 2.
    """
    hot = rng.random(m) < 0.5
    scale = np.where(hot, tau, 1.0)
    v = np.sqrt(scale)[:, None] * rng.standard_normal((m, 3))
    I = rng.gamma(a + 1.0, 1.0, m) * scale
    en = 0.5 * np.einsum("ij,ij->i", v, v) + I
    ratio = tau ** -(a + 2.5) * np.exp(-en * (1.0 / tau - 1.0))  # M_tau / M
    return v, I, 1.0 / (0.5 + 0.5 * ratio)


def assemble(basis: BasisSpec, spec: GasSpec, model: CrossSectionModel, quad: QuadratureSpec,
             antithetic: bool = True, tau: float = 3.0, exact_loss: bool = True,
             key=(SPECTRAL_KEY,)) -> OperatorMatrix:
    """Monte Carlo Galerkin matrix of L with per-entry standard errors.

    Variance reduction, all unbiased up to O(1/N) from the fitted coefficients:

    * states are drawn from an even mixture of M and M_tau, which tames the
      tails of high-degree polynomial products;
    * with ``antithetic`` the test function phi_i is replaced by the average of
      its values at the two pre-collision states (the pair exchange preserves
      the measure);
    * when the collision frequency is a constant nu0 the loss part has the
      closed form -nu0 (delta_ij + delta_i0 delta_j0).  The sampled loss is then
      used as a control variate with a per-entry coefficient; collision
      invariants keep exactly zero per-sample residuals (coefficient 1) while
      high-degree entries drop most of the loss noise.
    """
    if abs(basis.alpha - spec.alpha) > 1e-15:
        raise BasisError("basis and gas disagree on alpha")
    b = Basis(basis)
    G = b.gram()
    if np.max(np.abs(G - np.eye(len(G)))) > 1e-8:
        raise BasisError(f"Gram matrix deviates from identity by {np.max(np.abs(G - np.eye(len(G)))):.3g}")
    n = len(b)
    seed = quad.require_seed()
    total = quad.samples
    chunk = min(quad.chunk, 20_000)
    sizes = [chunk] * (total // chunk) + ([total % chunk] if total % chunk else [])
    mass = collision_weight_mass(spec.alpha)
    a = spec.alpha
    nu_const = constant_frequency(spec, model) if exact_loss else None

    def run(i):
        rng = chunk_rng(seed, key, i)
        m = sizes[i]
        v, I, w1 = _sample_mixture(rng, m, a, tau)
        vs, Is, w2 = _sample_mixture(rng, m, a, tau)
        r, R, omega, _ = sample_collision_params(rng, m, a)
        vp, vps, Ip, Ips = kin.collide(v, vs, I, Is, r, R, omega)
        Bv = mass * w1 * w2 * eval_B_arrays(model, spec.gamma, v, vs, I, Is, r, R, omega)
        P, Ps = b.phi(v, I), b.phi(vs, Is)
        gain = b.phi(vp, Ip) + b.phi(vps, np.maximum(Ips, 0.0))
        loss = P + Ps
        lhs = (0.5 * loss if antithetic else P) * Bv[:, None]
        lg, ll = lhs * gain, lhs * loss
        l2 = lhs**2
        return np.stack([lhs.T @ gain, lhs.T @ loss, l2.T @ gain**2, l2.T @ loss**2, l2.T @ (gain * loss),
                         lg.T @ lg, lg.T @ ll, ll.T @ ll])

    if quad.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=quad.threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    S = np.zeros((8, n, n))
    for part in parts:  # fixed order keeps the sum reproducible
        S += part
    N = float(total)
    mg, ml, eg2, el2, egl, cgg, cgl, cll = S / N
    vg = eg2 - mg**2
    vl = el2 - ml**2
    cv = egl - mg * ml
    if nu_const is not None:
        exact = nu_const * np.eye(n)
        exact[0, 0] += nu_const
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(vl > 0, cv / vl, 1.0)
    else:
        exact = ml
        beta = np.ones((n, n))
    # per-sample x_ij = a_i (g_j - beta_ij l_j) - (1 - beta_ij) exact_ij
    A = mg - exact - beta * (ml - exact)
    raw_var = np.maximum(vg - 2 * beta * cv + beta**2 * vl, 0.0)
    # covariance of x_ij and x_ji
    bt = beta.T
    cross = (cgg - beta * cgl.T - bt * cgl + beta * bt * cll) - (mg - beta * ml) * (mg - beta * ml).T
    raw_se = np.sqrt(raw_var / N)
    sym = 0.5 * (A + A.T)
    sym_var = 0.25 * (raw_var + raw_var.T + 2.0 * cross)
    sym_se = np.sqrt(np.maximum(sym_var, 0.0) / N)
    if not np.all(np.isfinite(sym)):
        raise NumericalError("non-finite Galerkin matrix entries")
    if sym_se.max() > 0.1 * np.abs(sym).max():
        warnings.warn("entry standard errors exceed 10% of the largest entry; increase samples", RefinementWarning,
                      stacklevel=2)
    return OperatorMatrix(sym, sym_se, A, raw_se, total, basis)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    tol0: float
    kernel_dim_detected: int
    positive_count: int
    gap_estimate: float
    gap_factor: float
    nu0: float | None = None
    min_eigenvalue: float = field(default=float("nan"))

    @property
    def structure_ok(self) -> bool:
        """Five near-zero eigenvalues, none above +tol0, gap at least 5 tol0."""
        return self.kernel_dim_detected == 5 and self.positive_count == 0 and self.gap_factor >= 5.0

    def edge_ok(self, nu_max: float) -> bool:
        """Most negative eigenvalue not below -max nu - tol0."""
        return bool(self.min_eigenvalue >= -nu_max - self.tol0)

    def to_dict(self):
        return {"kernel_dim_detected": self.kernel_dim_detected, "gap_estimate": self.gap_estimate,
                "tol0": self.tol0, "nu0": self.nu0, "positive_count": self.positive_count,
                "gap_factor": self.gap_factor, "min_eigenvalue": self.min_eigenvalue}


def spectrum(A: OperatorMatrix, nu0: float | None = None) -> SpectrumReport:
    """Eigenvalues of the symmetrized matrix, sorted descending, with the
    near-zero count relative to tol0 and the gap to the first eigenvalue below."""
    try:
        ev = linalg.eigvalsh(A.matrix)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    ev = np.sort(ev)[::-1]
    tol = A.tol0
    near = int(np.sum(np.abs(ev) <= tol))
    pos = int(np.sum(ev > tol))
    below = ev[ev < -tol]
    gap = float(-below[0]) if len(below) else float("nan")
    return SpectrumReport(ev, tol, near, pos, gap, gap / tol if len(below) else float("nan"), nu0, float(ev[-1]))


def top_shift(small: SpectrumReport, large: SpectrumReport, count: int = 6):
    """Changes of the leading eigenvalues between two bases.

    Near-zero eigenvalues are compared in absolute terms against the larger
    tol0; the others in relative terms.
    """
    tol = max(small.tol0, large.tol0)
    out = []
    for a, b in zip(small.eigenvalues[:count], large.eigenvalues[:count]):
        if abs(a) <= tol and abs(b) <= tol:
            out.append({"small": float(a), "large": float(b), "kind": "zero", "stable": True, "shift": abs(a - b)})
        else:
            rel = abs(a - b) / max(abs(a), abs(b))
            out.append({"small": float(a), "large": float(b), "kind": "relative", "stable": rel < 0.10,
                        "shift": rel})
    return out


@dataclass
class KernelCheckReport:
    residuals: dict
    norms: dict
    captured: dict
    tol0: float
    passed: bool


def kernel_check(A: OperatorMatrix, basis: BasisSpec, spec: GasSpec, functions: dict | None = None) -> KernelCheckReport:
    """Residuals |A c| for the projections c of M^(1/2) psi onto the basis.

    Passes when every residual is at most tol0 times |c|.  A projection that
    captures less than 99 % of the squared norm raises :class:`BasisError`.
    """
    functions = functions or invariant_functions()
    b = Basis(basis)
    res, norms, captured = {}, {}, {}
    for name, psi in functions.items():
        coef, frac = b.project(psi)
        if frac < 0.99:
            raise BasisError(f"basis captures only {frac:.3%} of M^(1/2) {name}")
        res[name] = float(np.linalg.norm(A.matrix @ coef))
        norms[name] = float(np.linalg.norm(coef))
        captured[name] = frac
    tol = A.tol0
    passed = all(res[k] <= tol * norms[k] for k in res)
    return KernelCheckReport(res, norms, captured, tol, passed)
