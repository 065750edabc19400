"""Acceptance criteria, one test each, at their stated sample sizes and tolerances.

Every test prints a PASS/FAIL line; the lines are repeated in the terminal
summary.  Runtime limits are part of each criterion.
"""

import filecmp
import math
import time
import warnings

import numpy as np
import pytest

from polyboltz import kinematics as kin
from polyboltz.cli import EXIT_CHECK, EXIT_OK, main
from polyboltz.collision_operator import INVARIANTS, eval_Q, eval_Q_equiv
from polyboltz.cross_section import CrossSectionModel, GasSpec
from polyboltz.equilibrium import MaxwellianParams, entropy_production, maxwellian
from polyboltz.frequency import coercivity_fit, maxwell_molecule_nu, monotony_check, profile
from polyboltz.linearized import Perturbation, apply_L, bilinear_form, hs_norm_estimate
from polyboltz.quadrature import QuadratureSpec
from polyboltz.spectral import BasisSpec, assemble, kernel_check, spectrum, top_shift

from conftest import ACCEPTANCE_LINES
from oracles import agree, borgnakke_larsen_identity, h_identity, omega_sigma_identity

MODEL = CrossSectionModel()
HALF = GasSpec(0.5, 0.0)


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_conservation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    m = 100_000
    v, vs = 3 * rng.standard_normal((m, 3)), 3 * rng.standard_normal((m, 3))
    I, Is = rng.gamma(1.5, 2.0, m), rng.gamma(1.5, 2.0, m)
    r, R = rng.random(m), rng.random(m)
    omega = rng.standard_normal((m, 3))
    omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    vp, vps, Ip, Ips = kin.collide(v, vs, I, Is, r, R, omega)
    mom_scale = np.linalg.norm(v, axis=1) + np.linalg.norm(vs, axis=1)
    mom = np.max(np.linalg.norm(vp + vps - v - vs, axis=1) / mom_scale)
    e0 = 0.5 * np.sum(v**2 + vs**2, 1) + I + Is
    en = np.max(np.abs(0.5 * np.sum(vp**2 + vps**2, 1) + Ip + Ips - e0) / e0)
    dt = time.perf_counter() - t0
    verdict(1, mom <= 1e-12 and en <= 1e-12 and dt < 1.0,
            f"max relative momentum defect {mom:.2e}, energy defect {en:.2e}, {dt:.2f} s")


def test_criterion_02_jacobian_oracles():
    t0 = time.perf_counter()
    n = 1_000_000
    results = {"omega-sigma": omega_sigma_identity(n, 201), "J_T": borgnakke_larsen_identity(n, 202)}
    for branch in kin.BRANCHES:
        results[f"h[{branch}]"] = h_identity(branch, n, 203)
    dt = time.perf_counter() - t0
    ok = all(agree(a, b) for a, b in results.values()) and dt < 30
    detail = ", ".join(f"{k} {abs(a[0] - b[0]) / math.hypot(a[1], b[1]):.2f} s.e." for k, (a, b) in results.items())
    verdict(2, ok, f"{detail}, {dt:.1f} s")


PROBES = [((0.0, 0.0, 0.0), 0.5), ((1.0, -0.5, 0.2), 1.3), ((-2.0, 0.3, 1.0), 0.1), ((0.4, 2.2, -1.1), 3.0),
          ((0.0, 0.0, 3.0), 2.0)]

PERTURBATIONS = [
    lambda v, I: 1 + 0.2 * np.cos(v[..., 0]),
    lambda v, I: 1 + 0.3 * np.tanh(v[..., 1]),
    lambda v, I: 1 + 0.4 * np.exp(-I) - 0.1 * np.cos(v[..., 2]),
    lambda v, I: 1 + 0.25 * np.sin(v[..., 0] + v[..., 1]),
    lambda v, I: np.exp(0.2 * np.tanh(I - 1.5 - 0.3 * v[..., 0])),
]


def test_criterion_03_h_theorem():
    t0 = time.perf_counter()
    M = maxwellian(MaxwellianParams(), 0.5)
    q = QuadratureSpec(samples=400_000, seed=301)
    zeros = [eval_Q(M, kin.ParticleState(v, I), HALF, MODEL, q, key=(31, i)) for i, (v, I) in enumerate(PROBES)]
    prods = [entropy_production(M.perturbed(p, floor=1e-3), HALF, MODEL, q, key=(32, i))
             for i, p in enumerate(PERTURBATIONS)]
    dt = time.perf_counter() - t0
    zero_ok = all(bool(z.is_zero()) for z in zeros)
    neg_ok = all(d.mean + 3 * d.stderr < 0 for d in prods)
    worst = max(d.mean / d.stderr for d in prods)
    verdict(3, zero_ok and neg_ok and dt < 120,
            f"Q(M) zero at {sum(bool(z.is_zero()) for z in zeros)}/5 probes, D(f) < 0 for "
            f"{sum(d.mean + 3 * d.stderr < 0 for d in prods)}/5 (weakest {worst:.1f} s.e.), {dt:.1f} s")


def test_criterion_04_dual_parametrization():
    t0 = time.perf_counter()
    dists = [maxwellian(MaxwellianParams(), 0.5).perturbed(lambda v, I: 1 + 0.2 * np.tanh(v[..., 0])),
             # equilibrium plus a drifting component: far from any Maxwellian
             maxwellian(MaxwellianParams(), 0.5).perturbed(lambda v, I: 1 + 0.3 * np.exp(0.5 * v[..., 0] - 0.2 * I)),
             maxwellian(MaxwellianParams(), 0.5).perturbed(lambda v, I: 1 + 0.3 * np.cos(v[..., 1]) * np.exp(-I))]
    q = QuadratureSpec(samples=400_000, seed=401)
    dev = []
    for d, f in enumerate(dists):
        for i, (v, I) in enumerate(PROBES):
            s = kin.ParticleState(v, I)
            a = eval_Q(f, s, HALF, MODEL, q, key=(41, d, i))
            b = eval_Q_equiv(f, s, HALF, MODEL, q, key=(42, d, i))
            dev.append(abs(a.mean - b.mean) / math.hypot(a.stderr, b.stderr))
    dt = time.perf_counter() - t0
    verdict(4, max(dev) <= 3 and dt < 300,
            f"{sum(x <= 3 for x in dev)}/15 cells agree, worst {max(dev):.2f} s.e., {dt:.1f} s")


def test_criterion_05_maxwell_frequency():
    t0 = time.perf_counter()
    gas = GasSpec(0.0, 0.0)
    speeds, energies = np.linspace(0, 6, 5), np.linspace(0, 10, 5)
    prof = profile(speeds, energies, gas, MODEL, QuadratureSpec(samples=4_000_000, seed=501))
    rep = monotony_check(gas, MODEL, speeds, energies, None, prof=prof)
    target = 8 * math.pi / 5
    rel = float(np.max(np.abs(prof.nu - target)) / target)
    dt = time.perf_counter() - t0
    assert maxwell_molecule_nu(0.0) == pytest.approx(target, rel=1e-14)
    verdict(5, rep.overall == "CONSTANT" and rel < 0.01 and dt < 60,
            f"grid classified {rep.overall}, max deviation from 8 pi/5 {100 * rel:.3f} %, {dt:.1f} s")


def test_criterion_06_coercivity():
    t0 = time.perf_counter()
    fit = coercivity_fit(GasSpec(0.5, 1.0), MODEL, np.linspace(0, 6, 10), np.linspace(0, 10, 10),
                         QuadratureSpec(samples=400_000, seed=601))
    dt = time.perf_counter() - t0
    verdict(6, fit.passed and fit.c_hat - 3 * fit.c_hat_stderr > 0 and dt < 300,
            f"c_hat = {fit.c_hat:.4f} +- {fit.c_hat_stderr:.1e} at (|v|, I) = {fit.argmin}, {dt:.1f} s")


def test_criterion_07_monotony():
    t0 = time.perf_counter()
    speeds, energies = np.linspace(0, 6, 7), np.linspace(0, 10, 6)
    q = QuadratureSpec(samples=400_000, seed=701)
    inc = monotony_check(GasSpec(0.5, 1.0), MODEL, speeds, energies, q)
    const = monotony_check(GasSpec(0.5, 0.0), MODEL, speeds, energies, q)
    dt = time.perf_counter() - t0
    verdict(7, inc.overall == "MONOTONE-INCREASING" and const.overall == "CONSTANT" and dt < 300,
            f"gamma=1 {inc.overall}, gamma=0 {const.overall}, {dt:.1f} s")


def test_criterion_08_hs_boundary():
    t0 = time.perf_counter()
    q = QuadratureSpec(samples=2_000_000, seed=801)
    half = {w: hs_norm_estimate(w, HALF, MODEL, q, key=(81, i)) for i, w in enumerate(("k1", "k2", "k3"))}
    # the integrability check itself rejects alpha = 0, so the estimator runs unguarded there
    zero = hs_norm_estimate("k2", GasSpec(0.0, 0.0), MODEL, q, key=(82,), check_assumptions=False)
    dt = time.perf_counter() - t0
    ok = all(r.status == "FINITE" for r in half.values()) and zero.status == "DIVERGENT" and dt < 600
    detail = ", ".join(f"{w} {r.status}" for w, r in half.items())
    verdict(8, ok, f"alpha=1/2: {detail}; alpha=0 k2 {zero.status} (expected DIVERGENT, values "
                   f"{', '.join(f'{x:.4g}' for x in zero.values)}, last growth {zero.growth[-1]:.2e}), {dt:.1f} s")


def test_criterion_09_operator_structure():
    t0 = time.perf_counter()
    rng = np.random.default_rng(901)
    q = QuadratureSpec(samples=200_000, seed=902)

    def random_pert():
        c = rng.uniform(-1, 1, 5)
        return Perturbation.half_maxwellian(
            lambda v, I: c[0] + c[1] * np.tanh(v[..., 0]) + c[2] * np.sin(v[..., 1]) + c[3] * v[..., 2] * np.exp(-I)
            + c[4] * np.cos(I), 0.5)

    sym = []
    for k in range(10):
        g, h = random_pert(), random_pert()
        a = bilinear_form(g, h, HALF, MODEL, q, key=(91, k, 0))
        b = bilinear_form(h, g, HALF, MODEL, q, key=(91, k, 1))
        sym.append(abs(a.mean - b.mean) / math.hypot(a.stderr, b.stderr))
    zero_ok = 0
    for j, psi in enumerate(INVARIANTS.values()):
        g = Perturbation.half_maxwellian(psi, 0.5)
        for i, (v, I) in enumerate(PROBES):
            zero_ok += bool(apply_L(g, kin.ParticleState(v, I), HALF, MODEL, q, key=(92, j, i)).is_zero())
    dt = time.perf_counter() - t0
    verdict(9, max(sym) <= 3 and zero_ok == 25 and dt < 600,
            f"<Kg,h> symmetric on {sum(x <= 3 for x in sym)}/10 pairs (worst {max(sym):.2f} s.e.), "
            f"L g = 0 for {zero_ok}/25 invariant-probe cells, {dt:.1f} s")


def test_criterion_10_spectrum():
    t0 = time.perf_counter()
    q = QuadratureSpec(samples=1_000_000, seed=1001)
    nu0 = maxwell_molecule_nu(0.5)
    small_basis = BasisSpec(4, 4, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        A = assemble(small_basis, HALF, MODEL, q)
        B = assemble(small_basis.enlarged(2), HALF, MODEL, q)
    small, large = spectrum(A, nu0), spectrum(B, nu0)
    shifts = top_shift(small, large)
    kc = kernel_check(A, small_basis, HALF)
    asym = A.asymmetry()[2] and B.asymmetry()[2]
    dt = time.perf_counter() - t0
    ok = (small.structure_ok and all(s["stable"] for s in shifts) and kc.passed and asym
          and small.edge_ok(nu0) and dt < 1800)
    verdict(10, ok, f"n=4: {small.kernel_dim_detected} near-zero, {small.positive_count} above tol0 = "
                    f"{small.tol0:.3g}, gap {small.gap_estimate:.4f} ({small.gap_factor:.1f} tol0); "
                    f"n=6 eigenvalue 6 moved {100 * shifts[5]['shift']:.2f} %; invariants in kernel "
                    f"{kc.passed}, {dt:.0f} s")


CLI_CONFIG = """seed = 11
[gas]
alpha = 0.5
gamma = 1.0
[quadrature]
samples = 30000
chunk = 7000
[basis]
n_v = 2
n_I = 2
enlarge = 1
[grid]
speeds = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
energies = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
"""


def test_criterion_11_reproducibility(tmp_path):
    from polyboltz.cli import COMMANDS
    cfg = tmp_path / "run.toml"
    cfg.write_text(CLI_CONFIG)
    mismatched, codes = [], {}
    for command in COMMANDS:
        outs = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
            out = tmp_path / command / tag
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                codes[(command, tag)] = main([command, "--config", str(cfg), "--out", str(out),
                                              "--threads", str(threads)])
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir())
        for other in outs[1:]:
            if sorted(p.name for p in other.iterdir()) != names:
                mismatched.append(f"{command}: file sets differ")
                continue
            _, diff, err = filecmp.cmpfiles(outs[0], other, names, shallow=False)
            mismatched += [f"{command}/{n}" for n in diff + err]
        if len({codes[(command, t)] for t in "abc"}) != 1:
            mismatched.append(f"{command}: exit codes differ")
    bad_codes = {k: v for k, v in codes.items() if v not in (EXIT_OK, EXIT_CHECK)}
    verdict(11, not mismatched and not bad_codes,
            f"{len(COMMANDS)} commands x (rerun, 4 threads): "
            f"{'all artifacts byte-identical' if not mismatched else 'differences in ' + ', '.join(mismatched)}"
            + (f"; unexpected exit codes {bad_codes}" if bad_codes else ""))
