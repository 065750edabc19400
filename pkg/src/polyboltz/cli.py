"""Command-line driver: ``polyboltz <command> --config run.toml --out results/``.

Every artifact is a pure function of the config file (plus ``--seed``);
``--threads`` only changes wall time.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import kinematics as kin
from .collision_operator import eval_Q, eval_Q_equiv
from .cross_section import CrossSectionModel, GasSpec, Molecule, alpha_from_molecule, verify_assumptions
from .equilibrium import MaxwellianParams, maxwellian
from .errors import AssumptionError, BasisError, ConfigError, DomainError, NumericalError
from .frequency import coercivity_fit, monotony_check, profile
from .linearized import HS_LADDER, KERNELS, eval_k1, eval_k2, eval_k3, hs_norm_estimate
from .quadrature import QuadratureSpec
from .spectral import BasisSpec, assemble, constant_frequency, kernel_check, spectrum, top_shift

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COMMANDS = ("verify", "qtest", "kernel-table", "hs-norm", "nu", "coercivity", "monotony", "spectrum")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
SECTIONS = {"seed", "gas", "model", "quadrature", "grid", "kernel_table", "hs_norm", "qtest", "basis"}
FLOAT = "%.17g"


@dataclass
class RunConfig:
    seed: int
    gas: GasSpec
    model: CrossSectionModel
    quad: QuadratureSpec
    sections: dict = field(default_factory=dict)

    def section(self, name) -> dict:
        return self.sections.get(name, {})


def _table(raw, name):
    val = raw.get(name, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{name}: expected a table")
    return val


def _check_keys(table, allowed, where):
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")


def _num(table, key, where, default, kind=float):
    val = table.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
    return kind(val)


def load_config(path, seed_override=None, threads=1) -> RunConfig:
    """Parse and validate a TOML or JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    _check_keys(raw, SECTIONS, "config")

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("seed: field is mandatory")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")

    gas = _table(raw, "gas")
    _check_keys(gas, {"alpha", "gamma", "molecule"}, "gas")
    gamma = _num(gas, "gamma", "gas", 0.0)
    try:
        if "molecule" in gas:
            mol = gas["molecule"]
            if not isinstance(mol, dict):
                raise ConfigError("gas.molecule: expected a table {N, vibrating, linear}")
            _check_keys(mol, {"N", "vibrating", "linear"}, "gas.molecule")
            molecule = Molecule(_num(mol, "N", "gas.molecule", None, int), bool(mol.get("vibrating", False)),
                                bool(mol.get("linear", False)))
            expected = alpha_from_molecule(molecule.N, molecule.vibrating, molecule.linear)
            alpha = _num(gas, "alpha", "gas", expected)
            spec = GasSpec(alpha, gamma, molecule)
        else:
            if "alpha" not in gas:
                raise ConfigError("gas.alpha: give alpha or a molecule")
            spec = GasSpec(_num(gas, "alpha", "gas", None), gamma)
    except (DomainError, ConfigError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("gas") else f"gas: {msg}") from exc

    mt = _table(raw, "model")
    _check_keys(mt, {"kind", "c", "energy_form"}, "model")
    if mt.get("kind", "TotalEnergyForm") == "Custom":
        raise ConfigError("model.kind: Custom models are only available through the library")
    model = CrossSectionModel(str(mt.get("kind", "TotalEnergyForm")), _num(mt, "c", "model", 1.0),
                              bool(mt.get("energy_form", False)))

    qt = _table(raw, "quadrature")
    _check_keys(qt, {"scheme", "samples", "nodes", "v_max", "i_max", "margin", "chunk"}, "quadrature")
    defaults = QuadratureSpec()
    quad = QuadratureSpec(
        scheme=str(qt.get("scheme", defaults.scheme)),
        samples=_num(qt, "samples", "quadrature", defaults.samples, int),
        nodes=_num(qt, "nodes", "quadrature", defaults.nodes, int),
        v_max=_num(qt, "v_max", "quadrature", defaults.v_max),
        i_max=_num(qt, "i_max", "quadrature", defaults.i_max),
        seed=seed,
        margin=_num(qt, "margin", "quadrature", defaults.margin),
        chunk=_num(qt, "chunk", "quadrature", defaults.chunk, int),
        threads=int(threads),
    )
    sections = {k: _table(raw, k) for k in ("grid", "kernel_table", "hs_norm", "qtest", "basis")}
    return RunConfig(int(seed), spec, model, quad, sections)


# -- output helpers ----------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, str):
        return x
    return FLOAT % float(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _floats(table, key, where, default):
    val = table.get(key, default)
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: expected numbers") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}.{key}: non-finite entries")
    return arr


# -- commands ------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, out: Path):
    rep = verify_assumptions(cfg.model, cfg.gas, cfg.quad)
    write_json(out / "verify.json", rep.to_dict())
    write_csv(out / "verify.csv", ["check", "status"], [[i.name, "PASS" if i.passed else "FAIL"] for i in rep.items])
    return [f"{name}: FAIL" for name in rep.failures()]


def cmd_qtest(cfg: RunConfig, out: Path):
    sec = cfg.section("qtest")
    _check_keys(sec, {"points", "amplitude"}, "qtest")
    pts = _floats(sec, "points", "qtest", [[0.3, -0.2, 0.5, 0.7], [1.0, 0.0, 0.0, 0.2], [0.0, 1.2, -0.4, 1.5]])
    if pts.ndim != 2 or pts.shape[1] != 4 or np.any(pts[:, 3] < 0):
        raise ConfigError("qtest.points: expected rows [v1, v2, v3, I] with I >= 0")
    amp = _num(sec, "amplitude", "qtest", 0.2)
    a = cfg.gas.alpha
    M = maxwellian(MaxwellianParams(), a)
    f = M.perturbed(lambda v, I: 1.0 + amp * np.tanh(v[..., 0]))
    rows, failures = [], []
    for i, p in enumerate(pts):
        s = kin.ParticleState(p[:3], p[3])
        q0 = eval_Q(M, s, cfg.gas, cfg.model, cfg.quad, key=(101, i))
        qd = eval_Q(f, s, cfg.gas, cfg.model, cfg.quad, key=(102, i))
        qe = eval_Q_equiv(f, s, cfg.gas, cfg.model, cfg.quad, key=(103, i))
        zero_ok = bool(q0.is_zero())
        agree = bool(abs(qd.mean - qe.mean) <= 3.0 * math.hypot(qd.stderr, qe.stderr))
        rows.append([*p, q0.mean, q0.stderr, qd.mean, qd.stderr, qe.mean, qe.stderr,
                     "PASS" if zero_ok and agree else "FAIL"])
        if not zero_ok:
            failures.append(f"point {i}: Q(M) not zero")
        if not agree:
            failures.append(f"point {i}: direct and center-of-mass charts disagree")
    write_csv(out / "qtest.csv", ["v1", "v2", "v3", "I", "q_maxwellian", "q_maxwellian_std_err", "q_direct",
                                  "q_direct_std_err", "q_equiv", "q_equiv_std_err", "status"], rows)
    return failures


def cmd_kernel_table(cfg: RunConfig, out: Path):
    sec = cfg.section("kernel_table")
    _check_keys(sec, {"kernel", "chart", "points"}, "kernel_table")
    which = sec.get("kernel", "k2")
    if which not in KERNELS:
        raise ConfigError(f"kernel_table.kernel: expected one of {KERNELS}")
    chart = sec.get("chart", "sigma")
    if chart not in ("sigma", "partner"):
        raise ConfigError("kernel_table.chart: expected 'sigma' or 'partner'")
    pts = _floats(sec, "points", "kernel_table", [[0.5, 0.0, 0.0, 1.0, 0.0, 0.5, 0.0, 0.8]])
    if pts.ndim != 2 or pts.shape[1] != 8 or np.any(pts[:, [3, 7]] < 0):
        raise ConfigError("kernel_table.points: expected rows [v1, v2, v3, I, x1, x2, x3, y] with I, y >= 0")
    rows = []
    for i, p in enumerate(pts):
        if which == "k1":
            res = eval_k1(cfg.gas, cfg.model, p[:3], p[3], p[4:7], p[7], cfg.quad, key=(111, i))
        else:
            fn = eval_k2 if which == "k2" else eval_k3
            res = fn(cfg.gas, cfg.model, p[:3], p[3], p[4:7], p[7], cfg.quad, key=(112, i), chart=chart)
        rows.append([*p, res.mean, res.stderr])
    write_csv(out / "kernel_table.csv", ["v1", "v2", "v3", "I", "x1", "x2", "x3", "y", "k_value", "std_err"], rows)
    return []


def cmd_hs_norm(cfg: RunConfig, out: Path):
    sec = cfg.section("hs_norm")
    _check_keys(sec, {"kernels", "ladder", "inner", "check_assumptions"}, "hs_norm")
    kernels = sec.get("kernels", list(KERNELS))
    if not isinstance(kernels, list) or any(k not in KERNELS for k in kernels):
        raise ConfigError(f"hs_norm.kernels: expected a subset of {KERNELS}")
    ladder = tuple(_floats(sec, "ladder", "hs_norm", list(HS_LADDER)))
    inner = _num(sec, "inner", "hs_norm", 8, int)
    check = bool(sec.get("check_assumptions", True))
    rows, report, failures = [], {}, []
    for i, which in enumerate(kernels):
        try:
            res = hs_norm_estimate(which, cfg.gas, cfg.model, cfg.quad, ladder, inner, key=(121, i),
                                   check_assumptions=check)
        except AssumptionError as exc:
            report[which] = {"status": "ASSUMPTION-FAILED", "condition": exc.condition}
            failures.append(f"{which}: {exc.condition} FAIL")
            continue
        report[which] = res.to_dict()
        growth = [float("nan")] + list(res.growth)
        for j, eps in enumerate(res.margins):
            rows.append([which, eps, res.values[j], res.stderrs[j], growth[j], res.status])
    write_csv(out / "hs_norm.csv", ["kernel", "margin", "value", "std_err", "growth", "status"], rows)
    write_json(out / "hs_norm.json", report)
    return failures


def _grid(cfg, default_speeds, default_energies):
    sec = cfg.section("grid")
    _check_keys(sec, {"speeds", "energies", "direction"}, "grid")
    speeds = _floats(sec, "speeds", "grid", default_speeds)
    energies = _floats(sec, "energies", "grid", default_energies)
    direction = _floats(sec, "direction", "grid", [1.0, 0.0, 0.0])
    if speeds.ndim != 1 or energies.ndim != 1 or np.any(speeds < 0) or np.any(energies < 0):
        raise ConfigError("grid: speeds and energies must be nonnegative lists")
    if direction.shape != (3,) or not np.linalg.norm(direction) > 0:
        raise ConfigError("grid.direction: expected a nonzero 3-vector")
    return speeds, energies, direction


def _profile_rows(prof):
    return [[s, e, nu, se] for s, e, nu, se in prof.rows()]


def cmd_nu(cfg: RunConfig, out: Path):
    speeds, energies, d = _grid(cfg, np.linspace(0, 4, 5).tolist(), np.linspace(0, 4, 5).tolist())
    prof = profile(speeds, energies, cfg.gas, cfg.model, cfg.quad, direction=d)
    write_csv(out / "nu.csv", ["speed", "I", "nu", "std_err"], _profile_rows(prof))
    return []


def cmd_coercivity(cfg: RunConfig, out: Path):
    speeds, energies, d = _grid(cfg, np.linspace(0, 6, 10).tolist(), np.linspace(0, 10, 10).tolist())
    prof = profile(speeds, energies, cfg.gas, cfg.model, cfg.quad, direction=d)
    fit = coercivity_fit(cfg.gas, cfg.model, speeds, energies, cfg.quad, prof=prof)
    rows = [[s, e, nu, se, fit.ratios[i, j], fit.ratio_stderr[i, j]]
            for i, s in enumerate(speeds) for j, e in enumerate(energies)
            for nu, se in [(prof.nu[i, j], prof.stderr[i, j])]]
    write_csv(out / "coercivity.csv", ["speed", "I", "nu", "std_err", "ratio", "ratio_std_err"], rows)
    write_json(out / "coercivity.json", {"c_hat": fit.c_hat, "c_hat_std_err": fit.c_hat_stderr,
                                         "argmin": list(fit.argmin), "passed": fit.passed})
    return [] if fit.passed else ["coercivity: grid minimum not positive beyond 3 s.e."]


def cmd_monotony(cfg: RunConfig, out: Path):
    speeds, energies, d = _grid(cfg, np.linspace(0, 4, 6).tolist(), np.linspace(0, 6, 6).tolist())
    prof = profile(speeds, energies, cfg.gas, cfg.model, cfg.quad, direction=d)
    rep = monotony_check(cfg.gas, cfg.model, speeds, energies, cfg.quad, prof=prof)
    write_csv(out / "nu_profile.csv", ["speed", "I", "nu", "std_err"], _profile_rows(prof))
    write_json(out / "monotony.json", {"speed": rep.speed, "energy": rep.energy, "classification": rep.overall})
    return []


def cmd_spectrum(cfg: RunConfig, out: Path):
    sec = cfg.section("basis")
    _check_keys(sec, {"n_v", "n_I", "enlarge"}, "basis")
    try:
        basis = BasisSpec(_num(sec, "n_v", "basis", 4, int), _num(sec, "n_I", "basis", 4, int), cfg.gas.alpha)
    except BasisError as exc:
        raise ConfigError(f"basis: {exc}") from exc
    nu0 = constant_frequency(cfg.gas, cfg.model)
    A = assemble(basis, cfg.gas, cfg.model, cfg.quad)
    rep = spectrum(A, nu0)
    write_csv(out / "eigenvalues.csv", ["index", "eigenvalue"], [[i, ev] for i, ev in enumerate(rep.eigenvalues)])
    kc = kernel_check(A, basis, cfg.gas)
    report = rep.to_dict()
    report["kernel_check"] = {"passed": kc.passed, "residuals": kc.residuals, "norms": kc.norms}
    failures = []
    if not rep.structure_ok:
        failures.append("spectrum: expected 5 near-zero eigenvalues, none above tol0 and a gap >= 5 tol0")
    if not kc.passed:
        failures.append("kernel_check: invariant residual above tol0")
    enlarge = _num(sec, "enlarge", "basis", 0, int)
    if enlarge:
        try:
            big = basis.enlarged(enlarge)
        except BasisError as exc:
            raise ConfigError(f"basis.enlarge: {exc}") from exc
        rep2 = spectrum(assemble(big, cfg.gas, cfg.model, cfg.quad), nu0)
        shifts = top_shift(rep, rep2)
        report["enlarged"] = {"n_v": big.n_v, "n_I": big.n_I, "eigenvalues_top6": rep2.eigenvalues[:6],
                              "tol0": rep2.tol0, "shifts": shifts}
        if not all(s["stable"] for s in shifts):
            failures.append("spectrum: top-6 eigenvalues not stable under basis enlargement")
    write_json(out / "spectrum.json", report)
    return failures


HANDLERS = {"verify": cmd_verify, "qtest": cmd_qtest, "kernel-table": cmd_kernel_table, "hs-norm": cmd_hs_norm,
            "nu": cmd_nu, "coercivity": cmd_coercivity, "monotony": cmd_monotony, "spectrum": cmd_spectrum}


def build_parser():
    p = argparse.ArgumentParser(prog="polyboltz", description="Polyatomic Boltzmann collision numerics")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML or JSON run configuration")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return p


def _origin(exc) -> str:
    """Module where the exception was raised."""
    tb = exc.__traceback__
    while tb.tb_next is not None:
        tb = tb.tb_next
    return tb.tb_frame.f_globals.get("__name__", "?")


def run(command, config, out, threads=1, seed=None) -> int:
    out = Path(out)
    try:
        if threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = load_config(config, seed, threads)
        out.mkdir(parents=True, exist_ok=True)
        (out / "failures.json").unlink(missing_ok=True)
        failures = HANDLERS[command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DomainError, BasisError) as exc:
        print(f"numeric failure in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if failures:
        write_json(out / "failures.json", failures)
        print(json.dumps({"command": command, "failures": failures}), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
