"""Command-line surface: config ingestion, command dispatch, reports.

Usage:
    polykin <validate|nu|kernel|assemble|spectrum|verify|oracle>
            --config <path> [--out <dir>] [--workers <n>] [--quick]
            [--seed <u64>]

One JSON config document (schema 1) drives every command; unknown keys are
rejected and defaults are documented in --help.  Reports are JSON, profile
sweeps are CSV with 17-significant-digit floats, and operators use the
PKOP binary dump.  All file writes are atomic (temp file + rename).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracle as orc
from .collision import MaxwellianProvider, entropy_production, q_collision_field
from .cross_sections import (grad_bounded, hard_sphere, microreversibility_residual,
                             symmetry_residuals)
from .grids import build_plane_quadrature, build_sphere_quadrature, build_velocity_grid
from .kinematics import (caseII_post_state, caseIII_equal_mass_post_state,
                         caseIII_post_state, check_conservation,
                         conservation_residuals, lemma3_rho, make_pair,
                         omega_post_state, plane_basis)
from .linops import (assemble, dump_operator, kernel_k1, kernel_k2, kernel_k3,
                     load_operator, nu)
from .mixture import (Mixture, ValidationError, build_mixture, enumerate_channels,
                      weighted_null_basis)
from .spectral import spectral_report

DEFAULTS: dict = {
    "schema": 1,
    "mixture": {"species": [], "temperature": 1.0},
    "cross_section": {"model": "hard_sphere", "C": 1.0, "gamma": 0.5},
    "grid": {"R": None, "N": 8},
    "quadratures": {
        "sphere_polar": 6, "sphere_azimuthal": 12,
        "plane_radial": 24, "plane_angular": 16,
        "R_w": None, "R_nu": None, "nu_radial": 64,
    },
    "assembly": {"diagonal": "cell", "entry_cap": 1e8, "kernel_method": "auto"},
    "spectral": {"null_gap_factor": 10.0, "asymmetry_threshold": 1e-6},
    "mc": {"samples": 100000, "seed": 24601},
    "output": {"directory": "out", "formats": ["json", "csv", "bin"]},
}

_SCHEMA_KEYS = {
    "": set(DEFAULTS),
    "mixture": {"species", "temperature"},
    "mixture.species": {"name", "mass", "levels", "weights", "density"},
    "cross_section": {"model", "C", "gamma"},
    "grid": {"R", "N"},
    "quadratures": set(DEFAULTS["quadratures"]),
    "assembly": set(DEFAULTS["assembly"]),
    "spectral": set(DEFAULTS["spectral"]),
    "mc": {"samples", "seed"},
    "output": set(DEFAULTS["output"]),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed configuration with defaults expanded."""

    raw: dict
    mixture: Mixture
    model: object
    path: str = ""

    @property
    def grid_R(self) -> float:
        R = self.raw["grid"]["R"]
        if R is None:
            R = 5.5 / np.sqrt(float(np.min(self.mixture.masses)))
        return float(R)

    @property
    def grid_N(self) -> int:
        return int(self.raw["grid"]["N"])

    def build_grid(self, N: int | None = None):
        return build_velocity_grid(self.grid_R, N or self.grid_N)

    def build_sphere(self):
        q = self.raw["quadratures"]
        return build_sphere_quadrature(int(q["sphere_polar"]),
                                       int(q["sphere_azimuthal"]))

    def build_plane(self):
        q = self.raw["quadratures"]
        cutoff = q["R_w"]
        if cutoff is None:
            cutoff = 7.0 / np.sqrt(float(np.min(self.mixture.masses)))
        return build_plane_quadrature(int(q["plane_radial"]),
                                      int(q["plane_angular"]), float(cutoff))

    def mc_config(self, seed=None, workers: int = 1, samples=None):
        m = self.raw["mc"]
        return orc.McConfig(samples=int(samples or m["samples"]),
                            seed=int(m["seed"] if seed is None else seed),
                            workers=workers)


def _check_keys(obj: dict, section: str):
    allowed = _SCHEMA_KEYS[section]
    for key in obj:
        if key not in allowed:
            where = section or "top level"
            raise ConfigError(f"unknown key {key!r} in {where}; "
                              f"allowed: {sorted(allowed)}")


def _merge_defaults(user: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    _check_keys(user, "")
    for section, val in user.items():
        if isinstance(val, dict):
            _check_keys(val, section)
            cfg[section].update(val)
        else:
            cfg[section] = val
    for sp in cfg["mixture"]["species"]:
        _check_keys(sp, "mixture.species")
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    cfg = _merge_defaults(user)
    if cfg["schema"] != 1:
        raise ConfigError(f"unsupported schema {cfg['schema']!r}; expected 1")
    try:
        mixture = build_mixture(cfg["mixture"])
    except ValidationError as exc:
        raise ConfigError(f"mixture: {exc}")
    cs = cfg["cross_section"]
    if cs["model"] == "hard_sphere":
        model = hard_sphere(cs["C"], s=mixture.s)
    elif cs["model"] == "grad_bounded":
        model = grad_bounded(float(cs["C"]), float(cs["gamma"]))
    else:
        raise ConfigError(f"cross_section.model: unknown model {cs['model']!r}")
    return RunConfig(raw=cfg, mixture=mixture, model=model, path=path)


# ---------------------------------------------------------------------------
# atomic output helpers

def _atomic_write(path: str, data: bytes) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    _atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_csv(path: str, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    _atomic_write(path, buf.getvalue().encode())


# ---------------------------------------------------------------------------
# verification report plumbing

@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, name: str, residual: float, threshold: float,
            larger_is_worse: bool = True) -> bool:
        ok = residual <= threshold if larger_is_worse else residual >= threshold
        self.checks.append({
            "name": name,
            "status": "pass" if ok else "fail",
            "residual": float(residual),
            "threshold": float(threshold),
        })
        return ok

    @property
    def passed(self) -> bool:
        return all(c["status"] == "pass" for c in self.checks)

    def to_dict(self) -> dict:
        return {"status": "pass" if self.passed else "fail",
                "checks": self.checks, "config": self.config}

    def print_lines(self, stream=sys.stdout) -> None:
        for c in self.checks:
            print(f"[{c['status'].upper():4s}] {c['name']}: "
                  f"residual {c['residual']:.3e} vs {c['threshold']:.3e}",
                  file=stream)
        print(f"overall: {'pass' if self.passed else 'fail'}", file=stream)


# ---------------------------------------------------------------------------
# commands

def cmd_validate(cfg: RunConfig, out_dir: str, seed=None, workers: int = 1,
                 quick: bool = False) -> VerificationReport:
    """Cheap identity suite: microreversibility, symmetries, conservation,
    randomized Lemma 3."""
    rep = VerificationReport(config=cfg.raw)
    mix, model = cfg.mixture, cfg.model
    rng = np.random.default_rng(cfg.mc_config(seed).seed)
    channels = enumerate_channels(mix)
    n_samp = 2000 if quick else 10000

    worst_mr = 0.0
    scale_mr = 1e-300
    for _ in range(n_samp // 50):
        ch = channels[rng.integers(0, len(channels))]
        g = float(rng.uniform(0.05, 8.0))
        if g * g <= 2.0 * ch.delta_I_tilde:
            continue
        r = float(microreversibility_residual(model, mix, ch, g))
        from .cross_sections import sigma as sigma_eval
        scale_mr = max(scale_mr,
                       abs(float(sigma_eval(model, mix, ch, g))) * g * g)
        worst_mr = max(worst_mr, abs(r))
    rep.add("microreversibility(mr)", worst_mr / scale_mr, 1e-13)

    sym = symmetry_residuals(model, mix, channels,
                             rng.uniform(0.05, 8.0, size=16),
                             rng.uniform(-1, 1, size=16))
    rep.add("symmetry(sr)", sym.species_swap_max / sym.scale, 1e-13)
    rep.add("symmetry(sr1)", max(sym.angle_flip_max, sym.index_swap_max)
            / sym.scale, 1e-13)

    worst = 0.0
    for _ in range(n_samp // 10):
        ch = channels[rng.integers(0, len(channels))]
        sa, sb = mix.species[ch.alpha], mix.species[ch.beta]
        ma, mb = sa.mass, sb.mass
        pair = make_pair(rng.normal(size=3) * 2, rng.normal(size=3) * 2, ma, mb)
        if pair.g_norm < 1e-8:
            continue
        om = rng.normal(size=3)
        om /= np.linalg.norm(om)
        scale = (ma + mb) * (1 + pair.g_norm**2 + float(np.sum(pair.G**2)))
        post = omega_post_state(pair, ch, om)
        if post is not None:
            mom, en = check_conservation(mix, ch, pair, post)
            worst = max(worst, float(np.max(np.abs(mom))) / scale,
                        abs(en) / scale)
        nvec = pair.g / pair.g_norm
        wv = rng.normal(size=3)
        wv -= (wv @ nvec) * nvec
        post2 = caseII_post_state(pair, mix, ch, wv)
        if post2 is not None:
            # pairing: pre (xi, xi') at (i, j), post (xi_*, xi_*') at (k, l)
            mom, en = conservation_residuals(
                ma, mb, pair.xi, post2.xi_prime, pair.xi_star,
                post2.xi_star_prime,
                e_int_pre=sa.levels[ch.i] + sb.levels[ch.j],
                e_int_post=sa.levels[ch.k] + sb.levels[ch.l])
            worst = max(worst, float(np.max(np.abs(mom))) / scale,
                        abs(en) / scale)
        if ma != mb:
            post3 = caseIII_post_state(pair, ch, om)
        else:
            post3 = caseIII_equal_mass_post_state(pair, mix, ch, wv)
        if post3 is not None:
            # pairing: pre (xi, xi_*') at (i, l), post (xi', xi_*) at (k, j)
            mom, en = conservation_residuals(
                ma, mb, pair.xi, post3.xi_star_prime, post3.xi_prime,
                pair.xi_star,
                e_int_pre=sa.levels[ch.i] + sb.levels[ch.l],
                e_int_post=sa.levels[ch.k] + sb.levels[ch.j])
            worst = max(worst, float(np.max(np.abs(mom))) / scale,
                        abs(en) / scale)
    rep.add("conservation(CI)", worst, 1e-12)

    pair_masses = None
    for a in range(mix.s):
        for b in range(mix.s):
            if mix.masses[a] != mix.masses[b]:
                pair_masses = (float(mix.masses[a]), float(mix.masses[b]))
    if pair_masses is None:
        pair_masses = (1.0, 2.0)    # lemma is mixture-independent
    res = orc.lemma3_random_check(pair_masses[0], pair_masses[1],
                                  cfg.mc_config(seed, workers,
                                                samples=10000 if quick else 100000))
    rep.add("lemma3_gap_min", -res.min_gap, 1e-12)
    write_json(os.path.join(out_dir, "validate_report.json"), rep.to_dict())
    return rep


def cmd_nu(cfg: RunConfig, out_dir: str, alpha: int, i: int,
           speeds) -> str:
    """CSV sweep of the collision frequency for one (species, level)."""
    mix = cfg.mixture
    if not (0 <= alpha < mix.s):
        raise ConfigError(f"species index {alpha} out of range")
    if not (0 <= i < mix.species[alpha].n_levels):
        raise ConfigError(f"level index {i} out of range for species {alpha}")
    vals = nu(mix, cfg.model, alpha, i, np.asarray(speeds, dtype=float))
    path = os.path.join(out_dir, f"nu_{alpha}_{i}.csv")
    write_csv(path, ["speed", "species", "level", "nu", "nu_over_1_plus_speed"],
              [(float(s), alpha, i, float(v), float(v / (1.0 + s)))
               for s, v in zip(speeds, vals)])
    return path


def cmd_kernel(cfg: RunConfig, out_dir: str, family: str, n_pairs: int = 10,
               seed=None) -> str:
    """CSV of kernel values at random velocity pairs and level indices."""
    mix, model = cfg.mixture, cfg.model
    rng = np.random.default_rng(cfg.mc_config(seed).seed)
    fns = {"k1": kernel_k1, "k2": kernel_k2, "k3": kernel_k3}
    if family not in fns:
        raise ConfigError(f"kernel family must be one of {sorted(fns)}")
    rows = []
    for _ in range(n_pairs):
        a = int(rng.integers(0, mix.s))
        b = int(rng.integers(0, mix.s))
        ra = mix.species[a].n_levels
        rb = mix.species[b].n_levels if family != "k3" else ra
        i = int(rng.integers(0, ra))
        j = int(rng.integers(0, rb))
        xi = rng.normal(size=3) * 1.5
        xis = rng.normal(size=3) * 1.5
        val = fns[family](mix, model, a, b, i, j, xi, xis)
        rows.append((family, a, b, i, j, *map(float, xi), *map(float, xis),
                     float(val)))
    path = os.path.join(out_dir, f"kernel_{family}.csv")
    write_csv(path, ["family", "alpha", "beta", "i", "j",
                     "xi_x", "xi_y", "xi_z", "xis_x", "xis_y", "xis_z",
                     "value"], rows)
    return path


def cmd_assemble(cfg: RunConfig, out_dir: str, workers: int = 1) -> dict:
    """Assemble operators, write PKOP dumps plus a JSON assembly report."""
    t0 = time.time()
    mix, model = cfg.mixture, cfg.model
    grid = cfg.build_grid()
    asm_cfg = cfg.raw["assembly"]
    ops = assemble(mix, model, grid, pquad=cfg.build_plane(),
                   method=asm_cfg["kernel_method"],
                   entry_cap=float(asm_cfg["entry_cap"]), workers=workers,
                   diagonal=asm_cfg["diagonal"])
    os.makedirs(out_dir, exist_ok=True)
    lam_dense = np.diag(ops.lambda_op.flat())
    dump_operator(os.path.join(out_dir, "lambda.pkop"), "lambda", lam_dense)
    del lam_dense
    dump_operator(os.path.join(out_dir, "K.pkop"), "K", ops.K.matrix)
    dump_operator(os.path.join(out_dir, "L.pkop"), "L", ops.L.matrix)
    report = {
        "dim": ops.meta["dim"],
        "N": ops.meta["N"],
        "R": ops.meta["R"],
        "kernel_method": ops.meta["method"],
        "diagonal": ops.meta["diagonal"],
        "asymmetry": ops.asymmetry,
        "asymmetry_threshold": cfg.raw["spectral"]["asymmetry_threshold"],
        "elapsed_s": time.time() - t0,
        "memory_entries": ops.meta["dim"] ** 2,
        "config": cfg.raw,
    }
    write_json(os.path.join(out_dir, "assembly_report.json"), report)
    return report


def cmd_spectrum(cfg: RunConfig, out_dir: str, dumps: str | None = None,
                 workers: int = 1, full: bool = True) -> dict:
    """Spectral report from a fresh assembly or from operator dumps."""
    mix, model = cfg.mixture, cfg.model
    grid = cfg.build_grid()
    if dumps is not None:
        kind_l, L_mat = load_operator(os.path.join(dumps, "L.pkop"))
        kind_k, K_mat = load_operator(os.path.join(dumps, "K.pkop"))
        dim = mix.r * grid.size
        if L_mat.shape[0] != dim:
            raise ConfigError(
                f"dump dimension {L_mat.shape[0]} != config dimension {dim}")
        from .linops import AssembledOperators, BlockOperator, DiagonalOperator
        lam_vals = (np.diag(L_mat) + np.diag(K_mat)).reshape(mix.r, grid.size)
        ops = AssembledOperators(
            lambda_op=DiagonalOperator(lam_vals, grid.speeds),
            K=BlockOperator(K_mat, mix.r, grid.size),
            L=BlockOperator(L_mat, mix.r, grid.size),
            asymmetry=float("nan"))
    else:
        asm_cfg = cfg.raw["assembly"]
        ops = assemble(mix, model, grid, pquad=cfg.build_plane(),
                       method=asm_cfg["kernel_method"],
                       entry_cap=float(asm_cfg["entry_cap"]), workers=workers,
                       diagonal=asm_cfg["diagonal"])
    basis = weighted_null_basis(mix, grid)
    rep = spectral_report(ops, mix, grid, basis,
                          gap_factor=float(cfg.raw["spectral"]["null_gap_factor"]),
                          full=full)
    out = rep.to_dict()
    out["config"] = cfg.raw
    write_json(os.path.join(out_dir, "spectral_report.json"), out)
    return out


def cmd_oracle(cfg: RunConfig, out_dir: str, target: str, seed=None,
               workers: int = 1, n_points: int = 10) -> dict:
    """Run one MC oracle against its deterministic counterpart."""
    mix, model = cfg.mixture, cfg.model
    mc = cfg.mc_config(seed, workers)
    rng = np.random.default_rng(mc.seed ^ 0xA5A5)
    points = []
    if target == "nu":
        for _ in range(n_points):
            a = int(rng.integers(0, mix.s))
            i = int(rng.integers(0, mix.species[a].n_levels))
            sp = float(rng.uniform(0.0, 6.0))
            det = float(nu(mix, model, a, i, sp))
            res = orc.mc_nu(mix, model, a, i, sp, mc)
            points.append({"point": {"alpha": a, "i": i, "speed": sp},
                           "quadrature": det, "estimate": res.estimate,
                           "stderr": res.stderr, "z": res.z_score(det)})
    elif target in ("kernel_k1", "kernel_k2", "kernel_k3"):
        fam = target[-2:]
        det_fn = {"k1": kernel_k1, "k2": kernel_k2, "k3": kernel_k3}[fam]
        mc_fn = {"k1": orc.mc_kernel_k1, "k2": orc.mc_kernel_k2,
                 "k3": orc.mc_kernel_k3}[fam]
        for _ in range(n_points):
            a = int(rng.integers(0, mix.s))
            b = int(rng.integers(0, mix.s))
            ra = mix.species[a].n_levels
            rb = mix.species[b].n_levels if fam != "k3" else ra
            i = int(rng.integers(0, ra))
            j = int(rng.integers(0, rb))
            xi = rng.normal(size=3) * 1.2
            xis = rng.normal(size=3) * 1.2
            det = float(det_fn(mix, model, a, b, i, j, xi, xis))
            res = mc_fn(mix, model, a, b, i, j, xi, xis, mc)
            points.append({"point": {"alpha": a, "beta": b, "i": i, "j": j,
                                     "xi": xi.tolist(), "xi_star": xis.tolist()},
                           "quadrature": det, "estimate": res.estimate,
                           "stderr": res.stderr, "z": res.z_score(det)})
    elif target == "weak_bracket":
        from .collision import weak_bracket
        grid = cfg.build_grid(min(cfg.grid_N, 6))
        squad = cfg.build_sphere()
        prov = MaxwellianProvider(mix, mix.equilibrium(
            bulk_velocity=(0.15, -0.1, 0.2)))

        def g_test(alpha, i, xi):
            xi = np.asarray(xi)
            return np.exp(-0.3 * np.sum(xi**2, axis=-1)) * (1.0 + 0.1 * alpha + 0.05 * i)

        det = weak_bracket(prov, g_test, mix, model, grid, squad)
        res = orc.mc_weak_bracket(prov, g_test, mix, model, mc)
        points.append({"point": {"f": "drifting maxwellian", "g": "gaussian"},
                       "quadrature": det, "estimate": res.estimate,
                       "stderr": res.stderr, "z": res.z_score(det)})
    else:
        raise ConfigError(f"unknown oracle target {target!r}")
    out = {"target": target, "samples": mc.samples, "seed": mc.seed,
           "points": points,
           "max_abs_z": max(abs(p["z"]) for p in points),
           "config": cfg.raw}
    write_json(os.path.join(out_dir, f"oracle_{target}.json"), out)
    return out


def cmd_verify(cfg: RunConfig, out_dir: str, seed=None, workers: int = 1,
               quick: bool = False) -> VerificationReport:
    """Full verification at the config's scale; exit code 1 on failure."""
    rep = cmd_validate(cfg, out_dir, seed=seed, workers=workers, quick=quick)
    rep.config = cfg.raw
    mix, model = cfg.mixture, cfg.model
    if quick:
        rep.print_lines()
        write_json(os.path.join(out_dir, "verify_report.json"), rep.to_dict())
        return rep

    grid = cfg.build_grid()
    squad = cfg.build_sphere()
    # Maxwellian annihilation
    prov = MaxwellianProvider(mix, mix.equilibrium(bulk_velocity=(0.2, -0.1, 0.15),
                                                   temperature=1.1))
    Q, loss = q_collision_field(prov, mix, model, grid, squad, return_loss=True)
    rep.add("maxwellian_annihilation", float(np.max(np.abs(Q) / np.maximum(loss, 1e-300))),
            1e-12)
    # entropy sign at a perturbed state
    rng = np.random.default_rng(cfg.mc_config(seed).seed)
    bump = rng.uniform(0.5, 1.5, size=(mix.r,))

    def fpos(alpha, i, xi):
        base = MaxwellianProvider(mix, mix.linearization_equilibrium())(alpha, i, xi)
        xi = np.asarray(xi)
        mod = 1.0 + 0.2 * np.tanh(0.3 * xi[..., 0]) * bump[mix.flat_index(alpha, i)]
        return base * mod

    w_val, w_scale = entropy_production(fpos, mix, model, grid, squad,
                                        return_scale=True)
    rep.add("entropy_nonpositive", w_val / w_scale, 1e-15)

    # assembled operator checks
    asm_cfg = cfg.raw["assembly"]
    ops = assemble(mix, model, grid, pquad=cfg.build_plane(),
                   method=asm_cfg["kernel_method"],
                   entry_cap=float(asm_cfg["entry_cap"]), workers=workers,
                   diagonal=asm_cfg["diagonal"])
    rep.add("assembly_asymmetry", ops.asymmetry,
            float(cfg.raw["spectral"]["asymmetry_threshold"]))
    basis = weighted_null_basis(mix, grid)
    srep = spectral_report(ops, mix, grid, basis,
                           gap_factor=float(cfg.raw["spectral"]["null_gap_factor"]))
    rep.add("L_min_eigenvalue", -srep.min_eigenvalue,
            1e-8 * max(abs(srep.max_eigenvalue), abs(srep.min_eigenvalue)))
    rep.add("nu_minus_positive", srep.nu_minus, 0.0, larger_is_worse=False)
    rep.add("lambda_coercivity_in_(0,1]", float(0.0 < srep.lambda_coercivity <= 1.0),
            1.0, larger_is_worse=False)
    rep.print_lines()
    write_json(os.path.join(out_dir, "verify_report.json"), rep.to_dict())
    return rep


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polykin",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Config defaults:\n" + json.dumps(DEFAULTS, indent=2))
    parser.add_argument("command",
                        choices=["validate", "nu", "kernel", "assemble",
                                 "spectrum", "verify", "oracle"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--quick", action="store_true")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--species", type=int, default=0, help="nu: species index")
    parser.add_argument("--level", type=int, default=0, help="nu: level index")
    parser.add_argument("--speeds", default="0:8:17",
                        help="nu: comma list or start:stop:count")
    parser.add_argument("--family", default="k1", help="kernel: k1|k2|k3")
    parser.add_argument("--target", default="nu",
                        help="oracle: nu|kernel_k1|kernel_k2|kernel_k3|weak_bracket")
    parser.add_argument("--dumps", default=None,
                        help="spectrum: directory with PKOP dumps")
    return parser


def _parse_speeds(spec: str) -> np.ndarray:
    if ":" in spec:
        start, stop, count = spec.split(":")
        return np.linspace(float(start), float(stop), int(count))
    return np.array([float(x) for x in spec.split(",")])


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or cfg.raw["output"]["directory"]
    os.makedirs(out_dir, exist_ok=True)
    try:
        if args.command == "validate":
            rep = cmd_validate(cfg, out_dir, seed=args.seed,
                               workers=args.workers, quick=args.quick)
            rep.print_lines()
            return 0 if rep.passed else 1
        if args.command == "nu":
            path = cmd_nu(cfg, out_dir, args.species, args.level,
                          _parse_speeds(args.speeds))
            print(path)
            return 0
        if args.command == "kernel":
            print(cmd_kernel(cfg, out_dir, args.family, seed=args.seed))
            return 0
        if args.command == "assemble":
            rep = cmd_assemble(cfg, out_dir, workers=args.workers)
            print(json.dumps({k: rep[k] for k in
                              ("dim", "asymmetry", "elapsed_s")}, indent=2))
            return 0
        if args.command == "spectrum":
            rep = cmd_spectrum(cfg, out_dir, dumps=args.dumps,
                               workers=args.workers, full=not args.quick)
            print(json.dumps({k: rep[k] for k in
                              ("null_dim_estimate", "null_gap",
                               "lambda_coercivity", "nu_minus", "nu_plus")},
                             indent=2))
            return 0
        if args.command == "oracle":
            rep = cmd_oracle(cfg, out_dir, args.target, seed=args.seed,
                             workers=args.workers,
                             n_points=3 if args.quick else 10)
            print(json.dumps({"target": rep["target"],
                              "max_abs_z": rep["max_abs_z"]}, indent=2))
            return 0 if rep["max_abs_z"] <= 3.0 else 1
        if args.command == "verify":
            rep = cmd_verify(cfg, out_dir, seed=args.seed,
                             workers=args.workers, quick=args.quick)
            return 0 if rep.passed else 1
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
