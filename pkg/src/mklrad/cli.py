"""Config-driven experiment runner.

Subcommands: bounds | nu-curve | sandwich | excess | verify | estimate.
Each takes a JSON config file and writes CSV/JSON results whose bytes are
fully determined by (config, seed), independent of the worker count.

Exit codes: 0 success, 2 config error, 3 numeric-domain error, 4 assertion
failure in verify/sandwich.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import MklClass
from .spectra import SpectrumSet, spectrum_from_config
from . import bounds as bnd
from . import excess as exc
from . import empirical as emp

SCHEMA_VERSION = "v1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_ASSERTION = 4


class ConfigError(Exception):
    """Structural problem in the config file (missing key, wrong type)."""


class NumericDomainError(Exception):
    """A numeric field violates the owning type's invariants."""


def _fmt(x) -> str:
    """17 significant digits: round-trip exact for 64-bit floats."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def _need(cfg: dict, key: str, path: str = ""):
    if key not in cfg:
        raise ConfigError(f"missing config key {path}{key}")
    return cfg[key]


def _domain(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as e:
        raise NumericDomainError(f"{path}: {e}") from e


def _load_class(cfg: dict, path: str = "class.") -> MklClass:
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path[:-1]} must be an object")
    p = _need(cfg, "p", path)
    D = _need(cfg, "D", path)
    M = _need(cfg, "M", path)
    return _domain(path[:-1], MklClass, p=p, D=D, M=M)


def _load_spectra(cfg, M: int, path: str = "spectra") -> SpectrumSet:
    if isinstance(cfg, dict):
        cfg = [cfg] * M
    if not isinstance(cfg, list):
        raise ConfigError(f"{path} must be a list (or one spectrum to replicate)")
    if len(cfg) != M:
        raise ConfigError(f"{path} must list {M} spectra, got {len(cfg)}")
    specs = [_domain(f"{path}[{i}]", spectrum_from_config, c)
             for i, c in enumerate(cfg)]
    return _domain(path, SpectrumSet, specs)


def _load_generator(cfg: dict, M: int, seed: int,
                    path: str = "generator.") -> emp.GeneratorSpec:
    spec = _load_spectra(_need(cfg, "spectra", path), M, path + "spectra")
    law = cfg.get("coordinate_law", emp.RADEMACHER_SCALED)
    return _domain(path[:-1], emp.GeneratorSpec, spec=spec,
                   coordinate_law=law,
                   iid_blocks=bool(cfg.get("iid_blocks", False)), seed=seed)


def _load_mc(cfg: dict, seed: int, path: str = "mc.") -> emp.McConfig:
    return _domain(path[:-1], emp.McConfig,
                   n=cfg.get("n", 200), S=cfg.get("S", 200), seed=seed,
                   solver_tol=cfg.get("solver_tol", 1e-6))


def _grid(cfg, path: str) -> np.ndarray:
    """A grid is either an explicit list or {start, stop, step}/{start,
    stop, count, log}."""
    if isinstance(cfg, list):
        if not cfg:
            raise ConfigError(f"{path} must be nonempty")
        return np.asarray(cfg, dtype=float)
    if isinstance(cfg, dict):
        start = float(_need(cfg, "start", path + "."))
        stop = float(_need(cfg, "stop", path + "."))
        if "step" in cfg:
            n = int(round((stop - start) / float(cfg["step"]))) + 1
            return np.linspace(start, stop, n)
        count = int(_need(cfg, "count", path + "."))
        if cfg.get("log", False):
            return np.geomspace(start, stop, count)
        return np.linspace(start, stop, count)
    raise ConfigError(f"{path} must be a list or a grid object")


def _write_csv(out_dir: Path, name: str, command: str, columns, rows) -> Path:
    path = out_dir / name
    lines = [f"# schema: mklrad/{command}/{SCHEMA_VERSION}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(x) if not isinstance(x, str) else x
                              for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    path = out_dir / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True,
                               allow_nan=True) + "\n")
    return path


def _pool_map(threads: int, fn, items):
    """Ordered map over grid points; identical output for any worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_bounds(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    cls = _load_class(_need(cfg, "class"))
    n = int(_need(cfg, "n"))
    B = float(cfg.get("B", 1.0))
    formulas = _need(cfg, "formulas")
    if not isinstance(formulas, list) or not formulas:
        raise ConfigError("formulas must be a nonempty list")
    r_grid = _grid(_need(cfg, "r_grid"), "r_grid")
    t_fixed = cfg.get("t")
    spectra = None
    if "spectra" in cfg:
        spectra = _load_spectra(cfg["spectra"], cls.M)
    traces = cfg.get("traces")
    joint = None
    c_abs = float(cfg.get("c_abs", 1.0))

    def one(formula_r):
        formula, r = formula_r
        q = _domain("r_grid", bnd.LocalQuery, cls=cls, r=float(r), n=n, B=B)
        if formula == "GRC_EMP":
            if traces is None:
                raise ConfigError("GRC_EMP needs a 'traces' list")
            rep = bnd.grc_empirical(cls, traces, n, t=t_fixed)
        elif formula == "GRC_POP":
            rep = bnd.grc_population(cls, _spectra(), n, B, t=t_fixed)
        elif formula == "LRC_P12":
            rep = bnd.lrc_upper_p12(q, _spectra(), t=t_fixed)
        elif formula == "LRC_PGE2":
            rep = bnd.lrc_upper_pge2(q, _joint())
        elif formula == "LRC_P1":
            rep = bnd.lrc_upper_p1(q, _spectra())
        elif formula == "LOWER":
            rep = bnd.lrc_lower(q, _spectra()[0], c_abs=c_abs)
        else:
            raise ConfigError(f"unknown formula {formula!r}")
        return (formula, cls.p.p, rep.t_used, float(r), rep.value,
                rep.main_term, rep.remainder_term)

    def _spectra():
        if spectra is None:
            raise ConfigError("this formula set needs 'spectra'")
        return spectra

    def _joint():
        nonlocal joint
        if joint is None:
            joint = _spectra().joint_spectrum()
        return joint

    work = [(f, r) for f in formulas for r in r_grid]
    rows = _pool_map(threads, _domain_wrap(one), work)
    _write_csv(out_dir, "bounds.csv", "bounds",
               ["formula_id", "p", "t_used", "r", "value", "main_term",
                "remainder_term"], rows)
    return EXIT_OK


def _domain_wrap(fn):
    """clean ValueErrors raised inside grid workers become domain errors"""
    def inner(item):
        try:
            return fn(item)
        except (ConfigError, NumericDomainError):
            raise
        except (ValueError, TypeError) as e:
            raise NumericDomainError(str(e)) from e
    return inner


def cmd_nu_curve(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    alpha = float(_need(cfg, "alpha"))
    M = int(_need(cfg, "M"))
    betas = _need(cfg, "betas")
    if not isinstance(betas, list) or not betas:
        raise ConfigError("betas must be a nonempty list")
    p_grid = _grid(cfg.get("p_grid", {"start": 1.0, "stop": 2.0, "step": 0.02}),
                   "p_grid")

    def one(beta):
        bayes = exc.SoftSparseBayes(beta=float(beta), M=M)
        return exc.nu_curve(bayes, alpha, p_grid)

    curves = _pool_map(threads, _domain_wrap(one), betas)
    rows = []
    summary = {"alpha": alpha, "M": M, "argmin": {}}
    for beta, curve in zip(betas, curves):
        for p, nu in zip(curve.p_grid, curve.nu):
            rows.append((float(beta), float(p), float(nu)))
        summary["argmin"][str(beta)] = {"p": curve.argmin_p,
                                        "nu": curve.argmin_nu}
    _write_csv(out_dir, "nu_curve.csv", "nu-curve", ["beta", "p", "nu_p"], rows)
    _write_json(out_dir, "nu_curve_summary.json", summary)
    return EXIT_OK


def cmd_sandwich(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    cls = _load_class(_need(cfg, "class"))
    gen = _load_generator(_need(cfg, "generator"), cls.M, seed)
    if not gen.iid_blocks:
        raise ConfigError("sandwich needs generator.iid_blocks = true")
    mc = _load_mc(cfg.get("mc", {}), seed)
    r_grid = _grid(_need(cfg, "r_grid"), "r_grid")
    c_abs = float(cfg.get("c_abs", 1.0))
    B = gen.kernel_bound()

    def one(r):
        r = float(r)
        q = bnd.LocalQuery(cls=cls, r=r, n=mc.n, B=B)
        upper = bnd.lrc_upper_p12(q, gen.spec).value
        flag = ""
        try:
            lower = bnd.lrc_lower(q, gen.spec[0], c_abs=c_abs).value
        except bnd.LowerBoundPreconditionError:
            lower, flag = math.nan, "lower_precondition_violated"
        try:
            est = emp.lrc_empirical_mc(gen, cls, r, mc)
            est_val, est_se = est.estimate, est.std_error
        except emp.SolverConvergenceError as e:
            est_val, est_se = math.nan, math.nan
            flag = (flag + ";" if flag else "") + f"solver: {e}"
        return (r, lower, est_val, est_se, upper, flag)

    rows = _pool_map(threads, _domain_wrap(one), r_grid)
    _write_csv(out_dir, "sandwich.csv", "sandwich",
               ["r", "lower", "mc_estimate", "mc_stderr", "upper", "flags"],
               rows)
    bad = []
    kappas = []
    for r, lower, est_val, est_se, upper, flag in rows:
        if not math.isnan(est_val) and est_val > upper + 2.0 * est_se:
            bad.append(r)
        if not math.isnan(lower) and lower > 0 and not math.isnan(est_val):
            kappas.append(est_val / lower)
    _write_json(out_dir, "sandwich_summary.json", {
        "violations": bad,
        "kappa_lower_ratio_min": min(kappas) if kappas else None,
        "kappa_lower_ratio_max": max(kappas) if kappas else None,
    })
    if bad:
        print(f"sandwich: {len(bad)} upper-bound violations", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_excess(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    cls = _load_class(_need(cfg, "class"))
    risk = _need(cfg, "risk")
    n_grid = _grid(_need(cfg, "n_grid"), "n_grid")

    def params_at(n: int) -> exc.RiskParams:
        return _domain("risk", exc.RiskParams, B=risk.get("B", 1.0),
                       L=risk.get("L", 1.0), F=risk.get("F", 1.0), n=int(n),
                       x_conf=risk.get("x_conf", 1.0),
                       loss_range=tuple(risk.get("loss_range", (-1.0, 1.0))))

    report = {"n_grid": [int(n) for n in n_grid]}
    rows = []
    rate = None
    if "rate" in cfg:
        rc = cfg["rate"]
        if "M" in rc:
            rate = _domain("rate", exc.RateSpec.uniform,
                           float(_need(rc, "d", "rate.")),
                           float(_need(rc, "alpha", "rate.")), int(rc["M"]))
        else:
            rate = _domain("rate", exc.RateSpec, _need(rc, "d", "rate."),
                           _need(rc, "alpha", "rate."))
        if rate.M != cls.M:
            raise ConfigError("rate and class disagree on M")

    spectra = None
    if "spectra" in cfg:
        spectra = _load_spectra(cfg["spectra"], cls.M)

    def one(n):
        n = int(n)
        rp = params_at(n)
        row = {"n": n}
        if rate is not None:
            rep = exc.excess_risk_bound(cls, rate, rp,
                                        ratio_variant=cfg.get("ratio_variant",
                                                              "auto"))
            row["thm"] = rep
        if spectra is not None:
            fp = exc.fixed_point_bound(cls, spectra, rp)
            row["fp"] = fp
            row["fp_excess"] = exc.excess_from_fixed_point(fp.r_star, rp)
        return row

    results = _pool_map(threads, _domain_wrap(one), n_grid)
    sign_fix = False
    fallback = False
    for res in results:
        row = [res["n"]]
        if rate is not None:
            rep = res["thm"]
            row += [rep.value, rep.main_term, rep.t_used]
            sign_fix |= rep.sign_fix_applied
            fallback |= rep.ratio_fallback
        if spectra is not None:
            row += [res["fp"].r_star, res["fp_excess"]]
        rows.append(tuple(row))
    columns = ["n"]
    if rate is not None:
        columns += ["excess_bound", "main_term", "t_used"]
    if spectra is not None:
        columns += ["fixed_point", "fp_excess_bound"]
    _write_csv(out_dir, "excess.csv", "excess", columns, rows)

    if rate is not None:
        mains = np.array([res["thm"].main_term for res in results])
        report["main_term_slope"] = exc.fit_loglog_slope(n_grid, mains)
        report["expected_slope"] = -rate.alpha_min / (1.0 + rate.alpha_min)
        report["sign_fix_applied"] = bool(sign_fix)
        report["ratio_fallback_alpha3"] = bool(fallback)
    if spectra is not None:
        fps = np.array([res["fp"].r_star for res in results])
        report["fixed_point_slope"] = exc.fit_loglog_slope(n_grid, fps)
        first = results[0]["fp"]
        report["fixed_point_at_first_n"] = {
            "r_star": first.r_star, "h_used": list(first.h_used),
            "t_used": first.t_used}
    _write_json(out_dir, "excess_summary.json", report)
    return EXIT_OK


def cmd_verify(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    report = {}
    failures = []

    kh = cfg.get("khintchine", {"n": 8, "dim": 3, "q_list": [2, 3, 4],
                                "trials": 1000})
    kh_rows = {}
    for q in kh.get("q_list", [2, 3, 4]):
        res = emp.verify_khintchine(int(kh.get("n", 8)), int(kh.get("dim", 3)),
                                    float(q), int(kh.get("trials", 1000)),
                                    seed=seed)
        kh_rows[str(q)] = res
        if res["c=q"] != 0:
            failures.append(f"khintchine c=q violated at q={q}")
    report["khintchine"] = kh_rows

    ry = cfg.get("rosenthal", {"n": 10, "B": 1.0, "q_list": [1, 2, 3],
                               "trials": 500})
    ry_rows = {}
    for q in ry.get("q_list", [1, 2, 3]):
        count = emp.verify_rosenthal_young(
            int(ry.get("n", 10)), float(ry.get("B", 1.0)), float(q),
            int(ry.get("trials", 500)), seed=seed,
            levels=int(ry.get("levels", 3)))
        ry_rows[str(q)] = count
        if count != 0:
            failures.append(f"rosenthal-young violated at q={q}")
    report["rosenthal_young"] = ry_rows

    q_max = int(cfg.get("poisson_q_max", 10))
    rows = emp.verify_poisson_moment(q_max)
    report["poisson"] = [
        {"q": q, "moment": mom, "bound": bound} for q, mom, bound in rows]
    for q, mom, bound in rows:
        if mom > bound * (1.0 + 1e-12):
            failures.append(f"poisson moment bound violated at q={q}")

    trials = int(cfg.get("random_inequalities_trials", 1000))
    for name, fn in (("block_holder", emp.verify_block_holder),
                     ("lq_lp_conversion", emp.verify_lq_lp_conversion),
                     ("norm_subadditivity", emp.verify_norm_subadditivity)):
        count = fn(trials, seed=seed)
        report[name] = {"trials": trials, "violations": count}
        if count != 0:
            failures.append(f"{name} violated")

    report["failures"] = failures
    _write_json(out_dir, "verify_summary.json", report)
    if failures:
        print("verify: " + "; ".join(failures), file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_estimate(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    cls = _load_class(_need(cfg, "class"))
    gen = _load_generator(_need(cfg, "generator"), cls.M, seed)
    mc = _load_mc(cfg.get("mc", {}), seed)
    mode = cfg.get("mode", "grc")
    if mode == "grc":
        data = emp.generate_sample(gen, mc.n)
        est = emp.grc_empirical_mc(data, cls, mc)
    elif mode == "lrc":
        r = float(_need(cfg, "r"))
        est = emp.lrc_empirical_mc(gen, cls, r, mc)
    else:
        raise ConfigError(f"unknown estimate mode {mode!r}")
    rows = [(i, v) for i, v in enumerate(est.draws)]
    _write_csv(out_dir, "estimate.csv", "estimate", ["draw", "value"], rows)
    _write_json(out_dir, "estimate_summary.json", {
        "mode": mode, "estimate": est.estimate, "std_error": est.std_error,
        "S": mc.S, "n": mc.n})
    return EXIT_OK


# ---------------------------------------------------------------------------


_COMMANDS = {
    "bounds": cmd_bounds,
    "nu-curve": cmd_nu_curve,
    "sandwich": cmd_sandwich,
    "excess": cmd_excess,
    "verify": cmd_verify,
    "estimate": cmd_estimate,
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    return cfg


def serialize_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mklrad",
        description="complexity bounds and Monte Carlo experiments for "
                    "block-norm kernel classes")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker pool size for grid points")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir, seed, args.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericDomainError as e:
        print(f"numeric-domain error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
