"""Command-line front end.

Exit codes: 0 success, 1 a verified property failed, 2 the minimizer did
not converge, 3 invalid parameters or missing artifacts.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import kinetic as kn
from . import minimizer as mn
from . import rearrange3d as r3
from . import verify as vf
from .gravity import epot as radial_epot
from .errors import ConstraintViolation, InvalidArgument, NumericFailure
from .radial import SCHEMA_VERSION, load_profile, make_grid, psi
from .reduced import ModelParams

EXIT_OK, EXIT_VIOLATION, EXIT_NONCONVERGENCE, EXIT_INVALID = 0, 1, 2, 3

log = logging.getLogger("vpmin")

DEFAULTS = {
    "mu": 1.5,
    "mass": 1.0,
    "j_norm": 1.0,
    "k11": "1.0",
    "grid_n": 2000,
    "r_max": 20.0,
    "spacing": "log",
    "tol": 1e-9,
    "max_iter": 2000,
    "damping": 0.5,
    "seed": 0,
    "out_dir": None,
}

CASTS = {"mu": float, "mass": float, "j_norm": float, "k11": str, "grid_n": int,
         "r_max": float, "spacing": str, "tol": float, "max_iter": int,
         "damping": float, "seed": int, "out_dir": str}

ALIASES = {"j": "j_norm", "n": "grid_n"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgument(f"{path}:{lineno}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            key = ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if key not in CASTS:
                raise InvalidArgument(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = CASTS[key](value)
            except ValueError as exc:
                raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
    return out


def resolve_config(args):
    cfg = dict(DEFAULTS)
    cfg["out_dir"] = os.environ.get("VPMIN_OUT", ".")
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for key in CASTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["spacing"] not in ("log", "uniform"):
        raise InvalidArgument(f"unknown spacing {cfg['spacing']!r}")
    for key in ("tol", "r_max", "damping"):
        if not cfg[key] > 0:
            raise InvalidArgument(f"{key} must be positive")
    if cfg["max_iter"] < 1:
        raise InvalidArgument("max_iter must be at least 1")
    if not 0 < cfg["damping"] <= 1:
        raise InvalidArgument("damping must lie in (0, 1]")
    return cfg


def resolve_k11(cfg):
    """Numeric K11 and where it came from."""
    token = str(cfg["k11"]).strip()
    if token == "oracle":
        return kn.k11_oracle(cfg["mu"], np.random.default_rng(cfg["seed"])), "oracle"
    try:
        return float(token), "given"
    except ValueError:
        raise InvalidArgument(f"k11 must be a number or 'oracle', got {token!r}") from None


def _params(cfg):
    # validate mu before a possibly expensive oracle call
    ModelParams(cfg["mu"], cfg["mass"], cfg["j_norm"], 1.0)
    k11, source = resolve_k11(cfg)
    return ModelParams(cfg["mu"], cfg["mass"], cfg["j_norm"], k11), source


# output ---------------------------------------------------------------------

def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if not np.isfinite(x):
            return repr(x)
        return float(format(x, ".17g"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data):
    data = {"schema_version": SCHEMA_VERSION, **data}
    _atomic_write(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _write_via_temp(path, writer):
    """Run ``writer(tmp_path)`` and move the file into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# commands -------------------------------------------------------------------

def cmd_minimize(cfg):
    params, source = _params(cfg)
    opts = mn.SCFOptions(tol=cfg["tol"], max_iter=cfg["max_iter"], damping=cfg["damping"])
    out_dir = Path(cfg["out_dir"])
    try:
        res = mn.minimize(params, r_max=cfg["r_max"], n=cfg["grid_n"],
                          spacing=cfg["spacing"], opts=opts)
    except NumericFailure as exc:
        print(f"minimize: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    pred = mn.predicted_polytrope(params)
    summary = res.summary()
    summary.pop("schema_version")
    summary.update({
        "k11_source": source,
        "euler_lagrange_residual": mn.euler_lagrange_residual(res.rho0, params),
        "xi1_scf": res.r_support / pred.length_scale,
        "xi1_oracle": pred.solution.xi1,
        "spacing": cfg["spacing"],
    })
    _write_via_temp(out_dir / "profile.csv", lambda p: res.potential.save(p, res.rho0))
    write_json(out_dir / "result.json", summary)
    print(f"E = {res.energy.total:.12g}  iterations = {res.iterations}  "
          f"r_support = {res.r_support:.8g}")
    return EXIT_OK


def cmd_verify(cfg, suite, mu_given):
    names = vf.SUITES if suite == "all" else (suite,)
    mu = cfg["mu"] if mu_given else None
    if mu is not None:
        ModelParams(mu, 1.0)
    out_dir = Path(cfg["out_dir"])
    ok = True
    summary = {}
    for name in names:
        res = vf.run_suite(name, mu=mu, seed=cfg["seed"])
        res.pop("runtime_s")
        res["seed"] = cfg["seed"]
        write_json(out_dir / f"verify_{name}.json", res)
        summary[name] = res["passed"]
        ok &= res["passed"]
        status = "PASS" if res["passed"] else "FAIL"
        print(f"{status} {name}")
        for prop, r in res["properties"].items():
            if not r["passed"]:
                print(f"    {prop}: {r['violations']}/{r['count']} violations, "
                      f"max {r['max_violation']:.3g}")
    if suite == "all":
        write_json(out_dir / "verify_all.json",
                   {"suite": "all", "passed": ok, "suites": summary, "seed": cfg["seed"]})
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_report(cfg):
    out_dir = Path(cfg["out_dir"])
    result_path = out_dir / "result.json"
    verify_paths = sorted(p for p in out_dir.glob("verify_*.json") if p.name != "verify_all.json")
    if not result_path.exists() and not verify_paths:
        print(f"report: no artifacts in {out_dir}", file=sys.stderr)
        return EXIT_INVALID
    report = {}
    if result_path.exists():
        res = json.loads(result_path.read_text())
        report["minimizer"] = {k: res.get(k) for k in (
            "mu", "mass", "j_norm", "k11", "k11_source", "energy", "iterations",
            "residual", "r_support", "euler_lagrange_residual", "xi1_scf", "xi1_oracle")}
        if res.get("xi1_oracle"):
            report["minimizer"]["xi1_rel_diff"] = abs(res["xi1_scf"] / res["xi1_oracle"] - 1)
    suites = {}
    for path in verify_paths:
        data = json.loads(path.read_text())
        suites[data["suite"]] = {
            "passed": data["passed"],
            "properties": {k: {"passed": v["passed"], "count": v["count"],
                               "max_violation": v["max_violation"]}
                           for k, v in data["properties"].items()},
            "info": data.get("info", {}),
        }
    report["suites"] = suites
    report["all_passed"] = all(s["passed"] for s in suites.values()) if suites else None
    report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    write_json(out_dir / "report.json", report)
    for name, s in suites.items():
        print(f"{'PASS' if s['passed'] else 'FAIL'} {name}")
    return EXIT_OK


def cmd_rearrange(cfg, size):
    if not 2 <= size <= r3.MAX_CELLS_PER_AXIS:
        raise InvalidArgument(f"size must lie in [2, {r3.MAX_CELLS_PER_AXIS}]")
    rng = np.random.default_rng(cfg["seed"])
    rho = r3.random_density((size,) * 3, rng, total_mass=cfg["mass"])
    star = r3.rearrange(rho)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        for name, d in (("density", rho), ("rearranged", star)):
            d.save(Path(tmp) / f"{name}.csv", Path(tmp) / f"{name}.json")
            for ext in ("csv", "json"):
                os.replace(Path(tmp) / f"{name}.{ext}", out_dir / f"{name}.{ext}")
    rows = {}
    for k in ("coulomb",) + vf.RIESZ_CUTOFFS:
        rows[str(k)] = {"original": r3.interaction(rho, rho, k),
                        "rearranged": r3.interaction(star, star, k)}
    proj = r3.radial_project(star)
    data = {"dims": [size] * 3, "seed": cfg["seed"], "mass": rho.mass,
            "interactions": rows, "radial_projection_epot": radial_epot(proj),
            "epot_3d": r3.epot(star)}
    write_json(out_dir / "rearrange.json", data)
    ok = all(v["rearranged"] >= v["original"] - 1e-12 for v in rows.values())
    for k, v in rows.items():
        print(f"{k:>8}: {v['original']:.10g} -> {v['rearranged']:.10g}")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_reduce_check(cfg, profile):
    mu = cfg["mu"]
    ModelParams(mu, 1.0)
    rng = np.random.default_rng(cfg["seed"])
    if profile:
        if not Path(profile).exists():
            print(f"reduce-check: missing profile {profile}", file=sys.stderr)
            return EXIT_INVALID
        rho = load_profile(profile)
    else:
        rho = vf.random_radial_density(make_grid(5.0, 300, "log"), rng, cfg["mass"])
    res = kn.global_reduce(rho, cfg["j_norm"], mu)
    d_err, j_err = kn.reconstruction_errors(rho, res)
    comp = kn.competitor_energies(rho, res, rng, count=20)
    data = {"mu": mu, "j_norm": cfg["j_norm"], "ekin_min": res.ekin_min,
            "k11_fit": res.k11_fit, "psi": psi(rho, mu),
            "lagrange_lambda": res.lagrange_lambda,
            "density_rel_err": d_err, "norm_rel_err": j_err,
            "min_competitor_ratio": float(comp.min() / res.ekin_min), "seed": cfg["seed"]}
    write_json(Path(cfg["out_dir"]) / "reduce_check.json", data)
    print(f"K11 = {res.k11_fit:.12g}  density err = {d_err:.3g}  J err = {j_err:.3g}")
    ok = d_err <= 1e-6 and j_err <= 1e-6 and comp.min() >= res.ekin_min
    return EXIT_OK if ok else EXIT_VIOLATION


# parser ---------------------------------------------------------------------

def _common(p, with_model=True):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default $VPMIN_OUT or .)")
    if with_model:
        p.add_argument("--mu", type=float)
        p.add_argument("--mass", type=float)
        p.add_argument("--j", "--j-norm", dest="j_norm", type=float)
        p.add_argument("--k11", help="a number or 'oracle'")


def build_parser():
    ap = _Parser(prog="vpmin", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("minimize", help="run the SCF minimizer")
    _common(p)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--spacing", choices=("log", "uniform"))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--damping", type=float)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=vf.SUITES + ("all",))
    _common(p)

    p = sub.add_parser("report", help="consolidate artifacts into report.json")
    _common(p, with_model=False)

    p = sub.add_parser("rearrange", help="3D rearrangement demo")
    _common(p)
    p.add_argument("--size", type=int, default=12)

    p = sub.add_parser("reduce-check", help="kinetic reduction of one density")
    _common(p)
    p.add_argument("--profile", help="r,rho CSV; random density if omitted")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "minimize":
            return cmd_minimize(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite, mu_given=args.mu is not None)
        if args.command == "report":
            return cmd_report(cfg)
        if args.command == "rearrange":
            return cmd_rearrange(cfg, args.size)
        if args.command == "reduce-check":
            return cmd_reduce_check(cfg, args.profile)
    except (InvalidArgument, ConstraintViolation, FileNotFoundError) as exc:
        print(f"vpmin: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericFailure as exc:
        print(f"vpmin: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
