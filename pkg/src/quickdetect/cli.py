"""Command-line front end.

Every command resolves its configuration (built-in defaults, then an
optional JSON file, then flags), runs, and writes CSV tables plus a
``manifest.json`` into ``<out>/<command>/<name>/``.  The default name is a
hash of the resolved configuration, so reruns land in the same place and
produce the same bytes.
"""
import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import _accel, io
from .errors import ConfigError, DomainError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "lambda": 0.1,
    "c": 0.01,
    "alpha": 1.0,
    "p": 0.0,
    "mu": 1.0,
    "n": 10,
    "epsilon": 0.1,
    "seed": 12345,
    "episodes": 200000,
    "phibar": None,
    "phi_points": 551,
    "phi_step": 0.1,
    "dt": 0.1,
    "quadrature": 64,
    "interpolation": "linear",
    "grid": "fixed",
    "mode": "heuristic",
    "schedules": [2.0, 5.0, 10.0],
    "count": 1,
    "rights": None,
    "y_stride": 1,
}

FLAG_KEYS = {
    "lambda": float, "c": float, "alpha": float, "p": float, "mu": float, "n": int,
    "epsilon": float, "seed": int, "episodes": int, "phibar": float, "phi_points": int,
    "phi_step": float, "dt": float, "quadrature": int, "interpolation": str, "grid": str,
    "mode": str, "count": int, "rights": int, "y_stride": int,
}


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "schedules", None):
        cfg["schedules"] = [float(x) for x in args.schedules.split(",") if x.strip()]
    _validate(cfg)
    return cfg


def _validate(cfg):
    for key in ("phi_points", "quadrature", "episodes", "count", "y_stride"):
        if int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be positive")
    for key in ("epsilon", "dt", "phi_step", "mu"):
        if not float(cfg[key]) > 0:
            raise ConfigError(f"{key} must be positive")
    if int(cfg["n"]) < 0:
        raise ConfigError("n must be >= 0")
    if cfg["interpolation"] not in ("linear", "constant"):
        raise ConfigError("interpolation must be 'linear' or 'constant'")
    if cfg["grid"] not in ("fixed", "bound"):
        raise ConfigError("grid must be 'fixed' or 'bound'")
    if cfg["mode"] not in ("heuristic", "exact"):
        raise ConfigError("mode must be 'heuristic' or 'exact'")
    if not cfg["schedules"] or any(not float(s) > 0 for s in cfg["schedules"]):
        raise ConfigError("schedules must be positive gaps")


def _params(cfg, with_mu=False):
    from .model import ModelParams
    try:
        return ModelParams(float(cfg["lambda"]), float(cfg["c"]), float(cfg["alpha"]),
                           float(cfg["p"]), float(cfg["mu"]) if with_mu else None)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _outdir(args, command, cfg):
    name = args.name or hashlib.sha256(io.dumps(cfg).encode()).hexdigest()[:12]
    out = Path(args.out) / command / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _phibar(cfg, params):
    if cfg["phibar"] is not None:
        return float(cfg["phibar"])
    from .continuous import phibar
    try:
        return phibar(params)
    except NumericalError as exc:
        raise ConfigError(f"phibar unavailable: {exc}") from exc


def _solve_lump(cfg, n=None):
    from .lump import solve_lump
    params = _params(cfg)
    return solve_lump(params, int(cfg["n"] if n is None else n), float(cfg["epsilon"]),
                      phibar=_phibar(cfg, params), phi_points=int(cfg["phi_points"]),
                      dt=float(cfg["dt"]), quadrature=int(cfg["quadrature"]),
                      interpolation=cfg["interpolation"], grid=cfg["grid"])


def _solve_arrival(cfg):
    from .arrival import solve_arrival
    params = _params(cfg, with_mu=True)
    if int(cfg["n"]) < 1:
        raise ConfigError("the arrival problem needs n >= 1")
    return solve_arrival(params, int(cfg["n"]), phibar=_phibar(cfg, params),
                         phi_points=int(cfg["phi_points"]), ds=float(cfg["dt"]),
                         quadrature=int(cfg["quadrature"]), mode=cfg["mode"],
                         interpolation=cfg["interpolation"])


def cmd_solve_lump(args, cfg):
    sol = _solve_lump(cfg)
    out = _outdir(args, "solve-lump", cfg)
    files = io.export_lump(sol, out)
    diag = dict(sol.diagnostics, values_at_zero=sol.values_at_zero())
    io.write_json(out / "manifest.json", io.manifest("solve-lump", cfg, out, files, diagnostics=diag))
    return out


def cmd_solve_continuous(args, cfg):
    from .continuous import solve_continuous
    params = _params(cfg)
    sol = solve_continuous(params, float(cfg["phi_step"]), cfg["interpolation"])
    out = _outdir(args, "solve-continuous", cfg)
    files = io.export_continuous(sol, out)
    diag = dict(sol.ode_stats, phibar=sol.phibar, value_at_zero=sol.value_at_zero)
    io.write_json(out / "manifest.json", io.manifest("solve-continuous", cfg, out, files, diagnostics=diag))
    return out


def cmd_solve_arrival(args, cfg):
    lat = _solve_arrival(cfg)
    out = _outdir(args, "solve-arrival", cfg)
    files = io.export_arrival(lat, out, int(cfg["y_stride"]))
    diag = dict(lat.diagnostics, violations=lat.violations,
                values_at_zero={f"{j},{k}": float(t.values[0, 0]) for (j, k), t in lat.tables.items()})
    io.write_json(out / "manifest.json", io.manifest("solve-arrival", cfg, out, files, diagnostics=diag))
    return out


def _load_policy(path, cfg):
    from .simulate import Policy
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        man = json.loads(path.read_text())
        pcfg, command = man["config"], man["command"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read policy manifest {path}: {exc}") from exc
    # solves are deterministic, so the policy is rebuilt from its recorded config
    if command == "solve-lump":
        sol = _solve_lump(pcfg)
        rights = pcfg["n"] if cfg["rights"] is None else cfg["rights"]
        if not 0 <= rights <= sol.n_max:
            raise ConfigError(f"rights must lie in [0, {sol.n_max}]")
        policy = Policy.lump(sol, int(rights))
    elif command == "solve-arrival":
        policy = Policy.arrival(_solve_arrival(pcfg))
    else:
        raise ConfigError(f"manifest of '{command}' does not describe a policy")
    return policy, pcfg, {"policy_manifest": io.sha256_file(path)}


def cmd_simulate(args, cfg):
    from .model import bayes_risk_from_value
    from .simulate import estimate_risk
    policy, pcfg, inputs = _load_policy(args.policy, cfg)
    params = _params(pcfg, with_mu=policy.kind == "arrival")
    cfg = dict(cfg, policy_config=pcfg)
    est, eps = estimate_risk(policy, params, int(cfg["episodes"]), int(cfg["seed"]),
                             return_episodes=True)
    out = _outdir(args, "simulate", cfg)
    files = []
    if args.episodes_csv:
        io.export_episodes(out / "episodes.csv", eps)
        files.append("episodes.csv")
    if policy.kind == "lump":
        v = float(policy.solution.value(policy.n, params.phi0))
    else:
        v = float(policy.solution.tables[(0, 0)](0.0, params.phi0))
    result = dict(est.to_dict(), policy=policy.kind, rights=policy.n,
                  dp_value=v, dp_risk=bayes_risk_from_value(params.p, v, params))
    io.write_json(out / "risk.json", result)
    files.append("risk.json")
    io.write_json(out / "manifest.json", io.manifest("simulate", cfg, out, files, inputs=inputs))
    return out


def cmd_compare_fixed(args, cfg):
    from .lump import FixedSchedule, fixed_schedule_value
    count = int(cfg["count"])
    sol = _solve_lump(cfg, n=count)
    params = sol.params
    cols, header = [sol.phi_grid, sol.tables[count].values], ["phi", "v_adaptive"]
    for gap in cfg["schedules"]:
        w = fixed_schedule_value(FixedSchedule.regular(float(gap), count), params, sol.phi_grid,
                                 sol.phibar, int(cfg["quadrature"]), cfg["interpolation"])
        cols.append(w.values)
        header.append(f"v_fixed_{format(float(gap), 'g')}")
    out = _outdir(args, "compare-fixed", cfg)
    io.write_csv(out / "compare.csv", header, cols)
    io.write_json(out / "manifest.json", io.manifest("compare-fixed", cfg, out, ["compare.csv"]))
    return out


COMMANDS = {
    "solve-lump": cmd_solve_lump,
    "solve-continuous": cmd_solve_continuous,
    "solve-arrival": cmd_solve_arrival,
    "simulate": cmd_simulate,
    "compare-fixed": cmd_compare_fixed,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with configuration values")
    common.add_argument("--out", default="out", help="output root directory")
    common.add_argument("--name", help="run directory name (default: config hash)")
    common.add_argument("--threads", type=int, help="worker threads for the kernels")
    common.add_argument("-v", "--verbose", action="store_true")
    for key, typ in FLAG_KEYS.items():
        common.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    common.add_argument("--schedules", help="comma separated gaps for compare-fixed")

    parser = argparse.ArgumentParser(prog="quickdetect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "simulate":
            p.add_argument("--policy", required=True, help="manifest (or run directory) of a solve")
            p.add_argument("--episodes-csv", action="store_true", help="also write per-episode CSV")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _accel.set_threads(args.threads)
        cfg = resolve_config(args)
        out = COMMANDS[args.command](args, cfg)
    except (ConfigError, DomainError) as exc:
        print(f"quickdetect: error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"quickdetect: error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
