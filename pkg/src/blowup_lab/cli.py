"""Command-line front end: ``blowup-lab <command> --config FILE --out DIR``.

Config files are flat ``key = value`` text with ``#`` comments; ``--override``
takes the same form and may be repeated.  Exit codes: 0 ok, 2 configuration,
3 solver, 4 input/output.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import assembler, evolve
from .errors import BlowupLabError, ConfigError, DomainError, SolverError
from .geometry import BlowupParams, RadialGrid, SphereField, log_slope, write_csv
from .harmonic import HarmonicProfile

log = logging.getLogger("blowup_lab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# key -> (type, default); None defaults are resolved at run time
SCHEMA = {
    "nu": (float, 1.5),
    "alpha0": (float, 0.7),
    "delta": (float, 0.2),
    "order_N": (int, 1),
    "eps1": (float, None),
    "eps2": (float, 0.25),
    "grid_n": (int, 4096),
    "grid_rmax": (float, None),
    "t_min": (float, 2.0 ** -20),
    "ladder_t0": (float, None),
    "ladder_points": (int, 6),
    "compare_orders": (bool, True),
    "initial": (str, "uN"),
    "t1": (float, None),
    "direction": (str, "forward"),
    "duration": (float, 1.0),
    "dt_kind": (str, "spacing"),
    "dt_c": (float, 0.25),
    "dt": (float, None),
    "max_steps": (int, None),
    "max_seconds": (float, None),
    "perturbation": (float, 0.0),
    "seed": (int, 0),
    "sweep_command": (str, "residual"),
    "sweep_key": (str, "order_N"),
    "sweep_values": (str, "1,2"),
    "workers": (int, 2),
}
ALIASES = {"N": "order_N"}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_pairs(lines) -> dict:
    out = {}
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = val
    return out


def _convert(key: str, text: str):
    typ = SCHEMA[key][0]
    if text.lower() in ("", "none"):
        return None
    try:
        if typ is bool:
            return _parse_bool(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {text!r} as {typ.__name__}") from exc


@dataclass
class RunConfig:
    values: dict
    out: Path
    params: BlowupParams = field(init=False)

    def __post_init__(self):
        v = self.values
        self.params = BlowupParams(nu=v["nu"], alpha0=v["alpha0"], delta=v["delta"],
                                   order_N=v["order_N"], eps1=v["eps1"], eps2=v["eps2"])
        if v["grid_n"] < 64:
            raise ConfigError("grid_n must be at least 64")
        if v["ladder_points"] < 1:
            raise ConfigError("the t-ladder is empty (ladder_points < 1)")
        if v["direction"] not in ("forward", "backward"):
            raise ConfigError("direction must be forward or backward")
        if v["initial"] not in ("uN", "phi", "constant"):
            raise ConfigError("initial must be uN, phi or constant")
        if v["dt_kind"] not in ("spacing", "fixed") or (v["dt_kind"] == "fixed" and not v["dt"]):
            raise ConfigError("dt_kind must be spacing, or fixed with dt > 0")
        if v["duration"] is None or v["duration"] <= 0:
            raise ConfigError("duration must be positive")
        if not 0 < v["t_min"] < 1:
            raise ConfigError("t_min must lie in (0, 1)")

    @classmethod
    def load(cls, path, overrides=(), out=".") -> "RunConfig":
        pairs = {}
        if path is not None:
            with open(path) as fh:
                pairs.update(parse_pairs(fh))
        pairs.update(parse_pairs(overrides))
        values = {k: d for k, (_, d) in SCHEMA.items()}
        for k, text in pairs.items():
            values[k] = _convert(k, text)
        return cls(values, Path(out))

    def canonical(self) -> str:
        v = dict(self.values)
        v["eps1"] = self.params.eps1
        return "\n".join(f"{k} = {v[k]!r}" for k in sorted(v)) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def grid(self, t: float) -> RadialGrid:
        return assembler.default_physical_grid(self.params, t, self.values["grid_n"],
                                               self.values["grid_rmax"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class Outputs:
    """Tracks written files and writes the manifest."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.files = []
        cfg.out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.cfg.out / name
        self.files.append(p)
        return p

    def add(self, paths) -> None:
        self.files.extend(Path(p) for p in paths)

    def json(self, name: str, data: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
        return p

    def manifest(self, extra: dict | None = None) -> Path:
        h = self.cfg.config_hash()
        files = {}
        for p in self.files:
            files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
        rec = {"command": self.command, "config_hash": h, "params": self.cfg.params.as_dict(),
               "config": self.cfg.canonical().splitlines(), "files": files}
        if extra:
            rec.update(extra)
        p = self.cfg.out / "manifest.json"
        p.write_text(json.dumps(_jsonable(rec), indent=2, sort_keys=True) + "\n")
        return p


def _build(cfg: RunConfig, params: BlowupParams | None = None):
    params = cfg.params if params is None else params
    return assembler.build_approximate_solution(params, t_min=cfg.values["t_min"])


def cmd_profiles(cfg: RunConfig) -> int:
    out = Outputs(cfg, "profiles")
    sol = _build(cfg)
    out.add(sol.inner.export_csv(cfg.out))
    out.add(sol.selfsim.export_csv(cfg.out))
    out.add(sol.remote.export_csv(cfg.out))
    T = sol.threshold()
    report = _matching_report(sol, T)
    out.json("matching_report.json", report)
    out.manifest({"threshold_T": T})
    return EXIT_OK


def _matching_report(sol, T: float) -> dict:
    ladder = [T * 2.0 ** -k for k in range(4)]
    rep = {
        "threshold_T": T,
        "boundary": {str(j): {"a": ab[0], "b": ab[1]} for j, ab in sol.matching["boundary"].items()},
        "beta0": {f"{j},{l}": v for (j, l), v in sol.matching["beta0"].items()},
        "beta1": {f"{j},{l}": v for (j, l), v in sol.matching["beta1"].items()},
        "far_fit_residual": {f"{j},{l}": v for (j, l), v in sol.matching["fit_residual"].items()},
        "overlap": [],
    }
    for t in ladder:
        if t < sol.t_min:
            break
        rep["overlap"].append({"t": t, "inner": assembler.overlap_mismatch(sol, t, "inner"),
                               "remote": assembler.overlap_mismatch(sol, t, "remote")})
    return rep


def cmd_match(cfg: RunConfig) -> int:
    out = Outputs(cfg, "match")
    sol = _build(cfg)
    T = sol.threshold()
    out.json("matching_report.json", _matching_report(sol, T))
    out.manifest({"threshold_T": T})
    return EXIT_OK


def _slope(t, y) -> float:
    return log_slope(t, y) if len(t) >= 2 else math.nan


def residual_ladder(cfg: RunConfig, params: BlowupParams, t0: float | None, points: int):
    sol = _build(cfg, params)
    t0 = sol.threshold() if t0 is None else t0
    rows = []
    for k in range(points):
        t = t0 * 2.0 ** -k
        _, nr = assembler.residual_rN(sol, t, cfg.grid(t))
        rows.append((params.order_N, t, nr["L2"], nr["H1"], nr["weightedL2"]))
    return rows


def cmd_residual(cfg: RunConfig) -> int:
    v = cfg.values
    out = Outputs(cfg, "residual")
    orders = [cfg.params.order_N]
    if v["compare_orders"]:
        orders = sorted({1, 2, cfg.params.order_N})
    rows, slopes = [], []
    for N in orders:
        r = residual_ladder(cfg, cfg.params.replace(order_N=N), v["ladder_t0"], v["ladder_points"])
        rows.extend(r)
        ts = [x[1] for x in r]
        slopes.append((N, _slope(ts, [x[2] for x in r]), _slope(ts, [x[3] for x in r]),
                       _slope(ts, [x[4] for x in r]), float(N)))
        log.info("N=%d residual L2 log-slope %.3f (target %d)", N, slopes[-1][1], N)
    cols = list(zip(*rows))
    write_csv(out.path("residual_ladder.csv"), ["N", "t", "L2", "H1", "weightedL2"], cols)
    write_csv(out.path("residual_slopes.csv"), ["N", "slope_L2", "slope_H1", "slope_weightedL2",
                                                "target"], list(zip(*slopes)))
    out.manifest()
    return EXIT_OK


def _initial_state(cfg: RunConfig):
    v = cfg.values
    if v["initial"] == "uN":
        sol = _build(cfg)
        t1 = sol.threshold() / 2.0 if v["t1"] is None else v["t1"]
        grid = cfg.grid(t1)
        u = assembler.eval_uN(sol, t1, grid)
        return evolve.FlowState(t1, u), sol
    t1 = 1.0 if v["t1"] is None else v["t1"]
    rmax = 50.0 if v["grid_rmax"] is None else v["grid_rmax"]
    grid = RadialGrid.geometric(rmax, v["grid_n"], 0.25)
    if v["initial"] == "constant":
        u = SphereField.constant(grid)
        ref = assembler.StaticSolution()
    else:
        u = SphereField(grid, HarmonicProfile(1).vector(grid.nodes))
        ref = assembler.StaticSolution(HarmonicProfile(1))
    if v["perturbation"]:
        rng = np.random.default_rng(v["seed"])
        c = rng.uniform(1.0, 4.0)
        a, b = v["perturbation"] * rng.standard_normal(2)
        bump = np.exp(-(grid.nodes - c) ** 2)
        s = u.samples.copy()
        s[:, 0] += a * bump * grid.nodes / (1.0 + grid.nodes)
        s[:, 1] += b * bump * grid.nodes / (1.0 + grid.nodes)
        s[-1] = u.samples[-1]
        u = SphereField(grid, s / np.linalg.norm(s, axis=1)[:, None])
    return evolve.FlowState(t1, u), ref


GNUPLOT = """set datafile separator ","
set key autotitle columnhead
set xlabel "t"
set multiplot layout 2,2
plot "{csv}" using 1:2 with linespoints
plot "{csv}" using 1:7 with linespoints
set logscale y
plot "{csv}" using 1:9 with linespoints
plot "{csv}" using 1:4 with linespoints, "{csv}" using 1:6 with linespoints
unset multiplot
"""


def cmd_evolve(cfg: RunConfig) -> int:
    v = cfg.values
    out = Outputs(cfg, "evolve")
    state, ref = _initial_state(cfg)
    t1 = state.t
    t_end = t1 * (1.0 + v["duration"]) if v["direction"] == "forward" else t1 / (1.0 + v["duration"])
    policy = evolve.DtPolicy(v["dt_kind"], v["dt_c"], v["dt"])
    state, rep = evolve.integrate(state, t_end, policy, reference=ref,
                                  max_steps=v["max_steps"], max_seconds=v["max_seconds"])
    csv_path = out.path("trajectory.csv")
    rep.to_csv(csv_path)
    gp = out.path("trajectory.gp")
    gp.write_text(GNUPLOT.format(csv=csv_path.name))
    lam = rep.column("lambda_fit")
    ts = rep.column("t")
    ok = np.isfinite(lam) & (lam > 0)
    slope = _slope(ts[ok], lam[ok]) if ok.sum() >= 2 else math.nan
    out.manifest({"t1": t1, "t_end": t_end, "reach": rep.reach, "completed": rep.completed,
                  "scale_collapse": rep.collapsed, "steps": rep.steps,
                  "planned_steps": rep.planned_steps, "max_renorm": rep.max_renorm,
                  "lambda_slope": slope, "grid": state.grid.describe(),
                  "dt_policy": {"kind": policy.kind, "c": policy.c, "dt": policy.dt}})
    if rep.collapsed:
        log.warning("scale collapse: run reached t = %.6g", rep.reach)
    return EXIT_OK


def _sweep_one(args):
    command, values, out = args
    cfg = RunConfig(values, Path(out))
    return COMMANDS[command](cfg)


def cmd_sweep(cfg: RunConfig) -> int:
    v = cfg.values
    key = ALIASES.get(v["sweep_key"], v["sweep_key"])
    if key not in SCHEMA or v["sweep_command"] not in ("profiles", "residual", "match", "evolve"):
        raise ConfigError("sweep_key must be a config key and sweep_command a run command")
    raw = [s.strip() for s in v["sweep_values"].split(",") if s.strip()]
    if not raw:
        raise ConfigError("sweep_values is empty")
    jobs = []
    for i, text in enumerate(raw):
        vals = dict(v)
        vals[key] = _convert(key, text)
        RunConfig(vals, cfg.out)  # validate before fanning out
        jobs.append((v["sweep_command"], vals, str(cfg.out / f"run{i:03d}_{key}={text}")))
    out = Outputs(cfg, "sweep")
    with ProcessPoolExecutor(max_workers=max(1, v["workers"])) as pool:
        codes = list(pool.map(_sweep_one, jobs))
    out.manifest({"runs": {Path(j[2]).name: c for j, c in zip(jobs, codes)}})
    return max(codes)


COMMANDS = {"profiles": cmd_profiles, "residual": cmd_residual, "evolve": cmd_evolve,
            "match": cmd_match, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blowup-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.override, args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("configuration: %s", exc)
        return EXIT_CONFIG
    except (SolverError, DomainError, BlowupLabError) as exc:
        log.error("solver: %s: %s", type(exc).__name__, exc)
        return EXIT_SOLVER
    except OSError as exc:
        log.error("io: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
