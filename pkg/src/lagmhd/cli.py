"""Config-driven experiments: one subcommand per capability.

Exit codes: 0 on success, 1 on a numerical failure (diagnostics.json is
written), 2 on an invalid or unreadable config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydField, ValidationError, field_validator, model_validator

from . import plotting
from .eulerian_oracle import EulerState, divergence, energy, leray_project, step_rk4, uniform_background
from .estimate_verifier import (
    LEMMA_IDS,
    HypothesisError,
    LemmaCase,
    reports_to_csv,
    reports_to_json,
    verify_inequality,
)
from .fourier_core import Field, Grid, SpaceTimeField, dump_field, load_field, make_cutoff
from .lagrangian_system import NumericalError, curl_defect, lagrangian_energy, max_det_deviation
from .norms import NormSpec, norm
from .sampling import sample_divergence_free, sample_random_field
from .scenarios import cross_validate, default_velocity, observed_order
from .wave_elliptic_solver import PicardConfig, compare_with_time_stepping, run_coupled, run_picard

log = logging.getLogger("lagmhd")

COMMANDS = (
    "simulate-euler", "simulate-lagrangian", "cross-validate", "picard", "verify-estimate", "norm", "dump-cutoffs",
)


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Scenario(_Strict):
    n: Literal[2, 3] = 2
    size: int = 64
    decay: float = PydField(4.0, ge=0)
    amplitude: float = PydField(0.1, ge=0)
    seed: int = PydField(0, ge=0)
    band: int | None = PydField(None, ge=1)

    @field_validator("size")
    @classmethod
    def _power_of_two(cls, v):
        if v < 8 or v & (v - 1):
            raise ValueError("size must be a power of two >= 8")
        return v

    def grid(self) -> Grid:
        return Grid.square(self.n, self.size)

    def velocity(self) -> Field:
        return default_velocity(self.grid(), self.amplitude, self.decay, self.seed, self.band)


class EulerConfig(_Strict):
    scenario: Scenario = Scenario()
    dt: float = PydField(1e-3, gt=0)
    steps: int = PydField(100, ge=1)
    magnetic_perturbation: float = PydField(0.0, ge=0)
    dump_final: bool = True


class LagrangianConfig(_Strict):
    scenario: Scenario = Scenario()
    dt: float = PydField(1e-3, gt=0)
    T_end: float = PydField(0.1, gt=0)
    record_every: int = PydField(1, ge=1)
    pressure_tol: float = PydField(1e-12, gt=0)
    dump_final: bool = True


class CrossConfig(_Strict):
    scenario: Scenario = Scenario()
    dt: float = PydField(1e-3, gt=0)
    T_end: float = PydField(0.1, gt=0)
    check_every: int = PydField(10, ge=1)
    dt_halvings: int = PydField(0, ge=0, le=4)


class PicardParams(_Strict):
    s: float = 1.6
    theta: float = 0.75
    eps: float = 0.25
    T: float | None = None
    nt: int = 64
    max_iters: int = 8
    contraction_tol: float = 1e-12

    def build(self) -> PicardConfig:
        return PicardConfig(self.s, self.theta, self.eps, self.T, self.nt, self.max_iters, self.contraction_tol)


class PicardCommandConfig(_Strict):
    scenario: Scenario = Scenario()
    picard: PicardParams = PicardParams()
    compare: bool = True


class CaseConfig(_Strict):
    id: Literal[LEMMA_IDS]  # type: ignore[valid-type]
    s: float = 1.6
    theta: float = 0.75
    eps: float = 0.25
    n: Literal[2, 3] = 2
    members: int = PydField(50, ge=1)
    seed: int = PydField(0, ge=0)
    resolutions: list[int] = [32, 64, 128]
    T: float = 0.25
    frac_s: float | None = None

    def build(self, seed: int | None) -> LemmaCase:
        d = self.model_dump()
        if seed is not None:
            d["seed"] = seed
        d["resolutions"] = tuple(d["resolutions"])
        return LemmaCase(**d)


class VerifyConfig(_Strict):
    cases: list[CaseConfig] = PydField(min_length=1)


class NormEntry(_Strict):
    a: float = 0.0
    b: float = 0.0
    theta: float = 0.0
    kind: Literal["spatial", "spacetime", "composite"] = "spatial"


class RandomSource(_Strict):
    n: Literal[2, 3] = 2
    size: int = 64
    decay: float = PydField(2.0, ge=0)
    seed: int = PydField(0, ge=0)
    nt: int | None = PydField(None, ge=2)


class NormConfig(_Strict):
    dump: str | None = None
    random: RandomSource | None = None
    norms: list[NormEntry] = PydField(min_length=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.dump is None) == (self.random is None):
            raise ValueError("give exactly one of 'dump' or 'random'")
        return self


class CutoffConfig(_Strict):
    points: int = PydField(1001, ge=3)
    x_max: float = PydField(5.0, gt=0)


MODELS = {
    "simulate-euler": EulerConfig,
    "simulate-lagrangian": LagrangianConfig,
    "cross-validate": CrossConfig,
    "picard": PicardCommandConfig,
    "verify-estimate": VerifyConfig,
    "norm": NormConfig,
    "dump-cutoffs": CutoffConfig,
}


def config_schema() -> dict:
    """JSON schema for every subcommand's config document."""
    return {"title": "lagmhd experiment configs", "commands": {k: m.model_json_schema() for k, m in MODELS.items()}}


def load_config(command: str, path: Path, seed: int | None = None):
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if seed is not None:
        if "scenario" in raw or command in ("simulate-euler", "simulate-lagrangian", "cross-validate", "picard"):
            raw.setdefault("scenario", {})["seed"] = seed
        if isinstance(raw.get("random"), dict):
            raw["random"]["seed"] = seed
    try:
        cfg = MODELS[command].model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if command == "verify-estimate":
        try:
            cases = [c.build(seed) for c in cfg.cases]
        except HypothesisError as exc:
            raise ConfigError(f"hypothesis violation: {exc}") from exc
        return cfg, cases
    if command == "picard":
        try:
            pc = cfg.picard.build()
            pc.check_regularity(cfg.scenario.n)
        except ValueError as exc:
            raise ConfigError(f"hypothesis violation: {exc}") from exc
    return cfg, None


# --------------------------------------------------------------------------
# Output helpers


class Outputs:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.numeric: list[Path] = []
        self.figures: list[Path] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def csv(self, name: str, rows: list[dict]) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            if rows:
                writer = csv.DictWriter(fh, list(rows[0].keys()))
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                                     for k, v in row.items()})
        self.numeric.append(p)
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        p.write_text(content)
        self.numeric.append(p)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")

    def dump(self, name: str, field) -> None:
        self.numeric.extend(dump_field(field, self.path(name)))

    def figure(self, path: Path) -> None:
        self.figures.append(path)

    def numeric_hash(self) -> str:
        h = hashlib.sha256()
        for p in sorted(set(self.numeric)):
            h.update(p.name.encode())
            h.update(p.read_bytes())
        return h.hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "matplotlib", "pydantic", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


# --------------------------------------------------------------------------
# Subcommands


def run_simulate_euler(cfg: EulerConfig, out: Outputs) -> None:
    grid = cfg.scenario.grid()
    v = cfg.scenario.velocity()
    b = uniform_background(grid)
    if cfg.magnetic_perturbation:
        pert = sample_divergence_free(grid, cfg.scenario.decay, cfg.scenario.seed, stream=1,
                                      band=cfg.scenario.band or grid.sizes[0] // 8)
        b = b + leray_project(pert) * cfg.magnetic_perturbation
    state = EulerState(grid, v, b)
    e0 = energy(state)
    rows = []

    def record(st):
        db = divergence(st.b).samples
        rows.append({"t": st.t, "energy": energy(st), "relative_drift": energy(st) / e0 - 1.0,
                     "max_div_b": float(np.abs(db).max())})

    record(state)
    for k in range(cfg.steps):
        state = step_rk4(state, cfg.dt)
        record(state)
    out.csv("energy.csv", rows)
    if cfg.dump_final:
        out.dump("final_v", state.v)
        out.dump("final_b", state.b)
    t = [r["t"] for r in rows]
    out.figure(plotting.plot_series(out.path("energy.png"), t, {"|E/E0 - 1|": [r["relative_drift"] for r in rows]},
                                    "relative drift", "Eulerian energy"))


def run_simulate_lagrangian(cfg: LagrangianConfig, out: Outputs) -> None:
    v0 = cfg.scenario.velocity()
    states = run_coupled(v0, cfg.T_end, cfg.dt, pressure_tol=cfg.pressure_tol, record_every=cfg.record_every)
    mean = v0.mean()
    e0 = lagrangian_energy(states[0], mean)
    rows = [{"t": s.t, "energy": lagrangian_energy(s, mean), "relative_drift": lagrangian_energy(s, mean) / e0 - 1.0,
             "det_deviation": max_det_deviation(s.H), "curl_defect": curl_defect(s.H)} for s in states]
    out.csv("lagrangian.csv", rows)
    if cfg.dump_final:
        out.dump("final_H", states[-1].H)
        out.dump("final_q", states[-1].q)
    t = [r["t"] for r in rows]
    out.figure(plotting.plot_series(out.path("lagrangian.png"), t, {
        "|energy drift|": [r["relative_drift"] for r in rows],
        "max |det H - 1|": [r["det_deviation"] for r in rows],
    }, "size", "Lagrangian invariants"))


def run_cross_validate(cfg: CrossConfig, out: Outputs) -> None:
    v0 = cfg.scenario.velocity()
    cv = cross_validate(v0, cfg.T_end, cfg.dt, check_every=cfg.check_every)
    out.csv("comparison.csv", list(cv.rows()))
    finals = [cv.h_error[-1]]
    dts = [cfg.dt]
    for k in range(1, cfg.dt_halvings + 1):
        dt = cfg.dt / 2**k
        every = cfg.check_every * 2**k
        finals.append(cross_validate(v0, cfg.T_end, dt, check_every=every).h_error[-1])
        dts.append(dt)
    if cfg.dt_halvings:
        orders = [float("nan")] + observed_order(finals)
        out.csv("order.csv", [{"dt": d, "h_rel_error": e, "observed_order": o} for d, e, o in zip(dts, finals, orders)])
    out.figure(plotting.plot_series(out.path("comparison.png"), cv.times, {
        "H relative error": cv.h_error,
        "max |det H - 1|": cv.det_deviation,
        "max |b_lag - H e1|": cv.field_line_error,
    }, "error", "Lagrangian vs Eulerian"))


def run_picard_command(cfg: PicardCommandConfig, out: Outputs) -> None:
    v0 = cfg.scenario.velocity()
    run = run_picard(v0, cfg.picard.build())
    out.csv("iterates.csv", [{"iteration": r.iteration, "composite_norm": r.composite_norm, "diff_norm": r.diff_norm,
                              "ratio": r.ratio} for r in run.records])
    summary = {"T": run.config.T, "rate": run.report.rate, "verdict": run.report.verdict, "ratios": run.report.ratios,
               "error": run.error, **run.extras}
    if cfg.compare and run.error is None:
        summary["fixed_point_vs_time_stepping"] = compare_with_time_stepping(run, v0)
    out.json("contraction.json", summary)
    out.figure(plotting.plot_contraction(out.path("contraction.png"), run.records))
    if run.error is None:
        it = run.fixed_point
        out.dump("fixed_point_G", it.G)


def run_verify(cases: list[LemmaCase], out: Outputs) -> None:
    reports = [verify_inequality(c) for c in cases]
    out.text("ratio_reports.csv", reports_to_csv(reports))
    out.text("ratio_reports.json", reports_to_json(reports) + "\n")
    out.figure(plotting.plot_ratio_reports(out.path("ratio_trends.png"), reports))


def run_norm(cfg: NormConfig, out: Outputs) -> None:
    if cfg.dump is not None:
        try:
            f = load_field(cfg.dump)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load field dump {cfg.dump}: {exc}") from exc
    else:
        src = cfg.random
        grid = Grid.square(src.n, src.size)
        if src.nt:
            slices = [sample_random_field(grid, src.decay, src.seed, stream=j).samples for j in range(src.nt)]
            times = np.linspace(-2, 2, src.nt, endpoint=False)
            w = make_cutoff("chi")(times).reshape((src.nt,) + (1,) * src.n)
            f = SpaceTimeField(grid, -2.0, 4.0 / src.nt, np.stack(slices) * w)
        else:
            f = sample_random_field(grid, src.decay, src.seed)
    rows = []
    for e in cfg.norms:
        is_st = isinstance(f, SpaceTimeField)
        if (e.kind == "spatial") == is_st:
            raise ConfigError(f"norm kind {e.kind!r} does not match the input field")
        try:
            value = norm(f, NormSpec(e.a, e.b, e.theta, e.kind))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rows.append({"kind": e.kind, "a": e.a, "b": e.b, "theta": e.theta, "value": value})
    out.csv("norms.csv", rows)


def run_dump_cutoffs(cfg: CutoffConfig, out: Outputs) -> None:
    x = np.linspace(-cfg.x_max, cfg.x_max, cfg.points)
    chi, phi = make_cutoff("chi"), make_cutoff("phi")
    rows = [{"x": float(xi), "chi": float(c), "phi": float(p), "dchi": float(dc), "dphi": float(dp)}
            for xi, c, p, dc, dp in zip(x, chi(x), phi(x), chi.derivative(x), phi.derivative(x))]
    out.csv("cutoffs.csv", rows)
    out.figure(plotting.plot_cutoffs(out.path("cutoffs.png"), x, {"chi": chi(x), "phi": phi(x)}))


def execute(command: str, config_path: Path, out_dir: Path, seed: int | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    start = time.perf_counter()
    try:
        cfg, cases = load_config(command, config_path, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Outputs(out_dir)
    code = 0
    diagnostics = None
    try:
        if command == "simulate-euler":
            run_simulate_euler(cfg, out)
        elif command == "simulate-lagrangian":
            run_simulate_lagrangian(cfg, out)
        elif command == "cross-validate":
            run_cross_validate(cfg, out)
        elif command == "picard":
            run_picard_command(cfg, out)
        elif command == "verify-estimate":
            run_verify(cases, out)
        elif command == "norm":
            run_norm(cfg, out)
        else:
            run_dump_cutoffs(cfg, out)
    except ValueError as exc:  # ConfigError and violated solver preconditions
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        code = 1
        diagnostics = {"error": str(exc), "details": {k: (float(v) if np.isscalar(v) else str(v))
                                                       for k, v in exc.details.items()}}
        (out.path("diagnostics.json")).write_text(json.dumps(diagnostics, indent=2, sort_keys=True) + "\n")
        print(f"numerical failure: {exc}", file=sys.stderr)
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True)
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "config": json.loads(canonical),
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - start,
        "exit_code": code,
        "numeric_outputs": sorted(p.name for p in set(out.numeric)),
        "numeric_hash": out.numeric_hash(),
        "figures": sorted(p.name for p in out.figures),
    }
    out.path("manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagmhd", description="Lagrangian MHD numerical laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON config for this subcommand")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: runs/<command>)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    out = args.out or Path("runs") / args.command
    code = execute(args.command, args.config, out, args.seed)
    if not args.quiet and code == 0:
        print(f"outputs written to {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
