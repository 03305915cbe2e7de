"""Reference-scenario driver: time stepping, snapshot files, manifest and
diagnostics report."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from .config import RunConfig, as_dict
from .grid import GridSpec
from .model import AngiogenesisSystem
from .ssp import IntegratorConfig, SolverAbort, advance

log = logging.getLogger(__name__)

COLUMNS = ("i", "j", "x_center", "y_center", "rho", "C", "I")
HEADER_LINES = 7  # '#' lines before the column row
MANIFEST = "manifest.json"
DIAGNOSTICS = "diagnostics.json"
ABORT_MARKER = "ABORTED"


@dataclass
class SnapshotRecord:
    t: float
    step: int
    t_requested: float
    grid: GridSpec
    rho: np.ndarray
    C: np.ndarray
    I: np.ndarray
    meta: dict = field(default_factory=dict)


def snapshot_name(index: int) -> str:
    return f"snapshot_{index:04d}.csv"


def write_snapshot(path: Path, rec: SnapshotRecord, cfg: RunConfig) -> None:
    g = rec.grid
    Nx, Ny = g.shape
    head = [
        "# angioweno snapshot",
        f"# version={__version__}",
        f"# t={rec.t!r}",
        f"# t_requested={rec.t_requested!r}",
        f"# step={rec.step}",
        f"# grid Nx={Nx} Ny={Ny} dx={g.dx!r} dy={g.dy!r}",
        "# config " + ";".join(f"{k}={v}" for k, v in as_dict(cfg).items()),
        ",".join(COLUMNS),
    ]
    ii, jj = np.meshgrid(np.arange(Nx), np.arange(Ny), indexing="ij")
    xc = np.broadcast_to(g.x_centers[:, None], (Nx, Ny))
    yc = np.broadcast_to(g.y_centers[None, :], (Nx, Ny))
    reals = np.stack([xc, yc, rec.rho, rec.C, rec.I], axis=-1).reshape(-1, 5)
    rows = [
        f"{i},{j}," + ",".join(format(v, ".17g") for v in r)
        for i, j, r in zip(ii.ravel(), jj.ravel(), reals)
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(head + rows) + "\n")


def read_snapshot(path: Path) -> SnapshotRecord:
    meta = {}
    with open(path) as fh:
        lines = fh.read().split("\n")
    for line in lines[:HEADER_LINES]:
        if not line.startswith("#"):
            raise ValueError(f"{path}: header too short")
        body = line[1:].strip()
        if body.startswith("grid "):
            meta.update(kv.split("=", 1) for kv in body[5:].split())
        elif body.startswith("config "):
            meta["config"] = dict(kv.split("=", 1) for kv in body[7:].split(";"))
        elif "=" in body:
            k, v = body.split("=", 1)
            meta[k] = v
    if lines[HEADER_LINES] != ",".join(COLUMNS):
        raise ValueError(f"{path}: unexpected column header {lines[HEADER_LINES]!r}")
    data = np.loadtxt(lines[HEADER_LINES + 1 :], delimiter=",", ndmin=2)
    Nx, Ny = int(meta["Nx"]), int(meta["Ny"])
    if data.shape != (Nx * Ny, len(COLUMNS)):
        raise ValueError(f"{path}: expected {Nx * Ny} rows of {len(COLUMNS)} columns")
    cfg = meta.get("config", {})
    grid = GridSpec(float(cfg.get("X", Nx * float(meta["dx"]))), float(cfg.get("Y0", 0.0)), float(cfg.get("Y1", Ny * float(meta["dy"]))), Nx, Ny)
    f = lambda k: data[:, k].reshape(Nx, Ny)  # noqa: E731
    return SnapshotRecord(float(meta["t"]), int(meta["step"]), float(meta["t_requested"]), grid, f(4), f(5), f(6), meta)


@dataclass
class RunResult:
    status: str  # "complete" or "aborted"
    out_dir: Path
    dt: float
    nsteps: int
    chi1: float
    wall_time: float
    snapshots: list = field(default_factory=list)
    abort: dict | None = None
    extrema: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def choose_dt(cfg: RunConfig, system: AngiogenesisSystem, Y0: np.ndarray) -> tuple[float, int, str]:
    """Fixed step and step count covering ``T_final``."""
    icfg = IntegratorConfig(cfg.integrator, dt=cfg.dt)
    if cfg.dt is not None:
        return cfg.dt, int(math.ceil(cfg.T_final / cfg.dt - 1e-9)), "override"
    dt_max = system.max_dt(Y0, icfg.ssp_factor, 0.0)
    if not math.isfinite(dt_max):
        raise ValueError("automatic step is unbounded; set dt explicitly")
    n = int(math.ceil(cfg.T_final / dt_max))
    return cfg.T_final / n, n, "auto"


def snapshot_diagnostics(snaps: list[SnapshotRecord], grid: GridSpec) -> dict:
    rows = []
    track = []
    for s in snaps:
        a_r, a_c, a_i = (dg.min_and_mass(v, grid) for v in (s.rho, s.C, s.I))
        row = {
            "t": s.t,
            "step": s.step,
            "min_rho": a_r.minimum,
            "min_C": a_c.minimum,
            "min_I": a_i.minimum,
            "max_C": float(s.C.max()),
            "mass_rho": a_r.mass,
            "mass_C": a_c.mass,
            "mass_I": a_i.mass,
        }
        try:
            fit = dg.fit_soliton(dg.marginal_profile(s.rho, grid), grid.x_centers)
            row["fit"] = asdict(fit)
            track.append((s.t, fit.X))
        except (dg.FitError, ValueError) as exc:
            row["fit_error"] = str(exc)
        rows.append(row)
    out = {"snapshots": rows}
    if len(track) >= 3:
        sp = dg.front_speed(track)
        out["front_speed"] = sp._asdict()
        for row in rows:
            if "fit" in row:
                row["fit"]["speed_c"] = sp.c
    else:
        out["front_speed_error"] = f"need at least 3 fitted snapshots, have {len(track)}"
    return out


def run_simulation(cfg: RunConfig, out_dir: str | Path | None = None, progress_every: int = 0) -> RunResult:
    """Integrate the configured scenario, writing snapshots as they are reached.

    A solver abort leaves the snapshots written so far, a manifest with
    ``status = "aborted"`` and an ``ABORTED`` marker file.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for stale in list(out.glob("snapshot_*.csv")) + [out / ABORT_MARKER]:
        stale.unlink(missing_ok=True)
    grid = cfg.grid()
    system = AngiogenesisSystem(grid, cfg.model_params(), cfg.scheme_options())
    t_start = time.perf_counter()
    Y0 = system.initial_state().to_array()
    dt, nsteps, mode = choose_dt(cfg, system, Y0)
    if cfg.flux == "lax-friedrichs":
        system.dt = dt
    log.info("dt=%.6g (%s), %d steps, chi1=%.12g", dt, mode, nsteps, system.chi1)

    snaps: list[SnapshotRecord] = []
    files: list[dict] = []
    ext = {"min_rho": math.inf, "min_C": math.inf, "min_I": math.inf, "max_C": -math.inf}

    def on_snapshot(n, t_req, t, u):
        rec = SnapshotRecord(t, n, t_req, grid, u[0].copy(), u[1].copy(), u[2].copy())
        name = snapshot_name(len(snaps) + 1)
        write_snapshot(out / name, rec, cfg)
        snaps.append(rec)
        files.append({"file": name, "t": t, "t_requested": t_req, "step": n})

    def watch(n, t, u):
        ext["min_rho"] = min(ext["min_rho"], float(u[0].min()))
        ext["min_C"] = min(ext["min_C"], float(u[1].min()))
        ext["min_I"] = min(ext["min_I"], float(u[2].min()))
        ext["max_C"] = max(ext["max_C"], float(u[1].max()))
        if progress_every and n % progress_every == 0:
            log.info("step %d/%d t=%.5f min rho=%.3g", n, nsteps, t, u[0].min())

    def strict(n, t, u):
        if cfg.strict_positivity:
            for k, name in enumerate(("rho", "C", "I")):
                m = float(u[k].min())
                if m < 0:
                    raise SolverAbort(n, t, f"negative {name} ({m:.3e}) with strict positivity on")

    abort = None
    status = "complete"
    try:
        advance(
            Y0,
            system.rhs,
            cfg.T_final,
            IntegratorConfig(cfg.integrator, dt=dt),
            snapshot_times=cfg.output_times(),
            check=strict,
            callback=watch,
            on_snapshot=on_snapshot,
            keep_states=False,
        )
    except SolverAbort as exc:
        status = "aborted"
        abort = {"step": exc.step, "t": exc.t, "reason": exc.reason}
        log.error("solver abort: %s", exc)
    finally:
        system.close()
    wall = time.perf_counter() - t_start

    diag = snapshot_diagnostics(snaps, grid)
    result = RunResult(status, out, dt, nsteps, system.chi1, wall, files, abort, ext, diag)
    manifest = {
        "version": __version__,
        "status": status,
        "config": as_dict(cfg),
        "chi1": system.chi1,
        "dt": dt,
        "dt_mode": mode,
        "nsteps": nsteps,
        "wall_time_s": wall,
        "snapshots": files,
        "step_extrema": ext,
        "abort": abort,
        "diagnostics": DIAGNOSTICS,
    }
    with open(out / DIAGNOSTICS, "w") as fh:
        json.dump(diag, fh, indent=2)
    with open(out / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2)
    if abort is not None:
        (out / ABORT_MARKER).write_text(f"step {abort['step']} t={abort['t']!r}: {abort['reason']}\n")
    return result


def load_manifest(out_dir: str | Path) -> tuple[dict, dict]:
    out = Path(out_dir)
    path = out / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no manifest in {out}")
    try:
        manifest = json.loads(path.read_text())
        diag_path = out / manifest.get("diagnostics", DIAGNOSTICS)
        diag = json.loads(diag_path.read_text()) if diag_path.exists() else {}
    except (json.JSONDecodeError, AttributeError) as exc:
        raise ValueError(f"corrupt manifest in {out}: {exc}") from None
    if not isinstance(manifest, dict) or "status" not in manifest:
        raise ValueError(f"corrupt manifest in {out}: missing status")
    return manifest, diag


def format_report(manifest: dict, diag: dict) -> str:
    lines = [
        f"status: {manifest['status']}",
        f"dt: {manifest.get('dt')!r} ({manifest.get('dt_mode', '?')}), steps: {manifest.get('nsteps')}",
        f"chi1: {manifest.get('chi1')!r}",
        f"wall time: {manifest.get('wall_time_s', float('nan')):.1f} s",
    ]
    if manifest.get("abort"):
        a = manifest["abort"]
        lines.append(f"ABORTED at step {a['step']} (t={a['t']:.6g}): {a['reason']}")
    lines.append("")
    lines.append(f"{'t':>9} {'min rho':>11} {'min C':>11} {'mass rho':>11} {'mass C':>10} {'amplitude':>10} {'width':>8} {'X':>8} {'r2':>7}")
    for row in diag.get("snapshots", []):
        fit = row.get("fit")
        tail = (
            f"{fit['amplitude']:10.4g} {fit['width_param']:8.4g} {fit['X']:8.4f} {fit['r_squared']:7.4f}"
            if fit
            else f"{'no fit':>10}"
        )
        lines.append(
            f"{row['t']:9.5f} {row['min_rho']:11.3e} {row['min_C']:11.3e} {row['mass_rho']:11.5g} {row['mass_C']:10.6g} {tail}"
        )
    sp = diag.get("front_speed")
    if sp:
        lines.append(f"front speed c = {sp['c']:.5g} (rms residual {sp['residual']:.3g})")
    elif diag.get("front_speed_error"):
        lines.append(f"front speed: {diag['front_speed_error']}")
    return "\n".join(lines)
