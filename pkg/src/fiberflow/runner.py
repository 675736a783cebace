"""Config-driven experiment runner.

Parses a TOML config into a RunConfig, evolves the nine stencil fibers,
computes per-snapshot diagnostics, and persists everything as CSV / JSON.
Snapshot files carry a geometry hash so a resumed run refuses to continue
on a silently changed grid.  All float formatting goes through repr, which
round-trips exactly, so identical configs produce identical CSV bytes.
"""

import csv
import hashlib
import io
import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import (OFFSETS, assemble_total_form, berman_residual,
                       build_stencil, fiber_metric, growth_fit, ke_relative_residual,
                       ni_integral, relative_flow_residual)
from .errors import (ConfigurationError, EmptyMaskError, FiberflowError,
                     FlowBreakdownError, NonconvergenceError,
                     SnapshotMismatchError)
from .families import FamilySpec
from .fiber_flow import FlowState, build_grid, newton_ke, solve_flow

SCHEMA_VERSION = 1
CSV_COLUMNS = ["t", "min_c", "berman_sup", "berman_l2", "relflow_sup", "dist_ke",
               "ni_b0", "ni_b1", "ni_b2", "growth_p", "growth_p_diff", "theta_ke_sup"]
WORKERS_ENV = "FIBERFLOW_WORKERS"

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_BREAKDOWN = 2
EXIT_IO = 3


@dataclass
class RunConfig:
    family: FamilySpec
    s0: complex
    delta: float = 0.01
    h: float = 0.02
    eps_cut: float = 0.05
    pad: float = None
    t_final: float = 1.0
    snapshot_times: tuple = ()
    c_cfl: float = 0.4
    dt_probe: float = 0.025
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    berman: bool = True
    relflow: bool = True
    ni: bool = True
    ni_b: tuple = (0, 1, 2)
    growth: bool = True
    ke: bool = True
    berman_tol: float = 5e-2
    relflow_tol: float = 5e-2
    ke_tol: float = 1e-1
    interior_margin: float = 0.5
    growth_p_max: float = 2.2
    growth_p_diff_max: float = 1.2
    out_dir: str = "out"
    workers: int = 1
    resume: bool = False

    def __post_init__(self):
        for name in ("delta", "h", "eps_cut", "t_final", "c_cfl", "dt_probe",
                     "newton_tol"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        if self.pad is not None and self.pad <= 0:
            raise ConfigurationError("pad must be strictly positive")
        if self.interior_margin < 0:
            raise ConfigurationError("interior_margin must be nonnegative")
        if self.newton_max_iter < 1:
            raise ConfigurationError("newton_max_iter must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        times = tuple(float(t) for t in self.snapshot_times)
        if not times:
            times = (self.t_final,)
        if list(times) != sorted(times):
            raise ConfigurationError("snapshot_times must be sorted ascending")
        if any(t < 0 for t in times):
            raise ConfigurationError("snapshot_times must be nonnegative")
        if times[-1] > self.t_final + 1e-14:
            raise ConfigurationError("snapshot_times must not exceed t_final")
        self.snapshot_times = times
        self.ni_b = tuple(int(b) for b in self.ni_b)
        if any(b < 0 for b in self.ni_b):
            raise ConfigurationError("ni_b exponents must be nonnegative")


_SECTION_KEYS = {
    "family": {"kind", "fiber_dim", "base_radius", "hartogs_lambda",
               "coefficients", "bbox"},
    "stencil": {"s0", "delta"},
    "grid": {"h", "eps_cut", "pad"},
    "flow": {"t_final", "snapshot_times", "c_cfl", "dt_probe"},
    "newton": {"tol", "max_iter"},
    "diagnostics": {"berman", "relflow", "ni", "ni_b", "growth", "ke",
                    "berman_tol", "relflow_tol", "ke_tol",
                    "growth_p_max", "growth_p_diff_max", "interior_margin"},
    "run": {"out_dir", "workers", "resume"},
}


def _complex_of(value, name):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 \
            and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigurationError(f"{name} must be a number or a [re, im] pair")


def parse_config(text) -> RunConfig:
    """Parse and validate a TOML config document; unknown keys are rejected."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc

    for section, body in doc.items():
        if section not in _SECTION_KEYS:
            raise ConfigurationError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        for key in body:
            if key not in _SECTION_KEYS[section]:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")

    fam = dict(doc.get("family", {}))
    if "kind" not in fam:
        raise ConfigurationError("missing required key family.kind")
    if "coefficients" in fam:
        coeffs = []
        for entry in fam["coefficients"]:
            try:
                (a, b, c, d), val = entry
                coeffs.append(((int(a), int(b), int(c), int(d)),
                               _complex_of(val, "family.coefficients value")))
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(
                    f"malformed coefficient entry {entry!r}; expected "
                    "[[a, b, c, d], value]") from exc
        fam["coefficients"] = tuple(coeffs)
    if "bbox" in fam:
        fam["bbox"] = tuple(float(v) for v in fam["bbox"])
    family = FamilySpec(**fam)

    sten = doc.get("stencil", {})
    if "s0" not in sten:
        raise ConfigurationError("missing required key stencil.s0")
    kwargs = {"family": family, "s0": _complex_of(sten["s0"], "stencil.s0")}
    if "delta" in sten:
        kwargs["delta"] = float(sten["delta"])
    for key in doc.get("grid", {}):
        kwargs[key] = float(doc["grid"][key])
    flow = doc.get("flow", {})
    for key in ("t_final", "c_cfl", "dt_probe"):
        if key in flow:
            kwargs[key] = float(flow[key])
    if "snapshot_times" in flow:
        kwargs["snapshot_times"] = tuple(float(t) for t in flow["snapshot_times"])
    newton = doc.get("newton", {})
    if "tol" in newton:
        kwargs["newton_tol"] = float(newton["tol"])
    if "max_iter" in newton:
        kwargs["newton_max_iter"] = int(newton["max_iter"])
    diag = doc.get("diagnostics", {})
    for key in ("berman", "relflow", "ni", "growth", "ke"):
        if key in diag:
            kwargs[key] = bool(diag[key])
    for key in ("berman_tol", "relflow_tol", "ke_tol", "growth_p_max",
                "growth_p_diff_max", "interior_margin"):
        if key in diag:
            kwargs[key] = float(diag[key])
    if "ni_b" in diag:
        kwargs["ni_b"] = tuple(int(b) for b in diag["ni_b"])
    run = doc.get("run", {})
    if "out_dir" in run:
        kwargs["out_dir"] = str(run["out_dir"])
    if "workers" in run:
        kwargs["workers"] = int(run["workers"])
    if "resume" in run:
        kwargs["resume"] = bool(run["resume"])
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# snapshot persistence

def geometry_hash(stencil) -> str:
    return hashlib.sha256(repr(stencil.geometry_key()).encode()).hexdigest()[:16]


def _snapshot_path(out_dir, offset, t_index):
    p, q = offset
    return os.path.join(out_dir, "snapshots", f"fiber_p{p:+d}_q{q:+d}_t{t_index:04d}.json")


def write_snapshot(path, grid, t, phi, ghash, tag="phi"):
    record = {
        "family": grid.spec.kind,
        "s": [grid.s.real, grid.s.imag],
        "h": grid.h,
        "eps_cut": grid.eps_cut,
        "t": t,
        "grid_hash": ghash,
        "field": tag,
        "shape": list(grid.shape),
        "mask": grid.mask.ravel().astype(int).tolist(),
        "phi": [None if not m else v for m, v in
                zip(grid.mask.ravel().tolist(), np.asarray(phi).ravel().tolist())],
    }
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(record, fh)
    os.replace(tmp, path)


def read_snapshot(path, grid, ghash):
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("grid_hash") != ghash:
        raise SnapshotMismatchError(
            f"snapshot {os.path.basename(path)} was written for a different grid "
            f"(hash {record.get('grid_hash')} != {ghash})")
    if tuple(record["shape"]) != grid.shape:
        raise SnapshotMismatchError(f"snapshot {path} has wrong array shape")
    phi = np.zeros(grid.shape)
    flat = phi.ravel()
    vals = record["phi"]
    idx = np.flatnonzero(grid.mask.ravel())
    flat[idx] = [vals[i] for i in idx]
    return float(record["t"]), phi


# ---------------------------------------------------------------------------
# per-fiber work unit (module-level so it pickles for the worker pool)

def _evolve_fiber(args):
    (spec, s, h, eps_cut, bbox, times, t_end, c_cfl, start) = args
    grid = build_grid(spec, s, h, eps_cut, bbox=bbox)
    state = None
    if start is not None:
        state = FlowState(t=start[0], phi=start[1])
    result = solve_flow(grid, t_end, snapshot_times=times, c_cfl=c_cfl,
                        start_state=state)
    phis = {snap.t: snap.phi for snap in result.snapshots}
    return phis, result.records, result.breakdown, result.message, \
        result.ratio_min, result.ratio_max


def _fmt(value):
    if value is None:
        return "nan"
    return repr(float(value))


def _required_times(config):
    """All times each fiber must land on, given the enabled diagnostics."""
    times = set(config.snapshot_times)
    if config.berman or config.relflow:
        for t in config.snapshot_times:
            if t - config.dt_probe >= 0:
                times.add(t - config.dt_probe)
                times.add(t + config.dt_probe)
    return tuple(sorted(times))


class _RunContext:
    """Shared state between run() and resume()."""

    def __init__(self, config: RunConfig, out_dir, workers=None, verbose=False):
        self.config = config
        self.out_dir = out_dir or config.out_dir
        env = os.environ.get(WORKERS_ENV)
        self.workers = int(env) if env else (workers or config.workers)
        self.verbose = verbose
        self.stencil = build_stencil(config.family, config.s0, config.delta,
                                     config.h, config.eps_cut, pad=config.pad)
        self.ghash = geometry_hash(self.stencil)
        self.times = _required_times(config)
        self.t_end = max(config.t_final, max(self.times))

    def log(self, msg):
        if self.verbose:
            print(msg)

    def evolve_all(self, starts):
        """Evolve the nine fibers; starts maps offset -> (t, phi) or None."""
        cfg, st = self.config, self.stencil
        jobs = []
        for off in OFFSETS:
            g = st.grids[off]
            start = starts.get(off)
            remaining = tuple(t for t in self.times
                              if start is None or t >= start[0] - 1e-14)
            jobs.append((cfg.family, g.s, cfg.h, cfg.eps_cut, g.bbox,
                         remaining, self.t_end, cfg.c_cfl, start))
        if self.workers > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                outputs = list(pool.map(_evolve_fiber, jobs))
        else:
            outputs = [_evolve_fiber(job) for job in jobs]
        return dict(zip(OFFSETS, outputs))


def _match_time(d, t):
    for key in d:
        if abs(key - t) <= 1e-12:
            return d[key]
    raise KeyError(f"no snapshot at t = {t}")


def _diagnostics_rows(ctx: _RunContext, phis_by_fiber, psis):
    cfg, st = ctx.config, ctx.stencil
    gc = st.center
    rows = []
    with np.errstate(invalid="ignore"):
        region = -np.nan_to_num(gc.r, nan=0.0) >= cfg.interior_margin
    theta_ke = None
    if cfg.ke and psis is not None:
        theta_ke, _, _ = ke_relative_residual(st, psis, region=region)
    c0_field = None
    if cfg.growth:
        # reference curvature field for the difference-growth fit: phi(0) = 0
        zeros = {off: np.zeros(st.grids[off].shape) for off in OFFSETS}
        c0_field = assemble_total_form(st, zeros, 0.0).c()
    for t in cfg.snapshot_times:
        phis = {off: _match_time(phis_by_fiber[off], t) for off in OFFSETS}
        form = assemble_total_form(st, phis, t)
        c = form.c()
        row = {"t": t, "min_c": float(np.nanmin(c[form.valid]))}
        probe_ok = (cfg.berman or cfg.relflow) and t - cfg.dt_probe >= 0
        if probe_ok:
            pm = {off: _match_time(phis_by_fiber[off], t - cfg.dt_probe)
                  for off in OFFSETS}
            pp = {off: _match_time(phis_by_fiber[off], t + cfg.dt_probe)
                  for off in OFFSETS}
        if cfg.berman and probe_ok:
            _, sup, l2 = berman_residual(st, pm, phis, pp, t, cfg.dt_probe,
                                         region=region)
            row["berman_sup"], row["berman_l2"] = sup, l2
        if cfg.relflow and probe_ok:
            _, sup = relative_flow_residual(st, pm, phis, pp, t, cfg.dt_probe,
                                            region=region)
            row["relflow_sup"] = sup
        if cfg.ke and psis is not None:
            gap = np.abs(phis[(0, 0)] - psis[(0, 0)])[gc.mask]
            row["dist_ke"] = float(np.nanmax(gap))
            row["theta_ke_sup"] = theta_ke
        if cfg.ni:
            det_t = fiber_metric(gc, phis[(0, 0)])
            for b in cfg.ni_b:
                row[f"ni_b{b}"] = ni_integral(c, gc.r, det_t, cfg.h, b)
        if cfg.growth:
            p, _ = growth_fit(c, gc.r, cfg.eps_cut)
            row["growth_p"] = p
            if c0_field is not None:
                pd, _ = growth_fit(c - c0_field, gc.r, cfg.eps_cut)
                row["growth_p_diff"] = pd
        rows.append(row)
    return rows


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_outputs(ctx: _RunContext, rows, summary):
    os.makedirs(ctx.out_dir, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in CSV_COLUMNS])
    with open(os.path.join(ctx.out_dir, "diagnostics.csv"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    with open(os.path.join(ctx.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _summarize(ctx: _RunContext, rows, records_by_fiber, psis, newton_results,
               breakdown_msgs):
    cfg = ctx.config
    checks = {}
    checks["flow_completed"] = not breakdown_msgs
    sup_f = max(
        (rec["sup_F"] for recs in records_by_fiber.values() for rec in recs),
        default=0.0)
    worst_decay = max(
        (rec["decay_product"] for recs in records_by_fiber.values() for rec in recs),
        default=0.0)
    checks["decay_bound"] = worst_decay <= sup_f * 1.05 + 1e-8
    grad_ok = all(
        float(np.nanmax(g.grad_norm_sq[g.mask])) <= 1.0 + 1e-12
        for g in ctx.stencil.grids.values())
    checks["grad_norm_bound"] = grad_ok

    def col_max(name):
        vals = [row[name] for row in rows if name in row and np.isfinite(row[name])]
        return max(vals) if vals else None

    if cfg.berman:
        checks["berman"] = (col_max("berman_sup") or 0.0) <= cfg.berman_tol
    if cfg.relflow:
        checks["relflow"] = (col_max("relflow_sup") or 0.0) <= cfg.relflow_tol
    if cfg.ke and psis is not None:
        theta = rows[0].get("theta_ke_sup") if rows else None
        newton_sup = max(nr.residual_sup for nr in newton_results.values())
        checks["ke"] = theta is not None and theta <= cfg.ke_tol \
            and newton_sup <= cfg.newton_tol
    if cfg.growth:
        ps = [row["growth_p"] for row in rows if "growth_p" in row]
        pds = [row["growth_p_diff"] for row in rows if "growth_p_diff" in row]
        checks["growth"] = all(p <= cfg.growth_p_max for p in ps) and \
            all(p <= cfg.growth_p_diff_max for p in pds)

    slope = None
    if cfg.ke:
        pts = [(row["t"], row["dist_ke"]) for row in rows
               if "dist_ke" in row and row["t"] >= 1.0 and row["dist_ke"] > 0]
        if len(pts) >= 2:
            ts = np.array([p[0] for p in pts])
            ys = np.log([p[1] for p in pts])
            design = np.column_stack([ts, np.ones(ts.size)])
            sol, *_ = np.linalg.lstsq(design, ys, rcond=None)
            slope = float(sol[0])

    summary = {
        "schema_version": SCHEMA_VERSION,
        "grid_hash": ctx.ghash,
        "family": cfg.family.kind,
        "s0": [cfg.s0.real, cfg.s0.imag],
        "min_c_over_run": min((row["min_c"] for row in rows), default=None),
        "convergence_slope": slope,
        "residual_norms": {
            "berman_sup": col_max("berman_sup"),
            "berman_l2": col_max("berman_l2"),
            "relflow_sup": col_max("relflow_sup"),
            "theta_ke_sup": rows[0].get("theta_ke_sup") if rows else None,
            "newton_residual": max(
                (nr.residual_sup for nr in newton_results.values()), default=None)
            if newton_results else None,
            "decay_margin": worst_decay - sup_f,
        },
        "quasi_iso_constant": max(
            (nr.quasi_iso_constant for nr in newton_results.values()), default=None)
        if newton_results else None,
        "checks": checks,
        "breakdown_messages": breakdown_msgs,
    }
    return summary, checks


def _execute(ctx: _RunContext, starts):
    cfg = ctx.config
    outputs = ctx.evolve_all(starts)
    breakdown_msgs = []
    phis_by_fiber, records_by_fiber = {}, {}
    for off in OFFSETS:
        phis, records, broke, msg, _, _ = outputs[off]
        # merge in any preloaded snapshots (resume path)
        if starts.get(off) is not None and off in ctx.preloaded:
            merged = dict(ctx.preloaded[off])
            merged.update(phis)
            phis = merged
        phis_by_fiber[off] = phis
        records_by_fiber[off] = records
        if broke:
            breakdown_msgs.append(f"fiber ({off[0]}, {off[1]}): {msg}")

    time_index = {t: i for i, t in enumerate(ctx.times)}
    for off in OFFSETS:
        for t, phi in phis_by_fiber[off].items():
            for known, idx in time_index.items():
                if abs(known - t) <= 1e-12:
                    write_snapshot(_snapshot_path(ctx.out_dir, off, idx),
                                   ctx.stencil.grids[off], known, phi, ctx.ghash)

    if breakdown_msgs:
        summary = {"schema_version": SCHEMA_VERSION, "grid_hash": ctx.ghash,
                   "family": cfg.family.kind,
                   "checks": {"flow_completed": False},
                   "breakdown_messages": breakdown_msgs}
        _write_outputs(ctx, [], summary)
        return EXIT_BREAKDOWN

    psis, newton_results = None, {}
    if cfg.ke:
        for off in OFFSETS:
            newton_results[off] = newton_ke(ctx.stencil.grids[off],
                                            tol=cfg.newton_tol,
                                            max_iter=cfg.newton_max_iter)
        psis = {off: newton_results[off].psi for off in OFFSETS}

    rows = _diagnostics_rows(ctx, phis_by_fiber, psis)
    summary, checks = _summarize(ctx, rows, records_by_fiber, psis,
                                 newton_results, breakdown_msgs)
    _write_outputs(ctx, rows, summary)
    ctx.log(f"checks: {checks}")
    return EXIT_OK if all(checks.values()) else EXIT_CHECKS_FAILED


def run(config: RunConfig, out_dir=None, workers=None, verbose=False) -> int:
    """Fresh run; returns the exit code and leaves artifacts in out_dir."""
    try:
        ctx = _RunContext(config, out_dir, workers, verbose)
    except (EmptyMaskError, FlowBreakdownError, NonconvergenceError) as exc:
        print(f"error: {exc}")
        return EXIT_BREAKDOWN
    ctx.preloaded = {}
    try:
        return _execute(ctx, {off: None for off in OFFSETS})
    except (FlowBreakdownError, NonconvergenceError, EmptyMaskError) as exc:
        print(f"error: {exc}")
        return EXIT_BREAKDOWN
    except OSError as exc:
        print(f"io error: {exc}")
        return EXIT_IO


def resume(config: RunConfig, out_dir=None, workers=None, verbose=False) -> int:
    """Continue from the latest snapshot time present for all nine fibers."""
    try:
        ctx = _RunContext(config, out_dir, workers, verbose)
    except (EmptyMaskError, FlowBreakdownError, NonconvergenceError) as exc:
        print(f"error: {exc}")
        return EXIT_BREAKDOWN
    ctx.preloaded = {}
    starts = {off: None for off in OFFSETS}
    try:
        loaded = {}
        for off in OFFSETS:
            loaded[off] = {}
            for idx, t in enumerate(ctx.times):
                path = _snapshot_path(ctx.out_dir, off, idx)
                if os.path.exists(path):
                    t_read, phi = read_snapshot(path, ctx.stencil.grids[off], ctx.ghash)
                    loaded[off][t_read] = phi
        common = None
        for off in OFFSETS:
            keys = set(round(t, 12) for t in loaded[off])
            common = keys if common is None else (common & keys)
        if common:
            t_star = max(common)
            for off in OFFSETS:
                phi = _match_time(loaded[off], t_star)
                starts[off] = (t_star, phi)
                ctx.preloaded[off] = {t: p for t, p in loaded[off].items()
                                      if t <= t_star + 1e-12}
            ctx.log(f"resuming from t = {t_star}")
        return _execute(ctx, starts)
    except SnapshotMismatchError as exc:
        print(f"refusing to resume: {exc}")
        return EXIT_BREAKDOWN
    except (FlowBreakdownError, NonconvergenceError, EmptyMaskError) as exc:
        print(f"error: {exc}")
        return EXIT_BREAKDOWN
    except OSError as exc:
        print(f"io error: {exc}")
        return EXIT_IO
