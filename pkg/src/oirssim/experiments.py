"""Experiment runners behind the ``oirs-sim`` command.

Each runner takes a :class:`~oirssim.scenario.Scenario` plus run options and
returns an :class:`ExperimentResult` holding named tables (header + rows)
and a JSON-friendly summary. Writing files is left to :func:`write_result`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import Led, OirsElement, pair_column, patch_gains, power_density
from .codebook import (build_nonuniform, codebook_error_norms, footprints, swept_count,
                       uniform_codebook)
from .coherence import (CoherenceGeometry, X_AXIS, Z_AXIS, coherence_distance, coherence_time,
                        crossing_distance, exact_spatial, exact_temporal, grid_interval,
                        spatial_expansion, temporal_expansion)
from .errors import ConfigError
from .estimator import (JstsConfig, SubarrayPlan, System, build_schedule, jsts_run,
                        lambertian_truth, overhead_report)
from .geometry import specular_angles
from .scenario import Scenario

log = logging.getLogger(__name__)

EXPERIMENTS = ("angle-selectivity", "coherence-space", "coherence-time", "codebook-omega",
               "codebook-gamma", "codebook-compare", "codebook-count", "nmse-siso",
               "nmse-mimo", "overhead")


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [r[i] for r in self.rows]


@dataclass
class ExperimentResult:
    name: str
    tables: dict[str, Table]
    summary: dict
    extra_files: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    spacing: tuple[int, ...] | None = None
    sigma: tuple[float, ...] | None = None
    radius: float | None = None
    seeds: int | None = None
    grid_spacing: float | None = None


# -- helpers ---------------------------------------------------------------

def _trial_seed(base: int, *keys: int) -> int:
    ss = np.random.SeedSequence([base, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _siso(sc: Scenario):
    return sc.leds[0], sc.pds[0]


def _geometry(sc: Scenario) -> CoherenceGeometry:
    led, pd = _siso(sc)
    return CoherenceGeometry.from_devices(sc.array.center, led, pd)


# -- angle selectivity -----------------------------------------------------

def angle_selectivity(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """Reflected power versus angle of departure for a small mirror.

    The mirror is oriented so that the LED reflects specularly toward the
    first PD; the field is then sampled on a circle around the element in
    the plane of incidence, with the receiving aperture facing the element.
    """
    demo = sc.doc["demo"]
    led0, pd0 = _siso(sc)
    led = Led(led0.center, led0.normal, demo["led_radius"], led0.m, led0.power)
    R = sc.array.center
    roll, yaw = specular_angles(led.center, R, pd0.center)
    elem = OirsElement(R, roll, yaw, demo["element_side"], sc.array.reflectivity)
    N = elem.normal
    out = pd0.center - R
    dist = float(np.linalg.norm(out))
    spec = out / dist
    # in-plane unit vector orthogonal to N, on the specular side
    e = spec - (spec @ N) * N
    e /= np.linalg.norm(e)
    aod_spec = math.degrees(math.atan2(float(spec @ e), float(spec @ N)))
    angles = np.round(np.arange(-89.0, 89.0 + 1e-9, 0.1), 1)
    vals = []
    for a in np.radians(angles):
        d = math.cos(a) * N + math.sin(a) * e
        P = R + dist * d
        vals.append(power_density(P, elem, led, sc.quad, pd_normal=-d))
    vals = np.array(vals)
    area = float(np.trapezoid(vals, np.radians(angles)))
    norm = vals / area if area > 0 else vals
    peak = int(np.argmax(vals))
    half = vals >= 0.5 * vals[peak]
    idx = np.flatnonzero(half)
    fwhm = float(angles[idx[-1]] - angles[idx[0]]) if idx.size else 0.0
    # largest value outside the contiguous main lobe
    lo = hi = peak
    while lo > 0 and vals[lo - 1] > 0 and vals[lo - 1] <= vals[lo]:
        lo -= 1
    while hi < len(vals) - 1 and vals[hi + 1] > 0 and vals[hi + 1] <= vals[hi]:
        hi += 1
    side = np.concatenate([vals[:lo], vals[hi + 1:]])
    side_ratio = float(side.max() / vals[peak]) if side.size and vals[peak] > 0 else 0.0
    t = Table(["aod_deg", "power_density", "normalized"],
              [[float(a), float(v), float(n)] for a, v, n in zip(angles, vals, norm)])
    summary = dict(specular_aod_deg=aod_spec, peak_aod_deg=float(angles[peak]),
                   peak_power_density=float(vals[peak]), fwhm_deg=fwhm,
                   mainlobe_deg=[float(angles[lo]), float(angles[hi])],
                   max_sidelobe_ratio=side_ratio, distance_m=dist)
    return ExperimentResult("angle-selectivity", {"angle_selectivity": t}, summary)


# -- coherence -------------------------------------------------------------

def coherence_space(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """Relative gain change versus element shift along the wall axes."""
    geom = _geometry(sc)
    xi = sc.xi_c
    led, pd = _siso(sc)
    exp = spatial_expansion(geom)
    t0 = time.perf_counter()
    dist = coherence_distance(geom, xi, sweep=64)
    t_analytic = time.perf_counter() - t0

    elem = sc.center_element
    rows = []
    shifts = np.round(np.arange(-0.6, 0.6 + 1e-9, 0.005), 3)
    for name, axis in (("x", X_AXIS), ("z", Z_AXIS)):
        a, c = exp.along(axis)
        Rs = geom.R + shifts[:, None] * axis
        rl, yw = np.array([specular_angles(led.center, r, pd.center) for r in Rs]).T
        phys = patch_gains(Rs, rl, yw, pd.center, led, pd, side=elem.side,
                           reflectivity=elem.reflectivity, quad=sc.quad)
        p0 = phys[np.flatnonzero(shifts == 0)[0]]
        for s, ph in zip(shifts, phys):
            rows.append([name, float(s), exact_spatial(geom, s * axis), float(a * s),
                         float(a * s + c * s * s), float(ph / p0 - 1.0)])
    table = Table(["direction", "shift_m", "exact", "linear", "quadratic", "physical"], rows)

    step = 1e-3
    grid = {}
    crossings = {}
    for name, axis in (("x", X_AXIS), ("z", Z_AXIS)):
        grid[name] = grid_interval(lambda s, ax=axis: exact_spatial(geom, s * ax), xi, step, 3.0)
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            crossings[tag + name] = crossing_distance(
                lambda s, ax=axis, sg=sign: exact_spatial(geom, sg * s * ax), xi, step, 3.0)
    # physical-model interval from the sampled curve
    phys_len = {}
    for name in ("x", "z"):
        sub = [r for r in rows if r[0] == name]
        s_arr = np.array([r[1] for r in sub])
        ok = np.abs([r[5] for r in sub]) <= xi
        i0 = int(np.flatnonzero(s_arr == 0)[0])
        hi = i0
        while hi + 1 < len(ok) and ok[hi + 1]:
            hi += 1
        lo = i0
        while lo - 1 >= 0 and ok[lo - 1]:
            lo -= 1
        phys_len[name] = float(s_arr[hi] - s_arr[lo])
    details = {("x" if d.direction[0] else "z"): dict(
        length=d.interval.length, branch=d.interval.branch.value, linear=d.interval.linear,
        quadratic=d.interval.quadratic) for d in dist.details}
    summary = dict(xi_c=xi, d_c=dist.d_c, d_c_grid=min(grid.values()), grid_lengths=grid,
                   directions=details, one_sided_crossings=crossings,
                   physical_lengths=phys_len, d_c_physical=min(phys_len.values()),
                   sweep_min=dist.sweep_min, w=exp.w.tolist(), W=exp.W.tolist(),
                   analytic_seconds=t_analytic)
    return ExperimentResult("coherence-space", {"coherence_space": table}, summary)


def coherence_time_exp(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """Relative gain change versus time for a moving PD, and t_c versus threshold."""
    geom = _geometry(sc)
    v = sc.velocity
    xi = sc.xi_c
    c1, c2 = temporal_expansion(geom, v)
    iv = coherence_time(geom, v, xi)
    speed = float(np.linalg.norm(v))
    horizon = min(4.0 * iv.length, 10.0) if math.isfinite(iv.length) else 10.0
    ts = np.linspace(-horizon, horizon, 401)
    curve = Table(["dt_s", "exact", "linear", "quadratic"],
                  [[float(t), exact_temporal(geom, v, t), c1 * t, c1 * t + c2 * t * t] for t in ts])
    sweep = Table(["direction", "speed_mps", "xi_c", "t_c_s", "branch"])
    for name, axis in (("x", X_AXIS), ("y", np.array([0.0, 1.0, 0.0]))):
        for sp in (0.25, 0.5, 1.0):
            for x in (0.01, 0.02, 0.04, 0.06, 0.08, 0.1):
                r = coherence_time(geom, sp * axis, x)
                sweep.rows.append([name, sp, x, r.length, r.branch.value])
    grid_tc = (grid_interval(lambda t: exact_temporal(geom, v, t), xi, 1e-3 * max(iv.length, 0.1), 20 * max(iv.length, 1))
               if speed > 0 and math.isfinite(iv.length) else math.inf)
    summary = dict(xi_c=xi, velocity=v.tolist(), c1=c1, c2=c2, t_c=iv.length,
                   branch=iv.branch.value, pure_quadratic=iv.pure_quadratic,
                   dt2=iv.root, t_c_grid=grid_tc)
    return ExperimentResult("coherence-time", {"coherence_time": curve, "t_c_sweep": sweep}, summary)


# -- codebooks -------------------------------------------------------------

def _cb_inputs(sc: Scenario, opts: RunOptions):
    led, pd = _siso(sc)
    elem = sc.center_element
    cfg = sc.doc["codebook"]
    spacing = opts.grid_spacing or cfg["grid_spacing"]
    return led, pd, elem, cfg, spacing


def _cb_rows(sc: Scenario, opts: RunOptions, specs, radii=(None,)) -> Table:
    led, pd, elem, cfg, spacing = _cb_inputs(sc, opts)
    t = Table(["codebook", "d_roll_deg", "d_yaw_deg", "codewords", "radius_m", "error_norm",
               "mean_relative_error", "mean_true_gain"])
    for kind, dr, dy in specs:
        if kind == "uniform":
            cb = uniform_codebook(math.radians(dr), math.radians(dy))
        else:
            cb = build_nonuniform(led.center, elem.center, math.radians(dr), math.radians(dy), sc.room,
                                  ring1_full=cfg["ring1_full"])
        t0 = time.perf_counter()
        res = codebook_error_norms(cb, elem, led, pd, radii, spacing, sc.room, cfg["k_nearest"], sc.quad)
        log.info("%s %.3g/%.3g deg: %d codewords, %.1f s", kind, dr, dy, cb.size,
                 time.perf_counter() - t0)
        for r, e in zip(radii, res):
            t.rows.append([kind, dr, dy, cb.size, "" if r is None else r, e.norm,
                           e.mean_relative_error, e.mean_true_gain])
    return t


def codebook_omega(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    cfg = sc.doc["codebook"]
    specs = [("nonuniform", w, 15.0) for w in cfg["omega_sweep_deg"]]
    specs.append(("uniform", cfg["uniform_deg"][0], cfg["uniform_deg"][0]))
    t = _cb_rows(sc, opts, specs)
    return ExperimentResult("codebook-omega", {"codebook_omega": t},
                            dict(grid_spacing=opts.grid_spacing or cfg["grid_spacing"], d_yaw_deg=15.0))


def codebook_gamma(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    cfg = sc.doc["codebook"]
    specs = [("nonuniform", 1.5, g) for g in cfg["gamma_sweep_deg"]]
    specs.append(("uniform", cfg["uniform_deg"][0], cfg["uniform_deg"][0]))
    t = _cb_rows(sc, opts, specs)
    return ExperimentResult("codebook-gamma", {"codebook_gamma": t},
                            dict(grid_spacing=opts.grid_spacing or cfg["grid_spacing"], d_roll_deg=1.5))


def _compare_specs(cfg):
    return ([("uniform", u, u) for u in cfg["uniform_deg"]]
            + [("nonuniform", a, b) for a, b in cfg["nonuniform_deg"]])


def codebook_compare(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """Error norms of uniform and non-uniform codebooks versus sweep radius."""
    cfg = sc.doc["codebook"]
    radii = [opts.radius] if opts.radius else list(cfg["radii"])
    t = _cb_rows(sc, opts, _compare_specs(cfg), radii)
    return ExperimentResult("codebook-compare", {"codebook_compare": t},
                            dict(grid_spacing=opts.grid_spacing or cfg["grid_spacing"], radii=radii))


def codebook_count(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """Number of swept codewords versus sweep radius."""
    led, pd, elem, cfg, _ = _cb_inputs(sc, opts)
    radii = [opts.radius] if opts.radius else list(cfg["radii"])
    xs, ys = sc.room.floor_grid(0.5)
    t = Table(["codebook", "d_roll_deg", "d_yaw_deg", "codewords", "radius_m",
               "swept_at_pd", "swept_floor_mean"])
    summary = {}
    for kind, dr, dy in _compare_specs(cfg):
        cb = (uniform_codebook(math.radians(dr), math.radians(dy)) if kind == "uniform"
              else build_nonuniform(led.center, elem.center, math.radians(dr), math.radians(dy), sc.room,
                                    ring1_full=cfg["ring1_full"]))
        fp, ok = footprints(cb.codewords(), led.center, elem.center, sc.room)
        fp = fp[ok, :2]
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        dist = np.hypot(fp[None, :, 0] - gx.reshape(-1, 1), fp[None, :, 1] - gy.reshape(-1, 1))
        for r in radii:
            at_pd = swept_count(cb, led.center, elem.center, pd.center, r, sc.room)
            mean = float(np.mean(np.sum(dist <= r, axis=1)))
            t.rows.append([kind, dr, dy, cb.size, r, at_pd, mean])
        summary[f"{kind}_{dr:g}_{dy:g}"] = cb.size
    return ExperimentResult("codebook-count", {"codebook_count": t}, dict(codebook_sizes=summary))


# -- estimation ------------------------------------------------------------

def _system(sc: Scenario) -> System:
    return System(sc.array, sc.leds, sc.pds, sc.room, sc.lambertian_scale())


def _jsts_config(sc: Scenario, s: int) -> JstsConfig:
    e = sc.doc["estimation"]
    return JstsConfig(s=s, xi_c=sc.xi_c, pilots=e["pilots"], method=e["interpolation"],
                      extrapolation=e["extrapolation"], radius=sc.radius)


def nmse_sweep(sc: Scenario, opts: RunOptions, label: str = "") -> tuple[Table, dict]:
    """Mean NMSE over seeds for each subarray size and relative noise level.

    Noise is specified relative to the rms of the true cascaded channel so
    the grid means the same thing for any channel scale.
    """
    e = sc.doc["estimation"]
    spacings = list(opts.spacing or e["spacings"])
    sig_rel = list(opts.sigma or e["sigma_rel"])
    n_seeds = opts.seeds or e["seeds"]
    system = _system(sc)
    H = lambertian_truth(system)
    rms = float(np.sqrt(np.mean(H ** 2)))
    cached = (H, 0)
    t = Table(["config", "s", "Q", "sigma_rel", "sigma", "trials", "nmse_mean", "nmse_db",
               "nmse_std"])
    example = None
    for si, s in enumerate(spacings):
        cfg = _jsts_config(sc, s)
        for ki, sr in enumerate(sig_rel):
            vals = []
            for trial in range(n_seeds):
                seed = _trial_seed(opts.seed, system.n_t, s, ki, trial)
                H_est, H_true, diag = jsts_run(system, sr * rms, seed, cfg, truth=lambda _s: cached)
                vals.append(diag.nmse)
                if example is None and trial == 0:
                    example = (s, sr, seed, H_est, H_true, diag)
            m = float(np.mean(vals))
            Q = SubarrayPlan(sc.array.n_v, sc.array.n_h, s).Q
            t.rows.append([label or f"{system.n_t}x{system.n_r}", s, Q, sr, sr * rms, n_seeds, m,
                           10 * math.log10(m) if m > 0 else -math.inf, float(np.std(vals))])
    return t, dict(rms_gain=rms, spacings=spacings, sigma_rel=sig_rel, seeds=n_seeds,
                   lambertian_scale=system.k, example=example, n_r=system.n_r)


def _estimates_table(example, sc: Scenario, n_r: int) -> Table:
    """One row per (element, LED, PD); ``block`` is -1 for interpolated entries."""
    s, sr, seed, H_est, H_true, diag = example
    n_t = H_est.shape[1] // n_r
    arr = sc.array
    activated = build_schedule(SubarrayPlan(arr.n_v, arr.n_h, s), n_t, n_r).activated
    t = Table(["element", "n_t", "n_r", "block", "estimate", "truth"])
    for n in range(H_est.shape[0]):
        for nt in range(n_t):
            for nr in range(n_r):
                c = pair_column(nt, nr, n_r)
                t.rows.append([n, nt, nr, activated.get((n, nt, nr), -1), float(H_est[n, c]),
                               float(H_true[n, c])])
    return t


def _diag_json(example) -> str:
    s, sr, seed, H_est, H_true, diag = example
    d = diag.summary()
    d.update(sigma_rel=sr, n_blocks=diag.n_blocks, extrapolated=diag.extrapolated,
             clamped=diag.clamped, coherence_distance=diag.coherence_distance)
    return json.dumps(d, indent=2, sort_keys=True, default=float) + "\n"


def nmse_siso(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    base = sc.siso_variant()
    t, info = nmse_sweep(base, opts, "siso")
    ex = info.pop("example")
    return ExperimentResult("nmse-siso", {"nmse": t, "estimates": _estimates_table(ex, base, info["n_r"])},
                            info, {"diagnostics.json": _diag_json(ex)})


def nmse_mimo(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """MIMO NMSE curves, with the SISO curves of the same scenario for reference."""
    mimo = sc.mimo_variant()
    t, info = nmse_sweep(mimo, opts, "mimo")
    ex = info.pop("example")
    t_siso, info_siso = nmse_sweep(sc.siso_variant(), opts, "siso")
    info_siso.pop("example")
    t.rows.extend(t_siso.rows)
    info["siso_rms_gain"] = info_siso["rms_gain"]
    info["leds"] = [led.center.tolist() for led in mimo.leds]
    info["pds"] = [pd.center.tolist() for pd in mimo.pds]
    return ExperimentResult("nmse-mimo", {"nmse": t, "estimates": _estimates_table(ex, mimo, info["n_r"])},
                            info, {"diagnostics.json": _diag_json(ex)})


def overhead(sc: Scenario, opts: RunOptions) -> ExperimentResult:
    """Estimated parameters and flop model versus subarray size."""
    e = sc.doc["estimation"]
    arr = sc.array
    spacings = list(opts.spacing or range(1, 7))
    t = Table(["n_t", "n_r", "s", "Q", "grid_v", "grid_h", "parameters", "baseline_parameters",
               "reduction", "flops_per_block", "flops"])
    for n in (1, 2):
        for s in spacings:
            rep = overhead_report(SubarrayPlan(arr.n_v, arr.n_h, s), n, n, e["pilots"])
            t.rows.append([n, n, s, rep.Q, rep.grid[0], rep.grid[1], rep.parameters,
                           rep.baseline_parameters, rep.reduction, rep.flops_per_block, rep.flops])
    geom = _geometry(sc)
    d_c = coherence_distance(geom, sc.xi_c).d_c
    return ExperimentResult("overhead", {"overhead": t},
                            dict(d_c=d_c, spacing=arr.spacing, pilots=e["pilots"]))


RUNNERS = {
    "angle-selectivity": angle_selectivity,
    "coherence-space": coherence_space,
    "coherence-time": coherence_time_exp,
    "codebook-omega": codebook_omega,
    "codebook-gamma": codebook_gamma,
    "codebook-compare": codebook_compare,
    "codebook-count": codebook_count,
    "nmse-siso": nmse_siso,
    "nmse-mimo": nmse_mimo,
    "overhead": overhead,
}


def run_experiment(name: str, sc: Scenario, opts: RunOptions = RunOptions()) -> ExperimentResult:
    if name not in RUNNERS:
        raise ConfigError("experiment", f"unknown experiment {name!r}")
    if opts.radius is not None:
        sc = sc.with_overrides(radius=opts.radius)
    return RUNNERS[name](sc, opts)


# -- output ----------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, table: Table, seed: int, scenario_hash: str) -> None:
    """RFC-4180 CSV with LF line endings and provenance columns appended."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(table.header + ["seed", "scenario_hash"])
        for row in table.rows:
            w.writerow([_cell(v) for v in row] + [str(seed), scenario_hash])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_result(result: ExperimentResult, sc: Scenario, out_dir, seed: int,
                 elapsed: float, figures=()) -> Path:
    """Write tables, extra files, the scenario and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for key, table in result.tables.items():
        p = out / f"{key}.csv"
        write_csv(p, table, seed, sc.hash)
        files.append(p)
    for name, text in result.extra_files.items():
        p = out / name
        p.write_text(text, encoding="utf-8", newline="\n")
        files.append(p)
    scen = out / "scenario.json"
    sc.save(scen)
    files.append(scen)
    files.extend(Path(f) for f in figures)
    manifest = dict(
        tool="oirs-sim", version=__version__, experiment=result.name, seed=seed,
        scenario_hash=sc.hash, scenario_preset=sc.doc["preset"],
        schema_version=sc.doc["schema_version"], elapsed_seconds=elapsed,
        files=[dict(name=f.name, sha256=_sha256(f)) for f in files],
        summary=_jsonable(result.summary),
    )
    mp = out / "manifest.json"
    mp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return mp
