"""Figures for experiment results, rendered with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentResult, Table  # noqa: E402


def _cols(table: Table, *names):
    return [np.asarray(table.column(n)) for n in names]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _angle(res, out):
    a, v = _cols(res.tables["angle_selectivity"], "aod_deg", "normalized")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(a, v)
    ax.axvline(res.summary["specular_aod_deg"], ls="--", c="gray", lw=0.8)
    ax.set_xlabel("angle of departure (deg)")
    ax.set_ylabel("normalized power density (1/rad)")
    return [_save(fig, out / "angle_selectivity.png")]


def _space(res, out):
    t = res.tables["coherence_space"]
    d, s, ex, li, qu, ph = _cols(t, "direction", "shift_m", "exact", "linear", "quadratic", "physical")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    xi = res.summary["xi_c"]
    for ax, name in zip(axes, ("x", "z")):
        m = d == name
        ax.plot(s[m], ex[m], label="exact")
        ax.plot(s[m], li[m], "--", label="first order")
        ax.plot(s[m], qu[m], ":", label="second order")
        ax.plot(s[m], ph[m], lw=0.8, label="patch model")
        ax.axhspan(-xi, xi, color="gray", alpha=0.15)
        ax.set_xlabel(f"shift along {name} (m)")
        ax.set_ylim(-0.5, 0.5)
    axes[0].set_ylabel("relative gain change")
    axes[0].legend()
    return [_save(fig, out / "coherence_space.png")]


def _time(res, out):
    t, ex, li, qu = _cols(res.tables["coherence_time"], "dt_s", "exact", "linear", "quadratic")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, ex, label="exact")
    ax.plot(t, li, "--", label="first order")
    ax.plot(t, qu, ":", label="second order")
    xi = res.summary["xi_c"]
    ax.axhspan(-xi, xi, color="gray", alpha=0.15)
    ax.set_xlabel("time offset (s)")
    ax.set_ylabel("relative gain change")
    ax.set_ylim(-0.5, 0.5)
    ax.legend()
    return [_save(fig, out / "coherence_time.png")]


def _cb_sweep(key, xname, xlabel):
    def plot(res, out):
        t = res.tables[key]
        kind, x, norm = _cols(t, "codebook", xname, "error_norm")
        fig, ax = plt.subplots(figsize=(6, 4))
        m = kind == "nonuniform"
        ax.plot(x[m].astype(float), norm[m].astype(float), "o-", label="non-uniform")
        for v in norm[~m].astype(float):
            ax.axhline(v, ls="--", c="gray", label="uniform reference")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("gain error norm (W)")
        ax.legend()
        return [_save(fig, out / f"{key}.png")]
    return plot


def _compare(res, out):
    t = res.tables["codebook_compare"]
    kind, dr, dy, r, norm = _cols(t, "codebook", "d_roll_deg", "d_yaw_deg", "radius_m", "error_norm")
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in dict.fromkeys(zip(kind, dr, dy)):
        m = (kind == key[0]) & (dr == key[1]) & (dy == key[2])
        ls = "-" if key[0] == "nonuniform" else "--"
        ax.plot(r[m].astype(float), norm[m].astype(float), ls, marker="o",
                label=f"{key[0]} {key[1]:g}/{key[2]:g} deg")
    ax.set_xlabel("sweep radius (m)")
    ax.set_ylabel("gain error norm (W)")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    return [_save(fig, out / "codebook_compare.png")]


def _count(res, out):
    t = res.tables["codebook_count"]
    kind, dr, dy, r, cnt = _cols(t, "codebook", "d_roll_deg", "d_yaw_deg", "radius_m", "swept_at_pd")
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in dict.fromkeys(zip(kind, dr, dy)):
        m = (kind == key[0]) & (dr == key[1]) & (dy == key[2])
        ls = "-" if key[0] == "nonuniform" else "--"
        ax.plot(r[m].astype(float), cnt[m].astype(float), ls, marker="o",
                label=f"{key[0]} {key[1]:g}/{key[2]:g} deg")
    ax.set_xlabel("sweep radius (m)")
    ax.set_ylabel("swept codewords")
    ax.legend(fontsize=8)
    return [_save(fig, out / "codebook_count.png")]


def _nmse(res, out):
    t = res.tables["nmse"]
    cfg, s, sr, db = _cols(t, "config", "s", "sigma_rel", "nmse_db")
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in dict.fromkeys(zip(cfg, s)):
        m = (cfg == key[0]) & (s == key[1])
        ls = "-" if key[0] != "siso" or res.name == "nmse-siso" else ":"
        ax.plot(sr[m].astype(float), db[m].astype(float), ls, marker="o", label=f"{key[0]} s={key[1]}")
    ax.set_xscale("log")
    ax.set_xlabel("noise std relative to rms gain")
    ax.set_ylabel("NMSE (dB)")
    ax.legend(fontsize=8)
    return [_save(fig, out / f"{res.name.replace('-', '_')}.png")]


def _overhead(res, out):
    t = res.tables["overhead"]
    n, s, p, base = _cols(t, "n_t", "s", "parameters", "baseline_parameters")
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in sorted(set(n.tolist())):
        m = n == k
        ax.plot(s[m], p[m], "o-", label=f"{k}x{k} estimated")
        ax.axhline(base[m][0], ls="--", c="gray", lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("subarray size s")
    ax.set_ylabel("estimated parameters")
    ax.legend()
    return [_save(fig, out / "overhead.png")]


_PLOTTERS = {
    "angle-selectivity": _angle,
    "coherence-space": _space,
    "coherence-time": _time,
    "codebook-omega": _cb_sweep("codebook_omega", "d_roll_deg", "roll step (deg)"),
    "codebook-gamma": _cb_sweep("codebook_gamma", "d_yaw_deg", "yaw step (deg)"),
    "codebook-compare": _compare,
    "codebook-count": _count,
    "nmse-siso": _nmse,
    "nmse-mimo": _nmse,
    "overhead": _overhead,
}


def render(result: ExperimentResult, out_dir) -> list[Path]:
    """Render the figures of one experiment into ``out_dir``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _PLOTTERS[result.name](result, out)
