"""Scenario configuration: presets, JSON loading/saving and validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import Led, OirsArray, OirsElement, Pd, QuadratureSpec
from .errors import ConfigError
from .geometry import Room

SCHEMA_VERSION = 1

_SISO = {
    "schema_version": SCHEMA_VERSION,
    "preset": "paper-siso",
    "room": {"width": 4.0, "depth": 4.0, "height": 3.0},
    "led": {"positions": [[2.0, 2.0, 3.0]], "normal": [0.0, 0.0, -1.0], "radius": 0.1,
            "lambertian_index": 1.0, "power": 1.0},
    "pd": {"positions": [[2.0, 2.0, 0.0]], "normal": [0.0, 0.0, 1.0], "side": 0.1,
           "fov_deg": 70.0, "filter_gain": 1.0, "spacing": 0.4},
    "oirs": {"center": [2.0, 0.0, 1.5], "n_v": 24, "n_h": 24, "element_side": 0.05,
             "spacing": 0.1, "reflectivity": 0.9},
    "velocity": [0.5, 0.0, 0.0],
    "radius": 0.5,
    "xi_c": 0.04,
    "lambertian_scale": "auto",
    "quadrature": {"mirror_nodes": 16, "pd_nodes": 8},
    "estimation": {"pilots": 100, "seeds": 50, "spacings": [1, 2, 3, 4],
                   "sigma_rel": [0.01, 0.0316, 0.1, 0.316, 1.0, 3.16, 10.0],
                   "interpolation": "bilinear", "extrapolation": "hold"},
    "codebook": {"grid_spacing": 0.05, "k_nearest": 6,
                 "uniform_deg": [0.6, 0.9, 1.3],
                 "nonuniform_deg": [[1.5, 15.0], [2.0, 15.0], [3.0, 15.0]],
                 "omega_sweep_deg": [1.0, 1.5, 2.0, 2.5, 3.0],
                 "gamma_sweep_deg": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                 "radii": [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0],
                 "ring1_full": False},
    "demo": {"led_radius": 0.05, "element_side": 0.02, "pd_side": 0.02},
}

_MIMO = copy.deepcopy(_SISO)
_MIMO["preset"] = "paper-mimo"
_MIMO["led"]["positions"] = [[1.8, 2.0, 3.0], [2.2, 2.0, 3.0]]
_MIMO["pd"]["positions"] = [[1.8, 2.0, 0.0], [2.2, 2.0, 0.0]]

PRESETS = {"paper-siso": _SISO, "paper-mimo": _MIMO}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(doc, path, lo=-math.inf, hi=math.inf, *, open_lo=False, open_hi=False) -> float:
    try:
        val = float(doc)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a number, got {doc!r}") from None
    if not math.isfinite(val):
        raise ConfigError(path, "must be finite")
    if (val < lo) or (open_lo and val == lo) or (val > hi) or (open_hi and val == hi):
        raise ConfigError(path, f"value {val} out of range")
    return val


def _int(doc, path, lo=1) -> int:
    if isinstance(doc, bool) or not isinstance(doc, int) or doc < lo:
        raise ConfigError(path, f"expected an integer >= {lo}")
    return doc


def _vec(doc, path) -> np.ndarray:
    if not isinstance(doc, (list, tuple)) or len(doc) != 3:
        raise ConfigError(path, "expected a list of three numbers")
    return np.array([_num(x, f"{path}[{i}]") for i, x in enumerate(doc)])


def _points(doc, path) -> list[np.ndarray]:
    if not isinstance(doc, list) or not doc:
        raise ConfigError(path, "expected a nonempty list of positions")
    return [_vec(p, f"{path}[{i}]") for i, p in enumerate(doc)]


def _numlist(doc, path, *bounds, **kw) -> list[float]:
    if not isinstance(doc, list) or not doc:
        raise ConfigError(path, "expected a nonempty list")
    return [_num(x, f"{path}[{i}]", *bounds, **kw) for i, x in enumerate(doc)]


_TOP_KEYS = set(_SISO)


@dataclass(frozen=True)
class Scenario:
    """Validated scenario. ``doc`` keeps the full merged configuration."""

    doc: dict

    # -- construction -------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        if not isinstance(raw, dict):
            raise ConfigError("$", "scenario must be a JSON object")
        preset = raw.get("preset", "paper-siso")
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {version!r}")
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        doc = _merge(PRESETS[preset], raw)
        sc = cls(doc)
        sc.validate()
        return sc

    @classmethod
    def preset(cls, name: str = "paper-siso") -> "Scenario":
        return cls.from_dict({"preset": name})

    def validate(self) -> None:
        d = self.doc
        room = self.room
        for i, p in enumerate(_points(d["led"]["positions"], "led.positions")):
            if not room.contains(p):
                raise ConfigError(f"led.positions[{i}]", "outside the room")
        for i, p in enumerate(_points(d["pd"]["positions"], "pd.positions")):
            if not room.contains(p):
                raise ConfigError(f"pd.positions[{i}]", "outside the room")
        _num(d["led"]["radius"], "led.radius", 0, open_lo=True)
        _num(d["led"]["lambertian_index"], "led.lambertian_index", 1)
        _num(d["led"]["power"], "led.power", 0)
        _num(d["pd"]["side"], "pd.side", 0, open_lo=True)
        _num(d["pd"]["fov_deg"], "pd.fov_deg", 0, 90, open_lo=True, open_hi=True)
        _num(d["pd"]["filter_gain"], "pd.filter_gain", 0, open_lo=True)
        o = d["oirs"]
        _int(o["n_v"], "oirs.n_v")
        _int(o["n_h"], "oirs.n_h")
        side = _num(o["element_side"], "oirs.element_side", 0, open_lo=True)
        if _num(o["spacing"], "oirs.spacing", 0, open_lo=True) < side:
            raise ConfigError("oirs.spacing", "must be at least the element side")
        _num(o["reflectivity"], "oirs.reflectivity", 0, 1, open_lo=True)
        arr = self.array
        pos = arr.positions()
        half = 0.5 * side
        if (pos[:, 0].min() - half < 0 or pos[:, 0].max() + half > room.width
                or pos[:, 2].min() - half < 0 or pos[:, 2].max() + half > room.height
                or not 0 <= arr.center[1] <= room.depth):
            raise ConfigError("oirs", "array does not fit inside the room")
        _vec(d["velocity"], "velocity")
        _num(d["radius"], "radius", 0, open_lo=True)
        _num(d["xi_c"], "xi_c", 0, 1, open_lo=True, open_hi=True)
        if d["lambertian_scale"] != "auto":
            _num(d["lambertian_scale"], "lambertian_scale", 0, open_lo=True)
        _int(d["quadrature"]["mirror_nodes"], "quadrature.mirror_nodes", 2)
        _int(d["quadrature"]["pd_nodes"], "quadrature.pd_nodes", 1)
        e = d["estimation"]
        _int(e["pilots"], "estimation.pilots")
        _int(e["seeds"], "estimation.seeds")
        for i, s in enumerate(e["spacings"]):
            _int(s, f"estimation.spacings[{i}]")
        _numlist(e["sigma_rel"], "estimation.sigma_rel", 0)
        if e["interpolation"] not in ("bilinear", "bicubic"):
            raise ConfigError("estimation.interpolation", "expected 'bilinear' or 'bicubic'")
        if e["extrapolation"] not in ("hold", "linear"):
            raise ConfigError("estimation.extrapolation", "expected 'hold' or 'linear'")
        c = d["codebook"]
        _num(c["grid_spacing"], "codebook.grid_spacing", 0, open_lo=True)
        _int(c["k_nearest"], "codebook.k_nearest")
        _numlist(c["uniform_deg"], "codebook.uniform_deg", 0, 90, open_lo=True, open_hi=True)
        for i, pair in enumerate(c["nonuniform_deg"]):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError(f"codebook.nonuniform_deg[{i}]", "expected [d_roll, d_yaw]")
            _numlist(pair, f"codebook.nonuniform_deg[{i}]", 0, open_lo=True)
        _numlist(c["omega_sweep_deg"], "codebook.omega_sweep_deg", 0, open_lo=True)
        _numlist(c["gamma_sweep_deg"], "codebook.gamma_sweep_deg", 0, open_lo=True)
        _numlist(c["radii"], "codebook.radii", 0, open_lo=True)
        for k in ("led_radius", "element_side", "pd_side"):
            _num(d["demo"][k], f"demo.{k}", 0, open_lo=True)

    # -- persistence --------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")

    @property
    def hash(self) -> str:
        canon = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, **over) -> "Scenario":
        return Scenario.from_dict(_merge(self.doc, over))

    # -- derived objects ----------------------------------------------
    @property
    def room(self) -> Room:
        r = self.doc["room"]
        return Room(_num(r["width"], "room.width", 0, open_lo=True),
                    _num(r["depth"], "room.depth", 0, open_lo=True),
                    _num(r["height"], "room.height", 0, open_lo=True))

    @property
    def leds(self) -> tuple[Led, ...]:
        d = self.doc["led"]
        return tuple(Led(p, d["normal"], d["radius"], d["lambertian_index"], d["power"])
                     for p in d["positions"])

    @property
    def pds(self) -> tuple[Pd, ...]:
        d = self.doc["pd"]
        return tuple(Pd(p, d["normal"], d["side"], math.radians(d["fov_deg"]), d["filter_gain"])
                     for p in d["positions"])

    @property
    def array(self) -> OirsArray:
        o = self.doc["oirs"]
        return OirsArray(o["center"], o["n_v"], o["n_h"], o["spacing"], o["element_side"],
                         o["reflectivity"])

    @property
    def center_element(self) -> OirsElement:
        o = self.doc["oirs"]
        return OirsElement(o["center"], 0.0, 0.0, o["element_side"], o["reflectivity"])

    @property
    def quad(self) -> QuadratureSpec:
        q = self.doc["quadrature"]
        return QuadratureSpec(q["mirror_nodes"], q["pd_nodes"])

    @property
    def velocity(self) -> np.ndarray:
        return np.array(self.doc["velocity"], dtype=float)

    @property
    def xi_c(self) -> float:
        return float(self.doc["xi_c"])

    @property
    def radius(self) -> float:
        return float(self.doc["radius"])

    def lambertian_scale(self) -> float:
        """Scale ``k`` of the point-source model, calibrated when set to "auto"."""
        from .channel import calibrate_scale

        k = self.doc["lambertian_scale"]
        if k != "auto":
            return float(k)
        return calibrate_scale(self.center_element, self.leds[0], self.pds[0], self.quad)

    def mimo_variant(self, n: int = 2) -> "Scenario":
        """Scenario with ``n`` LEDs and ``n`` PDs in a row along X, centered on
        the first LED/PD and spaced by the PD spacing."""
        if len(self.leds) >= n and len(self.pds) >= n:
            return self
        sp = float(self.doc["pd"]["spacing"])
        offs = (np.arange(n) - (n - 1) / 2) * sp
        L0 = np.array(self.doc["led"]["positions"][0], dtype=float)
        U0 = np.array(self.doc["pd"]["positions"][0], dtype=float)
        leds = [(L0 + [o, 0, 0]).tolist() for o in offs]
        pds = [(U0 + [o, 0, 0]).tolist() for o in offs]
        return self.with_overrides(led={"positions": leds}, pd={"positions": pds})

    def siso_variant(self) -> "Scenario":
        if len(self.leds) == 1 and len(self.pds) == 1:
            return self
        L = np.mean([led.center for led in self.leds], axis=0).tolist()
        U = np.mean([pd.center for pd in self.pds], axis=0).tolist()
        return self.with_overrides(led={"positions": [L]}, pd={"positions": [U]})


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; missing fields come from its preset."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("$", f"cannot read {p}: {exc.strerror or exc}") from None
    try:
        raw = json.loads(text or "{}")
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return Scenario.from_dict(raw)
