"""Rotation-angle codebooks and beam sweeping.

Two constructions are provided:

* :func:`uniform_codebook`: a regular grid of roll and yaw angles.
* :func:`build_nonuniform`: geometric-optics rings. The roll angles put the
  reflected central ray's footprint on concentric rings around the point
  below the element with a constant radial increment, and each ring gets a
  yaw set whose density grows with the ring index.

Roll recursion
--------------
Footprint offsets depend on ``tan(alpha + 2*r)`` where ``alpha`` is the
polar angle of the incident ray and ``r`` is the roll measured in the
*incidence frame*: ``r = kappa * roll`` with ``kappa = +1`` when the mirror
normal at zero roll faces the incoming light and ``-1`` otherwise. The frame
makes ``alpha + 2*r1 = pi`` for the first ring (vertical reflection) and lets
one recursion serve both orientations of the yaw fold.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .channel import Led, OirsElement, Pd, QuadratureSpec, patch_gains
from .errors import DomainError, GeometryError
from .geometry import (HALF_PI, WORLD, Basis, Room, specular_angles,
                       specular_angles_array, unit, vec3)

log = logging.getLogger(__name__)

_ANGLE_TOL = 1e-12


class CodebookKind(str, enum.Enum):
    UNIFORM = "uniform"
    GO_NONUNIFORM = "go_nonuniform"


@dataclass(frozen=True)
class Codebook:
    """Roll set and one yaw set per roll ("ring")."""

    kind: CodebookKind
    params: tuple[float, float]
    rolls: tuple[float, ...]
    yaw_rings: tuple[tuple[float, ...], ...]
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.rolls) != len(self.yaw_rings):
            raise DomainError("one yaw ring per roll angle is required")
        a = np.concatenate([np.asarray(self.rolls, dtype=float)]
                           + [np.asarray(r, dtype=float) for r in self.yaw_rings])
        if not np.all((a >= -HALF_PI) & (a < HALF_PI)):
            raise DomainError("codebook angles must lie in [-pi/2, pi/2)")

    def codewords(self) -> np.ndarray:
        """All ``(roll, yaw)`` pairs, shape ``(M, 2)``."""
        if not self.rolls:
            return np.empty((0, 2))
        counts = [len(r) for r in self.yaw_rings]
        yaws = np.concatenate([np.asarray(r, dtype=float) for r in self.yaw_rings])
        return np.column_stack([np.repeat(np.asarray(self.rolls, dtype=float), counts), yaws])

    @property
    def size(self) -> int:
        return sum(len(r) for r in self.yaw_rings)

    def ring_counts(self) -> list[int]:
        return [len(r) for r in self.yaw_rings]

    def to_json(self) -> str:
        """JSON document ``{kind, params, rolls, yaw_rings}`` with 17 significant digits."""
        rings = ", ".join("[" + ", ".join(map(_num, r)) + "]" for r in self.yaw_rings)
        return ('{"kind": "%s", "params": [%s], "rolls": [%s], "yaw_rings": [%s]}'
                % (self.kind.value, ", ".join(map(_num, self.params)),
                   ", ".join(map(_num, self.rolls)), rings))

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        doc = json.loads(text)
        return cls(CodebookKind(doc["kind"]), tuple(float(p) for p in doc["params"]),
                   tuple(float(w) for w in doc["rolls"]),
                   tuple(tuple(float(g) for g in r) for r in doc["yaw_rings"]))


def _num(x: float) -> str:
    return format(float(x), ".17g")


def symmetric_grid(step: float) -> tuple[float, ...]:
    """``{i*step}`` for every integer ``i`` with ``|i*step| < pi/2``."""
    if not 0 < step < HALF_PI:
        raise DomainError("step must lie in (0, pi/2)")
    n = int(math.floor(HALF_PI / step))
    while n > 0 and n * step >= HALF_PI - _ANGLE_TOL:
        n -= 1
    return tuple(float(i * step) for i in range(-n, n + 1))


def uniform_codebook(d_roll: float, d_yaw: float) -> Codebook:
    """Uniform grid with zero included and both half-open bounds excluded."""
    rolls = symmetric_grid(d_roll)
    yaws = symmetric_grid(d_yaw)
    return Codebook(CodebookKind.UNIFORM, (d_roll, d_yaw), rolls, tuple(yaws for _ in rolls))


def _fold(angle: float) -> float:
    """Map an angle into [-pi/2, pi/2) modulo pi."""
    a = (angle + HALF_PI) % math.pi - HALF_PI
    return float(a)


def gamma_center(L, R, basis: Basis = WORLD) -> float:
    """Yaw whose vertical mirror plane contains the incident ray ``L -> R``."""
    d = unit(vec3(R) - vec3(L))
    gx = float(basis.e1 @ d)
    gy = float(basis.e2 @ d)
    if math.hypot(gx, gy) < 1e-12:
        raise GeometryError("incident ray is parallel to e3; yaw center undefined")
    return _fold(math.atan2(gx, gy))


def _basis_normal(roll: float, yaw: float, basis: Basis) -> np.ndarray:
    cw = math.cos(roll)
    return cw * math.sin(yaw) * basis.e1 + cw * math.cos(yaw) * basis.e2 - math.sin(roll) * basis.e3


def _first_roll_parts(L, R, gamma_c: float, basis: Basis) -> tuple[float, float]:
    d = unit(vec3(R) - vec3(L))
    c = d + basis.e3
    norm = float(np.linalg.norm(c))
    if norm < 1e-12:
        raise GeometryError("incident ray points straight down; it cannot be reflected downward")
    c_h = float(c @ _basis_normal(0.0, gamma_c, basis))
    return c_h, norm


def first_roll(L, R, gamma_c: float, basis: Basis = WORLD) -> float:
    """Roll that sends the central reflected ray straight down.

    The mirror normal must bisect the incident direction and ``-e3``; that
    bisector is ``normalize(LR + e3)``. The magnitude is the angle between the
    bisector and ``N(0, gamma_c)``; the sign follows from which side of the
    vertical the bisector lies on relative to ``N(0, gamma_c)``.
    """
    c_h, norm = _first_roll_parts(L, R, gamma_c, basis)
    mag = math.acos(min(1.0, abs(c_h) / norm))
    return -mag if c_h >= 0 else mag


def incidence_alpha(L, R, basis: Basis = WORLD) -> float:
    d = unit(vec3(R) - vec3(L))
    return math.acos(float(np.clip(basis.e3 @ d, -1.0, 1.0)))


def next_roll(w_i: float, w_prev: float, alpha: float) -> float:
    """Next roll (incidence frame) keeping ``tan(alpha + 2w)`` in arithmetic progression.

    Among the ``pi/2``-periodic solutions the one closest to the linear
    extrapolation ``2*w_i - w_prev`` is returned.
    """
    t_i = math.tan(alpha + 2 * w_i)
    t_p = math.tan(alpha + 2 * w_prev)
    target = 2 * t_i - t_p
    if not math.isfinite(target):
        raise DomainError("tangent argument at a singularity")
    base = 0.5 * (math.atan(target) - alpha)
    guess = 2 * w_i - w_prev
    k = round((guess - base) / HALF_PI)
    return base + k * HALF_PI


def roll_residual(rolls_frame, alpha: float) -> np.ndarray:
    """Second differences of ``tan(alpha + 2w)`` over consecutive rolls."""
    t = np.tan(alpha + 2 * np.asarray(rolls_frame, dtype=float))
    return t[2:] + t[:-2] - 2 * t[1:-1]


def yaw_ring(i: int, gamma_c: float, d_yaw: float) -> tuple[float, ...]:
    """Yaw set of ring ``i``: ``gamma_c + j*d_yaw/i`` for all integers ``j``
    with the result strictly inside ``(-pi/2, pi/2)``, sorted ascending."""
    if i < 1:
        raise DomainError("ring index starts at 1")
    step = d_yaw / i
    lo = math.ceil((-HALF_PI + _ANGLE_TOL - gamma_c) / step)
    hi = math.floor((HALF_PI - _ANGLE_TOL - gamma_c) / step)
    ys = gamma_c + np.arange(lo, hi + 1) * step
    return tuple(ys[(ys > -HALF_PI) & (ys < HALF_PI)].tolist())


def footprints(codewords, L, R, room: Room) -> tuple[np.ndarray, np.ndarray]:
    """Floor hit points of the reflected central ray for each codeword.

    Returns ``(points, valid)``; ``valid`` requires the mirror to face the
    LED, the reflected ray to go down and the hit point to be on the floor.
    """
    cw = np.asarray(codewords, dtype=float).reshape(-1, 2)
    L, R = vec3(L), vec3(R)
    d = unit(R - L)
    c = np.cos(cw[:, 0])
    N = np.column_stack([c * np.sin(cw[:, 1]), c * np.cos(cw[:, 1]), -np.sin(cw[:, 0])])
    dn = N @ d
    o = d[None, :] - 2 * dn[:, None] * N
    down = (o[:, 2] < -1e-12) & (dn < 0)
    t = np.where(down, R[2] / np.where(down, -o[:, 2], 1.0), np.nan)
    pts = R[None, :] + t[:, None] * o
    valid = down & room.on_floor(pts[:, :2])
    return pts, valid


def _footprint_xy(roll: float, yaw: float, L, R, room: Room):
    pts, ok = footprints([[roll, yaw]], L, R, room)
    return pts[0], bool(ok[0])


def build_nonuniform(L, R, d_roll: float, d_yaw: float, room: Room = Room(),
                     basis: Basis = WORLD, ring1_full: bool = False,
                     max_rings: int = 10000) -> Codebook:
    """Geometric-optics codebook for an element at ``R`` lit from ``L``.

    Parameters
    ----------
    d_roll, d_yaw : float
        Roll step between rings 1 and 2, and the base yaw spacing (radians).
    ring1_full : bool
        Give ring 1 a full yaw set instead of ``{gamma_c}`` alone.
    """
    if d_roll <= 0 or d_yaw <= 0:
        raise DomainError("spacings must be positive")
    L, R = vec3(L), vec3(R)
    gc = gamma_center(L, R, basis)
    w1 = first_roll(L, R, gc, basis)
    c_h, _ = _first_roll_parts(L, R, gc, basis)
    kappa = 1.0 if c_h < 0 else -1.0
    alpha = incidence_alpha(L, R, basis)

    def in_bounds(wf: float) -> bool:
        if alpha + 2 * wf <= HALF_PI + 1e-9:
            return False
        w = kappa * wf
        if not -HALF_PI <= w < HALF_PI:
            return False
        return _footprint_xy(w, gc, L, R, room)[1]

    frame = [kappa * w1]
    if not in_bounds(frame[0]):
        raise GeometryError("the point below the element is not on the floor")
    nxt = frame[0] - d_roll
    while in_bounds(nxt) and len(frame) < max_rings:
        frame.append(nxt)
        try:
            nxt = next_roll(frame[-1], frame[-2], alpha)
        except DomainError:
            break

    rolls, rings = [], []
    for i, wf in enumerate(frame, start=1):
        w = kappa * wf
        ys = (gc,) if (i == 1 and not ring1_full) else yaw_ring(i, gc, d_yaw)
        cw = np.column_stack([np.full(len(ys), w), ys])
        _, ok = footprints(cw, L, R, room)
        kept = tuple(np.asarray(ys, dtype=float)[ok].tolist())
        if kept:
            rolls.append(float(w))
            rings.append(kept)
    info = dict(gamma_c=gc, alpha=alpha, kappa=kappa, first_roll=w1, rolls_frame=frame)
    return Codebook(CodebookKind.GO_NONUNIFORM, (d_roll, d_yaw), tuple(rolls), tuple(rings), info)


@dataclass(frozen=True)
class SweepResult:
    chosen: tuple[float, float]
    swept_count: int
    achieved_gain: float
    best_possible_gain: float
    fallback: bool = False


def sweep_subset(codebook: Codebook, L, R, pd_estimate, radius: float,
                 room: Room = Room()) -> tuple[np.ndarray, bool]:
    """Codewords whose footprint lies within ``radius`` of the PD estimate.

    Returns the subset and a flag that is True when it was empty and the
    nearest valid footprint was substituted.
    """
    if radius <= 0:
        raise DomainError("radius must be positive")
    cw = codebook.codewords()
    pts, ok = footprints(cw, L, R, room)
    est = vec3(pd_estimate)
    dist = np.where(ok, np.hypot(pts[:, 0] - est[0], pts[:, 1] - est[1]), np.inf)
    sel = dist <= radius
    if np.any(sel):
        return cw[sel], False
    if not np.any(ok):
        raise GeometryError("no codeword reaches the floor")
    return cw[[int(np.argmin(dist))]], True


def physical_gain_fn(elem: OirsElement, led: Led, pd: Pd, quad: QuadratureSpec = QuadratureSpec()):
    """Gain callable ``f(rolls, yaws) -> gains`` backed by the patch model."""

    def fn(rolls, yaws):
        return patch_gains(elem.center, rolls, yaws, pd.center, led, pd, side=elem.side,
                           reflectivity=elem.reflectivity, quad=quad)

    return fn


def beam_sweep(codebook: Codebook, elem: OirsElement, led: Led, pd_estimate, radius: float,
               gain_fn, room: Room = Room(), optimum_start=None) -> SweepResult:
    """Evaluate ``gain_fn`` on the codewords near the PD estimate and keep the best.

    ``best_possible_gain`` is a local continuum optimum of ``gain_fn`` started
    from both the specular orientation (toward ``optimum_start`` or the
    estimate) and the chosen codeword, so it never falls below the achieved
    gain.
    """
    subset, fallback = sweep_subset(codebook, led.center, elem.center, pd_estimate, radius, room)
    if fallback:
        log.warning("empty sweep subset at r=%.3g m; using the nearest footprint", radius)
    gains = np.asarray(gain_fn(subset[:, 0], subset[:, 1]), dtype=float)
    k = int(np.argmax(gains))
    chosen = (float(subset[k, 0]), float(subset[k, 1]))
    achieved = float(gains[k])
    target = vec3(pd_estimate if optimum_start is None else optimum_start)
    best = max(achieved, _continuum_optimum(gain_fn, specular_angles(led.center, elem.center, target)),
               _continuum_optimum(gain_fn, chosen))
    return SweepResult(chosen, int(len(subset)), achieved, best, fallback)


def _continuum_optimum(gain_fn, start) -> float:
    lo, hi = -HALF_PI, HALF_PI - 1e-9

    def neg(x):
        w, g = np.clip(x, lo, hi)
        return -float(np.asarray(gain_fn(np.array([w]), np.array([g])))[0])

    f0 = -neg(np.asarray(start))
    res = minimize(neg, np.asarray(start, dtype=float), method="Nelder-Mead",
                   options=dict(xatol=1e-6, fatol=0.0, initial_simplex=None, maxiter=200))
    return max(f0, -float(res.fun))


def swept_count(codebook: Codebook, L, R, pd_estimate, radius: float, room: Room = Room()) -> int:
    """Number of codewords a sweep of radius ``radius`` would evaluate."""
    cw = codebook.codewords()
    pts, ok = footprints(cw, L, R, room)
    est = vec3(pd_estimate)
    dist = np.hypot(pts[:, 0] - est[0], pts[:, 1] - est[1])
    return int(np.sum(ok & (dist <= radius)))


@dataclass(frozen=True)
class ErrorNormResult:
    norm: float
    mean_relative_error: float
    mean_true_gain: float
    x: np.ndarray
    y: np.ndarray
    true_gain: np.ndarray
    best_gain: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return np.abs(self.best_gain - self.true_gain)


def _error_candidates(codebook, elem, led, pd_template, grid_spacing, room, k_nearest, quad):
    if grid_spacing <= 0:
        raise DomainError("grid spacing must be positive")
    xs, ys = room.floor_grid(grid_spacing)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, pd_template.center[2])])

    roll_t, yaw_t = specular_angles_array(led.center, elem.center, pts)
    true = patch_gains(elem.center, roll_t, yaw_t, pts, led, pd_template, side=elem.side,
                       reflectivity=elem.reflectivity, quad=quad)

    cw = codebook.codewords()
    fp, ok = footprints(cw, led.center, elem.center, room)
    cw, fp = cw[ok], fp[ok]
    if len(cw) == 0:
        raise GeometryError("no codeword reaches the floor")
    k = min(k_nearest, len(cw))
    tree = cKDTree(fp[:, :2])
    dist, idx = tree.query(pts[:, :2], k=k)
    dist = dist.reshape(len(pts), k)
    idx = idx.reshape(len(pts), k)
    g = patch_gains(elem.center, cw[idx.ravel(), 0], cw[idx.ravel(), 1], np.repeat(pts, k, axis=0),
                    led, pd_template, side=elem.side, reflectivity=elem.reflectivity, quad=quad)
    return xs, ys, X.shape, true, dist, g.reshape(len(pts), k)


def _error_result(xs, ys, shape, true, dist, cand, radius) -> ErrorNormResult:
    if radius is not None:
        # keep the nearest one as a fallback when nothing is within the radius
        use = dist <= radius
        use[:, 0] = True
        best = np.where(use, cand, 0.0).max(axis=1)
    else:
        best = cand.max(axis=1)
    err = np.abs(best - true)
    mean_true = float(true.mean())
    return ErrorNormResult(float(np.linalg.norm(err)), float(err.mean() / mean_true) if mean_true else math.nan,
                           mean_true, xs, ys, true.reshape(shape), best.reshape(shape))


def codebook_error_norm(codebook: Codebook, elem: OirsElement, led: Led, pd_template: Pd,
                        grid_spacing: float = 0.01, room: Room = Room(), radius: float | None = None,
                        k_nearest: int = 6, quad: QuadratureSpec = QuadratureSpec()) -> ErrorNormResult:
    """Frobenius norm of the gain-error matrix over a floor grid of PD positions.

    At every grid point the true optimum is the specularly aligned gain and
    the codebook answer is the best of the ``k_nearest`` codewords whose
    footprints are closest to the PD (optionally limited to ``radius``).
    Codewords farther away than that miss the PD aperture and cannot win.
    """
    parts = _error_candidates(codebook, elem, led, pd_template, grid_spacing, room, k_nearest, quad)
    return _error_result(*parts, radius)


def codebook_error_norms(codebook: Codebook, elem: OirsElement, led: Led, pd_template: Pd,
                         radii, grid_spacing: float = 0.01, room: Room = Room(),
                         k_nearest: int = 6, quad: QuadratureSpec = QuadratureSpec()) -> list[ErrorNormResult]:
    """:func:`codebook_error_norm` for several sweep radii, sharing the gain evaluations."""
    parts = _error_candidates(codebook, elem, led, pd_template, grid_spacing, room, k_nearest, quad)
    return [_error_result(*parts, r) for r in radii]
