"""Spatial and temporal coherence of the OIRS-reflected Lambertian gain.

The relative gain change is expanded to second order,

    xi_s(dR) = w.dR + dR.W.dR          (element shifted by dR)
    xi_t(dt) = c1 dt + c2 dt^2          (PD moving with velocity v)

and the coherence distance/time is the longest interval on which
``|xi| <= xi_c``. Gradient and Hessian are taken analytically from
``log h = m log(N1.u1) + log(N2.u2) - 2 log(d1 + d2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GeometryError
from .geometry import unit, vec3

X_AXIS = np.array([1.0, 0.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])


class Branch(str, enum.Enum):
    QUADRATIC = "quadratic"
    LINEAR_BOUND = "linear_bound"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class CoherenceGeometry:
    """LED at ``L``, element at ``R`` and PD at ``U`` with their normals."""

    L: np.ndarray
    R: np.ndarray
    U: np.ndarray
    N1: np.ndarray = np.array([0.0, 0.0, -1.0])
    N2: np.ndarray = np.array([0.0, 0.0, 1.0])
    m: float = 1.0

    def __post_init__(self):
        for name in ("L", "R", "U"):
            object.__setattr__(self, name, vec3(getattr(self, name)))
        object.__setattr__(self, "N1", unit(vec3(self.N1)))
        object.__setattr__(self, "N2", unit(vec3(self.N2)))
        if self.d1 < 1e-12 or self.d2 < 1e-12:
            raise GeometryError("element coincides with the LED or the PD")
        if self.cos_theta <= 0 or self.cos_phi <= 0:
            raise GeometryError("element must face both the LED and the PD")

    @classmethod
    def from_devices(cls, R, led, pd) -> "CoherenceGeometry":
        return cls(led.center, R, pd.center, led.normal, pd.normal, led.m)

    @property
    def d1(self) -> float:
        return float(np.linalg.norm(self.R - self.L))

    @property
    def d2(self) -> float:
        return float(np.linalg.norm(self.R - self.U))

    @property
    def cos_theta(self) -> float:
        return float(self.N1 @ (self.R - self.L)) / self.d1

    @property
    def cos_phi(self) -> float:
        return float(self.N2 @ (self.R - self.U)) / self.d2

    def shifted(self, dR=None, dU=None) -> "CoherenceGeometry":
        R = self.R if dR is None else self.R + vec3(dR)
        U = self.U if dU is None else self.U + vec3(dU)
        return CoherenceGeometry(self.L, R, U, self.N1, self.N2, self.m)


@dataclass(frozen=True)
class GrowthExpansion:
    w: np.ndarray
    W: np.ndarray

    def __call__(self, dR) -> float:
        dR = vec3(dR)
        return float(self.w @ dR + dR @ self.W @ dR)

    def along(self, direction) -> tuple[float, float]:
        """Linear and quadratic coefficients along a unit direction."""
        d = unit(vec3(direction))
        return float(self.w @ d), float(d @ self.W @ d)


@dataclass(frozen=True)
class Interval:
    length: float
    branch: Branch
    linear: float
    quadratic: float
    root: float  # nonzero root of the quadratic model, nan if undefined
    pure_quadratic: bool = False


@dataclass(frozen=True)
class DirectionDetail:
    direction: np.ndarray
    interval: Interval


@dataclass(frozen=True)
class DistanceResult:
    d_c: float
    xi_c: float
    details: tuple
    sweep_min: float | None = None

    @property
    def limiting(self) -> DirectionDetail:
        return min(self.details, key=lambda d: d.interval.length)


@dataclass(frozen=True)
class CoherenceResult:
    xi_c: float
    t_c: float
    d_c: float
    dt2: float
    dr2: float
    branch_time: Branch
    branch_space: Branch


def log_gain(L, R, U, N1, N2, m) -> float:
    """``log`` of the Lambertian ratio (no FOV gating, unit scale)."""
    lr = R - L
    ur = R - U
    d1 = np.linalg.norm(lr)
    d2 = np.linalg.norm(ur)
    return m * math.log(N1 @ lr / d1) + math.log(N2 @ ur / d2) - 2 * math.log(d1 + d2)


def exact_spatial(geom: CoherenceGeometry, dR) -> float:
    """Exact relative gain change when the element moves by ``dR``."""
    g = geom
    base = log_gain(g.L, g.R, g.U, g.N1, g.N2, g.m)
    return math.expm1(log_gain(g.L, g.R + vec3(dR), g.U, g.N1, g.N2, g.m) - base)


def exact_temporal(geom: CoherenceGeometry, v, dt: float) -> float:
    """Exact relative gain change after the PD moves for ``dt`` at velocity ``v``."""
    g = geom
    base = log_gain(g.L, g.R, g.U, g.N1, g.N2, g.m)
    return math.expm1(log_gain(g.L, g.R, g.U + dt * vec3(v), g.N1, g.N2, g.m) - base)


def _cos_terms(N, u, d):
    """Gradient and Hessian (w.r.t. R) of ``log(N.u)`` with ``u = (R - X)/d``."""
    c = float(N @ u)
    g = (N - c * u) / d
    P = np.eye(3) - np.outer(u, u)
    H = -(np.outer(u, g) + np.outer(g, u)) / d - c * P / d ** 2
    return g / c, H / c - np.outer(g, g) / c ** 2


def _log_derivatives(geom: CoherenceGeometry):
    u1 = (geom.R - geom.L) / geom.d1
    u2 = (geom.R - geom.U) / geom.d2
    S = geom.d1 + geom.d2
    gA, HA = _cos_terms(geom.N1, u1, geom.d1)
    gB, HB = _cos_terms(geom.N2, u2, geom.d2)
    P1 = np.eye(3) - np.outer(u1, u1)
    P2 = np.eye(3) - np.outer(u2, u2)
    gS = u1 + u2
    HS = (P1 / geom.d1 + P2 / geom.d2) / S - np.outer(gS, gS) / S ** 2
    return dict(u2=u2, S=S, gA=gA, HA=HA, gB=gB, HB=HB, P2=P2, gS=gS, HS=HS)


def spatial_expansion(geom: CoherenceGeometry) -> GrowthExpansion:
    """Second-order expansion of the relative gain change in the element position."""
    t = _log_derivatives(geom)
    grad = geom.m * t["gA"] + t["gB"] - 2 * t["gS"] / t["S"]
    hess = geom.m * t["HA"] + t["HB"] - 2 * t["HS"]
    W = 0.5 * (hess + np.outer(grad, grad))
    return GrowthExpansion(grad, 0.5 * (W + W.T))


def temporal_expansion(geom: CoherenceGeometry, v) -> tuple[float, float]:
    """Coefficients ``(c1, c2)`` of ``xi_t(dt) = c1 dt + c2 dt^2``.

    Only the PD-side factors depend on ``U``; moving ``U`` flips the sign of
    their gradient and leaves their Hessian unchanged.
    """
    v = vec3(v)
    t = _log_derivatives(geom)
    u2, S = t["u2"], t["S"]
    grad = -(t["gB"] - 2 * u2 / S)
    hess = t["HB"] - 2 * (t["P2"] / (geom.d2 * S) - np.outer(u2, u2) / S ** 2)
    c1 = float(grad @ v)
    c2 = float(0.5 * v @ (hess + np.outer(grad, grad)) @ v)
    return c1, c2


def max_interval(a: float, c: float, xi_c: float) -> Interval:
    """Longest interval containing 0 on which ``|a x + c x^2| <= xi_c``, closed form.

    If the parabola's vertex stays inside the band the whole region between
    the outer crossings counts; otherwise the linear bound ``2 xi_c/|a|`` is
    returned.
    """
    if not 0 < xi_c < 1:
        raise DomainError("xi_c must lie in (0, 1)")
    if a == 0.0 and c == 0.0:
        return Interval(math.inf, Branch.UNBOUNDED, a, c, math.nan)
    if c == 0.0:
        return Interval(2 * xi_c / abs(a), Branch.LINEAR_BOUND, a, c, math.nan)
    root = -a / c
    vertex = -a * a / (4 * c)
    if abs(vertex) <= xi_c:
        return Interval(math.sqrt(a * a + 4 * xi_c * abs(c)) / abs(c), Branch.QUADRATIC, a, c, root,
                        pure_quadratic=(a == 0.0))
    return Interval(2 * xi_c / abs(a), Branch.LINEAR_BOUND, a, c, root)


def coherence_time(geom: CoherenceGeometry, v, xi_c: float) -> Interval:
    """Coherence time of a PD moving at velocity ``v``.

    ``v = 0`` yields an interval with ``branch == Branch.UNBOUNDED`` and
    infinite length. When ``c1 == 0`` the pure quadratic interval is returned
    with ``pure_quadratic`` set.
    """
    c1, c2 = temporal_expansion(geom, v)
    return max_interval(c1, c2, xi_c)


def in_plane_sweep(n: int = 64) -> np.ndarray:
    """``n`` unit directions spanning the half-circle of the XoZ plane."""
    ang = np.pi * np.arange(n) / n
    return np.column_stack([np.cos(ang), np.zeros(n), np.sin(ang)])


def coherence_distance(geom: CoherenceGeometry, xi_c: float, directions=None,
                       sweep: int = 0) -> DistanceResult:
    """Coherence distance over the OIRS plane.

    Evaluates the closed-form interval along each direction (default: world
    X and Z, the axes of a wall in the XoZ plane) and returns the minimum.
    With ``sweep > 0`` the minimum over that many in-plane directions is also
    reported as ``sweep_min`` (diagnostic only).
    """
    exp = spatial_expansion(geom)
    dirs = [X_AXIS, Z_AXIS] if directions is None else [unit(vec3(d)) for d in directions]
    details = tuple(DirectionDetail(d, max_interval(*exp.along(d), xi_c)) for d in dirs)
    d_c = min(d.interval.length for d in details)
    sweep_min = None
    if sweep:
        sweep_min = min(max_interval(*exp.along(d), xi_c).length for d in in_plane_sweep(sweep))
    return DistanceResult(d_c, xi_c, details, sweep_min)


def coherence_summary(geom: CoherenceGeometry, v, xi_c: float) -> CoherenceResult:
    dist = coherence_distance(geom, xi_c)
    lim = dist.limiting.interval
    tc = coherence_time(geom, v, xi_c)
    return CoherenceResult(xi_c, tc.length, dist.d_c, tc.root, lim.root, tc.branch, lim.branch)


def grid_interval(fn, xi_c: float, step: float, max_extent: float) -> float:
    """Length of the contiguous interval around 0 where ``|fn(x)| <= xi_c``.

    Walks outward from 0 in both directions with the given step, stopping at
    the first violation or at ``max_extent``.
    """
    n_max = int(math.ceil(max_extent / step))
    ends = []
    for sign in (1.0, -1.0):
        k = 0
        while k < n_max and abs(fn(sign * (k + 1) * step)) <= xi_c:
            k += 1
        ends.append(k * step)
    return ends[0] + ends[1]


def crossing_distance(fn, xi_c: float, step: float, max_extent: float) -> float:
    """First positive ``x`` (on a grid) where ``|fn(x)|`` exceeds ``xi_c``."""
    n_max = int(math.ceil(max_extent / step))
    for k in range(1, n_max + 1):
        if abs(fn(k * step)) > xi_c:
            return k * step
    return math.inf
