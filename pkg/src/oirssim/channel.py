"""Physical-optics and Lambertian gains, and the alignment-based MIMO channel.

Two gain models live here:

* ``patch_gain``: irradiance of the LED image seen through one rotated
  mirror, integrated over the PD aperture with tensor Gauss-Legendre rules.
* ``lambertian_gain``: the point-source approximation
  ``k (N1.LR)^m (N2.UR) / (d1 + d2)^2`` used by the coherence analysis and
  the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, ValidationError
from .geometry import (Plane, check_angle, mirror_tangents, normal_from_angles, plane_axes,
                       reflect, unit, vec3)
from .linalg import blkdiag_columns, vec


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre node counts per side of the mirror and PD squares."""

    mirror_nodes: int = 16
    pd_nodes: int = 8

    def __post_init__(self):
        if self.mirror_nodes < 2 or self.pd_nodes < 1:
            raise DomainError("quadrature needs >= 2 mirror nodes and >= 1 PD node per side")

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.mirror_nodes, 2 * self.pd_nodes)


def square_rule(n: int, side: float) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on a centered square of the given side.

    Returns in-plane offsets of shape ``(n*n, 2)`` and weights summing to
    ``side**2``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    h = 0.5 * side
    u, v = np.meshgrid(x * h, x * h, indexing="ij")
    ww = np.outer(w, w) * h * h
    return np.column_stack([u.ravel(), v.ravel()]), ww.ravel()


@dataclass(frozen=True)
class Led:
    center: np.ndarray
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    radius: float = 0.1
    m: float = 1.0
    power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "normal", unit(vec3(self.normal)))
        if self.radius <= 0:
            raise ValidationError("LED radius must be positive")
        if self.m < 1:
            raise ValidationError("Lambertian index must be >= 1")
        if self.power < 0:
            raise ValidationError("emitted power must be nonnegative")

    @property
    def area(self) -> float:
        return float(np.pi * self.radius ** 2)

    @property
    def plane(self) -> Plane:
        return Plane(self.center, self.normal)


@dataclass(frozen=True)
class Pd:
    center: np.ndarray
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    side: float = 0.1
    fov: float = float(np.deg2rad(70.0))
    filter_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "normal", unit(vec3(self.normal)))
        if self.side <= 0:
            raise ValidationError("PD side must be positive")
        if not 0 < self.fov < 0.5 * np.pi:
            raise ValidationError("FOV semi-angle must lie in (0, pi/2)")

    def moved(self, center) -> "Pd":
        return Pd(center, self.normal, self.side, self.fov, self.filter_gain)


@dataclass(frozen=True)
class OirsElement:
    center: np.ndarray
    roll: float = 0.0
    yaw: float = 0.0
    side: float = 0.05
    reflectivity: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        check_angle(self.roll, "roll")
        check_angle(self.yaw, "yaw")
        if self.side <= 0:
            raise ValidationError("element side must be positive")
        if not 0 < self.reflectivity <= 1:
            raise ValidationError("reflectivity must lie in (0, 1]")

    @property
    def normal(self) -> np.ndarray:
        return normal_from_angles(self.roll, self.yaw)

    def oriented(self, roll: float, yaw: float) -> "OirsElement":
        return OirsElement(self.center, roll, yaw, self.side, self.reflectivity)

    def nodes(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates and weights of an ``n x n`` rule on the mirror."""
        uv, w = square_rule(n, self.side)
        t1, t2 = mirror_tangents(self.roll, self.yaw)
        return self.center + uv[:, :1] * t1 + uv[:, 1:] * t2, w


@dataclass(frozen=True)
class OirsArray:
    """Wall-mounted ``n_v x n_h`` grid in the XoZ plane at ``y = center[1]``.

    Element ``(i, j)`` (row from the top, column along +X) has flat index
    ``n = i * n_h + j``.
    """

    center: np.ndarray
    n_v: int = 24
    n_h: int = 24
    spacing: float = 0.1
    side: float = 0.05
    reflectivity: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        if self.n_v < 1 or self.n_h < 1:
            raise ValidationError("array needs at least one element")
        if self.spacing < self.side:
            raise ValidationError("element spacing must be at least the element side")

    @property
    def size(self) -> int:
        return self.n_v * self.n_h

    @property
    def plane(self) -> Plane:
        return Plane(self.center, np.array([0.0, 1.0, 0.0]))

    def positions(self) -> np.ndarray:
        """Element centers, shape ``(n_v * n_h, 3)``, row-major."""
        i = np.arange(self.n_v)
        j = np.arange(self.n_h)
        z = self.center[2] + ((self.n_v - 1) / 2 - i) * self.spacing
        x = self.center[0] + (j - (self.n_h - 1) / 2) * self.spacing
        X, Z = np.meshgrid(x, z)
        return np.column_stack([X.ravel(), np.full(X.size, self.center[1]), Z.ravel()])

    def element(self, n: int, roll: float = 0.0, yaw: float = 0.0) -> OirsElement:
        return OirsElement(self.positions()[n], roll, yaw, self.side, self.reflectivity)


def power_density(P, elem: OirsElement, led: Led, quad: QuadratureSpec = QuadratureSpec(),
                  pd_normal=(0.0, 0.0, 1.0), fov: float | None = None) -> float:
    """Irradiance (W/m^2) at point ``P`` reflected by one mirror element.

    Integrates, over a Gauss-Legendre rule on the mirror, the radiance of the
    LED image times the projected solid angle of each mirror node as seen
    from ``P``. Plain numpy; the compiled kernel used by :func:`patch_gain`
    is checked against this.
    """
    P = vec3(P)
    N2 = unit(vec3(pd_normal))
    N = elem.normal
    Rn, w = elem.nodes(quad.mirror_nodes)
    diff = Rn - P
    d2 = np.sum(diff * diff, axis=1)
    if np.any(d2 < 1e-24):
        raise DomainError("evaluation point coincides with an integration node")
    d = diff / np.sqrt(d2)[:, None]
    c_pd = d @ N2
    dn = d @ N
    o = reflect(d, N)
    den = o @ led.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((led.center - Rn) @ led.normal) / den
    img = Rn + t[:, None] * o
    inside = (den < 0) & (t > 0) & (np.sum((img - led.center) ** 2, axis=1) <= led.radius ** 2)
    ok = inside & (dn < 0) & (c_pd > 0)
    if fov is not None:
        ok &= c_pd >= np.cos(fov)
    cos_led = np.where(ok, -den, 0.0)
    vals = np.where(ok, w * cos_led ** (led.m - 1) * c_pd * (-dn) / d2, 0.0)
    coef = led.power * elem.reflectivity * (led.m + 1) / (2 * np.pi * led.area)
    return float(coef * vals.sum())


def _kernel_args(elem_side, led: Led, pd: Pd, quad: QuadratureSpec):
    mir_uv, mir_w = square_rule(quad.mirror_nodes, elem_side)
    pd_uv, pd_w = square_rule(quad.pd_nodes, pd.side)
    s1, s2 = plane_axes(pd.normal)
    return mir_uv, mir_w, s1, s2, pd_uv, pd_w


def _coef(led: Led, reflectivity: float, pd: Pd) -> float:
    return led.power * reflectivity * (led.m + 1) / (2 * np.pi * led.area) * pd.filter_gain


def patch_gain(elem: OirsElement, led: Led, pd: Pd, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Received power of one mirror element integrated over the PD aperture."""
    mir_uv, mir_w, s1, s2, pd_uv, pd_w = _kernel_args(elem.side, led, pd, quad)
    t1, t2 = mirror_tangents(elem.roll, elem.yaw)
    val = _kernels.patch_gain_kernel(elem.center, t1, t2, elem.normal, mir_uv, mir_w,
                                     pd.center, s1, s2, pd_uv, pd_w, led.center, led.normal,
                                     pd.normal, led.radius, float(led.m), float(np.cos(pd.fov)))
    return float(val * _coef(led, elem.reflectivity, pd))


def patch_gains(centers, rolls, yaws, pd_centers, led: Led, pd: Pd, *, side: float = 0.05,
                reflectivity: float = 0.9, quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Vectorized :func:`patch_gain` over tasks.

    ``centers`` and ``pd_centers`` have shape ``(T, 3)`` (or ``(3,)`` to
    broadcast); ``rolls`` and ``yaws`` shape ``(T,)``. ``pd`` supplies the
    aperture and FOV; its center is replaced by each task's PD center.
    """
    rolls = np.atleast_1d(np.asarray(rolls, dtype=float))
    yaws = np.atleast_1d(np.asarray(yaws, dtype=float))
    T = max(rolls.size, yaws.size, np.atleast_2d(centers).shape[0], np.atleast_2d(pd_centers).shape[0])
    R0s = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(np.asarray(centers, float)), (T, 3)))
    Us = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(np.asarray(pd_centers, float)), (T, 3)))
    rolls = np.ascontiguousarray(np.broadcast_to(rolls, (T,)))
    yaws = np.ascontiguousarray(np.broadcast_to(yaws, (T,)))
    check_angle(rolls, "roll")
    check_angle(yaws, "yaw")
    mir_uv, mir_w, s1, s2, pd_uv, pd_w = _kernel_args(side, led, pd, quad)
    vals = _kernels.batch_patch_gain_kernel(R0s, rolls, yaws, Us, mir_uv, mir_w, s1, s2, pd_uv,
                                            pd_w, led.center, led.normal, pd.normal, led.radius,
                                            float(led.m), float(np.cos(pd.fov)))
    return vals * _coef(led, reflectivity, pd)


def lambertian_gain(R, U, led: Led, pd: Pd, k: float = 1.0) -> float:
    """Point-source gain of the aligned path ``LED -> R -> U``.

    Zero outside the PD field of view (``cos(phi) >= cos(fov)`` passes) and
    when either cosine is nonpositive.
    """
    R, U = vec3(R), vec3(U)
    lr = R - led.center
    ur = R - U
    d1 = np.linalg.norm(lr)
    d2 = np.linalg.norm(ur)
    if d1 < 1e-12 or d2 < 1e-12:
        raise DomainError("element coincides with the LED or the PD")
    cos_t = float(led.normal @ lr) / d1
    cos_p = float(pd.normal @ ur) / d2
    if cos_t <= 0 or cos_p <= 0 or cos_p < np.cos(pd.fov):
        return 0.0
    return float(k * cos_t ** led.m * cos_p / (d1 + d2) ** 2)


def lambertian_gains(R, U, led_center, led_normal, m, pd_normal, fov, k: float = 1.0) -> np.ndarray:
    """Broadcasting array form of :func:`lambertian_gain` (no domain checks)."""
    R = np.asarray(R, float)
    U = np.asarray(U, float)
    lr = R - np.asarray(led_center, float)
    ur = R - U
    d1 = np.linalg.norm(lr, axis=-1)
    d2 = np.linalg.norm(ur, axis=-1)
    cos_t = (lr @ np.asarray(led_normal, float)) / d1
    cos_p = (ur @ np.asarray(pd_normal, float)) / d2
    ok = (cos_t > 0) & (cos_p > 0) & (cos_p >= np.cos(fov))
    g = k * np.clip(cos_t, 0, None) ** m * np.clip(cos_p, 0, None) / (d1 + d2) ** 2
    return np.where(ok, g, 0.0)


def calibrate_scale(elem: OirsElement, led: Led, pd: Pd, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Scale ``k`` that makes the Lambertian gain match the aligned patch gain.

    The element is oriented specularly toward the PD center before the
    physical gain is evaluated.
    """
    from .geometry import specular_angles

    roll, yaw = specular_angles(led.center, elem.center, pd.center)
    ref = patch_gain(elem.oriented(roll, yaw), led, pd, quad)
    base = lambertian_gain(elem.center, pd.center, led, pd, 1.0)
    if base == 0.0:
        raise DomainError("reference geometry is outside the field of view")
    return ref / base


@dataclass(frozen=True)
class AlignmentConfig:
    """Binary alignment of elements to LEDs (``G``) and PDs (``F``).

    ``V`` column ``n_r + n_t * N_r`` (0-based) is ``F[:, n_r] * G[:, n_t]``.
    """

    G: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        F = np.asarray(self.F, dtype=float)
        if G.ndim != 2 or F.ndim != 2 or G.shape[0] != F.shape[0]:
            raise ValidationError("G and F must be N x N_t and N x N_r")
        for name, M in (("G", G), ("F", F)):
            if not np.all((M == 0) | (M == 1)):
                raise ValidationError(f"{name} must be binary")
            if np.any(M.sum(axis=1) > 1):
                raise ValidationError(f"rows of {name} must sum to at most 1")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "F", F)

    @property
    def n_elements(self) -> int:
        return self.G.shape[0]

    @property
    def n_t(self) -> int:
        return self.G.shape[1]

    @property
    def n_r(self) -> int:
        return self.F.shape[1]

    @property
    def V(self) -> np.ndarray:
        n = self.n_elements
        V = np.empty((n, self.n_t * self.n_r))
        for nt in range(self.n_t):
            for nr in range(self.n_r):
                V[:, nr + nt * self.n_r] = self.F[:, nr] * self.G[:, nt]
        return V

    @classmethod
    def from_pairs(cls, pairs, n_elements: int, n_t: int, n_r: int) -> "AlignmentConfig":
        """Build from a mapping ``element -> (n_t, n_r)``."""
        G = np.zeros((n_elements, n_t))
        F = np.zeros((n_elements, n_r))
        for n, (nt, nr) in dict(pairs).items():
            G[n, nt] = 1.0
            F[n, nr] = 1.0
        return cls(G, F)


def pair_column(n_t: int, n_r: int, N_r: int) -> int:
    """Column of the cascaded channel holding LED ``n_t`` and PD ``n_r`` (0-based)."""
    return n_r + n_t * N_r


def check_cascaded(H_c, n_t: int, n_r: int) -> np.ndarray:
    H = np.asarray(H_c, dtype=float)
    if H.ndim != 2 or H.shape[1] != n_t * n_r:
        raise ValidationError(f"cascaded channel must have {n_t * n_r} columns")
    if np.any(H < 0):
        raise ValidationError("cascaded channel gains must be nonnegative")
    return H


def assemble_channel(H_c, align: AlignmentConfig) -> np.ndarray:
    """``N_r x N_t`` channel from per-element gains, one masked sum per entry."""
    H_c = check_cascaded(H_c, align.n_t, align.n_r)
    if H_c.shape[0] != align.n_elements:
        raise ValidationError("alignment and channel disagree on the element count")
    H = np.zeros((align.n_r, align.n_t))
    for nt in range(align.n_t):
        for nr in range(align.n_r):
            mask = align.F[:, nr] * align.G[:, nt]
            H[nr, nt] = mask @ H_c[:, pair_column(nt, nr, align.n_r)]
    return H


def assemble_channel_vec(H_c, align: AlignmentConfig) -> np.ndarray:
    """Same as :func:`assemble_channel` through ``vec(H) = blkdiag(V)^T vec(H_c)``."""
    H_c = check_cascaded(H_c, align.n_t, align.n_r)
    if H_c.shape[0] != align.n_elements:
        raise ValidationError("alignment and channel disagree on the element count")
    h = blkdiag_columns(align.V).T @ vec(H_c)
    return h.reshape(align.n_r, align.n_t, order="F")


def simulate_received(H, X, sigma: float, seed) -> np.ndarray:
    """``Y = H X + Z`` with i.i.d. Gaussian noise of standard deviation ``sigma``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    H = np.asarray(H, dtype=float)
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        raise ValidationError("pilot intensities must be nonnegative")
    if sigma < 0:
        raise ValidationError("noise standard deviation must be nonnegative")
    if H.shape[1] != X.shape[0]:
        raise ValidationError(f"H is {H.shape} but X is {X.shape}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Y = H @ X
    if sigma > 0:
        Y = Y + rng.normal(0.0, sigma, size=Y.shape)
    return Y
