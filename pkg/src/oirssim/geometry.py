"""Cartesian primitives, mirror orientation and specular reflection.

Vectors are plain ``numpy`` arrays of shape ``(3,)`` (or ``(..., 3)`` where a
function says it broadcasts). Positions are in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GeometryError

HALF_PI = 0.5 * np.pi
_EPS = 1e-12


def vec3(v) -> np.ndarray:
    """Coerce ``v`` to a float array of shape (3,)."""
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise DomainError(f"expected a 3-vector, got shape {a.shape}")
    return a


def unit(v) -> np.ndarray:
    """Return ``v`` scaled to unit Euclidean norm."""
    a = np.asarray(v, dtype=float)
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(n < _EPS):
        raise DomainError("cannot normalize a zero-length vector")
    return a / n


def check_angle(angle, name: str = "angle") -> None:
    """Raise DomainError unless every value lies in [-pi/2, pi/2)."""
    a = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(a)) or np.any(a < -HALF_PI) or np.any(a >= HALF_PI):
        raise DomainError(f"{name} must lie in [-pi/2, pi/2)")


def normal_from_angles(roll, yaw) -> np.ndarray:
    """Unit normal of a mirror element with roll ``roll`` and yaw ``yaw``.

    Parameters
    ----------
    roll, yaw : float or array_like
        Rotation angles in radians, each in ``[-pi/2, pi/2)``. Arrays broadcast.

    Returns
    -------
    ndarray
        ``(cos w sin g, cos w cos g, -sin w)`` with a trailing axis of length 3.
    """
    check_angle(roll, "roll")
    check_angle(yaw, "yaw")
    return _normal(roll, yaw)


def _normal(roll, yaw) -> np.ndarray:
    w = np.asarray(roll, dtype=float)
    g = np.asarray(yaw, dtype=float)
    w, g = np.broadcast_arrays(w, g)
    cw = np.cos(w)
    return np.stack([cw * np.sin(g), cw * np.cos(g), -np.sin(w)], axis=-1)


def mirror_tangents(roll: float, yaw: float) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal in-plane axes of a rotated mirror.

    The first axis is horizontal and the second is ``normal x first``. At zero
    rotation they are world X and -Z, so the element edges follow the wall grid.
    """
    n = _normal(roll, yaw)
    t1 = np.array([np.cos(yaw), -np.sin(yaw), 0.0])
    t2 = np.cross(n, t1)
    return t1, t2


def reflect(d, n) -> np.ndarray:
    """Specular reflection ``d - 2 (n.d) n``. Broadcasts over leading axes."""
    d = np.asarray(d, dtype=float)
    n = np.asarray(n, dtype=float)
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


@dataclass(frozen=True)
class Plane:
    """Infinite plane through ``point`` with unit ``normal``."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", vec3(self.point))
        object.__setattr__(self, "normal", unit(vec3(self.normal)))

    def intersect(self, origin, direction) -> np.ndarray | None:
        """Forward intersection of the ray ``origin + t*direction``, ``t > 0``.

        Returns None when the ray is parallel to the plane or points away.
        """
        origin = vec3(origin)
        direction = vec3(direction)
        den = float(self.normal @ direction)
        if abs(den) < _EPS:
            return None
        t = float(self.normal @ (self.point - origin)) / den
        if t <= 0.0:
            return None
        return origin + t * direction

    def signed_distance(self, p) -> float:
        return float(self.normal @ (vec3(p) - self.point))


@dataclass(frozen=True)
class Basis:
    """Right-handed orthonormal frame. Defaults to the world axes."""

    e1: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    e2: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    e3: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        m = np.stack([vec3(self.e1), vec3(self.e2), vec3(self.e3)])
        if not np.allclose(m @ m.T, np.eye(3), atol=1e-12):
            raise GeometryError("basis vectors must be orthonormal")
        if np.linalg.det(m) < 0:
            raise GeometryError("basis must be right-handed")
        for name, row in zip(("e1", "e2", "e3"), m):
            object.__setattr__(self, name, row)


WORLD = Basis()


def source_image_point(R, mirror_normal, P, transmission_plane: Plane) -> np.ndarray | None:
    """Point of the transmission plane that a ray reaching ``P`` via ``R`` came from.

    The ray ``P -> R`` is reflected at the mirror and traced back into the
    transmission plane. None means no such point exists.
    """
    R = vec3(R)
    P = vec3(P)
    n = unit(vec3(mirror_normal))
    back = reflect(unit(R - P), n)
    return transmission_plane.intersect(R, back)


def incidence_cosines(L, R, U, N1, N2) -> tuple[float, float]:
    """Cosines of the irradiance angle at the LED and incidence angle at the PD.

    Uses ``normalize(R - L)`` and ``normalize(R - U)``, so both are positive
    when the element faces the LED and PD.
    """
    L, R, U = vec3(L), vec3(R), vec3(U)
    if np.linalg.norm(R - L) < _EPS or np.linalg.norm(R - U) < _EPS:
        raise DomainError("coincident points")
    cos_t = float(np.clip(unit(vec3(N1)) @ unit(R - L), -1.0, 1.0))
    cos_p = float(np.clip(unit(vec3(N2)) @ unit(R - U), -1.0, 1.0))
    return cos_t, cos_p


def specular_angles(L, R, U) -> tuple[float, float]:
    """Roll and yaw that reflect the ray ``L -> R`` exactly onto ``U``.

    The normal is the bisector of the incoming and outgoing directions; its
    sign is chosen so that ``cos(roll) >= 0`` (the codeword domain).
    """
    L, R, U = vec3(L), vec3(R), vec3(U)
    n = unit(unit(U - R) - unit(R - L))
    horiz = np.hypot(n[0], n[1])
    if horiz < _EPS:
        raise GeometryError("specular normal is vertical; yaw undefined")
    # (n_x, n_y) = cos(w) (sin g, cos g): need n_y >= 0 for |g| <= pi/2
    if n[1] < 0 or (n[1] == 0 and n[0] > 0):
        n = -n
    roll = float(np.arctan2(-n[2], horiz))
    yaw = float(np.arctan2(n[0], n[1]))
    if yaw >= HALF_PI:
        yaw -= np.pi
    return roll, yaw


def plane_axes(normal) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane orthogonal to ``normal``.

    World X is used as the first axis whenever it is not (nearly) parallel
    to the normal, which keeps floor and ceiling apertures axis-aligned.
    """
    n = unit(vec3(normal))
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = unit(ref - (ref @ n) * n)
    t2 = np.cross(n, t1)
    return t1, t2


def specular_angles_array(L, R, U) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`specular_angles` over a stack of PD positions ``U``."""
    L, R = vec3(L), vec3(R)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = unit(unit(U - R) - unit(R - L))
    flip = (n[:, 1] < 0) | ((n[:, 1] == 0) & (n[:, 0] > 0))
    n = np.where(flip[:, None], -n, n)
    horiz = np.hypot(n[:, 0], n[:, 1])
    if np.any(horiz < _EPS):
        raise GeometryError("specular normal is vertical; yaw undefined")
    roll = np.arctan2(-n[:, 2], horiz)
    yaw = np.arctan2(n[:, 0], n[:, 1])
    yaw = np.where(yaw >= HALF_PI, yaw - np.pi, yaw)
    return roll, yaw


@dataclass(frozen=True)
class Room:
    """Axis-aligned box ``[0, width] x [0, depth] x [0, height]``; floor at z = 0."""

    width: float = 4.0
    depth: float = 4.0
    height: float = 3.0

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise GeometryError("room dimensions must be positive")

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = vec3(p)
        return bool(np.all(p >= -tol) and p[0] <= self.width + tol
                    and p[1] <= self.depth + tol and p[2] <= self.height + tol)

    def on_floor(self, xy, tol: float = 1e-9) -> np.ndarray:
        """Mask of points whose (x, y) lie inside the floor rectangle."""
        xy = np.asarray(xy, dtype=float)
        return ((xy[..., 0] >= -tol) & (xy[..., 0] <= self.width + tol)
                & (xy[..., 1] >= -tol) & (xy[..., 1] <= self.depth + tol))

    def floor_grid(self, spacing: float) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centered grid on the floor: x values, y values."""
        nx = max(1, int(round(self.width / spacing)))
        ny = max(1, int(round(self.depth / spacing)))
        x = (np.arange(nx) + 0.5) * self.width / nx
        y = (np.arange(ny) + 0.5) * self.depth / ny
        return x, y
