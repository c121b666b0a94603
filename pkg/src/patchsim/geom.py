"""Convex-body geometry, rigid poses and quaternion kinematics.

Every body is an intersection of smooth convex inequalities ``f(x) <= 0``
written in the body frame. Point arrays may carry leading batch axes; the
stepper relies on that to evaluate whole finite-difference stencils at once.

Quaternions are scalar-first and angular velocities are spatial (world frame).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

UNIT_TOL = 1e-12
DEFAULT_CONE_TOL = 1e-8


class GeometryError(ValueError):
    pass


class IllDefinedGradient(GeometryError):
    pass


class NotOnBoundary(GeometryError):
    pass


class FrameNotOrthonormal(GeometryError):
    pass


def _unit(v, name="direction"):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise GeometryError(f"{name} must have unit norm, got {np.linalg.norm(v)!r}")
    return v


# ---------------------------------------------------------------------------
# quaternions

def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion; works on stacks of shape (..., 4)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - z * w)
    R[..., 0, 2] = 2 * (x * z + y * w)
    R[..., 1, 0] = 2 * (x * y + z * w)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - x * w)
    R[..., 2, 0] = 2 * (x * z - y * w)
    R[..., 2, 1] = 2 * (y * z + x * w)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def quat_rate_matrix(q):
    """4x3 block H(q) with dq/dt = H(q) @ omega_s for spatial angular velocity."""
    q = np.asarray(q, dtype=float)
    w, v = q[..., 0], q[..., 1:]
    H = np.empty(q.shape[:-1] + (4, 3))
    H[..., 0, :] = -v
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # w*I - [v]x
    H[..., 1, 0] = w
    H[..., 1, 1] = vz
    H[..., 1, 2] = -vy
    H[..., 2, 0] = -vz
    H[..., 2, 1] = w
    H[..., 2, 2] = vx
    H[..., 3, 0] = vy
    H[..., 3, 1] = -vx
    H[..., 3, 2] = w
    return 0.5 * H


def kinematic_matrix(q):
    """The 7x6 map G(q) from (v, omega_s) to the rate of (position, quaternion)."""
    q = np.asarray(q, dtype=float)
    G = np.zeros((7, 6))
    G[:3, :3] = np.eye(3)
    G[3:, 3:] = quat_rate_matrix(q[3:7])
    return G


# ---------------------------------------------------------------------------
# poses

@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))

    def __eq__(self, other):
        return (isinstance(other, Pose) and np.array_equal(self.position, other.position)
                and np.array_equal(self.orientation, other.orientation))

    __hash__ = None

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    def compose(self, other: "Pose") -> "Pose":
        """self * other: ``other`` expressed in the frame of ``self``."""
        R = self.rotation
        return Pose(self.position + R @ other.position,
                    quat_multiply(self.orientation, other.orientation))

    def to_local(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.position) @ self.rotation

    def to_world(self, x_local):
        x_local = np.asarray(x_local, dtype=float)
        return x_local @ self.rotation.T + self.position

    def inverse(self) -> "Pose":
        qc = quat_conjugate(self.orientation)
        return Pose(-(quat_to_matrix(qc) @ self.position), qc)


IDENTITY = Pose()


# ---------------------------------------------------------------------------
# surfaces

class ConvexSurface:
    """Smooth convex function in the body frame; ``value <= 0`` is inside."""

    kind = "abstract"

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def singular(self, x, tol=1e-14) -> bool:
        return False


@dataclass(frozen=True)
class HalfSpace(ConvexSurface):
    """f = n.x - d with unit normal n."""

    normal: tuple
    offset: float
    kind = "half-space"

    def __post_init__(self):
        _unit(self.normal, "half-space normal")

    def value(self, x):
        return np.asarray(x) @ np.asarray(self.normal) - self.offset

    def gradient(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.asarray(self.normal, dtype=float), x.shape).copy()


@dataclass(frozen=True)
class SlabCap(ConvexSurface):
    """Planar cap f = a.x - b; the sign of a picks which side is inside."""

    axis: tuple
    bound: float
    kind = "slab-cap"

    def __post_init__(self):
        _unit(self.axis, "cap axis")

    def value(self, x):
        return np.asarray(x) @ np.asarray(self.axis) - self.bound

    def gradient(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.asarray(self.axis, dtype=float), x.shape).copy()


@dataclass(frozen=True)
class InfiniteCylinder(ConvexSurface):
    """f = |x - proj_axis(x)|^2 - r^2."""

    point: tuple
    axis: tuple
    radius: float
    kind = "infinite-cylinder"

    def __post_init__(self):
        _unit(self.axis, "cylinder axis")
        if self.radius <= 0:
            raise GeometryError("cylinder radius must be positive")

    def _radial(self, x):
        a = np.asarray(self.axis, dtype=float)
        d = np.asarray(x) - np.asarray(self.point, dtype=float)
        return d - (d @ a)[..., None] * a

    def value(self, x):
        rad = self._radial(x)
        return np.sum(rad * rad, axis=-1) - self.radius ** 2

    def gradient(self, x):
        return 2.0 * self._radial(x)

    def singular(self, x, tol=1e-14):
        return bool(np.linalg.norm(self._radial(x)) <= tol)


@dataclass(frozen=True)
class Sphere(ConvexSurface):
    """f = |x - c|^2 - r^2."""

    center: tuple
    radius: float
    kind = "sphere"

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("sphere radius must be positive")

    def value(self, x):
        d = np.asarray(x) - np.asarray(self.center, dtype=float)
        return np.sum(d * d, axis=-1) - self.radius ** 2

    def gradient(self, x):
        return 2.0 * (np.asarray(x) - np.asarray(self.center, dtype=float))

    def singular(self, x, tol=1e-14):
        return bool(np.linalg.norm(np.asarray(x) - np.asarray(self.center)) <= tol)


SURFACE_KINDS = {
    "half-space": HalfSpace,
    "slab-cap": SlabCap,
    "infinite-cylinder": InfiniteCylinder,
    "sphere": Sphere,
}


@dataclass(frozen=True)
class ConvexBody:
    """Intersection of convex surfaces, placed by ``frame_offset`` in its owner's frame.

    ``center`` and ``extent`` describe a body-frame bounding box (used for
    sampling and seeding); ``patch_radius`` is the circumradius of the
    footprint this body can press onto a plane.
    """

    surfaces: tuple
    frame_offset: Pose = IDENTITY
    name: str = ""
    center: tuple = (0.0, 0.0, 0.0)
    extent: tuple | None = None
    patch_radius: float = 0.0
    environment: bool = False

    def __post_init__(self):
        if len(self.surfaces) == 0:
            raise GeometryError("a convex body needs at least one surface")
        if self.extent is None:
            unbounded = [s for s in self.surfaces if isinstance(s, HalfSpace)]
            if not (self.environment and len(self.surfaces) == 1 and unbounded):
                raise GeometryError(
                    f"body {self.name!r}: only a single environment half-space may be unbounded")

    @property
    def bounded(self) -> bool:
        return self.extent is not None

    def world_pose(self, owner_pose: Pose) -> Pose:
        return owner_pose.compose(self.frame_offset)

    def values(self, x_local):
        """Surface values stacked on the last axis, shape (..., n_surfaces)."""
        return np.stack([s.value(x_local) for s in self.surfaces], axis=-1)

    def gradients(self, x_local):
        """Body-frame gradients, shape (..., n_surfaces, 3)."""
        return np.stack([s.gradient(x_local) for s in self.surfaces], axis=-2)


def finite_cylinder(radius, z_bottom, z_top, offset=(0.0, 0.0, 0.0), name="") -> ConvexBody:
    """Vertical cylinder in its own frame; surfaces ordered bottom cap, side, top cap."""
    offset = np.asarray(offset, dtype=float)
    surfaces = (
        SlabCap((0.0, 0.0, -1.0), -z_bottom),
        InfiniteCylinder((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), radius),
        SlabCap((0.0, 0.0, 1.0), z_top),
    )
    half = 0.5 * (z_top - z_bottom)
    return ConvexBody(surfaces, Pose(offset), name=name,
                      center=(0.0, 0.0, 0.5 * (z_top + z_bottom)),
                      extent=(radius, radius, half), patch_radius=radius)


def sphere_body(radius, offset=(0.0, 0.0, 0.0), name="") -> ConvexBody:
    return ConvexBody((Sphere((0.0, 0.0, 0.0), radius),), Pose(np.asarray(offset, dtype=float)),
                      name=name, extent=(radius, radius, radius), patch_radius=0.0)


def box_body(half_sizes, offset=(0.0, 0.0, 0.0), name="") -> ConvexBody:
    hx, hy, hz = half_sizes
    surfaces = tuple(SlabCap(tuple(s * e), h) for e, h in zip(np.eye(3), (hx, hy, hz))
                     for s in (1.0, -1.0))
    return ConvexBody(surfaces, Pose(np.asarray(offset, dtype=float)), name=name,
                      extent=(hx, hy, hz), patch_radius=float(np.hypot(hx, hy)))


def ground(normal=(0.0, 0.0, 1.0), offset=0.0, name="ground") -> ConvexBody:
    return ConvexBody((HalfSpace(tuple(normal), offset),), name=name, environment=True)


# ---------------------------------------------------------------------------
# point queries

def evaluate_surface(surface: ConvexSurface, x, pose: Pose = IDENTITY):
    return surface.value(pose.to_local(x))


def surface_gradient(surface: ConvexSurface, x, pose: Pose = IDENTITY):
    local = pose.to_local(x)
    if surface.singular(local):
        raise IllDefinedGradient(f"{surface.kind} gradient vanishes at {np.asarray(x)!r}")
    return pose.rotation @ surface.gradient(local)


def active_gradients(body: ConvexBody, pose: Pose, x, tol=DEFAULT_CONE_TOL):
    """World-frame gradients of the surfaces active at x, after checking x is on the boundary."""
    local = pose.to_local(x)
    vals = body.values(local)
    if not (-tol <= vals.max() <= tol):
        raise NotOnBoundary(f"max surface value {vals.max():.3e} outside [-{tol}, {tol}]")
    active = np.flatnonzero(np.abs(vals) <= tol)
    return np.array([surface_gradient(body.surfaces[i], x, pose) for i in active])


def normal_cone_contains(body: ConvexBody, pose: Pose, x, d, tol=DEFAULT_CONE_TOL) -> bool:
    d = np.asarray(d, dtype=float)
    grads = active_gradients(body, pose, x, tol)
    _, residual = nnls(grads.T, d)
    return bool(residual <= tol * np.linalg.norm(d))


# ---------------------------------------------------------------------------
# inertia and wrenches

@dataclass(frozen=True, eq=False)
class InertialParams:
    mass: float
    inertia: np.ndarray

    def __post_init__(self):
        I = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", I)
        if not self.mass > 0:
            raise GeometryError("mass must be positive")
        if I.shape != (3, 3) or not np.allclose(I, I.T, rtol=0, atol=1e-12):
            raise GeometryError("inertia must be a symmetric 3x3 matrix")
        try:
            np.linalg.cholesky(I)
        except np.linalg.LinAlgError as exc:
            raise GeometryError("inertia must be positive definite") from exc

    def __eq__(self, other):
        return (isinstance(other, InertialParams) and self.mass == other.mass
                and np.array_equal(self.inertia, other.inertia))

    __hash__ = None


def world_inertia(params: InertialParams, orientation):
    R = quat_to_matrix(orientation)
    return R @ params.inertia @ R.T


def contact_wrenches(n, t, o, r):
    """Wrenches (W_n, W_t, W_o, W_r) of unit normal/tangential impulses and the normal moment."""
    n, t, o, r = (np.asarray(a, dtype=float) for a in (n, t, o, r))
    F = np.array([t, o, n])
    if not np.allclose(F @ F.T, np.eye(3), atol=1e-9) or np.dot(np.cross(t, o), n) < 0:
        raise FrameNotOrthonormal("(t, o, n) must be a right-handed orthonormal frame")
    W_n = np.concatenate([n, np.cross(r, n)])
    W_t = np.concatenate([t, np.cross(r, t)])
    W_o = np.concatenate([o, np.cross(r, o)])
    W_r = np.concatenate([np.zeros(3), n])
    return W_n, W_t, W_o, W_r


def tangent_basis(n):
    """A fixed right-handed completion (t, o) of the unit normal n."""
    n = np.asarray(n, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t = helper - (helper @ n) * n
    t /= np.linalg.norm(t)
    o = np.cross(n, t)
    return t, o
