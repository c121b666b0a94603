"""Brute-force geometric oracle for closest points and penetration depth.

Nothing here touches surface gradients or multipliers: closest points come
from alternating Euclidean projections between the two bodies, each
projection onto a body being Dykstra's method over closed-form projections
onto the individual surfaces. Against a single half-space the closest point
is the body's support point, found by projected descent along the normal.
It is slow and meant for checking.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .geom import (ConvexBody, HalfSpace, InfiniteCylinder, Pose, SlabCap, Sphere)

PROJECTION_CYCLES = 500
PROJECTION_TOL = 1e-9
GRID = 5
KEEP_SEEDS = 3
DEFAULT_SAMPLES = 4096


class NoConvergence(RuntimeError):
    pass


@dataclass
class ClosestPointResult:
    a1: np.ndarray
    a2: np.ndarray
    distance: float
    penetration_depth: float


# ---------------------------------------------------------------------------
# per-surface primitives, body frame, batched over leading axes

def _planar(surface):
    if isinstance(surface, HalfSpace):
        return np.asarray(surface.normal, dtype=float), surface.offset
    return np.asarray(surface.axis, dtype=float), surface.bound


def project_surface(surface, x):
    """Euclidean projection of x onto {surface <= 0}."""
    x = np.asarray(x, dtype=float)
    if isinstance(surface, (HalfSpace, SlabCap)):
        n, d = _planar(surface)
        excess = np.maximum(x @ n - d, 0.0)
        return x - excess[..., None] * n
    if isinstance(surface, InfiniteCylinder):
        a = np.asarray(surface.axis, dtype=float)
        rel = x - np.asarray(surface.point, dtype=float)
        radial = rel - (rel @ a)[..., None] * a
        rho = np.linalg.norm(radial, axis=-1)
        shrink = np.where(rho > surface.radius, surface.radius / np.maximum(rho, 1e-300), 1.0)
        return x - radial * (1.0 - shrink)[..., None]
    if isinstance(surface, Sphere):
        c = np.asarray(surface.center, dtype=float)
        rel = x - c
        rho = np.linalg.norm(rel, axis=-1)
        shrink = np.where(rho > surface.radius, surface.radius / np.maximum(rho, 1e-300), 1.0)
        return c + rel * shrink[..., None]
    raise TypeError(f"no projection for {type(surface).__name__}")


def signed_distance(surface, x):
    """Euclidean signed distance to the surface's boundary (negative inside)."""
    x = np.asarray(x, dtype=float)
    if isinstance(surface, (HalfSpace, SlabCap)):
        n, d = _planar(surface)
        return x @ n - d
    if isinstance(surface, InfiniteCylinder):
        a = np.asarray(surface.axis, dtype=float)
        rel = x - np.asarray(surface.point, dtype=float)
        radial = rel - (rel @ a)[..., None] * a
        return np.linalg.norm(radial, axis=-1) - surface.radius
    if isinstance(surface, Sphere):
        return np.linalg.norm(x - np.asarray(surface.center, dtype=float), axis=-1) - surface.radius
    raise TypeError(f"no distance for {type(surface).__name__}")


def body_signed_distance(body: ConvexBody, x_local):
    """max_j of per-surface signed distances: exact depth for inside points, lower bound outside."""
    return np.max(np.stack([signed_distance(s, x_local) for s in body.surfaces], axis=-1), axis=-1)


def project_body(body: ConvexBody, x_local):
    """Dykstra's alternating projection onto the intersection of the body's surfaces."""
    x = np.array(x_local, dtype=float)
    if len(body.surfaces) == 1:
        return project_surface(body.surfaces[0], x)
    corrections = [np.zeros_like(x) for _ in body.surfaces]
    for _ in range(PROJECTION_CYCLES):
        prev = x
        for k, s in enumerate(body.surfaces):
            y = project_surface(s, x + corrections[k])
            corrections[k] = x + corrections[k] - y
            x = y
        if np.max(np.abs(x - prev)) <= PROJECTION_TOL * 1e-3:
            break
    return x


def _project_world(body, pose, x):
    return pose.to_world(project_body(body, pose.to_local(x)))


# ---------------------------------------------------------------------------
# closest points

def _half_space(body: ConvexBody, pose: Pose):
    """(world normal, world offset) if the body is one half-space, else None."""
    if len(body.surfaces) != 1 or not isinstance(body.surfaces[0], HalfSpace):
        return None
    hs = body.surfaces[0]
    n = pose.rotation @ np.asarray(hs.normal, dtype=float)
    return n, float(hs.offset + n @ pose.position)


def support_point(body: ConvexBody, pose: Pose, direction, tol=1e-12, max_iter=200):
    """World point of a bounded body extreme along ``direction``.

    Fixed point of x <- P(x + L d) with L far larger than the body, i.e. the
    point whose normal cone contains d.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    reach = 1e3 * (np.linalg.norm(body.extent) + 1.0)
    x = _project_world(body, pose, pose.to_world(np.asarray(body.center, dtype=float)) + reach * d)
    for _ in range(max_iter):
        x_new = _project_world(body, pose, x + reach * d)
        if np.max(np.abs(x_new - x)) <= tol:
            return x_new
        x = x_new
    return x


def _against_half_space(body, pose, n, offset, tol):
    a = support_point(body, pose, -n)
    gap = float(a @ n - offset)
    if gap > tol:
        return a, a - gap * n, gap, 0.0
    return a, a.copy(), 0.0, max(0.0, -gap)

def _grid(body: ConvexBody, pose: Pose, around=None):
    if body.bounded:
        c = np.asarray(body.center, dtype=float)
        e = np.asarray(body.extent, dtype=float)
        axes = [np.linspace(c[i] - e[i], c[i] + e[i], GRID) for i in range(3)]
        pts = np.array(list(itertools.product(*axes)))
        return pose.to_world(project_body(body, pts))
    # unbounded environment: seed from the other body's grid
    return _project_world(body, pose, around)


def _alternate(bodyA, poseA, bodyB, poseB, z1, tol, max_iter):
    # Every seed tends to the same (unique) set distance, so one settled seed suffices.
    z2 = _project_world(bodyB, poseB, z1)
    for _ in range(max_iter):
        z1_new = _project_world(bodyA, poseA, z2)
        z2_new = _project_world(bodyB, poseB, z1_new)
        step = np.maximum(np.max(np.abs(z1_new - z1), axis=1), np.max(np.abs(z2_new - z2), axis=1))
        gap = np.linalg.norm(z1_new - z2_new, axis=1)
        z1, z2 = z1_new, z2_new
        if np.any((step <= tol * 1e-2) | (gap <= tol)):
            return z1, z2, True
    return z1, z2, False


def closest_points_bruteforce(bodyA: ConvexBody, poseA: Pose, bodyB: ConvexBody, poseB: Pose,
                              tol=1e-9, max_iter=20000) -> ClosestPointResult:
    """Closest pair (a1 on A, a2 on B) by grid-seeded alternating projections.

    ``poseA``/``poseB`` are the world poses of the bodies' own frames.
    """
    if not bodyA.bounded and not bodyB.bounded:
        raise ValueError("at least one body must be bounded")
    hsB = _half_space(bodyB, poseB)
    if hsB is not None and bodyA.bounded:
        a1, a2, d, depth = _against_half_space(bodyA, poseA, *hsB, tol)
        return ClosestPointResult(a1, a2, d, depth)
    hsA = _half_space(bodyA, poseA)
    if hsA is not None and bodyB.bounded:
        a2, a1, d, depth = _against_half_space(bodyB, poseB, *hsA, tol)
        return ClosestPointResult(a1, a2, d, depth)
    if bodyA.bounded:
        gA = _grid(bodyA, poseA)
        gB = _grid(bodyB, poseB, around=gA)
    else:
        gB = _grid(bodyB, poseB)
        gA = _grid(bodyA, poseA, around=gB)
    if bodyA.bounded and bodyB.bounded:
        D = np.linalg.norm(gA[:, None, :] - gB[None, :, :], axis=-1)
        flat = np.argsort(D, axis=None)[:KEEP_SEEDS]
        seeds = gA[np.unravel_index(flat, D.shape)[0]]
    else:
        D = np.linalg.norm(gA - gB, axis=-1)
        seeds = gA[np.argsort(D)[:KEEP_SEEDS]]

    z1, z2, ok = _alternate(bodyA, poseA, bodyB, poseB, seeds, tol, max_iter)
    if not ok:
        raise NoConvergence(f"alternating projections did not settle in {max_iter} iterations")
    dist = np.linalg.norm(z1 - z2, axis=-1)
    best = int(np.argmin(dist))
    a1, a2, d = z1[best], z2[best], float(dist[best])
    depth = 0.0
    if d <= tol:
        depth = penetration_depth(bodyA, poseA, bodyB, poseB, tol)
        d = 0.0
    return ClosestPointResult(a1, a2, d, depth)


# ---------------------------------------------------------------------------
# penetration

def _directions(count):
    # Sobol prefixes are nested, so more samples can only raise the maximum.
    u = qmc.Sobol(d=2, scramble=True, seed=7).random(count)
    z = 1.0 - 2.0 * u[:, 0]
    phi = 2.0 * np.pi * u[:, 1]
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _ray_boundary(body: ConvexBody, dirs):
    c = np.asarray(body.center, dtype=float)
    lo = np.zeros(len(dirs))
    hi = np.full(len(dirs), 2.0 * np.linalg.norm(body.extent) + 1e-9)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        inside = body.values(c + mid[:, None] * dirs).max(axis=1) <= 0.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return c + lo[:, None] * dirs


def boundary_samples(body: ConvexBody, count=DEFAULT_SAMPLES):
    """Body-frame boundary points hit by rays from the box centre (bisection)."""
    return _ray_boundary(body, _directions(count))


def _depth(bodyA, poseA, bodyB, poseB, pts):
    return -body_signed_distance(bodyB, poseB.to_local(poseA.to_world(pts)))


def penetration_depth(bodyA: ConvexBody, poseA: Pose, bodyB: ConvexBody, poseB: Pose,
                      tol=1e-9, samples=DEFAULT_SAMPLES, refine=True) -> float:
    """Sampled lower bound on how deep points of A reach into B (0 when disjoint).

    With ``refine`` the deepest boundary sample is polished by a shrinking
    random search over nearby ray directions.
    """
    if not bodyA.bounded:
        bodyA, poseA, bodyB, poseB = bodyB, poseB, bodyA, poseA
    hs = _half_space(bodyB, poseB)
    if hs is not None:
        n, offset = hs
        return float(max(0.0, offset - support_point(bodyA, poseA, -n) @ n))
    dirs = _directions(samples)
    rim = _ray_boundary(bodyA, dirs)
    c = np.asarray(bodyA.center, dtype=float)
    # boundary points plus a shell just inside them
    pts = np.concatenate([rim, c + 0.999 * (rim - c), c + 0.99 * (rim - c)])
    depth = _depth(bodyA, poseA, bodyB, poseB, pts)
    best = float(depth.max())
    if refine and best > -np.inf:
        rng = np.random.default_rng(11)
        d_best = dirs[int(np.argmax(depth[:samples]))]
        b_rim = float(depth[:samples].max())
        spread = 4.0 * np.sqrt(4.0 * np.pi / samples)
        while spread > max(tol, 1e-12):
            trial = d_best + spread * rng.normal(size=(64, 3))
            trial /= np.linalg.norm(trial, axis=1, keepdims=True)
            dv = _depth(bodyA, poseA, bodyB, poseB, _ray_boundary(bodyA, trial))
            k = int(np.argmax(dv))
            if dv[k] > b_rim:
                b_rim, d_best = float(dv[k]), trial[k]
            else:
                spread *= 0.5
        best = max(best, b_rim)
    return float(max(0.0, best))


def contact_region(bodyA: ConvexBody, poseA: Pose, bodyB: ConvexBody, poseB: Pose,
                   tol=1e-9, samples=DEFAULT_SAMPLES):
    """World boundary samples of A lying on B's boundary to within ``tol``.

    Empty when the bodies are apart or touch at isolated points the samples miss.
    """
    if not bodyA.bounded:
        bodyA, poseA, bodyB, poseB = bodyB, poseB, bodyA, poseA
    pts = poseA.to_world(boundary_samples(bodyA, samples))
    depth = body_signed_distance(bodyB, poseB.to_local(pts))
    return pts[np.abs(depth) <= tol]
