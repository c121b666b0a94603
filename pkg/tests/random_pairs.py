"""Random separated (body, pose) pairs for the closest-point agreement checks."""
import numpy as np

from patchsim.geom import Pose, box_body, finite_cylinder, ground, quat_from_axis_angle, sphere_body
from patchsim.oracle import closest_points_bruteforce, support_point


def random_body(rng):
    kind = rng.integers(3)
    if kind == 0:
        return sphere_body(rng.uniform(0.05, 0.3))
    if kind == 1:
        return box_body(rng.uniform(0.05, 0.3, 3))
    half = rng.uniform(0.05, 0.3)
    return finite_cylinder(rng.uniform(0.05, 0.3), -half, half)


def random_pose(rng, position):
    return Pose(np.asarray(position, dtype=float),
                quat_from_axis_angle(rng.normal(size=3), rng.uniform(0.0, np.pi)))


def random_pair(rng, min_gap=1e-3):
    """(bodyA, poseA, bodyB, poseB) with a strictly positive gap; B may be a half-space."""
    while True:
        A = random_body(rng)
        pA = random_pose(rng, rng.uniform(-0.5, 0.5, 3))
        if rng.uniform() < 0.4:
            B, pB = ground(), Pose()
            lowest = support_point(A, pA, [0.0, 0.0, -1.0])[2]
            pA = Pose(pA.position + [0.0, 0.0, rng.uniform(min_gap, 0.3) - lowest], pA.orientation)
        else:
            B = random_body(rng)
            pB = random_pose(rng, pA.position + rng.normal(size=3) * 0.6)
        ref = closest_points_bruteforce(A, pA, B, pB)
        if ref.distance > min_gap:
            return A, pA, B, pB, ref


def naive_guess(A, pA, B, pB):
    """Support points of each body toward the other's centre: no oracle involved."""
    cA = pA.to_world(A.center)
    if B.bounded:
        d = pB.to_world(B.center) - cA
        d /= np.linalg.norm(d)
        return support_point(A, pA, d), support_point(B, pB, -d)
    n = pB.rotation @ np.asarray(B.surfaces[0].normal, dtype=float)
    a1 = support_point(A, pA, -n)
    off = B.surfaces[0].offset + n @ pB.position
    return a1, a1 - (a1 @ n - off) * n
