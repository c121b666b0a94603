import numpy as np
import pytest

from random_pairs import random_pair

from patchsim.geom import Pose, finite_cylinder, ground, sphere_body
from patchsim.oracle import (closest_points_bruteforce, contact_region, penetration_depth,
                             support_point)

UNIT = sphere_body(1.0)


def test_sphere_above_half_space():
    plane = ground(offset=-2.0)  # {z <= -2}
    res = closest_points_bruteforce(UNIT, Pose(), plane, Pose())
    assert res.distance == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(res.a1, [0, 0, -1], atol=1e-7)
    assert np.allclose(res.a2, [0, 0, -2], atol=1e-7)
    assert res.penetration_depth == 0.0


def test_tangent_spheres():
    res = closest_points_bruteforce(UNIT, Pose(), UNIT, Pose([2.0, 0.0, 0.0]))
    assert res.distance == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(res.a1, [1, 0, 0], atol=1e-4)
    assert np.allclose(res.a2, [1, 0, 0], atol=1e-4)


def test_cylinder_axial_gap():
    cyl = finite_cylinder(0.1, 0.05, 0.3)
    res = closest_points_bruteforce(cyl, Pose(), ground(), Pose())
    assert res.distance == pytest.approx(0.05, abs=1e-9)


def test_penetration_zero_when_disjoint():
    cyl = finite_cylinder(0.1, 0.05, 0.3)
    assert penetration_depth(cyl, Pose(), ground(), Pose()) == 0.0


def test_penetration_of_sunken_sphere():
    depth = penetration_depth(UNIT, Pose([0.0, 0.0, 0.5]), ground(), Pose())
    assert depth >= 0.5 - 1e-9


def test_penetration_between_bounded_bodies():
    depth = penetration_depth(UNIT, Pose(), UNIT, Pose([1.5, 0.0, 0.0]))
    assert 0.5 - 1e-3 <= depth <= 0.5 + 1e-9


def test_tangent_spheres_do_not_penetrate():
    assert penetration_depth(UNIT, Pose(), UNIT, Pose([2.0, 0.0, 0.0])) <= 1e-9


def test_support_point_of_tilted_cylinder():
    cyl = finite_cylinder(0.1, -0.2, 0.2)
    x = support_point(cyl, Pose(), [0.0, 0.0, -1.0])
    assert x[2] == pytest.approx(-0.2)
    x = support_point(cyl, Pose(), [1.0, 0.0, -1.0])
    assert np.allclose(x, [0.1, 0.0, -0.2], atol=1e-9)


def test_contact_region_of_flat_cap():
    cyl = finite_cylinder(0.1, 0.0, 0.2)
    pts = contact_region(cyl, Pose(), ground(), Pose())
    assert len(pts) > 0
    assert np.all(np.abs(pts[:, 2]) <= 1e-9)
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 0.1 + 1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_swapping_bodies_swaps_points(seed):
    A, pA, B, pB, ref = random_pair(np.random.default_rng(seed))
    swapped = closest_points_bruteforce(B, pB, A, pA)
    assert swapped.distance == pytest.approx(ref.distance, abs=1e-7)
    assert np.allclose(swapped.a1, ref.a2, atol=1e-4) or ref.distance == 0


@pytest.mark.parametrize("seed", range(10, 20))
def test_distance_bounded_by_centre_distance(seed):
    A, pA, B, pB, ref = random_pair(np.random.default_rng(seed))
    if B.bounded:
        gap = np.linalg.norm(pA.to_world(A.center) - pB.to_world(B.center))
        assert ref.distance <= gap
