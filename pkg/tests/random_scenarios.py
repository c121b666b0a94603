"""Randomised drop and slide scenarios for the non-penetration sweep."""
import numpy as np

from patchsim.geom import quat_from_axis_angle
from patchsim.scenario import PartSpec, Scenario

SHAPES = ("sphere", "box", "cylinder", "pair")


def _parts(kind, rng):
    if kind == "sphere":
        return [PartSpec("sphere", "S", [0.0, 0.0, 0.0], radius=rng.uniform(0.05, 0.2))]
    if kind == "box":
        return [PartSpec("box", "B", [0.0, 0.0, 0.0], half_sizes=list(rng.uniform(0.05, 0.2, 3)))]
    if kind == "cylinder":
        r = rng.uniform(0.05, 0.15)
        half = rng.uniform(0.05, 0.15)
        return [PartSpec("cylinder", "C", [0.0, 0.0, 0.0], radius=r, z_bottom=-half, z_top=half)]
    # two feet under a common body frame
    r = rng.uniform(0.04, 0.08)
    sep = rng.uniform(0.1, 0.25)
    return [PartSpec("cylinder", "L", [-sep, 0.0, 0.0], radius=r, z_bottom=-0.1, z_top=0.0),
            PartSpec("sphere", "R", [sep, 0.0, -0.1 + r], radius=r)]


def _lowest(parts, q):
    from patchsim.geom import Pose
    from patchsim.oracle import support_point
    pose = Pose(np.zeros(3), np.asarray(q))
    return min(support_point(p.body(), p.body().world_pose(pose), [0, 0, -1])[2] for p in parts)


def random_scenario(seed, steps=25):
    """Object of random shape starting at or just above the ground with random velocity."""
    rng = np.random.default_rng(seed)
    kind = SHAPES[seed % len(SHAPES)]
    parts = _parts(kind, rng)
    tilt = rng.uniform(0.0, 0.3) if kind != "pair" else rng.uniform(0.0, 0.05)
    q = quat_from_axis_angle(rng.normal(size=3), tilt)
    # drops start up to 3 cm up, slides start resting on the lowest point
    drop = rng.uniform(0.0, 0.03) if rng.uniform() < 0.5 else 0.0
    z = -_lowest(parts, q) + drop
    vel = [*rng.uniform(-1.5, 1.5, 2), rng.uniform(-0.5, 0.0)]
    omega = list(rng.uniform(-1.0, 1.0, 3))
    return Scenario(name=f"random-{kind}-{seed}", mass=float(rng.uniform(1.0, 5.0)),
                    inertia=np.diag(rng.uniform(0.02, 0.1, 3)).tolist(), parts=parts,
                    mu=float(rng.uniform(0.1, 0.6)), steps=steps, position=[0.0, 0.0, float(z)],
                    orientation=list(q), velocity=vel, angular_velocity=omega).validate()
