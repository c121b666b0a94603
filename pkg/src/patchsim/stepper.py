"""Geometrically implicit time stepping for one rigid object on a fixed environment.

Each step solves a single complementarity problem in which the end-of-step
velocity, the contact impulses of every patch and each patch's pair of
equivalent contact points (ECPs) are unknown together:

* backward-Euler Newton-Euler rows with contact wrenches built at the
  end-of-step pose,
* maximum-dissipation friction on an ellipsoid per patch,
* modified closest-point KKT rows tying a1 (object) and a2 (environment)
  to the two convex bodies, plus non-penetration of a2 against the object.

Unknown layout: ``[v (3), omega_s (3)]`` followed, per patch, by
``[p_n, p_t, p_o, p_r, sigma, a1 (3), a2 (3), l_A (m), l_B (k)]``.

One object surface per patch, ``k1``, is designated active: its gradient
enters the normal cone with unit weight and ``f_k1(a1) = 0`` is imposed as an
equation. Its slot in ``l_A`` holds the overall cone scale, which is paired
with the normal impulse (0 <= scale _|_ p_n >= 0): a patch carrying load has
coincident contact points, and a patch with a gap carries none. The other
``l_A`` entries are cone weights relative to the ``k1`` gradient.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import mncp
from .geom import (ConvexBody, HalfSpace, InertialParams, Pose, quat_multiply, quat_normalize,
                   quat_rate_matrix, quat_to_matrix, tangent_basis, world_inertia)
from .oracle import closest_points_bruteforce, contact_region

log = logging.getLogger(__name__)

MODE_TOL = 1e-7
TOUCH_TOL = 1e-9
BRIEF_RESTARTS = 1
BRIEF_ITERATIONS = 60
PATCH_FIXED = 11  # p_n, p_t, p_o, p_r, sigma, a1, a2
K1_TIE_TOL = 1e-7  # m


class LayoutMismatch(ValueError):
    pass


class SolverFailed(RuntimeError):
    def __init__(self, message, step_index=None, result=None, trajectory=None):
        super().__init__(message)
        self.step_index = step_index
        self.result = result
        self.trajectory = trajectory if trajectory is not None else []


@dataclass(frozen=True)
class FrictionParams:
    mu: float
    e_t: float = 1.0
    e_o: float = 1.0
    e_r: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        if min(self.e_t, self.e_o, self.e_r) <= 0:
            raise ValueError("friction ellipsoid constants must be positive")


@dataclass(frozen=True)
class ContactPatch:
    """A potential contact between one object body and one environment body."""

    body: ConvexBody
    environment: ConvexBody
    friction: FrictionParams
    environment_pose: Pose = field(default_factory=Pose)

    @property
    def normal(self):
        for s in self.environment.surfaces:
            if isinstance(s, HalfSpace):
                return self.environment_pose.rotation @ np.asarray(s.normal, dtype=float)
        raise ValueError("contact frame needs a half-space on the environment side")

    @property
    def frame(self):
        n = self.normal
        t, o = tangent_basis(n)
        return t, o, n

    @property
    def size(self):
        return PATCH_FIXED + len(self.body.surfaces) + len(self.environment.surfaces)


@dataclass
class RigidState:
    position: np.ndarray
    orientation: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)

    @property
    def q(self):
        return np.concatenate([self.position, self.orientation])

    @property
    def nu(self):
        return np.concatenate([self.velocity, self.angular_velocity])

    @property
    def pose(self):
        return Pose(self.position, self.orientation)

    def copy(self):
        return RigidState(self.position.copy(), self.orientation.copy(),
                          self.velocity.copy(), self.angular_velocity.copy())


@dataclass
class AppliedWrench:
    """Applied load over one step: force/moment rates plus one-shot impulses.

    Gravity ``gravity`` (m/s^2) acts along -z and is folded into the linear
    impulse as ``-m * gravity * h``.
    """

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    impulse: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_impulse: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: float = 9.8

    def generalized_impulse(self, mass, h):
        lin = np.asarray(self.force, float) * h + np.asarray(self.impulse, float)
        lin = lin + np.array([0.0, 0.0, -mass * self.gravity * h])
        ang = np.asarray(self.moment, float) * h + np.asarray(self.angular_impulse, float)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(ang))):
            raise ValueError("applied wrench must be finite")
        return np.concatenate([lin, ang])


@dataclass
class ContactPatchVars:
    a1: np.ndarray
    a2: np.ndarray
    p_n: float
    p_t: float
    p_o: float
    p_r: float
    sigma: float
    l: np.ndarray
    k1: int

    @property
    def gap(self):
        return float(np.linalg.norm(self.a1 - self.a2))


@dataclass
class StepResult:
    state: RigidState
    patches: list
    solution: mncp.MncpSolution
    modes: list
    x: np.ndarray
    norm_drift: float = 0.0

    @property
    def converged(self):
        return self.solution.converged

    @property
    def status(self):
        return self.solution.status


def coriolis_impulse(params: InertialParams, orientation, omega, h):
    """Explicit gyroscopic impulse (0, -h w x (I_s w)) at the beginning of the step."""
    omega = np.asarray(omega, dtype=float)
    I_s = world_inertia(params, orientation)
    return np.concatenate([np.zeros(3), -h * np.cross(omega, I_s @ omega)])


def end_of_step_pose(state: RigidState, nu, h):
    """Backward-Euler configuration update with nu held over the step, quaternion renormalised.

    The position moves by h v. The orientation is rotated by the rotation vector
    h omega, the exact flow of dq/dt = H(q) omega for constant omega; it agrees
    with q + h H(q) omega to first order but keeps the norm. ``nu`` may be a
    stack (batch, 6). Returns positions, unit quaternions and the
    pre-normalisation quaternion norms.
    """
    nu = np.asarray(nu, dtype=float)
    pos = state.position + h * nu[..., :3]
    rotvec = h * nu[..., 3:6]
    angle = np.linalg.norm(rotvec, axis=-1, keepdims=True)
    # sin(angle/2)/angle, finite at zero
    half_sinc = 0.5 * np.sinc(angle / (2.0 * np.pi))
    dq = np.concatenate([np.cos(0.5 * angle), half_sinc * rotvec], axis=-1)
    quat = quat_multiply(dq, state.orientation)
    norms = np.linalg.norm(quat, axis=-1)
    return pos, quat / norms[..., None], norms


def patch_offsets(patches):
    offsets = []
    off = 6
    for p in patches:
        offsets.append(off)
        off += p.size
    return offsets, off


def _batched_local(R, p, x):
    # R^T (x - p) for stacks
    return np.einsum("bji,bj->bi", R, x - p)


class StepProblem:
    """Residual rows of one time step; ``evaluate`` is batched over unknown vectors."""

    def __init__(self, state: RigidState, params: InertialParams, patches, wrench: AppliedWrench,
                 h, k1s):
        self.state = state
        self.params = params
        self.patches = list(patches)
        self.h = float(h)
        self.k1s = list(k1s)
        self.offsets, self.n = patch_offsets(self.patches)
        self.P_app = wrench.generalized_impulse(params.mass, h)
        self.p_vp = coriolis_impulse(params, state.orientation, state.angular_velocity, h)
        self.I_s = world_inertia(params, state.orientation)
        self.H = quat_rate_matrix(state.orientation)
        self.frames = [p.frame for p in self.patches]

        z_sigma, z_l, z_pn = [], [], []
        for off, p, k1 in zip(self.offsets, self.patches, self.k1s):
            z_sigma.append(off + 4)
            nl = len(p.body.surfaces) + len(p.environment.surfaces)
            z_l.extend(i for i in range(off + PATCH_FIXED, off + PATCH_FIXED + nl)
                       if i != off + PATCH_FIXED + k1)
            z_pn.append(off)
        self.z_index = np.array(z_sigma + z_l + z_pn, dtype=int)
        self.n_eq = 6 + 10 * len(self.patches)
        self.layout = {"nu": slice(0, 6)}
        for i, (off, p) in enumerate(zip(self.offsets, self.patches)):
            self.layout[f"patch{i}"] = slice(off, off + p.size)

    def problem(self) -> mncp.MncpProblem:
        return mncp.MncpProblem(self.n, self.evaluate, self.z_index, self.n_eq, self.layout)

    def evaluate(self, X):
        X = np.atleast_2d(X)
        if X.shape[1] != self.n:
            raise LayoutMismatch(f"unknown vector has {X.shape[1]} entries, layout needs {self.n}")
        st = self.state
        m = self.params.mass
        v, w = X[:, 0:3], X[:, 3:6]
        pos1, quat1, _ = end_of_step_pose(st, X[:, :6], self.h)
        R1 = quat_to_matrix(quat1)

        lin = m * (v - st.velocity) - self.P_app[:3]
        ang = (w - st.angular_velocity) @ self.I_s - self.P_app[3:] - self.p_vp[3:]

        friction_rows, kkt_rows = [], []
        ellipsoid, membership, gap_scale = [], [], []
        for patch, off, k1, (t, o, n) in zip(self.patches, self.offsets, self.k1s, self.frames):
            body, env, fr = patch.body, patch.environment, patch.friction
            m_a = len(body.surfaces)
            blk = X[:, off:off + patch.size]
            pn, pt, po, pr, sig = (blk[:, i] for i in range(5))
            a1, a2 = blk[:, 5:8], blk[:, 8:11]
            lA = blk[:, 11:11 + m_a]
            lB = blk[:, 11 + m_a:]

            off_R = body.frame_offset.rotation
            Rb = R1 @ off_R
            pb = pos1 + R1 @ body.frame_offset.position
            loc1 = _batched_local(Rb, pb, a1)
            fA1 = body.values(loc1)
            gradA1 = np.einsum("bij,bkj->bki", Rb, body.gradients(loc1))
            envp = patch.environment_pose
            locE = envp.to_local(a2)
            gB = env.values(locE)
            gradB = env.gradients(locE) @ envp.rotation.T

            r = a2 - pos1
            vel = v + np.cross(w, r)
            s_t, s_o, s_r = vel @ t, vel @ o, w @ n
            friction_rows.append(np.stack([
                fr.e_t ** 2 * fr.mu * pn * s_t + pt * sig,
                fr.e_o ** 2 * fr.mu * pn * s_o + po * sig,
                fr.e_r ** 2 * fr.mu * pn * s_r + pr * sig,
            ], axis=1))
            # the slack is linear in the impulses, so a tolerance on it bounds them directly
            ellipsoid.append(fr.mu * pn - np.sqrt((pt / fr.e_t) ** 2 + (po / fr.e_o) ** 2
                                                  + (pr / fr.e_r) ** 2))

            weights = lA.copy()
            weights[:, k1] = 1.0
            coneA = np.einsum("bk,bki->bi", weights, gradA1)
            kkt_rows.append(a1 - a2 + lA[:, k1:k1 + 1] * coneA)
            kkt_rows.append(coneA + np.einsum("bk,bki->bi", lB, gradB))
            kkt_rows.append(fA1[:, k1:k1 + 1])
            membership.append(-np.delete(fA1, k1, axis=1))
            membership.append(-gB)
            gap_scale.append(lA[:, k1])

            force = pn[:, None] * n + pt[:, None] * t + po[:, None] * o
            lin = lin - force
            ang = ang - np.cross(r, force) - pr[:, None] * n

        g = np.concatenate([lin, ang] + friction_rows + kkt_rows, axis=1)
        wv = np.concatenate([np.stack(ellipsoid, axis=1)] if ellipsoid else [np.zeros((len(X), 0))],
                            axis=1)
        if membership:
            wv = np.concatenate([wv] + membership + [np.stack(gap_scale, axis=1)], axis=1)
        return g, wv

    def unpack(self, x):
        out = []
        for patch, off, k1 in zip(self.patches, self.offsets, self.k1s):
            blk = x[off:off + patch.size]
            l = blk[11:].copy()
            out.append(ContactPatchVars(a1=blk[5:8].copy(), a2=blk[8:11].copy(), p_n=blk[0],
                                        p_t=blk[1], p_o=blk[2], p_r=blk[3], sigma=blk[4],
                                        l=l, k1=k1))
        return out


def assemble_step_residual(state_u, params, patches, wrench, h, unknowns, k1s=None):
    """(equality rows, complementarity w values, paired z values) at ``unknowns``."""
    unknowns = np.asarray(unknowns, dtype=float)
    _, n = patch_offsets(patches)
    if unknowns.shape != (n,):
        raise LayoutMismatch(f"unknown vector has shape {unknowns.shape}, layout needs ({n},)")
    if k1s is None:
        k1s = designate_k1(state_u, patches, unknowns)
    sp = StepProblem(state_u, params, patches, wrench, h, k1s)
    return sp.problem().split(unknowns)


def designate_k1(state, patches, x):
    """Per patch, the object surface least inside at the guessed a1.

    Evaluated at the beginning-of-step pose, where a warm-started a1 was found.
    Ties (edges, vertices) go to the surface whose outward normal best opposes
    the environment normal: that face is the one a tipping edge or corner
    settles onto, so it stays active through the step.
    """
    offsets, _ = patch_offsets(patches)
    owner = state.pose
    k1s = []
    for patch, off in zip(patches, offsets):
        a1 = x[off + 5:off + 8]
        bp = patch.body.world_pose(owner)
        local = bp.to_local(a1)
        vals = patch.body.values(local)
        grads = patch.body.gradients(local) @ bp.rotation.T
        norms = np.linalg.norm(grads, axis=1)
        norms = np.where(norms > 0, norms, 1.0)
        # f / |grad f| puts quadratic and linear surfaces on one length scale
        dist = vals / norms
        tied = np.flatnonzero(dist >= dist.max() - K1_TIE_TOL)
        if len(tied) > 1:
            facing = -(grads[tied] @ patch.normal) / norms[tied]
            tied = tied[np.argsort(-facing, kind="stable")]
        k1s.append(int(tied[0]))
    return k1s


def _patch_multipliers(patch, body_pose, a1, a2, touching):
    """Multiplier guess consistent with a single active surface on each side."""
    body, env = patch.body, patch.environment
    locA = body_pose.to_local(a1)
    fA = body.values(locA)
    k1 = int(np.flatnonzero(fA >= fA.max() - 1e-9)[0])
    gradA = body_pose.rotation @ body.surfaces[k1].gradient(locA)
    lA = np.zeros(len(fA))
    lA[k1] = 0.0 if touching else np.linalg.norm(a1 - a2) / max(np.linalg.norm(gradA), 1e-12)
    locB = patch.environment_pose.to_local(a2)
    gB = env.values(locB)
    lB = (np.abs(gB) <= 1e-6).astype(float)
    for j in np.flatnonzero(lB):
        gj = env.surfaces[j].gradient(locB)
        lB[j] = np.linalg.norm(gradA) / max(np.linalg.norm(gj), 1e-12)
    return np.concatenate([lA, lB])


def _on_both(patch, body_pose, x, tol=1e-9):
    fa = patch.body.values(body_pose.to_local(x)).max()
    gb = patch.environment.values(patch.environment_pose.to_local(x)).max()
    return abs(fa) <= tol and abs(gb) <= tol


def predicted_velocity(state: RigidState, params: InertialParams, wrench: AppliedWrench | None, h):
    """Velocity after the step's non-gravitational load alone (contacts and gravity ignored)."""
    nu = state.nu.copy()
    if wrench is None:
        return nu
    P = wrench.generalized_impulse(params.mass, h)
    P[2] += params.mass * wrench.gravity * h
    nu[:3] += P[:3] / params.mass
    nu[3:] += np.linalg.solve(world_inertia(params, state.orientation), P[3:])
    return nu


def _seed_point(patch, region, nu, position, tol=1e-9):
    """Centroid of the contact region, or, when the predicted motion presses some
    of the region harder into the environment, the point pressed hardest."""
    n = patch.normal
    approach = (nu[:3] + np.cross(nu[3:], region - position)) @ n
    if approach.max() - approach.min() > tol * max(1.0, np.abs(approach).max()):
        return region[int(np.argmin(approach))]
    return region.mean(axis=0)


def initial_guess(state: RigidState, params: InertialParams, patches, h, gravity=9.8,
                  rng=None, max_draws=100, wrench: AppliedWrench | None = None):
    """Unknown vector seeded from oracle closest points at the current state.

    Touching patches start from the centroid of their sampled contact region
    (kept only if it lies on both boundaries), which keeps the ECP clear of the
    patch rim. If ``wrench`` is given its impulse sets the velocity guess, and a
    patch the predicted motion tilts is seeded at the region point that motion
    drives hardest into the environment. With ``rng`` the seed point is
    shifted by a random tangential offset uniform in a disk of the patch's
    circumradius, redrawn until it stays on the patch.
    """
    offsets, n = patch_offsets(patches)
    x = np.zeros(n)
    nu = predicted_velocity(state, params, wrench, h)
    x[:6] = nu
    owner = state.pose
    found = []
    for patch in patches:
        bp = patch.body.world_pose(owner)
        res = closest_points_bruteforce(patch.body, bp, patch.environment, patch.environment_pose)
        found.append((bp, res))
    touching = [res.distance <= TOUCH_TOL for _, res in found]
    n_touch = sum(touching)
    for patch, off, (bp, res), touch in zip(patches, offsets, found, touching):
        t, o, nrm = patch.frame
        a1, a2 = res.a1.copy(), res.a2.copy()
        if touch:
            region = contact_region(patch.body, bp, patch.environment, patch.environment_pose)
            if len(region):
                c = _seed_point(patch, region, nu, state.position)
                if _on_both(patch, bp, c):
                    a1, a2 = c, c.copy()
        if rng is not None and touch and patch.body.patch_radius > 0:
            for _ in range(max_draws):
                rad = patch.body.patch_radius * np.sqrt(rng.uniform())
                ang = rng.uniform(0.0, 2.0 * np.pi)
                shift = rad * (np.cos(ang) * t + np.sin(ang) * o)
                if _on_both(patch, bp, a1 + shift):
                    a1, a2 = a1 + shift, a2 + shift
                    break
        x[off + 5:off + 8] = a1
        x[off + 8:off + 11] = a2
        if touch:
            x[off] = params.mass * gravity * h / n_touch
        r = a2 - state.position
        vel = nu[:3] + np.cross(nu[3:], r)
        fr = patch.friction
        slip = np.array([vel @ t, vel @ o, nu[3:] @ nrm])
        scaled = np.array([fr.e_t, fr.e_o, fr.e_r]) * slip
        x[off + 4] = np.linalg.norm(scaled)
        if x[off + 4] > 0:
            # maximum-dissipation impulses for the current slip, so friction rows start at zero
            x[off + 1:off + 4] = -fr.mu * x[off] * np.array([fr.e_t, fr.e_o, fr.e_r]) * scaled / x[off + 4]
        x[off + PATCH_FIXED:off + patch.size] = _patch_multipliers(patch, bp, a1, a2, touch)
    return x


def impact_guess(state: RigidState, params: InertialParams, patches, h,
                 wrench: AppliedWrench | None = None, damping=0.5):
    """Guess for a step in which patches close a gap.

    Every patch that is touching, or that the predicted motion would carry
    through the environment within the step, starts touching at its current
    environment-side closest point, sharing an impulse that cancels the
    approach speed. The velocity guess is the predicted one scaled by
    ``damping``, since an inelastic landing removes much of it.
    """
    offsets, n = patch_offsets(patches)
    x = np.zeros(n)
    nu = predicted_velocity(state, params, wrench, h)
    x[:6] = damping * nu
    gravity = wrench.gravity if wrench is not None else 9.8
    closing, approach = [], []
    for patch in patches:
        bp = patch.body.world_pose(state.pose)
        res = closest_points_bruteforce(patch.body, bp, patch.environment, patch.environment_pose)
        speed = (nu[:3] + np.cross(nu[3:], res.a1 - state.position)) @ patch.normal
        # gravity counts toward closing the gap, though not toward the velocity guess
        fall = speed - gravity * h * patch.normal[2]
        closing.append(res.distance <= TOUCH_TOL or res.distance + h * fall < 0.0)
        approach.append((bp, res, speed))
    n_close = max(sum(closing), 1)
    for patch, off, close, (bp, res, speed) in zip(patches, offsets, closing, approach):
        a1 = res.a2 if close else res.a1
        x[off + 5:off + 8] = a1
        x[off + 8:off + 11] = res.a2
        if close:
            x[off] = params.mass * (max(-speed, 0.0) + gravity * h) / n_close
        x[off + PATCH_FIXED:off + patch.size] = _patch_multipliers(patch, bp, res.a1, res.a2, close)
    return x


def carry_forward(state: RigidState, patches, x, h):
    """Warm start for the next step from a solved ``x``.

    The object-side point moves rigidly with the object over one step at the
    solved velocity and the environment-side point follows it tangentially,
    so both keep their place instead of trailing toward the patch rim.
    ``state`` is the state the solved step ended in.
    """
    x = np.array(x, dtype=float)
    offsets, _ = patch_offsets(patches)
    v, w = x[:3], x[3:6]
    for patch, off in zip(patches, offsets):
        n = patch.normal
        d = h * (v + np.cross(w, x[off + 5:off + 8] - state.position))
        x[off + 5:off + 8] += d
        x[off + 8:off + 11] += d - (d @ n) * n
    return x


def _solve_designated(state, params, patches, wrench, h, config, x0):
    sp = StepProblem(state, params, patches, wrench, h, designate_k1(state, patches, x0))
    return sp, mncp.solve(sp.problem(), x0, config)


def step(state: RigidState, params: InertialParams, patches, wrench: AppliedWrench, h,
         config: mncp.SolverConfig | None = None, warm_start=None, rng=None) -> StepResult:
    """Advance one step.

    A failed solve is retried from a fresh oracle-based guess (when it was warm
    started) and then from an impact guess; the best attempt is kept. On
    failure the returned state is the unchanged input.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    config = config or mncp.SolverConfig()
    # a poor start rarely recovers through restarts, so every attempt but the
    # last gets only a few and the next guess is tried early
    brief = dataclasses.replace(config, max_restarts=min(config.max_restarts, BRIEF_RESTARTS),
                                max_iterations=min(config.max_iterations, BRIEF_ITERATIONS))
    guesses = []
    if warm_start is not None:
        guesses.append(lambda: np.asarray(warm_start, dtype=float))
    guesses.append(lambda: initial_guess(state, params, patches, h, wrench.gravity, rng,
                                         wrench=wrench))
    guesses.append(lambda: impact_guess(state, params, patches, h, wrench))
    sp = sol = None
    for i, guess in enumerate(guesses):
        cfg = config if i == len(guesses) - 1 else brief
        sp2, sol2 = _solve_designated(state, params, patches, wrench, h, cfg, guess())
        if sol is None or sol2.converged or sol2.residual_norm < sol.residual_norm:
            sp, sol = sp2, sol2
        if sol.converged:
            break
        log.debug("attempt %d failed (%s, residual %.3e)", i, sol.status, sol.residual_norm)
    vars_ = sp.unpack(sol.x)
    modes = ["touching" if (pv.p_n > MODE_TOL or pv.gap < MODE_TOL) else "separated"
             for pv in vars_]
    if not sol.converged:
        return StepResult(state.copy(), vars_, sol, modes, sol.x)
    pos1, quat1, norms = end_of_step_pose(state, sol.x[:6], h)
    new = RigidState(pos1, quat1, sol.x[:3].copy(), sol.x[3:6].copy())
    return StepResult(new, vars_, sol, modes, sol.x, float(abs(norms - 1.0)))


def simulate(scenario, config: mncp.SolverConfig | None = None, rng=None, callback=None):
    """Run ``scenario`` over its horizon and return the list of StepResults.

    Each step is warm-started from the previous solution carried forward.
    The first step starts from ``initial_guess``, randomised when ``rng`` is
    given. ``callback(k, result)`` is called after every converged step.
    Raises SolverFailed with the failing step index and the trajectory so far.
    """
    config = config or scenario.solver_config()
    params, patches, h = scenario.params(), scenario.patches(), scenario.h
    state = scenario.initial_state()
    results = []
    x = None
    for k in range(scenario.steps):
        wrench = scenario.wrench_at(k)
        if x is None:
            x = initial_guess(state, params, patches, h, wrench.gravity, rng, wrench=wrench)
        res = step(state, params, patches, wrench, h, config, warm_start=x, rng=rng)
        if not res.converged:
            raise SolverFailed(f"step {k} failed: {res.status}, residual {res.solution.residual_norm:.3e}",
                               step_index=k, result=res, trajectory=results)
        results.append(res)
        if callback is not None:
            callback(k, res)
        state = res.state
        x = carry_forward(state, patches, res.x, h)
    return results


# ---------------------------------------------------------------------------
# the closest-point rows on their own

@dataclass
class KktClosestPoints:
    a1: np.ndarray
    a2: np.ndarray
    distance: float
    k1: int
    solution: mncp.MncpSolution


class KktProblem:
    """Closest-point rows of one patch with both bodies held fixed.

    Unknowns ``[a1, a2, l_A, l_B]``; the ``k1`` slot of ``l_A`` holds the
    scale of the object-side normal cone, as in the step problem.
    """

    def __init__(self, bodyA: ConvexBody, poseA: Pose, bodyB: ConvexBody, poseB: Pose, k1: int):
        self.bodyA, self.poseA, self.bodyB, self.poseB, self.k1 = bodyA, poseA, bodyB, poseB, k1
        self.m = len(bodyA.surfaces)
        self.n = 6 + self.m + len(bodyB.surfaces)
        self.z_index = np.array([6 + i for i in range(self.m) if i != k1]
                                + list(range(6 + self.m, self.n)), dtype=int)

    def problem(self):
        return mncp.MncpProblem(self.n, self.evaluate, self.z_index, 7)

    def evaluate(self, X):
        X = np.atleast_2d(X)
        a1, a2 = X[:, 0:3], X[:, 3:6]
        lA, lB = X[:, 6:6 + self.m], X[:, 6 + self.m:]
        locA = self.poseA.to_local(a1)
        locB = self.poseB.to_local(a2)
        fA = self.bodyA.values(locA)
        gB = self.bodyB.values(locB)
        gradA = self.bodyA.gradients(locA) @ self.poseA.rotation.T
        gradB = self.bodyB.gradients(locB) @ self.poseB.rotation.T
        weights = lA.copy()
        weights[:, self.k1] = 1.0
        cone = np.einsum("bk,bki->bi", weights, gradA)
        g = np.concatenate([a1 - a2 + lA[:, self.k1:self.k1 + 1] * cone,
                            cone + np.einsum("bk,bki->bi", lB, gradB),
                            fA[:, self.k1:self.k1 + 1]], axis=1)
        w = np.concatenate([-np.delete(fA, self.k1, axis=1), -gB], axis=1)
        return g, w


def closest_points_kkt(bodyA: ConvexBody, poseA: Pose, bodyB: ConvexBody, poseB: Pose,
                       a1_guess, a2_guess, config: mncp.SolverConfig | None = None):
    """Closest points of two separated convex bodies from the KKT rows alone.

    Every object surface is tried as ``k1``, starting with the one least inside
    at ``a1_guess``; the first converged solution with a non-negative cone
    scale is returned. Multipliers start from the surfaces active at the
    guesses; if no surface converges that way, each is retried with them at
    zero (guesses on edges of both bodies can otherwise start in the wrong
    basin). Raises SolverFailed when none converges.
    """
    config = config or mncp.SolverConfig(max_restarts=2)
    a1_guess = np.asarray(a1_guess, dtype=float)
    a2_guess = np.asarray(a2_guess, dtype=float)
    locA = poseA.to_local(a1_guess)
    fA = bodyA.values(locA)
    gB = bodyB.values(poseB.to_local(a2_guess))
    best = None
    order = [int(k) for k in np.argsort(-fA, kind="stable")]
    for informed, k1 in [(True, k) for k in order] + [(False, k) for k in order]:
        kp = KktProblem(bodyA, poseA, bodyB, poseB, k1)
        x0 = np.zeros(kp.n)
        x0[0:3], x0[3:6] = a1_guess, a2_guess
        if informed:
            grad = poseA.rotation @ bodyA.surfaces[k1].gradient(locA)
            x0[6 + k1] = np.linalg.norm(a2_guess - a1_guess) / max(np.linalg.norm(grad), 1e-12)
            x0[6 + kp.m:] = (np.abs(gB) <= 1e-6 * max(1.0, np.abs(gB).max())).astype(float)
        sol = mncp.solve(kp.problem(), x0, config)
        if sol.converged and sol.x[6 + k1] >= -config.tolerance:
            a1, a2 = sol.x[0:3].copy(), sol.x[3:6].copy()
            return KktClosestPoints(a1, a2, float(np.linalg.norm(a1 - a2)), k1, sol)
        if best is None or sol.residual_norm < best.residual_norm:
            best = sol
    raise SolverFailed(f"closest-point rows did not converge (residual {best.residual_norm:.3e})")
