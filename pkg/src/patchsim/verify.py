"""Post-hoc certificates for solved steps.

A touching patch is certified by a common normal: a unit vector in the normal
cone of the object at a1 whose negation lies in the environment's normal
cone at a2. Such a vector exists exactly when the bodies touch without
overlapping, and the plane it defines through the contact must then separate
the bodies. Every check here recomputes from geometry and never feeds back
into the solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import ConvexBody, Pose, active_gradients
from .oracle import _half_space, penetration_depth, support_point
from .stepper import ContactPatch, StepResult

PG_MAX_ITER = 20000


class NoCommonNormal(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def project_simplex(v):
    """Euclidean projection onto {c >= 0, sum c = 1} (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def min_norm_on_simplex(G, tol=1e-14, max_iter=PG_MAX_ITER):
    """min ||G c|| over the unit simplex by accelerated projected gradient.

    Returns (c, ||G c||). Momentum is reset whenever the objective rises.
    """
    G = np.asarray(G, dtype=float)
    k = G.shape[1]
    L = max(np.linalg.norm(G, 2) ** 2, 1e-300)
    c = np.full(k, 1.0 / k)
    y, t = c.copy(), 1.0
    f = 0.5 * np.sum((G @ c) ** 2)
    for _ in range(max_iter):
        c_new = project_simplex(y - (G.T @ (G @ y)) / L)
        f_new = 0.5 * np.sum((G @ c_new) ** 2)
        if f_new > f:
            y, t = c.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = c_new + ((t - 1.0) / t_new) * (c_new - c)
        done = np.max(np.abs(c_new - c)) <= tol or f_new <= 0.5 * tol * tol
        c, f, t = c_new, f_new, t_new
        if done:
            break
    return c, float(np.linalg.norm(G @ c))


def _unit_rows(M):
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def _plane_gap(body, pose, d, mid, side):
    """How far ``body`` crosses the plane {x : d.(x - mid) = 0} onto the wrong side.

    side = +1: the body must lie where d.(x - mid) <= 0; side = -1: where >= 0.
    """
    hs = _half_space(body, pose)
    if hs is not None:
        n, offset = hs
        # a half-space is bounded on one side only along its own normal
        if side < 0 and np.linalg.norm(d + n) <= 1e-9:
            return float(max(0.0, offset - n @ mid))
        if side > 0 and np.linalg.norm(d - n) <= 1e-9:
            return float(max(0.0, offset - n @ mid))
        return np.inf
    x = support_point(body, pose, side * d)
    return float(max(0.0, side * d @ (x - mid)))


def separating_hyperplane_certificate(bodyA: ConvexBody, poseA: Pose, bodyB: ConvexBody,
                                      poseB: Pose, a1, a2, tol=1e-6):
    """Unit normal d with d in C(A, a1) and -d in C(B, a2); raises NoCommonNormal otherwise.

    The cone generators are the unit gradients of the surfaces active within
    ``tol`` (geom.NotOnBoundary if a point is off its boundary). The mixing
    weights minimise ||sum l_i g_i + sum m_j h_j|| with the weights on the
    unit simplex. The plane through the midpoint of a1, a2 with normal d must
    then have A on its negative side and B on its positive side, each to
    within ``tol``; this is checked with exact support points.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    GA = _unit_rows(active_gradients(bodyA, poseA, a1, tol))
    GB = _unit_rows(active_gradients(bodyB, poseB, a2, tol))
    c, residual = min_norm_on_simplex(np.vstack([GA, GB]).T)
    if residual > tol:
        raise NoCommonNormal(f"normal cones do not oppose (residual {residual:.3e})", residual)
    u = GA.T @ c[:len(GA)] - GB.T @ c[len(GA):]
    d = u / np.linalg.norm(u)
    mid = 0.5 * (a1 + a2)
    crossing = max(_plane_gap(bodyA, poseA, d, mid, +1), _plane_gap(bodyB, poseB, d, mid, -1))
    if crossing > tol:
        raise NoCommonNormal(f"plane along the common normal is crossed by {crossing:.3e}",
                             crossing)
    return d


# ---------------------------------------------------------------------------
# step certificates

@dataclass(frozen=True)
class CertificateTolerances:
    boundary: float = 1e-6
    penetration: float = 1e-6
    hyperplane: float = 1e-6
    complementarity: float = 1e-8


@dataclass
class PatchCertificate:
    touching: bool
    boundary_a1: float
    boundary_a2: float
    normal: np.ndarray | None
    hyperplane_error: str
    penetration: float
    complementarity: dict
    dissipative: bool
    passed: bool = False


@dataclass
class StepCertificate:
    patches: list = field(default_factory=list)
    passed: bool = True

    def failures(self):
        out = []
        for i, p in enumerate(self.patches):
            if not p.passed:
                out.append(f"patch {i}: " + _reasons(p))
        return out


def _reasons(p: PatchCertificate):
    bits = []
    if p.hyperplane_error:
        bits.append(p.hyperplane_error)
    bits.append(f"boundary {max(p.boundary_a1, p.boundary_a2):.3e}")
    bits.append(f"penetration {p.penetration:.3e}")
    bits.append("complementarity " + ", ".join(f"{k}={v:.3e}" for k, v in p.complementarity.items()))
    if not p.dissipative:
        bits.append("friction does not oppose slip")
    return "; ".join(bits)


def certify_step(result: StepResult, patches, tolerances: CertificateTolerances | None = None,
                 penetration_samples=None) -> StepCertificate:
    """Check every proof obligation of a converged step; failures are recorded, not raised."""
    tol = tolerances or CertificateTolerances()
    state = result.state
    cert = StepCertificate()
    for patch, pv, mode in zip(patches, result.patches, result.modes):
        patch: ContactPatch
        bp = patch.body.world_pose(state.pose)
        ep = patch.environment_pose
        fA1 = patch.body.values(bp.to_local(pv.a1))
        fA2 = patch.body.values(bp.to_local(pv.a2))
        gB2 = patch.environment.values(ep.to_local(pv.a2))
        b1, b2 = float(abs(fA1.max())), float(abs(gB2.max()))
        touching = mode == "touching"

        normal, err = None, ""
        if touching:
            try:
                normal = separating_hyperplane_certificate(patch.body, bp, patch.environment, ep,
                                                           pv.a1, pv.a2, tol.hyperplane)
            except Exception as exc:  # noqa: BLE001 - recorded in the certificate
                err = f"{type(exc).__name__}: {exc}"

        kw = {} if penetration_samples is None else {"samples": penetration_samples}
        depth = penetration_depth(patch.body, bp, patch.environment, ep, **kw)

        fr = patch.friction
        slack = ((fr.mu * pv.p_n) ** 2 - (pv.p_t / fr.e_t) ** 2 - (pv.p_o / fr.e_o) ** 2
                 - (pv.p_r / fr.e_r) ** 2)
        comp = {
            "p_n": max(0.0, -pv.p_n),
            "sigma": max(0.0, -pv.sigma),
            "multipliers": float(max(0.0, -np.min(pv.l))) if len(pv.l) else 0.0,
            "ellipsoid": max(0.0, -slack),
            "sigma_slack": abs(pv.sigma * slack),
            "nonpenetration": abs(pv.p_n * fA2.max()),
        }

        # maximum dissipation at the sign level: friction opposes the contact-point slip
        dissipative = True
        if pv.sigma > 1e-6:
            t, o, _ = patch.frame
            slip = state.velocity + np.cross(state.angular_velocity, pv.a2 - state.position)
            dissipative = bool(pv.p_t * (t @ slip) + pv.p_o * (o @ slip) <= tol.complementarity)

        ok = (b1 <= tol.boundary and b2 <= tol.boundary and depth <= tol.penetration
              and all(v <= tol.complementarity for v in comp.values()) and dissipative
              and (not touching or normal is not None))
        pc = PatchCertificate(touching, b1, b2, normal, err, float(depth), comp, dissipative, ok)
        cert.patches.append(pc)
        cert.passed = cert.passed and ok
    return cert
