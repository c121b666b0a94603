import numpy as np
import pytest

from patchsim import mncp
from patchsim.geom import NotOnBoundary, Pose, finite_cylinder, ground, sphere_body
from patchsim.scenario import bundled, load_scenario
from patchsim.stepper import AppliedWrench, ContactPatchVars, RigidState, step
from patchsim.verify import (CertificateTolerances, NoCommonNormal, certify_step,
                             min_norm_on_simplex, project_simplex,
                             separating_hyperplane_certificate)

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


class TestSimplex:
    def test_projection_of_interior_point(self):
        assert np.allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])

    def test_projection_clips(self):
        assert np.allclose(project_simplex([2.0, 0.0, -1.0]), [1.0, 0.0, 0.0])

    def test_projection_is_on_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            c = project_simplex(rng.normal(size=5) * 3)
            assert c.min() >= 0 and c.sum() == pytest.approx(1.0)

    def test_opposing_columns_reach_zero(self):
        G = np.array([[1.0, -1.0], [0.0, 0.0]])
        c, r = min_norm_on_simplex(G)
        assert r <= 1e-12 and np.allclose(c, [0.5, 0.5])

    def test_orthogonal_columns(self):
        c, r = min_norm_on_simplex(np.eye(2))
        assert r == pytest.approx(np.sqrt(0.5))


class TestHyperplane:
    def test_flat_cap_on_ground(self):
        cyl = finite_cylinder(0.1, 0.0, 0.2)
        d = separating_hyperplane_certificate(cyl, Pose(), ground(), Pose(),
                                              [0.03, 0.02, 0.0], [0.03, 0.02, 0.0])
        assert np.allclose(np.abs(d), [0, 0, 1], atol=1e-9)

    def test_tilted_rim_on_ground(self):
        cyl = finite_cylinder(0.1, -0.1, 0.1)
        q = np.array([np.cos(0.15), np.sin(0.15), 0.0, 0.0])
        pose = Pose([0.0, 0.0, 0.0], q)
        rim = pose.to_world([0.0, -0.1, -0.1])
        pose = Pose([0.0, 0.0, -rim[2]], q)
        a = pose.to_world([0.0, -0.1, -0.1])
        d = separating_hyperplane_certificate(cyl, pose, ground(), Pose(), a, a)
        assert np.allclose(np.abs(d), [0, 0, 1], atol=1e-6)

    def test_tangent_spheres(self):
        s = sphere_body(1.0)
        d = separating_hyperplane_certificate(s, Pose(), s, Pose([2.0, 0, 0]),
                                              [1.0, 0, 0], [1.0, 0, 0])
        assert np.allclose(d, [1.0, 0, 0], atol=1e-9)

    def test_interpenetrating_sphere_has_no_certificate(self):
        s = sphere_body(1.0)
        pose = Pose([0.0, 0.0, 0.5])
        # both points sit on their own boundaries but the sphere dips through the ground
        a1 = pose.to_world([np.sqrt(0.75), 0.0, -0.5])
        with pytest.raises(NoCommonNormal):
            separating_hyperplane_certificate(s, pose, ground(), Pose(), a1, a1)

    def test_off_boundary_point(self):
        with pytest.raises(NotOnBoundary):
            separating_hyperplane_certificate(sphere_body(1.0), Pose([0, 0, 1.0]), ground(),
                                              Pose(), [0.0, 0.0, 0.5], [0.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def table():
    sc = load_scenario(bundled("example1"))
    return sc.params(), sc.patches()


class TestCertifyStep:
    def test_resting_table(self, table):
        params, patches = table
        res = step(RigidState([0, 0, 0.3], IDENTITY_Q), params, patches, AppliedWrench(), 0.01)
        cert = certify_step(res, patches)
        assert cert.passed, cert.failures()
        for pc in cert.patches:
            assert pc.touching
            assert np.allclose(np.abs(pc.normal), [0, 0, 1], atol=1e-9)

    def test_airborne_passes_without_normals(self, table):
        params, patches = table
        res = step(RigidState([0, 0, 2.0], IDENTITY_Q), params, patches, AppliedWrench(), 0.01)
        cert = certify_step(res, patches)
        assert cert.passed
        assert all(pc.normal is None and not pc.touching for pc in cert.patches)

    def test_sunken_state_fails_with_depth(self, table):
        params, patches = table
        res = step(RigidState([0, 0, 0.3], IDENTITY_Q), params, patches, AppliedWrench(), 0.01)
        res.state = RigidState(res.state.position - [0, 0, 1e-3], res.state.orientation,
                               res.state.velocity, res.state.angular_velocity)
        cert = certify_step(res, patches)
        assert not cert.passed
        assert max(pc.penetration for pc in cert.patches) >= 9e-4
        assert cert.failures()

    def test_negative_impulse_fails(self, table):
        params, patches = table
        res = step(RigidState([0, 0, 0.3], IDENTITY_Q), params, patches, AppliedWrench(), 0.01)
        pv = res.patches[0]
        res.patches[0] = ContactPatchVars(pv.a1, pv.a2, -0.1, pv.p_t, pv.p_o, pv.p_r, pv.sigma,
                                          pv.l, pv.k1)
        cert = certify_step(res, patches)
        assert not cert.passed and cert.patches[0].complementarity["p_n"] == pytest.approx(0.1)

    def test_tolerances_are_respected(self, table):
        params, patches = table
        res = step(RigidState([0, 0, 0.3], IDENTITY_Q), params, patches, AppliedWrench(), 0.01,
                   mncp.SolverConfig())
        strict = CertificateTolerances(complementarity=-1.0)
        assert not certify_step(res, patches, strict).passed
