import numpy as np
import pytest

from patchsim.analytic import (StickingRegime, TranslationStepInput, pure_translation_step,
                               translation_trajectory)
from patchsim.stepper import FrictionParams

T, O, N = np.eye(3)
J_GRAVITY = np.array([0.0, 0.0, -0.49])


def _input(v=(4.0, 3.0, 0.0), mu=0.12, mass=5.0, J=J_GRAVITY, e=(1.0, 1.0)):
    return TranslationStepInput(mass, T, O, N, np.array(v, dtype=float), J,
                                FrictionParams(mu, e[0], e[1], 1.0))


class TestSingleStep:
    def test_table_example(self):
        out = pure_translation_step(_input())
        assert out.p_n == pytest.approx(0.49, abs=1e-15)
        assert out.p_t == pytest.approx(-0.04704, abs=1e-15)
        assert out.p_o == pytest.approx(-0.03528, abs=1e-15)
        assert out.p_r == 0.0
        assert np.allclose(out.velocity, [3.990592, 2.992944, 0.0], atol=1e-14)

    def test_one_dimensional_slip(self):
        out = pure_translation_step(_input(v=(2.0, 0.0, 0.0), mu=0.5, mass=1.0, J=[0, 0, -0.098]))
        assert out.p_t == pytest.approx(-0.049)
        assert out.p_o == 0.0
        assert out.velocity[0] == pytest.approx(2.0 - 0.049)

    def test_tangential_applied_impulse_shifts_the_slip(self):
        J = np.array([0.2, 0.0, -0.49])
        out = pure_translation_step(_input(v=(0.0, 1.0, 0.0), J=J))
        free = np.array([0.2, 5.0])
        assert np.allclose([out.p_t, out.p_o], -0.12 * 0.49 * free / np.linalg.norm(free))

    def test_rest_is_sticking(self):
        with pytest.raises(StickingRegime):
            pure_translation_step(_input(v=(0.0, 0.0, 0.0)))

    def test_slow_slip_is_sticking(self):
        with pytest.raises(StickingRegime):
            pure_translation_step(_input(v=(0.001, 0.0, 0.0)))

    def test_rejects_normal_velocity(self):
        with pytest.raises(ValueError):
            _input(v=(1.0, 0.0, 0.1))

    def test_rejects_anisotropic_friction(self):
        with pytest.raises(ValueError):
            _input(e=(1.0, 2.0))

    def test_rejects_lifting_impulse(self):
        with pytest.raises(ValueError):
            pure_translation_step(_input(J=[0.0, 0.0, 0.3]))


class TestTrajectory:
    def test_one_step_advances_by_end_velocity(self):
        (rec,) = translation_trajectory(_input(), 0.01, 1, position=(1.0, 2.0, 0.3))
        assert np.allclose(rec.position, [1.0, 2.0, 0.3] + 0.01 * rec.velocity)

    def test_frictionless_keeps_velocity(self):
        recs = translation_trajectory(_input(mu=0.0), 0.01, 20)
        assert all(np.array_equal(r.velocity, [4.0, 3.0, 0.0]) for r in recs)
        assert np.allclose(recs[-1].position, [0.8, 0.6, 0.0])

    def test_speed_decays_at_constant_rate_until_sticking(self):
        # each step removes mu * 0.49 / 5 = 0.01176 of speed; 0.05 lasts 4 full steps
        with pytest.raises(StickingRegime) as info:
            translation_trajectory(_input(v=(0.04, 0.03, 0.0)), 0.01, 50)
        assert info.value.step_index == 4

    def test_direction_is_preserved(self):
        recs = translation_trajectory(_input(), 0.01, 30)
        for r in recs:
            v = r.velocity
            assert v[0] * 3.0 - v[1] * 4.0 == pytest.approx(0.0, abs=1e-12)
        speeds = [np.linalg.norm(r.velocity) for r in recs]
        assert np.allclose(np.diff(speeds), -0.01176, atol=1e-12)
