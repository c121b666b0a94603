"""Closed-form impulse sums for a body sliding in pure translation on a plane.

With the normal velocity held at zero and isotropic friction, the summed
contact impulses over all patches do not depend on how the load is shared:
the normal sum cancels the normal applied impulse and the friction sum has
magnitude mu times it, opposing the velocity the body would have without
friction. This gives an exact reference for the full stepper.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stepper import FrictionParams

NORMAL_VELOCITY_TOL = 1e-9


class StickingRegime(ValueError):
    """The body does not keep slipping over the step; the closed form does not apply."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass
class TranslationStepInput:
    mass: float
    t: np.ndarray
    o: np.ndarray
    n: np.ndarray
    velocity: np.ndarray
    applied_impulse: np.ndarray  # gravity included
    friction: FrictionParams

    def __post_init__(self):
        for name in ("t", "o", "n", "velocity", "applied_impulse"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if abs(self.n @ self.velocity) > NORMAL_VELOCITY_TOL:
            raise ValueError("pure sliding needs zero normal velocity")
        if self.friction.e_t != self.friction.e_o:
            raise ValueError("the closed form needs isotropic friction (e_t == e_o)")


@dataclass
class TranslationStep:
    velocity: np.ndarray
    p_t: float
    p_o: float
    p_r: float
    p_n: float


def pure_translation_step(inp: TranslationStepInput) -> TranslationStep:
    """Summed impulses and end-of-step velocity for one sliding step."""
    m, J = inp.mass, inp.applied_impulse
    p_n = -float(inp.n @ J)
    if not p_n > 0:
        raise ValueError("the applied impulse must press the body onto the plane")
    # tangential momentum the step would end with if there were no friction
    free_t = m * (inp.t @ inp.velocity) + inp.t @ J
    free_o = m * (inp.o @ inp.velocity) + inp.o @ J
    speed = np.hypot(free_t, free_o)
    cap = inp.friction.mu * p_n * inp.friction.e_t
    if speed == 0.0:
        raise StickingRegime("no slip: the friction direction is undefined")
    if speed <= cap:
        raise StickingRegime(
            f"friction impulse {cap:.6g} would stop the slip (free momentum {speed:.6g})")
    p_t = -cap * free_t / speed
    p_o = -cap * free_o / speed
    v = inp.velocity + (J + p_n * inp.n + p_t * inp.t + p_o * inp.o) / m
    return TranslationStep(v, float(p_t), float(p_o), 0.0, p_n)


@dataclass
class TranslationRecord:
    position: np.ndarray
    velocity: np.ndarray
    sums: TranslationStep


def translation_trajectory(inp: TranslationStepInput, h, steps, position=(0.0, 0.0, 0.0)):
    """Iterate the sliding step, integrating x <- x + h v with the end-of-step velocity.

    Raises StickingRegime carrying the index of the step at which slip ends.
    """
    x = np.asarray(position, dtype=float).copy()
    cur = inp
    out = []
    for k in range(steps):
        try:
            s = pure_translation_step(cur)
        except StickingRegime as exc:
            raise StickingRegime(str(exc), step_index=k) from None
        x = x + h * s.velocity
        out.append(TranslationRecord(x.copy(), s.velocity.copy(), s))
        cur = TranslationStepInput(cur.mass, cur.t, cur.o, cur.n, s.velocity,
                                   cur.applied_impulse, cur.friction)
    return out
