"""Mixed nonlinear complementarity problems and a semismooth Newton solver.

A problem asks for x with

    g(x) = 0,    0 <= w_i(x)  _|_  x[z_i] >= 0.

Each pair is folded into one equation with the Fischer-Burmeister function
and the resulting square system is driven to zero by damped Newton steps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
SINGULAR_JACOBIAN = "singular-jacobian"


def fischer_burmeister(a, b):
    """a + b - sqrt(a^2 + b^2); zero exactly on the complementarity set."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a + b - np.hypot(a, b)


@dataclass
class MncpProblem:
    """Residual map split into equality rows and complementarity pairs.

    ``evaluate`` takes a stack of points ``X`` with shape (batch, n) and returns
    ``(g, w)`` with shapes (batch, n_eq) and (batch, n_c). ``z_index[i]`` is the
    component of x that pairs with ``w[:, i]``.

    ``evaluate_frozen``, if given, is the same map with every piecewise choice
    (max selections and the like) made at ``X[0]`` and reused for the other
    rows; differencing it yields the Jacobian of one smooth piece rather than a
    blend across a kink.
    """

    n: int
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    z_index: np.ndarray
    n_eq: int
    layout: dict = field(default_factory=dict)
    evaluate_frozen: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        self.z_index = np.asarray(self.z_index, dtype=int)
        if self.n_eq + len(self.z_index) != self.n:
            raise ValueError(f"n_eq + n_c = {self.n_eq} + {len(self.z_index)} != n = {self.n}")

    @classmethod
    def from_pointwise(cls, n, equations, complementarity, z_index, layout=None):
        """Build from plain functions of a single 1-D x."""
        z_index = np.asarray(z_index, dtype=int)
        n_eq = n - len(z_index)

        def evaluate(X):
            gs, ws = [], []
            for x in X:
                gs.append(np.asarray(equations(x), dtype=float).reshape(n_eq))
                ws.append(np.asarray(complementarity(x), dtype=float).reshape(len(z_index)))
            return np.array(gs).reshape(len(X), n_eq), np.array(ws).reshape(len(X), len(z_index))

        return cls(n, evaluate, z_index, n_eq, layout or {})

    def split(self, x):
        g, w = self.evaluate(np.atleast_2d(x))
        return g[0], w[0], np.asarray(x)[self.z_index]


@dataclass
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 200
    contraction: float = 0.5
    sufficient_decrease: float = 1e-4
    max_restarts: int = 10
    fd_step: float = 1e-7
    perturbation: float = 1e-2
    seed: int = 0
    min_step: float = 1e-12
    polish_steps: int = 2

    def __post_init__(self):
        for name in ("tolerance", "contraction", "sufficient_decrease", "fd_step",
                     "perturbation", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver {name} must be positive")
        if not self.tolerance < 1:
            raise ValueError("solver tolerance must be < 1")
        if self.max_iterations < 1 or self.max_restarts < 0 or self.polish_steps < 0:
            raise ValueError("iteration and restart caps must be positive")


@dataclass
class MncpSolution:
    x: np.ndarray
    residual_norm: float
    iterations: int
    restarts_used: int
    status: str

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _fb_rows(problem: MncpProblem, X):
    g, w = problem.evaluate(X)
    z = X[:, problem.z_index]
    return np.concatenate([g, fischer_burmeister(w, z)], axis=1)


def assemble_fb_residual(problem: MncpProblem, x):
    return _fb_rows(problem, np.atleast_2d(np.asarray(x, dtype=float)))[0]


def fb_partials(a, b):
    """An element of the generalized gradient of fischer_burmeister at (a, b).

    At the kink (0, 0) the element (1 - 1/sqrt 2, 1 - 1/sqrt 2) is used.
    """
    r = np.hypot(a, b)
    kink = r <= 1e-300
    safe = np.where(kink, 1.0, r)
    da = np.where(kink, 1.0 - np.sqrt(0.5), 1.0 - a / safe)
    db = np.where(kink, 1.0 - np.sqrt(0.5), 1.0 - b / safe)
    return da, db


def fd_jacobian(problem: MncpProblem, x, rel_step):
    """Jacobian of the FB residual: forward differences of the smooth maps g and w,
    chained exactly through the Fischer-Burmeister function."""
    # power-of-two steps, and the step actually taken, keep the differencing
    # free of representation error in x; linear rows then difference exactly
    steps = 2.0 ** np.round(np.log2(rel_step * np.maximum(1.0, np.abs(x))))
    steps = (x + steps) - x
    X = np.vstack([x, x + np.diag(steps)])
    g, w = (problem.evaluate_frozen or problem.evaluate)(X)
    Jg = ((g[1:] - g[0]) / steps[:, None]).T
    Jw = ((w[1:] - w[0]) / steps[:, None]).T
    da, db = fb_partials(w[0], x[problem.z_index])
    Jc = da[:, None] * Jw
    Jc[np.arange(len(problem.z_index)), problem.z_index] += db
    return np.vstack([Jg, Jc])


TIKHONOV = 1e-8


def newton_direction(J, F):
    """Newton step; Tikhonov-regularised least squares when J is numerically singular.

    The regularised step minimises ||J d + F||^2 + (lam ||J||)^2 ||d||^2, which
    damps the near-null directions that non-unique contact points and impulse
    splits always contribute.
    """
    if not np.all(np.isfinite(J)):
        return None
    U, s, Vt = np.linalg.svd(J)
    if s[0] == 0.0:
        return None
    if s[-1] > 1e-12 * s[0]:
        return -(Vt.T @ ((U.T @ F) / s))
    lam = TIKHONOV * s[0]
    return -(Vt.T @ ((U.T @ F) * s / (s * s + lam * lam)))


def _polish(problem, x, F, config):
    """A few full Newton steps past the tolerance, each kept only if it lowers the residual.

    Non-unique contact variables leave the unknowns that are unique (the
    velocities) conditioned worse than the residual; polishing buys those
    digits back cheaply.
    """
    for _ in range(config.polish_steps):
        d = newton_direction(fd_jacobian(problem, x, config.fd_step), F)
        if d is None:
            break
        F_try = assemble_fb_residual(problem, x + d)
        if not np.max(np.abs(F_try)) < np.max(np.abs(F)):
            break
        x, F = x + d, F_try
    return x, F


def _newton(problem, x, config, budget):
    F = assemble_fb_residual(problem, x)
    merit = 0.5 * F @ F
    fd_step = config.fd_step
    it = 0
    status = MAX_ITERATIONS
    while it < budget:
        if np.max(np.abs(F)) <= config.tolerance:
            x, F = _polish(problem, x, F, config)
            return x, F, it, CONVERGED
        it += 1
        J = fd_jacobian(problem, x, fd_step)
        d = newton_direction(J, F)
        if d is None:
            status = SINGULAR_JACOBIAN
            break
        # all backtracking candidates in one batched evaluation; take the longest that passes
        n_t = int(np.floor(np.log(config.min_step) / np.log(config.contraction))) + 1
        ts = config.contraction ** np.arange(n_t)
        X_try = x + ts[:, None] * d
        with np.errstate(all="ignore"):
            F_try = _fb_rows(problem, X_try)
            m_try = 0.5 * np.sum(F_try * F_try, axis=1)
        ok = np.isfinite(m_try) & (m_try <= (1.0 - 2.0 * config.sufficient_decrease * ts) * merit)
        if ok.any():
            k = int(np.argmax(ok))
            x, F, merit = X_try[k], F_try[k], m_try[k]
            fd_step = config.fd_step
            continue
        if fd_step > 1e-3 * config.fd_step:
            fd_step *= 0.5
            continue
        status = MAX_ITERATIONS
        break
    if np.max(np.abs(F)) <= config.tolerance:
        x, F = _polish(problem, x, F, config)
        return x, F, it, CONVERGED
    return x, F, it, status


def solve(problem: MncpProblem, x0, config: SolverConfig | None = None) -> MncpSolution:
    """Damped semismooth Newton on the Fischer-Burmeister residual, with random restarts.

    Never raises on non-convergence; inspect ``status``. The best iterate seen
    across restarts is returned.
    """
    config = config or SolverConfig()
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.shape != (problem.n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.n},)")
    rng = np.random.default_rng(config.seed)
    scale = np.maximum(1.0, np.abs(x0))
    best = None
    total = 0
    start = x0
    for restart in range(config.max_restarts + 1):
        x, F, it, status = _newton(problem, start, config, config.max_iterations)
        total += it
        norm = float(np.max(np.abs(F)))
        if best is None or norm < best.residual_norm:
            best = MncpSolution(x, norm, total, restart, status)
        if status == CONVERGED:
            best = MncpSolution(x, norm, total, restart, CONVERGED)
            return best
        log.debug("restart %d: status %s, residual %.3e", restart, status, norm)
        start = x0 + config.perturbation * scale * rng.uniform(-1.0, 1.0, problem.n)
    best.iterations = total
    best.restarts_used = config.max_restarts
    return best
