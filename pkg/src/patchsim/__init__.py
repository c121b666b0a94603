"""Rigid-body simulation over non-convex contact regions modeled as unions of convex patches."""
from .geom import ConvexBody, InertialParams, Pose
from .mncp import MncpProblem, SolverConfig, solve
from .scenario import Scenario, load_scenario
from .stepper import (AppliedWrench, ContactPatch, FrictionParams, RigidState, SolverFailed,
                      simulate, step)

__version__ = "0.1.0"
