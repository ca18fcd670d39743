"""stridesim: desk-scale locomotion stack for a 12-DoF mid-scale humanoid.

A numpy/numba rigid-body simulator built around simulation-friendly hardware
(armature-on-the-diagonal drives, linear knee-ankle coupling), a minimal PPO
walking controller with table-driven domain randomization, contact-wrench and
base-velocity estimators, and an evaluation/teleoperation harness.
"""

from .model import (
    ActuatorSpec,
    JointSpec,
    LinkSpec,
    ModelValidationError,
    ModelParseError,
    RobotModel,
    TransmissionCoupling,
    actuator_for_joint,
    couple_positions,
    couple_torques,
    load_default_model,
    load_model,
    reflected_armature,
    uncouple_positions,
    uncouple_torques,
)
from .dynamics import (
    ContactParams,
    DivergenceError,
    SimState,
    contact_state,
    default_state,
    mass_matrix,
    nonlinear_effects,
    step,
)
from .terrain import TerrainField, flat, generate_terrain, rough, slope, stairs

__version__ = "0.1.0"
