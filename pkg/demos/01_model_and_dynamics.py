"""Load the robot description and poke at the rigid-body dynamics.

Shows: model validation, the armature-augmented mass matrix, static forces,
and a PD-held drop settling onto flat ground.
"""

import numpy as np

import stridesim as ss
from stridesim import actuation as act
from stridesim import dynamics as dyn

model = ss.load_default_model()
print(f"{model.name}: {model.total_mass():.1f} kg, {len(model.joints)} actuated joints")
for j in model.joints[:6]:
    print(f"  {j.name:10s} axis {j.axis} limits [{np.degrees(j.limit_lo):6.1f}, "
          f"{np.degrees(j.limit_hi):6.1f}] deg  armature {j.armature:.2e}")

# The knee drive's rotor inertia shows up directly on the mass-matrix diagonal.
state = dyn.default_state(model)
M = dyn.mass_matrix(model, state)
M0 = dyn.mass_matrix(model, state, include_armature=False)
j = model.joint_index("left_KFE")
print(f"\nKFE diagonal: {M[6+j,6+j]:.5f} with armature, {M0[6+j,6+j]:.5f} without "
      f"(increment {M[6+j,6+j]-M0[6+j,6+j]:.5f} kg m^2)")

# Standing statics: the bias force vertical component is exactly the weight.
h = dyn.nonlinear_effects(model, state)
print(f"bias force at standstill: {h[3:6].round(3)} N (weight {16*9.81:.2f} N)")

# Drop the robot 5 cm and let the PD controller catch it.
gains = act.default_gains(model)
st = dyn.default_state(model, settle=0.05)
print("\ndrop test (5 cm):")
for k in range(2400):
    tau, fd = act.apply(model, gains, model.nominal_pose, st, return_damping=True)
    st = dyn.step(model, st, tau, fric_damping=fd)
    if k % 400 == 399:
        rep = dyn.contact_state(model, st)
        print(f"  t={st.time:4.1f} s  base z={st.base_pos[2]:.4f} m  "
              f"contact force={rep.normal_force.sum():6.1f} N")
print(f"kinematic standing height: {dyn.standing_pose_height(model):.4f} m")
