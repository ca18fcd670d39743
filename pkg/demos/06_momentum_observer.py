"""Estimate an external foot force without force sensors.

A constant 20 N upward force is applied to the left foot of the pinned robot;
the generalized-momentum observer's residual converges to the equivalent
generalized force with first-order dynamics, and mapping it through the foot
Jacobian recovers the force.
"""

import numpy as np

import stridesim as ss
from stridesim import actuation as act
from stridesim import dynamics as dyn
from stridesim import estimation as est
from stridesim import kinematics as kin

model = ss.load_default_model()
gains = act.default_gains(model)
st = dyn.default_state(model)
st.base_pos[2] = 5.0  # pinned in the air: contact never interferes

obs = est.ObserverState.fresh(gain=50.0, dim=12)
force = np.array([0.0, 0.0, 20.0])
print("time     residual->force estimate (z)")
for k in range(320):
    wrench = dyn.point_force_wrench(model, st, "left_foot", model.arrays().foot_center, force)
    qd_prev = st.u[6:].copy()
    tau, fd = act.apply(model, gains, model.nominal_pose, st, return_damping=True)
    st = dyn.step(model, st, tau, external_wrenches=[wrench], fric_damping=fd, base_locked=True)
    obs = est.observer_update(obs, model, st, tau, dyn.SUB_DT, base_locked=True,
                              fric_damp=fd, qd_prev=qd_prev)
    if k % 40 == 39:
        R_w, p_w, _ = kin.fk(model, st.base_pos, st.base_quat, st.u, st.q)
        J = kin.body_jacobian(model, R_w, p_w, int(model.arrays().foot_body[0]))[:, 6:]
        w_hat = np.linalg.pinv(J.T) @ obs.r
        print(f"{st.time:5.2f} s  {w_hat[5]:6.2f} N   (true 20.00 N)")
