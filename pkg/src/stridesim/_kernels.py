"""Numba kernels for the rigid-body simulation.

Conventions (shared by every function here):
  * Spatial vectors are angular-first: (omega, v) for motion, (torque, force)
    for forces, each expressed in the owning body's frame.
  * Generalized velocity u (18,) = [omega_base(3), v_base(3), qdot(12)], with
    the base twist in base coordinates.
  * Body 0 is the torso; joint j (0..11) drives body j+1. A link frame sits at
    its joint, axes aligned with the parent at q=0, so the local rotation of
    body b relative to its parent is a pure rotation about the joint axis and
    the joint axis has the same coordinates in both frames.
  * Quaternions are (w, x, y, z), unit norm, base-to-world.

All state mutation happens in float64. Functions are written with explicit
loops so they run identically with and without JIT (NUMBA_DISABLE_JIT=1).
"""

import math

import numpy as np
from numba import njit, prange

NB = 13  # bodies
NJ = 12  # actuated joints
NV = 18  # generalized velocities

# Aggregate slots written by the env-step kernel, one row per environment.
AGG_TAU_SQ = 0          # mean squared PD torque norm over sub-steps
AGG_SLIP = 1            # mean in-contact foot-center horizontal speed^2
AGG_FORCE_EXCESS = 2    # mean sum_f max(0, Fn_f - thresh)^2
AGG_AIR_CREDIT = 3      # sum over touchdowns of (air time - target)
AGG_LIMIT_VIOL = 4      # hard joint-limit clamps this step
AGG_FN_L = 5            # per-foot normal force at the last sub-step
AGG_FN_R = 6
AGG_CONTACT_L = 7       # per-foot contact flag at the last sub-step
AGG_CONTACT_R = 8
AGG_FLIGHT_MASK = 9     # bit s set when neither foot touches at sub-step s
AGG_CONTACT_FRAC_L = 10
AGG_CONTACT_FRAC_R = 11
AGG_DIVERGED = 12
NAGG = 13

TERRAIN_FLAT = 0
TERRAIN_ROUGH = 1
TERRAIN_STAIRS = 2
TERRAIN_SLOPE = 3


# ---------------------------------------------------------------------------
# small linear algebra helpers
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True, inline="always")
def _mat33_vec(A, x, out):
    for i in range(3):
        out[i] = A[i, 0] * x[0] + A[i, 1] * x[1] + A[i, 2] * x[2]


@njit(cache=True, inline="always")
def _mat33T_vec(A, x, out):
    for i in range(3):
        out[i] = A[0, i] * x[0] + A[1, i] * x[1] + A[2, i] * x[2]


@njit(cache=True, inline="always")
def _mat33_mul(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(cache=True)
def _quat_to_rot(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    R[0, 0] = 1.0 - 2.0 * (yy + zz)
    R[0, 1] = 2.0 * (xy - wz)
    R[0, 2] = 2.0 * (xz + wy)
    R[1, 0] = 2.0 * (xy + wz)
    R[1, 1] = 1.0 - 2.0 * (xx + zz)
    R[1, 2] = 2.0 * (yz - wx)
    R[2, 0] = 2.0 * (xz - wy)
    R[2, 1] = 2.0 * (yz + wx)
    R[2, 2] = 1.0 - 2.0 * (xx + yy)


@njit(cache=True)
def _quat_integrate(q, omega_body, dt):
    """q <- q * exp(0.5 * omega_body * dt), renormalized."""
    wx = omega_body[0] * dt
    wy = omega_body[1] * dt
    wz = omega_body[2] * dt
    angle = math.sqrt(wx * wx + wy * wy + wz * wz)
    if angle < 1e-12:
        dw, f = 1.0, 0.5
    else:
        dw = math.cos(0.5 * angle)
        f = math.sin(0.5 * angle) / angle
    dx, dy, dz = f * wx, f * wy, f * wz
    w, x, y, z = q[0], q[1], q[2], q[3]
    q[0] = w * dw - x * dx - y * dy - z * dz
    q[1] = w * dx + x * dw + y * dz - z * dy
    q[2] = w * dy - x * dz + y * dw + z * dx
    q[3] = w * dz + x * dy - y * dx + z * dw
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    q[0] /= n
    q[1] /= n
    q[2] /= n
    q[3] /= n


@njit(cache=True)
def _rodrigues(axis, angle, R):
    """Rotation by `angle` about the unit vector `axis`."""
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    R[0, 0] = t * x * x + c
    R[0, 1] = t * x * y - s * z
    R[0, 2] = t * x * z + s * y
    R[1, 0] = t * x * y + s * z
    R[1, 1] = t * y * y + c
    R[1, 2] = t * y * z - s * x
    R[2, 0] = t * x * z - s * y
    R[2, 1] = t * y * z + s * x
    R[2, 2] = t * z * z + c


@njit(cache=True)
def _chol_solve(A, b, n, L, x):
    """Solve A x = b for the leading n x n SPD block. Returns False if not SPD."""
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0 or not math.isfinite(s):
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for ii in range(n):
        i = n - 1 - ii
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return True


# ---------------------------------------------------------------------------
# terrain
# ---------------------------------------------------------------------------

@njit(cache=True)
def terrain_height(ttype, tp, x, y):
    if ttype == TERRAIN_ROUGH:
        h = 0.0
        for k in range(4):
            h += tp[4 * k] * math.sin(tp[4 * k + 1] * x + tp[4 * k + 2] * y + tp[4 * k + 3])
        return h
    if ttype == TERRAIN_STAIRS:
        riser, run, start = tp[0], tp[1], tp[2]
        if x < start:
            return 0.0
        return riser * (math.floor((x - start) / run) + 1.0)
    if ttype == TERRAIN_SLOPE:
        slope, start = tp[0], tp[1]
        if x < start:
            return 0.0
        return slope * (x - start)
    return 0.0


@njit(cache=True)
def _terrain_normal(ttype, tp, x, y, n):
    gx = 0.0
    gy = 0.0
    if ttype == TERRAIN_ROUGH:
        for k in range(4):
            c = tp[4 * k] * math.cos(tp[4 * k + 1] * x + tp[4 * k + 2] * y + tp[4 * k + 3])
            gx += tp[4 * k + 1] * c
            gy += tp[4 * k + 2] * c
    elif ttype == TERRAIN_SLOPE:
        if x >= tp[1]:
            gx = tp[0]
    # stairs treads and flat ground are horizontal
    inv = 1.0 / math.sqrt(1.0 + gx * gx + gy * gy)
    n[0] = -gx * inv
    n[1] = -gy * inv
    n[2] = inv


# ---------------------------------------------------------------------------
# kinematics and dynamics passes
# ---------------------------------------------------------------------------

@njit(cache=True)
def _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel):
    """Forward pass: local joint rotations, world poses, body twists (own frame)."""
    _quat_to_rot(base_quat, R_w[0])
    for k in range(3):
        p_w[0, k] = base_pos[k]
        vel[0, k] = u[k]
        vel[0, 3 + k] = u[3 + k]
    tmp = np.empty(3)
    for j in range(NJ):
        b = j + 1
        p = parent[b]
        _rodrigues(axis[j], q[j], R_loc[j])
        _mat33_mul(R_w[p], R_loc[j], R_w[b])
        _mat33_vec(R_w[p], origin[j], tmp)
        for k in range(3):
            p_w[b, k] = p_w[p, k] + tmp[k]
        # omega_b = R^T omega_p + a qd ; v_b = R^T (v_p + omega_p x origin)
        _cross(vel[p, 0:3], origin[j], tmp)
        for k in range(3):
            tmp[k] += vel[p, 3 + k]
        _mat33T_vec(R_loc[j], tmp, vel[b, 3:6])
        _mat33T_vec(R_loc[j], vel[p, 0:3], vel[b, 0:3])
        qd = u[6 + j]
        for k in range(3):
            vel[b, k] += axis[j, k] * qd


@njit(cache=True)
def _body_origin_inertia(mass_b, com_b, icom_b, hC, Io):
    """(m, c, I_com) -> (h = m c, I about the body origin)."""
    m = mass_b
    cx, cy, cz = com_b[0], com_b[1], com_b[2]
    hC[0] = m * cx
    hC[1] = m * cy
    hC[2] = m * cz
    c2 = cx * cx + cy * cy + cz * cz
    for r in range(3):
        for cc in range(3):
            Io[r, cc] = icom_b[r, cc] - m * com_b[r] * com_b[cc]
        Io[r, r] += m * c2


@njit(cache=True)
def _rnea_bias(parent, axis, origin, mass, hC, IoC, R_loc, R_w, vel, u, q, gravity, h_out):
    """Bias forces h(q, u): Coriolis + centrifugal + gravity, zero acceleration.

    Uses the standard trick of giving the base a -g spatial acceleration so
    gravity appears through the inertia terms.
    """
    acc = np.zeros((NB, 6))
    f = np.zeros((NB, 6))
    tmp = np.empty(3)
    tmp2 = np.empty(3)
    iv_n = np.empty(3)
    iv_f = np.empty(3)

    # base: a0 = (0, R_wb^T * (0,0,+g))
    acc[0, 3] = R_w[0, 2, 0] * gravity
    acc[0, 4] = R_w[0, 2, 1] * gravity
    acc[0, 5] = R_w[0, 2, 2] * gravity

    for b in range(NB):
        if b > 0:
            j = b - 1
            p = parent[b]
            # transform parent's spatial acceleration, then velocity-product term
            _cross(acc[p, 0:3], origin[j], tmp)
            for k in range(3):
                tmp[k] += acc[p, 3 + k]
            _mat33T_vec(R_loc[j], tmp, acc[b, 3:6])
            _mat33T_vec(R_loc[j], acc[p, 0:3], acc[b, 0:3])
            qd = u[6 + j]
            # v x (S qd): angular omega x a*qd, linear v_lin x a*qd
            _cross(vel[b, 0:3], axis[j], tmp)
            for k in range(3):
                acc[b, k] += tmp[k] * qd
            _cross(vel[b, 3:6], axis[j], tmp)
            for k in range(3):
                acc[b, 3 + k] += tmp[k] * qd
        # f = I a + v x* (I v)
        _mat33_vec(IoC[b], vel[b, 0:3], iv_n)
        _cross(hC[b], vel[b, 3:6], tmp)
        for k in range(3):
            iv_n[k] += tmp[k]
        _cross(hC[b], vel[b, 0:3], tmp)
        for k in range(3):
            iv_f[k] = mass[b] * vel[b, 3 + k] - tmp[k]
        _mat33_vec(IoC[b], acc[b, 0:3], tmp2)
        _cross(hC[b], acc[b, 3:6], tmp)
        for k in range(3):
            f[b, k] = tmp2[k] + tmp[k]
        _cross(hC[b], acc[b, 0:3], tmp)
        for k in range(3):
            f[b, 3 + k] = mass[b] * acc[b, 3 + k] - tmp[k]
        # + v x* Iv : (omega x n + v x f, omega x f)
        _cross(vel[b, 0:3], iv_n, tmp)
        for k in range(3):
            f[b, k] += tmp[k]
        _cross(vel[b, 3:6], iv_f, tmp)
        for k in range(3):
            f[b, k] += tmp[k]
        _cross(vel[b, 0:3], iv_f, tmp)
        for k in range(3):
            f[b, 3 + k] += tmp[k]

    # backward: project on joint axes, fold into parents
    for bb in range(NB - 1, 0, -1):
        j = bb - 1
        p = parent[bb]
        h_out[6 + j] = axis[j, 0] * f[bb, 0] + axis[j, 1] * f[bb, 1] + axis[j, 2] * f[bb, 2]
        _mat33_vec(R_loc[j], f[bb, 3:6], tmp)   # force in parent frame
        _mat33_vec(R_loc[j], f[bb, 0:3], tmp2)  # torque in parent frame
        _cross(origin[j], tmp, iv_n)
        for k in range(3):
            f[p, k] += tmp2[k] + iv_n[k]
            f[p, 3 + k] += tmp[k]
    for k in range(6):
        h_out[k] = f[0, k]


@njit(cache=True)
def _crba(parent, axis, origin, mass, hC, IoC, R_loc, armature, M):
    """Composite-rigid-body mass matrix with joint armature on the diagonal."""
    mC = np.empty(NB)
    hCc = np.empty((NB, 3))
    IoCc = np.empty((NB, 3, 3))
    tmp = np.empty(3)
    hr = np.empty(3)
    RI = np.empty((3, 3))
    Ir = np.empty((3, 3))
    for b in range(NB):
        mC[b] = mass[b]
        for k in range(3):
            hCc[b, k] = hC[b, k]
        for r in range(3):
            for c in range(3):
                IoCc[b, r, c] = IoC[b, r, c]

    # fold children into parents (children have larger indices than parents)
    for b in range(NB - 1, 0, -1):
        j = b - 1
        p = parent[b]
        R = R_loc[j]
        t = origin[j]
        _mat33_vec(R, hCc[b], hr)
        _mat33_mul(R, IoCc[b], RI)
        for r in range(3):
            for c in range(3):
                Ir[r, c] = RI[r, 0] * R[c, 0] + RI[r, 1] * R[c, 1] + RI[r, 2] * R[c, 2]
        # shift origin by t: I -> I - m t x t x - t x h x - h x t x
        m = mC[b]
        txx, txy, txz = t[0] * t[0], t[0] * t[1], t[0] * t[2]
        tyy, tyz, tzz = t[1] * t[1], t[1] * t[2], t[2] * t[2]
        hx, hy, hz = hr[0], hr[1], hr[2]
        th = t[0] * hx + t[1] * hy + t[2] * hz
        t2 = txx + tyy + tzz
        for r in range(3):
            Ir[r, r] += m * t2 + 2.0 * th
        Ir[0, 0] -= m * txx + 2.0 * t[0] * hx
        Ir[0, 1] -= m * txy + t[0] * hy + hx * t[1]
        Ir[0, 2] -= m * txz + t[0] * hz + hx * t[2]
        Ir[1, 0] -= m * txy + t[1] * hx + hy * t[0]
        Ir[1, 1] -= m * tyy + 2.0 * t[1] * hy
        Ir[1, 2] -= m * tyz + t[1] * hz + hy * t[2]
        Ir[2, 0] -= m * txz + t[2] * hx + hz * t[0]
        Ir[2, 1] -= m * tyz + t[2] * hy + hz * t[1]
        Ir[2, 2] -= m * tzz + 2.0 * t[2] * hz
        mC[p] += m
        for k in range(3):
            hCc[p, k] += hr[k] + m * t[k]
        for r in range(3):
            for c in range(3):
                IoCc[p, r, c] += Ir[r, c]

    for r in range(NV):
        for c in range(NV):
            M[r, c] = 0.0
    # base block [[Io, hx], [-hx, m E]]
    for r in range(3):
        for c in range(3):
            M[r, c] = IoCc[0, r, c]
    hx, hy, hz = hCc[0, 0], hCc[0, 1], hCc[0, 2]
    M[0, 4] = -hz
    M[0, 5] = hy
    M[1, 3] = hz
    M[1, 5] = -hx
    M[2, 3] = -hy
    M[2, 4] = hx
    for r in range(3):
        for c in range(3):
            M[3 + r, c] = M[c, 3 + r]
        M[3 + r, 3 + r] = mC[0]

    Fn = np.empty(3)
    Fv = np.empty(3)
    Fn2 = np.empty(3)
    Fv2 = np.empty(3)
    for j in range(NJ):
        b = j + 1
        _mat33_vec(IoCc[b], axis[j], Fn)
        _cross(axis[j], hCc[b], Fv)  # -h x a = a x h
        M[6 + j, 6 + j] = (
            axis[j, 0] * Fn[0] + axis[j, 1] * Fn[1] + axis[j, 2] * Fn[2] + armature[j]
        )
        k = b
        while parent[k] != -1:
            jj = k - 1
            # transform F to the parent frame of body k
            _mat33_vec(R_loc[jj], Fv, Fv2)
            _mat33_vec(R_loc[jj], Fn, Fn2)
            _cross(origin[jj], Fv2, tmp)
            for kk in range(3):
                Fn[kk] = Fn2[kk] + tmp[kk]
                Fv[kk] = Fv2[kk]
            k = parent[k]
            if k == 0:
                for kk in range(3):
                    M[kk, 6 + j] = Fn[kk]
                    M[6 + j, kk] = Fn[kk]
                    M[3 + kk, 6 + j] = Fv[kk]
                    M[6 + j, 3 + kk] = Fv[kk]
            else:
                ja = k - 1
                v = axis[ja, 0] * Fn[0] + axis[ja, 1] * Fn[1] + axis[ja, 2] * Fn[2]
                M[6 + ja, 6 + j] = v
                M[6 + j, 6 + ja] = v


@njit(cache=True)
def _spatial_force_to_gen(parent, axis, origin, R_loc, body, n_b, f_b, tau_gen):
    """Accumulate a spatial force on `body` (own coords) into generalized forces."""
    n = np.empty(3)
    f = np.empty(3)
    n2 = np.empty(3)
    f2 = np.empty(3)
    tmp = np.empty(3)
    for k in range(3):
        n[k] = n_b[k]
        f[k] = f_b[k]
    b = body
    while parent[b] != -1:
        j = b - 1
        tau_gen[6 + j] += axis[j, 0] * n[0] + axis[j, 1] * n[1] + axis[j, 2] * n[2]
        _mat33_vec(R_loc[j], f, f2)
        _mat33_vec(R_loc[j], n, n2)
        _cross(origin[j], f2, tmp)
        for k in range(3):
            n[k] = n2[k] + tmp[k]
            f[k] = f2[k]
        b = parent[b]
    for k in range(3):
        tau_gen[k] += n[k]
        tau_gen[3 + k] += f[k]


@njit(cache=True)
def _foot_contacts(
    foot_side, fb, R_w, p_w, vel, foot_corners, foot_center,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t,
    anchors, anchor_active,
    # outputs
    corner_force_w, corner_pen,
    n_s, f_s,
):
    """Penalty contact for one foot. Returns (total normal force, center slip speed^2).

    Writes per-corner world forces / penetrations, updates friction anchors,
    and accumulates the body-frame spatial force in (n_s, f_s).
    """
    pt = np.empty(3)
    vpt = np.empty(3)
    nrm = np.empty(3)
    tmp = np.empty(3)
    fw = np.empty(3)
    fb_b = np.empty(3)
    total_fn = 0.0
    for k in range(3):
        n_s[k] = 0.0
        f_s[k] = 0.0
    for ci in range(4):
        a = foot_side * 4 + ci
        corner = foot_corners[ci]
        _mat33_vec(R_w[fb], corner, pt)
        for k in range(3):
            pt[k] += p_w[fb, k]
        h = terrain_height(ttype, tparams, pt[0], pt[1])
        pen = h - pt[2]
        corner_pen[ci] = pen
        if pen <= 0.0:
            anchor_active[a] = 0
            for k in range(3):
                corner_force_w[ci, k] = 0.0
            continue
        _terrain_normal(ttype, tparams, pt[0], pt[1], nrm)
        # world velocity of the corner point
        _cross(vel[fb, 0:3], corner, tmp)
        for k in range(3):
            tmp[k] += vel[fb, 3 + k]
        _mat33_vec(R_w[fb], tmp, vpt)
        vn = vpt[0] * nrm[0] + vpt[1] * nrm[1] + vpt[2] * nrm[2]
        # spring-damper normal force, damping capped by the spring term so the
        # explicit integrator stays stable even for stiff d_n
        fn = k_n * pen - d_n * (1.0 - restitution) * vn
        if fn < 0.0:
            fn = 0.0
        cap = 2.0 * k_n * pen
        if fn > cap:
            fn = cap
        # tangential: sticking spring from an anchor point, Coulomb-clamped
        if anchor_active[a] == 0:
            anchor_active[a] = 1
            for k in range(3):
                anchors[a, k] = pt[k]
        ftx, fty, ftz = 0.0, 0.0, 0.0
        dx = pt[0] - anchors[a, 0]
        dy = pt[1] - anchors[a, 1]
        dz = pt[2] - anchors[a, 2]
        dn = dx * nrm[0] + dy * nrm[1] + dz * nrm[2]
        dx -= dn * nrm[0]
        dy -= dn * nrm[1]
        dz -= dn * nrm[2]
        vtx = vpt[0] - vn * nrm[0]
        vty = vpt[1] - vn * nrm[1]
        vtz = vpt[2] - vn * nrm[2]
        ftx = -k_t * dx - d_t * vtx
        fty = -k_t * dy - d_t * vty
        ftz = -k_t * dz - d_t * vtz
        fmag = math.sqrt(ftx * ftx + fty * fty + ftz * ftz)
        fmax = mu * fn
        if fmag > fmax:
            s = fmax / fmag if fmag > 0.0 else 0.0
            ftx *= s
            fty *= s
            ftz *= s
            # let the anchor slip so the spring is consistent with the clamp
            anchors[a, 0] = pt[0] + (ftx + d_t * vtx) / k_t
            anchors[a, 1] = pt[1] + (fty + d_t * vty) / k_t
            anchors[a, 2] = pt[2] + (ftz + d_t * vtz) / k_t
        fw[0] = fn * nrm[0] + ftx
        fw[1] = fn * nrm[1] + fty
        fw[2] = fn * nrm[2] + ftz
        for k in range(3):
            corner_force_w[ci, k] = fw[k]
        total_fn += fn
        # accumulate spatial force in foot coordinates
        _mat33T_vec(R_w[fb], fw, fb_b)
        _cross(corner, fb_b, tmp)
        for k in range(3):
            n_s[k] += tmp[k]
            f_s[k] += fb_b[k]

    # foot-center horizontal speed (slip metric) while loaded
    slip = 0.0
    if total_fn > 1.0:
        _cross(vel[fb, 0:3], foot_center, tmp)
        for k in range(3):
            tmp[k] += vel[fb, 3 + k]
        _mat33_vec(R_w[fb], tmp, vpt)
        slip = vpt[0] * vpt[0] + vpt[1] * vpt[1]
    return total_fn, slip


@njit(cache=True)
def _actuation(
    q, qdot, cmd, kp, kd, peak, limit_lo, limit_hi,
    coulomb, viscous, coupling_pairs, Tmat, Tinv,
    tau_pd, tau_total, fric_damp,
):
    """PD in actuator coordinates with linear coupling, saturation, friction.

    tau_pd receives the joint-space torques produced by the drives (used for
    effort penalties and the momentum observer); tau_total additionally has
    joint friction. Returns the largest actuator-space |torque| ratio vs peak.
    """
    # start from the uncoupled (identity) pipeline
    for j in range(NJ):
        qd_des = cmd[j]
        if qd_des < limit_lo[j]:
            qd_des = limit_lo[j]
        elif qd_des > limit_hi[j]:
            qd_des = limit_hi[j]
        tau_pd[j] = kp[j] * (qd_des - q[j]) - kd[j] * qdot[j]
        fric_damp[j] = kd[j]

    for pr in range(coupling_pairs.shape[0]):
        ja = coupling_pairs[pr, 0]
        jb = coupling_pairs[pr, 1]
        ca = cmd[ja]
        cb = cmd[jb]
        if ca < limit_lo[ja]:
            ca = limit_lo[ja]
        elif ca > limit_hi[ja]:
            ca = limit_hi[ja]
        if cb < limit_lo[jb]:
            cb = limit_lo[jb]
        elif cb > limit_hi[jb]:
            cb = limit_hi[jb]
        # actuator-space positions/velocities/commands via T^-1
        qa = Tinv[0, 0] * q[ja] + Tinv[0, 1] * q[jb]
        qb = Tinv[1, 0] * q[ja] + Tinv[1, 1] * q[jb]
        va = Tinv[0, 0] * qdot[ja] + Tinv[0, 1] * qdot[jb]
        vb = Tinv[1, 0] * qdot[ja] + Tinv[1, 1] * qdot[jb]
        da = Tinv[0, 0] * ca + Tinv[0, 1] * cb
        db = Tinv[1, 0] * ca + Tinv[1, 1] * cb
        ta = kp[ja] * (da - qa) - kd[ja] * va
        tb = kp[jb] * (db - qb) - kd[jb] * vb
        tau_pd[ja] = ta
        tau_pd[jb] = tb
        # diagonal of the joint-space damping T^-T diag(kd) T^-1 for the pair
        fric_damp[ja] = kd[ja] * Tinv[0, 0] ** 2 + kd[jb] * Tinv[1, 0] ** 2
        fric_damp[jb] = kd[ja] * Tinv[0, 1] ** 2 + kd[jb] * Tinv[1, 1] ** 2

    # saturate in actuator space
    sat_ratio = 0.0
    for j in range(NJ):
        t = tau_pd[j]
        r = abs(t) / peak[j]
        if r > sat_ratio:
            sat_ratio = r
        if t > peak[j]:
            tau_pd[j] = peak[j]
        elif t < -peak[j]:
            tau_pd[j] = -peak[j]

    # map coupled pairs back to joint space: tau_joint = T^-T tau_act
    for pr in range(coupling_pairs.shape[0]):
        ja = coupling_pairs[pr, 0]
        jb = coupling_pairs[pr, 1]
        ta = tau_pd[ja]
        tb = tau_pd[jb]
        tau_pd[ja] = Tinv[0, 0] * ta + Tinv[1, 0] * tb
        tau_pd[jb] = Tinv[0, 1] * ta + Tinv[1, 1] * tb

    for j in range(NJ):
        th = math.tanh(qdot[j] / 0.01)
        fric = -(coulomb[j] * th + viscous[j] * qdot[j])
        tau_total[j] = tau_pd[j] + fric
        # linearized friction slope, handled implicitly by the integrator: the
        # smooth-sign Coulomb term is a ~(tau_c/eps) damper near rest, far too
        # stiff for explicit integration on low-inertia ankle joints
        fric_damp[j] += coulomb[j] * (1.0 - th * th) / 0.01 + viscous[j]
    return sat_ratio


@njit(cache=True)
def _substep(
    parent, axis, origin,
    mass, hC, IoC, armature,
    limit_lo, limit_hi,
    base_pos, base_quat, u, q,
    tau_cmd, fric_damp,
    ext_wrench, has_ext,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t, k_lim, d_lim,
    foot_body, foot_corners, foot_center,
    anchors, anchor_active,
    dt, gravity, base_locked,
    # workspaces
    R_loc, R_w, p_w, vel, M, L, tau_gen, udot,
    corner_force_w, corner_pen, foot_fn, foot_slip,
):
    """One semi-implicit Euler physics sub-step. Returns (ok, limit_clamps)."""
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)

    for k in range(NV):
        tau_gen[k] = 0.0
    for j in range(NJ):
        tau_gen[6 + j] = tau_cmd[j]
        # one-sided joint-limit penalty torque
        if q[j] > limit_hi[j]:
            tau_gen[6 + j] += -k_lim * (q[j] - limit_hi[j]) - d_lim * u[6 + j]
        elif q[j] < limit_lo[j]:
            tau_gen[6 + j] += k_lim * (limit_lo[j] - q[j]) - d_lim * u[6 + j]

    n_s = np.empty(3)
    f_s = np.empty(3)
    for side in range(2):
        fb = foot_body[side]
        fn, slip = _foot_contacts(
            side, fb, R_w, p_w, vel, foot_corners, foot_center,
            ttype, tparams, mu, restitution,
            k_n, d_n, k_t, d_t, anchors, anchor_active,
            corner_force_w[side], corner_pen[side], n_s, f_s,
        )
        foot_fn[side] = fn
        foot_slip[side] = slip
        if fn > 0.0:
            _spatial_force_to_gen(parent, axis, origin, R_loc, fb, n_s, f_s, tau_gen)

    if has_ext != 0:
        tmpn = np.empty(3)
        tmpf = np.empty(3)
        for b in range(NB):
            w = ext_wrench[b]
            nz = False
            for k in range(6):
                if w[k] != 0.0:
                    nz = True
                    break
            if nz:
                # world-frame (torque, force) at the body origin -> body frame
                _mat33T_vec(R_w[b], w[0:3], tmpn)
                _mat33T_vec(R_w[b], w[3:6], tmpf)
                _spatial_force_to_gen(parent, axis, origin, R_loc, b, tmpn, tmpf, tau_gen)

    h_bias = np.empty(NV)
    _rnea_bias(parent, axis, origin, mass, hC, IoC, R_loc, R_w, vel, u, q, gravity, h_bias)
    _crba(parent, axis, origin, mass, hC, IoC, R_loc, armature, M)

    rhs = np.empty(NV)
    for k in range(NV):
        rhs[k] = tau_gen[k] - h_bias[k]

    # backward-Euler treatment of joint damping: adding dt * c to the diagonal
    # stabilizes stiff friction/limit dampers without moving any equilibrium
    for j in range(NJ):
        c = fric_damp[j]
        if q[j] > limit_hi[j] or q[j] < limit_lo[j]:
            c += d_lim
        M[6 + j, 6 + j] += dt * c

    if base_locked != 0:
        ok = _chol_solve(M[6:, 6:], rhs[6:], NJ, L[:NJ, :NJ], udot[6:])
        for k in range(6):
            udot[k] = 0.0
            u[k] = 0.0
    else:
        ok = _chol_solve(M, rhs, NV, L, udot)
    if not ok:
        return False, 0

    for k in range(NV):
        u[k] += udot[k] * dt
    finite = True
    for k in range(NV):
        if not math.isfinite(u[k]):
            finite = False
    if not finite:
        return False, 0

    # positions with the updated velocities (R from before the quat update)
    for k in range(3):
        base_pos[k] += (
            R_w[0, k, 0] * u[3] + R_w[0, k, 1] * u[4] + R_w[0, k, 2] * u[5]
        ) * dt
    if base_locked == 0:
        _quat_integrate(base_quat, u[0:3], dt)

    clamps = 0
    for j in range(NJ):
        q[j] += u[6 + j] * dt
        lo = limit_lo[j] - 0.05
        hi = limit_hi[j] + 0.05
        if q[j] > hi:
            q[j] = hi
            if u[6 + j] > 0.0:
                u[6 + j] = 0.0
            clamps += 1
        elif q[j] < lo:
            q[j] = lo
            if u[6 + j] < 0.0:
                u[6 + j] = 0.0
            clamps += 1
    if not (math.isfinite(base_pos[0]) and math.isfinite(base_pos[1]) and math.isfinite(base_pos[2])):
        return False, clamps
    return True, clamps


@njit(cache=True)
def _env_step(
    parent, axis, origin,
    mass, hC, IoC, armature,
    limit_lo, limit_hi, kp, kd, peak, coulomb, viscous,
    coupling_pairs, Tmat, Tinv,
    base_pos, base_quat, u, q, t_sub,
    cmd, lat_buf, lat_head, lat_steps,
    push_sub, push_dv, push_n, push_i,
    ext_wrench, has_ext,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t, k_lim, d_lim,
    contact_thresh, force_thresh, air_target,
    foot_body, foot_corners, foot_center,
    anchors, anchor_active, air_time, was_contact,
    n_sub, dt, gravity, base_locked,
    agg,
):
    """Advance one environment by n_sub physics sub-steps under a fixed command."""
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    M = np.empty((NV, NV))
    L = np.empty((NV, NV))
    tau_gen = np.empty(NV)
    udot = np.empty(NV)
    tau_pd = np.empty(NJ)
    tau_total = np.empty(NJ)
    fric_damp = np.empty(NJ)
    corner_force_w = np.empty((2, 4, 3))
    corner_pen = np.empty((2, 4))
    foot_fn = np.empty(2)
    foot_slip = np.empty(2)
    Rt = np.empty((3, 3))
    dvb = np.empty(3)

    for k in range(NAGG):
        agg[k] = 0.0

    flight_mask = 0
    for s in range(n_sub):
        # scheduled base-velocity impulses, in world coordinates
        while push_i[0] < push_n[0] and push_sub[push_i[0]] <= t_sub[0]:
            _quat_to_rot(base_quat, Rt)
            dvw = push_dv[push_i[0]]
            _mat33T_vec(Rt, dvw, dvb)
            for k in range(3):
                u[3 + k] += dvb[k]
            push_i[0] += 1

        # command, optionally through the sub-step latency queue
        if lat_steps[0] > 0:
            head = lat_head[0]
            eff_cmd = lat_buf[head].copy()
            for j in range(NJ):
                lat_buf[head, j] = cmd[j]
            lat_head[0] = (head + 1) % lat_steps[0]
        else:
            eff_cmd = cmd

        _actuation(
            q, u[6:], eff_cmd, kp, kd, peak, limit_lo, limit_hi,
            coulomb, viscous, coupling_pairs, Tmat, Tinv,
            tau_pd, tau_total, fric_damp,
        )

        ok, clamps = _substep(
            parent, axis, origin, mass, hC, IoC, armature,
            limit_lo, limit_hi,
            base_pos, base_quat, u, q,
            tau_total, fric_damp, ext_wrench, has_ext,
            ttype, tparams, mu, restitution,
            k_n, d_n, k_t, d_t, k_lim, d_lim,
            foot_body, foot_corners, foot_center,
            anchors, anchor_active,
            dt, gravity, base_locked,
            R_loc, R_w, p_w, vel, M, L, tau_gen, udot,
            corner_force_w, corner_pen, foot_fn, foot_slip,
        )
        t_sub[0] += 1
        if not ok:
            agg[AGG_DIVERGED] = 1.0
            return

        tsq = 0.0
        for j in range(NJ):
            tsq += tau_pd[j] * tau_pd[j]
        agg[AGG_TAU_SQ] += tsq
        agg[AGG_LIMIT_VIOL] += clamps

        any_contact = False
        for side in range(2):
            in_c = foot_fn[side] > contact_thresh
            if in_c:
                any_contact = True
                agg[AGG_SLIP] += foot_slip[side]
                if was_contact[side] == 0:
                    agg[AGG_AIR_CREDIT] += air_time[side] - air_target
                air_time[side] = 0.0
                was_contact[side] = 1
                agg[AGG_CONTACT_FRAC_L + side] += 1.0
            else:
                air_time[side] += dt
                was_contact[side] = 0
            excess = foot_fn[side] - force_thresh
            if excess > 0.0:
                agg[AGG_FORCE_EXCESS] += excess * excess
        if not any_contact:
            flight_mask |= 1 << s

    inv = 1.0 / n_sub
    agg[AGG_TAU_SQ] *= inv
    agg[AGG_SLIP] *= inv
    agg[AGG_FORCE_EXCESS] *= inv
    agg[AGG_CONTACT_FRAC_L] *= inv
    agg[AGG_CONTACT_FRAC_R] *= inv
    agg[AGG_FN_L] = foot_fn[0]
    agg[AGG_FN_R] = foot_fn[1]
    agg[AGG_CONTACT_L] = 1.0 if foot_fn[0] > contact_thresh else 0.0
    agg[AGG_CONTACT_R] = 1.0 if foot_fn[1] > contact_thresh else 0.0
    agg[AGG_FLIGHT_MASK] = float(flight_mask)


@njit(cache=True, parallel=True)
def env_step_batch(
    parent, axis, origin,
    mass, hC, IoC, armature,
    limit_lo, limit_hi, kp, kd, peak, coulomb, viscous,
    coupling_pairs, Tmat, Tinv,
    base_pos, base_quat, u, q, t_sub,
    cmd, lat_buf, lat_head, lat_steps,
    push_sub, push_dv, push_n, push_i,
    ext_wrench, has_ext,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t, k_lim, d_lim,
    contact_thresh, force_thresh, air_target,
    foot_body, foot_corners, foot_center,
    anchors, anchor_active, air_time, was_contact,
    n_sub, dt, gravity, base_locked,
    agg,
):
    """Step every environment; each row of the batch is fully independent, so
    results do not depend on the number of worker threads."""
    N = base_pos.shape[0]
    for i in prange(N):
        _env_step(
            parent, axis, origin,
            mass[i], hC[i], IoC[i], armature[i],
            limit_lo, limit_hi, kp, kd, peak, coulomb[i], viscous[i],
            coupling_pairs, Tmat, Tinv,
            base_pos[i], base_quat[i], u[i], q[i], t_sub[i : i + 1],
            cmd[i], lat_buf[i], lat_head[i : i + 1], lat_steps[i : i + 1],
            push_sub[i], push_dv[i], push_n[i : i + 1], push_i[i : i + 1],
            ext_wrench[i], has_ext,
            ttype[i], tparams[i], mu[i], restitution[i],
            k_n, d_n, k_t, d_t, k_lim, d_lim,
            contact_thresh, force_thresh, air_target,
            foot_body, foot_corners, foot_center,
            anchors[i], anchor_active[i], air_time[i], was_contact[i],
            n_sub, dt, gravity, base_locked,
            agg[i],
        )


@njit(cache=True)
def mass_matrix_kernel(parent, axis, origin, mass, hC, IoC, armature, base_quat, q, M):
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    u = np.zeros(NV)
    base_pos = np.zeros(3)
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)
    _crba(parent, axis, origin, mass, hC, IoC, R_loc, armature, M)


@njit(cache=True)
def bias_kernel(parent, axis, origin, mass, hC, IoC, base_pos, base_quat, u, q, gravity, h_out):
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)
    _rnea_bias(parent, axis, origin, mass, hC, IoC, R_loc, R_w, vel, u, q, gravity, h_out)


@njit(cache=True)
def fk_kernel(parent, axis, origin, base_pos, base_quat, u, q, R_w, p_w, vel):
    R_loc = np.empty((NJ, 3, 3))
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)


@njit(cache=True)
def gen_force_kernel(parent, axis, origin, base_quat, q, body, wrench_w, tau_gen):
    """Generalized forces from a world-frame (torque, force) at `body`'s origin."""
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    u = np.zeros(NV)
    base_pos = np.zeros(3)
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)
    n_b = np.empty(3)
    f_b = np.empty(3)
    _mat33T_vec(R_w[body], wrench_w[0:3], n_b)
    _mat33T_vec(R_w[body], wrench_w[3:6], f_b)
    for k in range(NV):
        tau_gen[k] = 0.0
    _spatial_force_to_gen(parent, axis, origin, R_loc, body, n_b, f_b, tau_gen)


@njit(cache=True)
def substep_kernel(
    parent, axis, origin,
    mass, hC, IoC, armature,
    limit_lo, limit_hi,
    base_pos, base_quat, u, q, t_sub,
    tau_cmd, fric_damp, ext_wrench, has_ext,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t, k_lim, d_lim,
    foot_body, foot_corners, foot_center,
    anchors, anchor_active,
    dt, gravity, base_locked,
    corner_force_w, corner_pen, foot_fn, foot_slip,
):
    """One sub-step on a single environment's state arrays (mutated in place)."""
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    M = np.empty((NV, NV))
    L = np.empty((NV, NV))
    tau_gen = np.empty(NV)
    udot = np.empty(NV)
    ok, clamps = _substep(
        parent, axis, origin, mass, hC, IoC, armature,
        limit_lo, limit_hi,
        base_pos, base_quat, u, q,
        tau_cmd, fric_damp, ext_wrench, has_ext,
        ttype, tparams, mu, restitution,
        k_n, d_n, k_t, d_t, k_lim, d_lim,
        foot_body, foot_corners, foot_center,
        anchors, anchor_active,
        dt, gravity, base_locked,
        R_loc, R_w, p_w, vel, M, L, tau_gen, udot,
        corner_force_w, corner_pen, foot_fn, foot_slip,
    )
    t_sub[0] += 1
    return ok, clamps


@njit(cache=True)
def accel_kernel(
    parent, axis, origin,
    mass, hC, IoC, armature,
    limit_lo, limit_hi,
    base_pos, base_quat, u, q,
    tau_cmd, ext_wrench, has_ext,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t, k_lim, d_lim,
    foot_body, foot_corners, foot_center,
    anchors, anchor_active,
    gravity, base_locked,
    M_out, h_out, tau_gen_out, udot_out,
):
    """Forward dynamics at the current state without integrating.

    Friction anchors are treated as read-only (callers pass copies if the
    clamped-anchor update matters). tau_gen_out includes the actuation input,
    joint-limit penalties, contact forces, and external wrenches.
    """
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    L = np.empty((NV, NV))
    corner_force_w = np.empty((2, 4, 3))
    corner_pen = np.empty((2, 4))
    foot_fn = np.empty(2)
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)
    for k in range(NV):
        tau_gen_out[k] = 0.0
    for j in range(NJ):
        tau_gen_out[6 + j] = tau_cmd[j]
        if q[j] > limit_hi[j]:
            tau_gen_out[6 + j] += -k_lim * (q[j] - limit_hi[j]) - d_lim * u[6 + j]
        elif q[j] < limit_lo[j]:
            tau_gen_out[6 + j] += k_lim * (limit_lo[j] - q[j]) - d_lim * u[6 + j]
    n_s = np.empty(3)
    f_s = np.empty(3)
    for side in range(2):
        fb = foot_body[side]
        fn, _slip = _foot_contacts(
            side, fb, R_w, p_w, vel, foot_corners, foot_center,
            ttype, tparams, mu, restitution,
            k_n, d_n, k_t, d_t, anchors, anchor_active,
            corner_force_w[side], corner_pen[side], n_s, f_s,
        )
        foot_fn[side] = fn
        if fn > 0.0:
            _spatial_force_to_gen(parent, axis, origin, R_loc, fb, n_s, f_s, tau_gen_out)
    if has_ext != 0:
        tmpn = np.empty(3)
        tmpf = np.empty(3)
        for b in range(NB):
            w = ext_wrench[b]
            nz = False
            for k in range(6):
                if w[k] != 0.0:
                    nz = True
                    break
            if nz:
                _mat33T_vec(R_w[b], w[0:3], tmpn)
                _mat33T_vec(R_w[b], w[3:6], tmpf)
                _spatial_force_to_gen(parent, axis, origin, R_loc, b, tmpn, tmpf, tau_gen_out)
    _rnea_bias(parent, axis, origin, mass, hC, IoC, R_loc, R_w, vel, u, q, gravity, h_out)
    _crba(parent, axis, origin, mass, hC, IoC, R_loc, armature, M_out)
    rhs = np.empty(NV)
    for k in range(NV):
        rhs[k] = tau_gen_out[k] - h_out[k]
    if base_locked != 0:
        ok = _chol_solve(M_out[6:, 6:], rhs[6:], NJ, L[:NJ, :NJ], udot_out[6:])
        for k in range(6):
            udot_out[k] = 0.0
    else:
        ok = _chol_solve(M_out, rhs, NV, L, udot_out)
    return ok


@njit(cache=True)
def contact_eval_kernel(
    parent, axis, origin,
    base_pos, base_quat, u, q,
    ttype, tparams, mu, restitution,
    k_n, d_n, k_t, d_t,
    foot_body, foot_corners, foot_center,
    anchors, anchor_active,
    corner_force_w, corner_pen, foot_fn, foot_slip,
):
    """Evaluate contact forces at the current state (anchors must be copies)."""
    R_loc = np.empty((NJ, 3, 3))
    R_w = np.empty((NB, 3, 3))
    p_w = np.empty((NB, 3))
    vel = np.empty((NB, 6))
    _fk_vel(parent, axis, origin, base_pos, base_quat, u, q, R_loc, R_w, p_w, vel)
    n_s = np.empty(3)
    f_s = np.empty(3)
    for side in range(2):
        fb = foot_body[side]
        fn, slip = _foot_contacts(
            side, fb, R_w, p_w, vel, foot_corners, foot_center,
            ttype, tparams, mu, restitution,
            k_n, d_n, k_t, d_t, anchors, anchor_active,
            corner_force_w[side], corner_pen[side], n_s, f_s,
        )
        foot_fn[side] = fn
        foot_slip[side] = slip


@njit(cache=True)
def terrain_height_batch(ttype, tparams, x, y, out):
    for i in range(x.shape[0]):
        out[i] = terrain_height(ttype[i], tparams[i], x[i], y[i])
