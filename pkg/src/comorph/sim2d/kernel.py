"""Numba kernels for the planar articulated dynamics and episode rollout.

Generalized coordinates q = [x, z, pitch, q_shoulder, q_elbow, q_hip,
q_knee, q_ankle]; the torso reference point is the hip. Dynamics assemble
the 8x8 mass matrix from per-link COM Jacobians each substep and integrate
with semi-implicit Euler; ground contact is a penalty spring with a
velocity-damped, Coulomb-capped tangential force.

All kernels are deterministic and release the GIL, so episodes can run on a
thread pool.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DT = 0.002
SUBSTEPS = 25
CONTROL_DT = DT * SUBSTEPS
OBS_DIM = 27
ACT_DIM = 5
HIDDEN_DIM = 32
BLOWUP_LIMIT = 1.0e6

# Episode termination codes.
DONE_RUNNING = 0
DONE_TIME = 1
DONE_TILT = 2
DONE_ANGVEL = 3
DONE_BLOWUP = 4

_PARENT = np.array([-1, 0, 1, 0, 3, 4], dtype=np.int64)

# _ACTIVE[i, c] == 1 iff generalized coordinate c moves link i.
_ACTIVE = np.array(
    [
        [1, 1, 1, 0, 0, 0, 0, 0],  # torso
        [1, 1, 1, 1, 0, 0, 0, 0],  # upper arm
        [1, 1, 1, 1, 1, 0, 0, 0],  # lower arm
        [1, 1, 1, 0, 0, 1, 0, 0],  # thigh
        [1, 1, 1, 0, 0, 1, 1, 0],  # shin
        [1, 1, 1, 0, 0, 1, 1, 1],  # foot
    ],
    dtype=np.int64,
)

# Non-adjacent link pairs checked for self-collision.
_COLL_PAIRS = np.array(
    [
        [0, 2], [0, 4], [0, 5],
        [1, 3], [1, 4], [1, 5],
        [2, 3], [2, 4], [2, 5],
        [3, 5],
    ],
    dtype=np.int64,
)


@njit(cache=True, nogil=True)
def make_workspace():
    """Scratch arrays shared by consecutive substeps."""
    return (
        np.empty(6),        # alpha
        np.empty(6),        # dirx
        np.empty(6),        # dirz
        np.empty((6, 2)),   # org
        np.empty((6, 2)),   # com
        np.empty(6),        # w
        np.empty((6, 2)),   # vorg
        np.empty((6, 2)),   # vcom
        np.empty((6, 2)),   # acom
        np.empty((8, 8)),   # M
        np.empty(8),        # Q
        np.empty(8),        # jx
        np.empty(8),        # jz
        np.empty(8),        # qdd
    )


@njit(cache=True, nogil=True)
def _fk(q, anchor, c0, c1, mount, alpha, dirx, dirz, org, com):
    alpha[0] = q[2] + 0.5 * np.pi
    org[0, 0] = q[0]
    org[0, 1] = q[1]
    for i in range(6):
        if i > 0:
            p = _PARENT[i]
            alpha[i] = alpha[p] + mount[i] + q[2 + i]
            org[i, 0] = org[p, 0] + dirx[p] * anchor[i]
            org[i, 1] = org[p, 1] + dirz[p] * anchor[i]
        dirx[i] = np.cos(alpha[i])
        dirz[i] = np.sin(alpha[i])
        mid = 0.5 * (c0[i] + c1[i])
        com[i, 0] = org[i, 0] + dirx[i] * mid
        com[i, 1] = org[i, 1] + dirz[i] * mid


@njit(cache=True, nogil=True)
def _chol_solve(M, Q, qdd):
    """Solve M qdd = Q for SPD M (in-place Cholesky in the lower triangle)."""
    n = M.shape[0]
    for i in range(n):
        for j in range(i):
            s = M[i, j]
            for k in range(j):
                s -= M[i, k] * M[j, k]
            M[i, j] = s / M[j, j]
        s = M[i, i]
        for k in range(i):
            s -= M[i, k] * M[i, k]
        if s < 1.0e-12:
            s = 1.0e-12
        M[i, i] = np.sqrt(s)
    for i in range(n):
        s = Q[i]
        for k in range(i):
            s -= M[i, k] * qdd[k]
        qdd[i] = s / M[i, i]
    for i in range(n - 1, -1, -1):
        s = qdd[i]
        for k in range(i + 1, n):
            s -= M[k, i] * qdd[k]
        qdd[i] = s / M[i, i]


@njit(cache=True, nogil=True)
def _substep(
    q, qd, qdes, pd_scale,
    anchor, c0, c1, mass, inertia, radius, mount,
    kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
    kn, dn, ct, mu, g, ws,
):
    """One semi-implicit Euler step of DT seconds. Returns 1 on blowup."""
    alpha, dirx, dirz, org, com, w, vorg, vcom, acom, M, Q, jx, jz, qdd = ws
    _fk(q, anchor, c0, c1, mount, alpha, dirx, dirz, org, com)

    # Velocity recursion over the tree.
    w[0] = qd[2]
    vorg[0, 0] = qd[0]
    vorg[0, 1] = qd[1]
    for i in range(1, 6):
        p = _PARENT[i]
        w[i] = w[p] + qd[2 + i]
        rx = org[i, 0] - org[p, 0]
        rz = org[i, 1] - org[p, 1]
        vorg[i, 0] = vorg[p, 0] - w[p] * rz
        vorg[i, 1] = vorg[p, 1] + w[p] * rx
    for i in range(6):
        rx = com[i, 0] - org[i, 0]
        rz = com[i, 1] - org[i, 1]
        vcom[i, 0] = vorg[i, 0] - w[i] * rz
        vcom[i, 1] = vorg[i, 1] + w[i] * rx

    # Convective COM accelerations (the qdd = 0 part), reusing acom for
    # origin accelerations first.
    acom[0, 0] = 0.0
    acom[0, 1] = 0.0
    for i in range(1, 6):
        p = _PARENT[i]
        rvx = vorg[i, 0] - vorg[p, 0]
        rvz = vorg[i, 1] - vorg[p, 1]
        acom[i, 0] = acom[p, 0] - w[p] * rvz
        acom[i, 1] = acom[p, 1] + w[p] * rvx
    for i in range(6):
        rvx = vcom[i, 0] - vorg[i, 0]
        rvz = vcom[i, 1] - vorg[i, 1]
        acom[i, 0] = acom[i, 0] - w[i] * rvz
        acom[i, 1] = acom[i, 1] + w[i] * rvx

    for a in range(8):
        Q[a] = 0.0
        for b in range(8):
            M[a, b] = 0.0

    # Mass matrix and bias/gravity forces from per-link COM Jacobians.
    for i in range(6):
        m = mass[i]
        jx[0] = 1.0
        jz[0] = 0.0
        jx[1] = 0.0
        jz[1] = 1.0
        for c in range(2, 8):
            if _ACTIVE[i, c] == 1:
                rx = com[i, 0] - org[c - 2, 0]
                rz = com[i, 1] - org[c - 2, 1]
                jx[c] = -rz
                jz[c] = rx
            else:
                jx[c] = 0.0
                jz[c] = 0.0
        for a in range(8):
            if a >= 2 and _ACTIVE[i, a] == 0:
                continue
            for b in range(a, 8):
                if b >= 2 and _ACTIVE[i, b] == 0:
                    continue
                v = m * (jx[a] * jx[b] + jz[a] * jz[b])
                if a >= 2 and b >= 2:
                    v += inertia[i]
                M[a, b] += v
            Q[a] += jz[a] * (-m * g) - m * (jx[a] * acom[i, 0] + jz[a] * acom[i, 1])

    # PD tracking plus passive spring/damper at the joints. Damping forces
    # enter Q at the current velocity and their coefficients also augment
    # the mass matrix diagonal (implicit damping), which keeps light links
    # stable at this step size.
    for j in range(5):
        c = 3 + j
        damp = pd_scale * kd[j] + kdp[j]
        Q[c] += (
            pd_scale * kp[j] * (qdes[j] - q[c])
            - ks[j] * q[c]
            - damp * qd[c]
        )
        M[c, c] += DT * damp

    # Penalty ground contact at the probe points: spring normal force with
    # implicit velocity damping, tangential viscous friction capped by the
    # Coulomb cone (cap realized as a velocity-dependent viscosity so the
    # implicit augmentation matches the applied force).
    for k in range(cp_link.shape[0]):
        li = cp_link[k]
        px = org[li, 0] + dirx[li] * cp_off[k]
        pz = org[li, 1] + dirz[li] * cp_off[k]
        r = radius[li]
        if pz < r:
            rx = px - org[li, 0]
            rz = pz - org[li, 1]
            vx = vorg[li, 0] - w[li] * rz
            vz = vorg[li, 1] + w[li] * rx
            fn = kn * (r - pz) - dn * vz
            if fn > 0.0:
                ct_eff = ct
                cap = mu * fn / (abs(vx) + 1.0e-9)
                if cap < ct_eff:
                    ct_eff = cap
                ft = -ct_eff * vx
                jx[0] = 1.0
                jz[0] = 0.0
                jx[1] = 0.0
                jz[1] = 1.0
                for c in range(2, 8):
                    if _ACTIVE[li, c] == 1:
                        prx = px - org[c - 2, 0]
                        prz = pz - org[c - 2, 1]
                        jx[c] = -prz
                        jz[c] = prx
                    else:
                        jx[c] = 0.0
                        jz[c] = 0.0
                for a in range(8):
                    if a >= 2 and _ACTIVE[li, a] == 0:
                        continue
                    Q[a] += ft * jx[a] + fn * jz[a]
                    for b in range(a, 8):
                        if b >= 2 and _ACTIVE[li, b] == 0:
                            continue
                        M[a, b] += DT * (
                            ct_eff * jx[a] * jx[b] + dn * jz[a] * jz[b]
                        )

    for a in range(8):
        for b in range(a + 1, 8):
            M[b, a] = M[a, b]
    _chol_solve(M, Q, qdd)

    for a in range(8):
        qd[a] += DT * qdd[a]
        q[a] += DT * qd[a]
    for j in range(5):
        c = 3 + j
        if q[c] < jlo[j]:
            q[c] = jlo[j]
            if qd[c] < 0.0:
                qd[c] = 0.0
        elif q[c] > jhi[j]:
            q[c] = jhi[j]
            if qd[c] > 0.0:
                qd[c] = 0.0
    for a in range(8):
        if not np.isfinite(q[a]) or not np.isfinite(qd[a]):
            return 1
        if abs(q[a]) > BLOWUP_LIMIT or abs(qd[a]) > BLOWUP_LIMIT:
            return 1
    return 0


@njit(cache=True, nogil=True)
def settle(
    q, qd, n_steps,
    anchor, c0, c1, mass, inertia, radius, mount,
    kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
    kn, dn, ct, mu, g,
):
    """Passive settling (no PD torques). Returns 1 on blowup."""
    ws = make_workspace()
    qdes = np.zeros(5)
    for _ in range(n_steps):
        blow = _substep(
            q, qd, qdes, 0.0,
            anchor, c0, c1, mass, inertia, radius, mount,
            kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
            kn, dn, ct, mu, g, ws,
        )
        if blow == 1:
            return 1
    return 0


@njit(cache=True, nogil=True)
def _seg_points(org, dirx, dirz, c0, c1, i):
    ax = org[i, 0] + dirx[i] * c0[i]
    az = org[i, 1] + dirz[i] * c0[i]
    bx = org[i, 0] + dirx[i] * c1[i]
    bz = org[i, 1] + dirz[i] * c1[i]
    return ax, az, bx, bz


@njit(cache=True, nogil=True)
def _segment_dist2(ax, az, bx, bz, cx, cz, dx_, dz_):
    """Squared min distance between segments AB and CD (Ericson's method)."""
    d1x = bx - ax
    d1z = bz - az
    d2x = dx_ - cx
    d2z = dz_ - cz
    rx = ax - cx
    rz = az - cz
    a = d1x * d1x + d1z * d1z
    e = d2x * d2x + d2z * d2z
    f = d2x * rx + d2z * rz
    c = d1x * rx + d1z * rz
    b = d1x * d2x + d1z * d2z
    denom = a * e - b * b
    if denom > 1.0e-12:
        s = (b * f - c * e) / denom
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    else:
        s = 0.0
    if e > 1.0e-12:
        t = (b * s + f) / e
    else:
        t = 0.0
    if t < 0.0:
        t = 0.0
        s = -c / a
    elif t > 1.0:
        t = 1.0
        s = (b - c) / a
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    px = ax + d1x * s - (cx + d2x * t)
    pz = az + d1z * s - (cz + d2z * t)
    return px * px + pz * pz


@njit(cache=True, nogil=True)
def _count_self_collisions(q, anchor, c0, c1, mount, radius, ws):
    alpha, dirx, dirz, org, com = ws[0], ws[1], ws[2], ws[3], ws[4]
    _fk(q, anchor, c0, c1, mount, alpha, dirx, dirz, org, com)
    count = 0
    for k in range(_COLL_PAIRS.shape[0]):
        i = _COLL_PAIRS[k, 0]
        j = _COLL_PAIRS[k, 1]
        ax, az, bx, bz = _seg_points(org, dirx, dirz, c0, c1, i)
        cx, cz, dx_, dz_ = _seg_points(org, dirx, dirz, c0, c1, j)
        rsum = radius[i] + radius[j]
        if _segment_dist2(ax, az, bx, bz, cx, cz, dx_, dz_) < rsum * rsum:
            count += 1
    return count


@njit(cache=True, nogil=True)
def _build_obs(q, qd, qdes, prev_action, torso_len, h_stand, obs):
    for j in range(5):
        obs[j] = q[3 + j]
        obs[5 + j] = qd[3 + j]
        obs[10 + j] = qdes[j]
        obs[22 + j] = prev_action[j]
    obs[15] = 0.0
    obs[16] = q[2]
    obs[17] = 0.0
    obs[18] = 0.0
    obs[19] = qd[2]
    obs[20] = 0.0
    obs[21] = (q[1] + np.cos(q[2]) * torso_len) / h_stand


@njit(cache=True, nogil=True)
def _reward_terms(h_norm, pitch, qd, action, prev_action, collisions, out):
    r_up = np.exp(-10.0 * (h_norm - 1.0) ** 2)
    if h_norm > 0.4:
        r_pitch = np.exp(-10.0 * pitch * pitch)
    else:
        r_pitch = 0.0
    sv = 0.0
    for j in range(5):
        sv += qd[3 + j] * qd[3 + j]
    r_vel = 0.1 * np.exp(-np.sqrt(sv))
    sa = 0.0
    for j in range(5):
        d = action[j] - prev_action[j]
        sa += d * d
    r_var = 0.05 * np.exp(-np.sqrt(sa))
    r_coll = 0.1 * np.exp(-float(collisions))
    out[0] = r_up
    out[1] = r_pitch
    out[2] = r_vel
    out[3] = r_var
    out[4] = r_coll
    out[5] = r_up + r_pitch + r_vel + r_var + r_coll


@njit(cache=True, nogil=True)
def control_step(
    q, qd, qdes, prev_action, action, t_elapsed,
    anchor, c0, c1, mass, inertia, radius, mount,
    kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
    kn, dn, ct, mu, g,
    max_time, tilt_limit, angvel_limit,
    ws, reward_out, obs_out,
):
    """Advance one 50 ms control period.

    Integrates the velocity action into clamped joint targets, runs the
    substeps, then computes collisions, reward terms, the next observation,
    and the termination code. Returns (done_code, collisions, t_new).
    """
    for j in range(5):
        nd = qdes[j] + action[j] * CONTROL_DT
        if nd < jlo[j]:
            nd = jlo[j]
        elif nd > jhi[j]:
            nd = jhi[j]
        qdes[j] = nd
    blow = 0
    for _ in range(SUBSTEPS):
        blow = _substep(
            q, qd, qdes, 1.0,
            anchor, c0, c1, mass, inertia, radius, mount,
            kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
            kn, dn, ct, mu, g, ws,
        )
        if blow == 1:
            break
    t_new = t_elapsed + CONTROL_DT
    collisions = 0
    if blow == 1:
        for k in range(6):
            reward_out[k] = 0.0
        done = DONE_BLOWUP
    else:
        collisions = _count_self_collisions(q, anchor, c0, c1, mount, radius, ws)
        h_norm = (q[1] + np.cos(q[2]) * c1[0]) / (
            radius[5] + c1[4] + c1[3] + c1[0]
        )
        _reward_terms(h_norm, q[2], qd, action, prev_action, collisions, reward_out)
        if abs(q[2]) > tilt_limit:
            done = DONE_TILT
        elif abs(qd[2]) > angvel_limit:
            done = DONE_ANGVEL
        elif t_new >= max_time - 1.0e-9:
            done = DONE_TIME
        else:
            done = DONE_RUNNING
    _build_obs(q, qd, qdes, action, c1[0], radius[5] + c1[4] + c1[3] + c1[0], obs_out)
    return done, collisions, t_new


@njit(cache=True, nogil=True)
def _policy_forward(w1, b1, w2, b2, v_max, obs, hidden, action):
    for h in range(HIDDEN_DIM):
        s = b1[h]
        for i in range(OBS_DIM):
            s += w1[h, i] * obs[i]
        hidden[h] = np.tanh(s)
    for a in range(ACT_DIM):
        s = b2[a]
        for h in range(HIDDEN_DIM):
            s += w2[a, h] * hidden[h]
        action[a] = v_max * np.tanh(s)


@njit(cache=True, nogil=True)
def run_episode(
    q, qd, qdes,
    w1, b1, w2, b2, v_max,
    anchor, c0, c1, mass, inertia, radius, mount,
    kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
    kn, dn, ct, mu, g,
    max_time, tilt_limit, angvel_limit, max_steps,
    trace_q, trace_qd, trace_action, trace_reward, trace_extra,
):
    """Closed-loop rollout at 20 Hz. Returns (steps, done_code, return)."""
    ws = make_workspace()
    obs = np.empty(OBS_DIM)
    hidden = np.empty(HIDDEN_DIM)
    action = np.empty(ACT_DIM)
    prev_action = np.zeros(ACT_DIM)
    reward_out = np.empty(6)
    h_stand = radius[5] + c1[4] + c1[3] + c1[0]
    t = 0.0
    total = 0.0
    steps = 0
    done = DONE_RUNNING
    for step in range(max_steps):
        _build_obs(q, qd, qdes, prev_action, c1[0], h_stand, obs)
        _policy_forward(w1, b1, w2, b2, v_max, obs, hidden, action)
        done, collisions, t = control_step(
            q, qd, qdes, prev_action, action, t,
            anchor, c0, c1, mass, inertia, radius, mount,
            kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
            kn, dn, ct, mu, g,
            max_time, tilt_limit, angvel_limit,
            ws, reward_out, obs,
        )
        for a in range(8):
            trace_q[step, a] = q[a]
            trace_qd[step, a] = qd[a]
        for a in range(5):
            trace_action[step, a] = action[a]
        for k in range(6):
            trace_reward[step, k] = reward_out[k]
        trace_extra[step, 0] = obs[21]
        trace_extra[step, 1] = float(collisions)
        trace_extra[step, 2] = t
        total += reward_out[5]
        for a in range(5):
            prev_action[a] = action[a]
        steps += 1
        if done != DONE_RUNNING:
            break
    return steps, done, total


@njit(cache=True, nogil=True)
def probe_heights(q, anchor, c0, c1, mount, radius, cp_link, cp_off, out):
    """Ground clearance per contact probe point (z minus contact radius)."""
    alpha = np.empty(6)
    dirx = np.empty(6)
    dirz = np.empty(6)
    org = np.empty((6, 2))
    com = np.empty((6, 2))
    _fk(q, anchor, c0, c1, mount, alpha, dirx, dirz, org, com)
    for k in range(cp_link.shape[0]):
        li = cp_link[k]
        out[k] = org[li, 1] + dirz[li] * cp_off[k] - radius[li]
    return out


@njit(cache=True, nogil=True)
def mechanical_energy(
    q, qd, anchor, c0, c1, mass, inertia, mount, g,
):
    """Kinetic plus gravitational potential energy of the chain."""
    alpha = np.empty(6)
    dirx = np.empty(6)
    dirz = np.empty(6)
    org = np.empty((6, 2))
    com = np.empty((6, 2))
    _fk(q, anchor, c0, c1, mount, alpha, dirx, dirz, org, com)
    w = np.empty(6)
    vorg = np.empty((6, 2))
    w[0] = qd[2]
    vorg[0, 0] = qd[0]
    vorg[0, 1] = qd[1]
    for i in range(1, 6):
        p = _PARENT[i]
        w[i] = w[p] + qd[2 + i]
        rx = org[i, 0] - org[p, 0]
        rz = org[i, 1] - org[p, 1]
        vorg[i, 0] = vorg[p, 0] - w[p] * rz
        vorg[i, 1] = vorg[p, 1] + w[p] * rx
    energy = 0.0
    for i in range(6):
        rx = com[i, 0] - org[i, 0]
        rz = com[i, 1] - org[i, 1]
        vx = vorg[i, 0] - w[i] * rz
        vz = vorg[i, 1] + w[i] * rx
        energy += 0.5 * mass[i] * (vx * vx + vz * vz)
        energy += 0.5 * inertia[i] * w[i] * w[i]
        energy += mass[i] * g * com[i, 1]
    return energy
