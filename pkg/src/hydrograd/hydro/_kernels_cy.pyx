# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled forward and adjoint simulation kernels.

Scalar per-cell loops over the topological cell order.  The operation
order matches the pure-python kernels: vertical budget on every cell,
then routing releases swept from headwaters to the outlet, so inflow
accumulation into a downstream store happens in the same sequence as the
vectorized level sweeps.  Subgradients of max() at the kink are zero,
as in the reference implementation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, tanh

BACKEND_NAME = "cython"


cdef struct CellVars:
    double pn, en, s0, tp, dp, ps, te, de, es, hp1, w, b, perc, pr
    double r0, f, zt, ht1, rr, cfac, qt, qd, q, hp2, ht2


cdef inline void cell_fwd(double cp, double ct, double ke,
                          double hp, double ht, double p, double e,
                          CellVars* V) noexcept nogil:
    cdef double w2, w4, r2, r4, zd
    V.pn = p - e if p > e else 0.0
    V.en = e - p if e > p else 0.0
    V.s0 = hp / cp
    V.tp = tanh(V.pn / cp)
    V.dp = 1.0 + V.s0 * V.tp
    V.ps = cp * (1.0 - V.s0 * V.s0) * V.tp / V.dp
    V.te = tanh(V.en / cp)
    V.de = 1.0 + (1.0 - V.s0) * V.te
    V.es = hp * (2.0 - V.s0) * V.te / V.de
    V.hp1 = hp + V.ps - V.es
    V.w = (4.0 / 9.0) * (V.hp1 / cp)
    w2 = V.w * V.w
    w4 = w2 * w2
    V.b = pow(1.0 + w4, -0.25)
    V.perc = V.hp1 * (1.0 - V.b)
    V.hp2 = V.hp1 * V.b
    V.pr = V.pn - V.ps + V.perc
    V.r0 = ht / ct
    V.f = ke * pow(V.r0, 3.5)
    V.zt = ht + 0.9 * V.pr + V.f
    V.ht1 = V.zt if V.zt > 0.0 else 0.0
    V.rr = V.ht1 / ct
    r2 = V.rr * V.rr
    r4 = r2 * r2
    V.cfac = pow(1.0 + r4, -0.25)
    V.qt = V.ht1 * (1.0 - V.cfac)
    V.ht2 = V.ht1 * V.cfac
    zd = 0.1 * V.pr + V.f
    V.qd = zd if zd > 0.0 else 0.0
    V.q = V.qt + V.qd


def forward(cnp.int64_t[::1] order, cnp.int64_t[::1] down, levels,
            double[::1] cp, double[::1] ct, double[::1] ke,
            double[::1] alpha,
            cnp.int64_t[::1] p_row, double[:, ::1] p_data,
            cnp.int64_t[::1] e_row, double[:, ::1] e_data,
            double[::1] hp0, double[::1] ht0, double[::1] hr0,
            double nu_dt, cnp.int64_t[::1] record_cells,
            Py_ssize_t nt, Py_ssize_t ckpt_every):
    """Run nt steps; record discharge (m3/s) at record_cells.

    With ckpt_every > 0, states are snapshotted before steps 0, K, 2K, ...
    for later adjoint replay.
    """
    cdef Py_ssize_t n = cp.shape[0]
    cdef Py_ssize_t m = record_cells.shape[0]
    cdef Py_ssize_t n_ckpt = 0
    if ckpt_every > 0:
        n_ckpt = (nt + ckpt_every - 1) // ckpt_every

    hp_arr = np.array(hp0, dtype=np.float64)
    ht_arr = np.array(ht0, dtype=np.float64)
    hr_arr = np.array(hr0, dtype=np.float64)
    qrec_arr = np.empty((nt, m), dtype=np.float64)
    ckpt_arr = np.empty((n_ckpt, 3, n), dtype=np.float64)
    out_arr = np.empty(n, dtype=np.float64)
    q_arr = np.empty(n, dtype=np.float64)

    cdef double[::1] hp = hp_arr
    cdef double[::1] ht = ht_arr
    cdef double[::1] hr = hr_arr
    cdef double[:, ::1] qrec = qrec_arr
    cdef double[:, :, ::1] ckpt = ckpt_arr
    cdef double[::1] out = out_arr
    cdef double[::1] q = q_arr

    cdef CellVars V
    cdef Py_ssize_t t, i, ii, g, j, rp, re, d
    cdef double pv, ev, a, o

    with nogil:
        for t in range(nt):
            if ckpt_every > 0 and t % ckpt_every == 0:
                j = t // ckpt_every
                for i in range(n):
                    ckpt[j, 0, i] = hp[i]
                    ckpt[j, 1, i] = ht[i]
                    ckpt[j, 2, i] = hr[i]
            rp = p_row[t]
            re = e_row[t]
            for i in range(n):
                pv = p_data[rp, i] if rp >= 0 else 0.0
                ev = e_data[re, i] if re >= 0 else 0.0
                cell_fwd(cp[i], ct[i], ke[i], hp[i], ht[i], pv, ev, &V)
                hp[i] = V.hp2
                ht[i] = V.ht2
                q[i] = V.q
            for i in range(n):
                hr[i] = hr[i] + q[i]
            for ii in range(n):
                i = order[ii]
                a = hr[i]
                o = alpha[i] * a
                out[i] = o
                hr[i] = a - o
                d = down[i]
                if d >= 0:
                    hr[d] = hr[d] + o
            for g in range(m):
                qrec[t, g] = out[record_cells[g]] * nu_dt
    return qrec_arr, hp_arr, ht_arr, hr_arr, ckpt_arr


def adjoint(cnp.int64_t[::1] order, cnp.int64_t[::1] down, levels,
            double[::1] cp, double[::1] ct, double[::1] ke,
            double[::1] alpha,
            cnp.int64_t[::1] p_row, double[:, ::1] p_data,
            cnp.int64_t[::1] e_row, double[:, ::1] e_data,
            double[:, :, ::1] ckpt, Py_ssize_t ckpt_every,
            Py_ssize_t nt, double nu_dt,
            cnp.int64_t[::1] gauge_cells, double[:, ::1] qhat):
    """Reverse sweep of the whole run.

    qhat[t, g] = dJ/dQ(t, gauge g).  Returns parameter gradients plus the
    adjoints of the initial stores.
    """
    cdef Py_ssize_t n = cp.shape[0]
    cdef Py_ssize_t n_win = ckpt.shape[0]
    cdef Py_ssize_t ng = gauge_cells.shape[0]

    gcp_arr = np.zeros(n, dtype=np.float64)
    gct_arr = np.zeros(n, dtype=np.float64)
    gke_arr = np.zeros(n, dtype=np.float64)
    galpha_arr = np.zeros(n, dtype=np.float64)
    hphat_arr = np.zeros(n, dtype=np.float64)
    hthat_arr = np.zeros(n, dtype=np.float64)
    hrhat_arr = np.zeros(n, dtype=np.float64)
    states_arr = np.empty((max(ckpt_every, 1), 3, n), dtype=np.float64)
    hp_arr = np.empty(n, dtype=np.float64)
    ht_arr = np.empty(n, dtype=np.float64)
    hr_arr = np.empty(n, dtype=np.float64)
    q_arr = np.empty(n, dtype=np.float64)
    acc_arr = np.empty(n, dtype=np.float64)
    seed_arr = np.empty(n, dtype=np.float64)
    ahat_arr = np.empty(n, dtype=np.float64)

    cdef double[::1] gcp = gcp_arr
    cdef double[::1] gct = gct_arr
    cdef double[::1] gke = gke_arr
    cdef double[::1] galpha = galpha_arr
    cdef double[::1] hphat = hphat_arr
    cdef double[::1] hthat = hthat_arr
    cdef double[::1] hrhat = hrhat_arr
    cdef double[:, :, ::1] states = states_arr
    cdef double[::1] hp = hp_arr
    cdef double[::1] ht = ht_arr
    cdef double[::1] hr = hr_arr
    cdef double[::1] q = q_arr
    cdef double[::1] acc = acc_arr
    cdef double[::1] seed = seed_arr
    cdef double[::1] ahat = ahat_arr

    cdef CellVars V
    cdef Py_ssize_t win, a0, b0, t, i, ii, g, rp, re, d
    cdef double pv, ev, a, o, oh, hh, al
    cdef double hpv, htv, cpi, cti, kei
    cdef double qthat, qdhat, zd, gd, prhat, fhat, dcr, cfachat, hthat1
    cdef double gcti, zthat, hthat_new, gkei, r0hat, pshat, perchat
    cdef double dbw, bhat, hphat1, gcpi, hphat_new, eshat
    cdef double ne, des_dhp, des_ds0, des_dte, dte_dcp
    cdef double nump, dps_dcp, dps_ds0, dps_dtp, dtp_dcp
    cdef double r2, r3, c2, c5, w2, w3, b2, b5

    with nogil:
        for win in range(n_win - 1, -1, -1):
            a0 = win * ckpt_every
            b0 = a0 + ckpt_every
            if b0 > nt:
                b0 = nt
            for i in range(n):
                hp[i] = ckpt[win, 0, i]
                ht[i] = ckpt[win, 1, i]
                hr[i] = ckpt[win, 2, i]
            for t in range(a0, b0):
                for i in range(n):
                    states[t - a0, 0, i] = hp[i]
                    states[t - a0, 1, i] = ht[i]
                    states[t - a0, 2, i] = hr[i]
                rp = p_row[t]
                re = e_row[t]
                for i in range(n):
                    pv = p_data[rp, i] if rp >= 0 else 0.0
                    ev = e_data[re, i] if re >= 0 else 0.0
                    cell_fwd(cp[i], ct[i], ke[i], hp[i], ht[i], pv, ev, &V)
                    hp[i] = V.hp2
                    ht[i] = V.ht2
                    q[i] = V.q
                for i in range(n):
                    hr[i] = hr[i] + q[i]
                for ii in range(n):
                    i = order[ii]
                    a = hr[i]
                    o = alpha[i] * a
                    hr[i] = a - o
                    d = down[i]
                    if d >= 0:
                        hr[d] = hr[d] + o
            for t in range(b0 - 1, a0 - 1, -1):
                rp = p_row[t]
                re = e_row[t]
                # replay routing input to recover per-cell store content
                for i in range(n):
                    hpv = states[t - a0, 0, i]
                    htv = states[t - a0, 1, i]
                    pv = p_data[rp, i] if rp >= 0 else 0.0
                    ev = e_data[re, i] if re >= 0 else 0.0
                    cell_fwd(cp[i], ct[i], ke[i], hpv, htv, pv, ev, &V)
                    q[i] = V.q
                    acc[i] = states[t - a0, 2, i] + V.q
                    seed[i] = 0.0
                for ii in range(n):
                    i = order[ii]
                    o = alpha[i] * acc[i]
                    d = down[i]
                    if d >= 0:
                        acc[d] = acc[d] + o
                for g in range(ng):
                    i = gauge_cells[g]
                    seed[i] = seed[i] + qhat[t, g] * nu_dt
                for ii in range(n - 1, -1, -1):
                    i = order[ii]
                    oh = seed[i]
                    d = down[i]
                    if d >= 0:
                        oh = oh + ahat[d]
                    hh = hrhat[i]
                    al = alpha[i]
                    ahat[i] = (1.0 - al) * hh + al * oh
                    galpha[i] = galpha[i] + acc[i] * (oh - hh)
                for i in range(n):
                    hpv = states[t - a0, 0, i]
                    htv = states[t - a0, 1, i]
                    pv = p_data[rp, i] if rp >= 0 else 0.0
                    ev = e_data[re, i] if re >= 0 else 0.0
                    cpi = cp[i]
                    cti = ct[i]
                    kei = ke[i]
                    cell_fwd(cpi, cti, kei, hpv, htv, pv, ev, &V)

                    qthat = ahat[i]
                    qdhat = ahat[i]
                    zd = 0.1 * V.pr + V.f
                    gd = qdhat if zd > 0.0 else 0.0
                    prhat = 0.1 * gd
                    fhat = gd

                    r3 = V.rr * V.rr * V.rr
                    c2 = V.cfac * V.cfac
                    c5 = c2 * c2 * V.cfac
                    dcr = -r3 * c5
                    cfachat = (hthat[i] - qthat) * V.ht1
                    hthat1 = (qthat * (1.0 - V.cfac) + hthat[i] * V.cfac
                              + cfachat * dcr / cti)
                    gcti = cfachat * dcr * (-V.rr / cti)

                    zthat = hthat1 if V.zt > 0.0 else 0.0
                    hthat_new = zthat
                    prhat = prhat + 0.9 * zthat
                    fhat = fhat + zthat

                    gkei = pow(V.r0, 3.5) * fhat
                    r0hat = fhat * kei * 3.5 * pow(V.r0, 2.5)
                    hthat_new = hthat_new + r0hat / cti
                    gcti = gcti + r0hat * (-V.r0 / cti)

                    pshat = -prhat
                    perchat = prhat

                    w3 = V.w * V.w * V.w
                    b2 = V.b * V.b
                    b5 = b2 * b2 * V.b
                    dbw = -w3 * b5
                    bhat = (hphat[i] - perchat) * V.hp1
                    hphat1 = (perchat * (1.0 - V.b) + hphat[i] * V.b
                              + bhat * dbw * (4.0 / 9.0) / cpi)
                    gcpi = bhat * dbw * (-V.w / cpi)

                    hphat_new = hphat1
                    pshat = pshat + hphat1
                    eshat = -hphat1

                    ne = hpv * (2.0 - V.s0) * V.te
                    des_dhp = (2.0 - V.s0) * V.te / V.de
                    des_ds0 = V.te * (ne - hpv * V.de) / (V.de * V.de)
                    des_dte = ((hpv * (2.0 - V.s0) * V.de - ne * (1.0 - V.s0))
                               / (V.de * V.de))
                    dte_dcp = -(1.0 - V.te * V.te) * V.en / (cpi * cpi)
                    hphat_new = hphat_new + eshat * (des_dhp + des_ds0 / cpi)
                    gcpi = gcpi + eshat * (des_ds0 * (-V.s0 / cpi)
                                           + des_dte * dte_dcp)

                    nump = cpi * (1.0 - V.s0 * V.s0) * V.tp
                    dps_dcp = (1.0 - V.s0 * V.s0) * V.tp / V.dp
                    dps_ds0 = ((-2.0 * cpi * V.s0 * V.tp * V.dp - nump * V.tp)
                               / (V.dp * V.dp))
                    dps_dtp = ((cpi * (1.0 - V.s0 * V.s0) * V.dp - nump * V.s0)
                               / (V.dp * V.dp))
                    dtp_dcp = -(1.0 - V.tp * V.tp) * V.pn / (cpi * cpi)
                    hphat_new = hphat_new + pshat * dps_ds0 / cpi
                    gcpi = gcpi + pshat * (dps_dcp + dps_ds0 * (-V.s0 / cpi)
                                           + dps_dtp * dtp_dcp)

                    hphat[i] = hphat_new
                    hthat[i] = hthat_new
                    hrhat[i] = ahat[i]
                    gcp[i] = gcp[i] + gcpi
                    gct[i] = gct[i] + gcti
                    gke[i] = gke[i] + gkei
    return (gcp_arr, gct_arr, gke_arr, galpha_arr,
            hphat_arr, hthat_arr, hrhat_arr)
