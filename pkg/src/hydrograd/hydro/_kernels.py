"""Pure-numpy forward and adjoint simulation kernels.

Routing is evaluated as vectorized sweeps over topological levels: every
cell in a level has all of its upstream cells in earlier levels, so the
scatter-adds within one level touch only later-level cells.  The adjoint
sweeps the levels in reverse.

The adjoint is the exact discrete adjoint of this forward scheme, derived
operation by operation; any change to the forward code must be mirrored
in `_cell_adj` / `_route_adj`.
"""

import numpy as np

BACKEND_NAME = "python"


def _gather(row, data, t, n):
    r = row[t]
    if r < 0:
        return np.zeros(n)
    return data[r]


def _cell_fwd(cp, ct, ke, hp, ht, p, e):
    """One vertical-budget step for all cells; returns (q, hp_new, ht_new)."""
    q, hp2, ht2, _ = _cell_fwd_full(cp, ct, ke, hp, ht, p, e)
    return q, hp2, ht2


def _cell_fwd_full(cp, ct, ke, hp, ht, p, e):
    """Vertical budget keeping every intermediate for the adjoint replay."""
    pn = np.maximum(p - e, 0.0)
    en = np.maximum(e - p, 0.0)
    s0 = hp / cp
    tp = np.tanh(pn / cp)
    dp = 1.0 + s0 * tp
    ps = cp * (1.0 - s0 * s0) * tp / dp
    te = np.tanh(en / cp)
    de = 1.0 + (1.0 - s0) * te
    es = hp * (2.0 - s0) * te / de
    hp1 = hp + ps - es
    w = (4.0 / 9.0) * (hp1 / cp)
    b = (1.0 + w ** 4) ** -0.25
    perc = hp1 * (1.0 - b)
    hp2 = hp1 * b
    pr = pn - ps + perc
    r0 = ht / ct
    f = ke * r0 ** 3.5
    zt = ht + 0.9 * pr + f
    ht1 = np.maximum(zt, 0.0)
    rr = ht1 / ct
    cfac = (1.0 + rr ** 4) ** -0.25
    qt = ht1 * (1.0 - cfac)
    ht2 = ht1 * cfac
    qd = np.maximum(0.1 * pr + f, 0.0)
    q = qt + qd
    inter = dict(
        pn=pn, en=en, s0=s0, tp=tp, dp=dp, ps=ps, te=te, de=de, es=es,
        hp1=hp1, w=w, b=b, perc=perc, pr=pr, r0=r0, f=f, zt=zt, ht1=ht1,
        rr=rr, cfac=cfac, qt=qt, qd=qd,
    )
    return q, hp2, ht2, inter


def _route_fwd(levels, down, alpha, hr, q):
    """Linear-reservoir routing sweep.  Returns (hr_new, out, level_input).

    out is the release in mm; level_input stores the store content right
    before release (needed by the adjoint).
    """
    hr = hr + q
    out = np.empty_like(hr)
    acc = np.empty_like(hr)
    for ids in levels:
        a = hr[ids]
        acc[ids] = a
        o = alpha[ids] * a
        out[ids] = o
        hr[ids] = a - o
        d = down[ids]
        m = d >= 0
        np.add.at(hr, d[m], o[m])
    return hr, out, acc


def _route_adj(levels, down, alpha, acc, hrhat_out, outhat_seed):
    """Adjoint of `_route_fwd`.

    Returns (ahat, galpha_inc); ahat is both the runoff adjoint and the
    incoming-store adjoint, since A = hr_in + q + inflows.
    """
    n = acc.size
    ahat = np.zeros(n)
    ga = np.zeros(n)
    for ids in reversed(levels):
        oh = outhat_seed[ids].copy()
        d = down[ids]
        m = d >= 0
        oh[m] += ahat[d[m]]
        hh = hrhat_out[ids]
        al = alpha[ids]
        ahat[ids] = (1.0 - al) * hh + al * oh
        ga[ids] = acc[ids] * (oh - hh)
    return ahat, ga


def _cell_adj(cp, ct, ke, hp, ht, p, e, I, qhat, hphat2, hthat2):
    """Adjoint of `_cell_fwd`; derivative of max() at the kink is zero.

    Returns input-state adjoints and parameter gradient increments.
    """
    qthat = qhat
    qdhat = qhat
    gd = np.where(0.1 * I["pr"] + I["f"] > 0.0, qdhat, 0.0)
    prhat = 0.1 * gd
    fhat = gd.copy()

    # transfer store release: qt = ht1*(1-cfac), ht2 = ht1*cfac
    dcr = -I["rr"] ** 3 * I["cfac"] ** 5
    cfachat = (hthat2 - qthat) * I["ht1"]
    hthat1 = qthat * (1.0 - I["cfac"]) + hthat2 * I["cfac"] + cfachat * dcr / ct
    gct = cfachat * dcr * (-I["rr"] / ct)

    zthat = np.where(I["zt"] > 0.0, hthat1, 0.0)
    hthat = zthat.copy()
    prhat = prhat + 0.9 * zthat
    fhat = fhat + zthat

    # exchange: f = ke * (ht/ct)^3.5
    gke = I["r0"] ** 3.5 * fhat
    r0hat = fhat * ke * 3.5 * I["r0"] ** 2.5
    hthat += r0hat / ct
    gct += r0hat * (-I["r0"] / ct)

    pshat = -prhat
    perchat = prhat

    # percolation: perc = hp1*(1-b), hp2 = hp1*b, b = (1+w^4)^(-1/4)
    dbw = -I["w"] ** 3 * I["b"] ** 5
    bhat = (hphat2 - perchat) * I["hp1"]
    hphat1 = perchat * (1.0 - I["b"]) + hphat2 * I["b"] + bhat * dbw * (4.0 / 9.0) / cp
    gcp = bhat * dbw * (-I["w"] / cp)

    hphat = hphat1.copy()
    pshat = pshat + hphat1
    eshat = -hphat1

    # es = hp*(2-s0)*te/de with de = 1+(1-s0)*te, s0 = hp/cp, te = tanh(en/cp)
    s0, te, de, tp, dp = I["s0"], I["te"], I["de"], I["tp"], I["dp"]
    ne = hp * (2.0 - s0) * te
    des_dhp = (2.0 - s0) * te / de
    des_ds0 = te * (ne - hp * de) / (de * de)
    des_dte = (hp * (2.0 - s0) * de - ne * (1.0 - s0)) / (de * de)
    dte_dcp = -(1.0 - te * te) * I["en"] / (cp * cp)
    hphat += eshat * (des_dhp + des_ds0 / cp)
    gcp += eshat * (des_ds0 * (-s0 / cp) + des_dte * dte_dcp)

    # ps = cp*(1-s0^2)*tp/dp with dp = 1+s0*tp, tp = tanh(pn/cp)
    nump = cp * (1.0 - s0 * s0) * tp
    dps_dcp = (1.0 - s0 * s0) * tp / dp
    dps_ds0 = (-2.0 * cp * s0 * tp * dp - nump * tp) / (dp * dp)
    dps_dtp = (cp * (1.0 - s0 * s0) * dp - nump * s0) / (dp * dp)
    dtp_dcp = -(1.0 - tp * tp) * I["pn"] / (cp * cp)
    hphat += pshat * dps_ds0 / cp
    gcp += pshat * (dps_dcp + dps_ds0 * (-s0 / cp) + dps_dtp * dtp_dcp)

    return hphat, hthat, gcp, gct, gke


def forward(order, down, levels, cp, ct, ke, alpha,
            p_row, p_data, e_row, e_data,
            hp0, ht0, hr0, nu_dt, record_cells, nt, ckpt_every):
    """Run nt steps; record discharge (m3/s) at record_cells.

    With ckpt_every > 0, states are snapshotted before steps 0, K, 2K, ...
    for later adjoint replay.
    """
    n = cp.size
    hp, ht, hr = hp0.copy(), ht0.copy(), hr0.copy()
    qrec = np.empty((nt, record_cells.size))
    if ckpt_every > 0:
        n_ckpt = (nt + ckpt_every - 1) // ckpt_every
        ckpt = np.empty((n_ckpt, 3, n))
    else:
        ckpt = np.empty((0, 3, n))
    for t in range(nt):
        if ckpt_every > 0 and t % ckpt_every == 0:
            j = t // ckpt_every
            ckpt[j, 0] = hp
            ckpt[j, 1] = ht
            ckpt[j, 2] = hr
        p = _gather(p_row, p_data, t, n)
        e = _gather(e_row, e_data, t, n)
        q, hp, ht = _cell_fwd(cp, ct, ke, hp, ht, p, e)
        hr, out, _ = _route_fwd(levels, down, alpha, hr, q)
        qrec[t] = out[record_cells] * nu_dt
    return qrec, hp, ht, hr, ckpt


def adjoint(order, down, levels, cp, ct, ke, alpha,
            p_row, p_data, e_row, e_data,
            ckpt, ckpt_every, nt, nu_dt,
            gauge_cells, qhat):
    """Reverse sweep of the whole run.

    qhat[t, g] = dJ/dQ(t, gauge g).  Returns parameter gradients plus the
    adjoints of the initial stores (needed when initial states are derived
    from the parameters).
    """
    n = cp.size
    gcp = np.zeros(n)
    gct = np.zeros(n)
    gke = np.zeros(n)
    galpha = np.zeros(n)
    hphat = np.zeros(n)
    hthat = np.zeros(n)
    hrhat = np.zeros(n)
    n_win = ckpt.shape[0]
    for win in range(n_win - 1, -1, -1):
        a = win * ckpt_every
        b = min(a + ckpt_every, nt)
        hp = ckpt[win, 0].copy()
        ht = ckpt[win, 1].copy()
        hr = ckpt[win, 2].copy()
        states = np.empty((b - a, 3, n))
        for t in range(a, b):
            states[t - a, 0] = hp
            states[t - a, 1] = ht
            states[t - a, 2] = hr
            p = _gather(p_row, p_data, t, n)
            e = _gather(e_row, e_data, t, n)
            q, hp, ht = _cell_fwd(cp, ct, ke, hp, ht, p, e)
            hr, _, _ = _route_fwd(levels, down, alpha, hr, q)
        for t in range(b - 1, a - 1, -1):
            hp = states[t - a, 0]
            ht = states[t - a, 1]
            hr = states[t - a, 2]
            p = _gather(p_row, p_data, t, n)
            e = _gather(e_row, e_data, t, n)
            q, _, _, inter = _cell_fwd_full(cp, ct, ke, hp, ht, p, e)
            _, _, acc = _route_fwd(levels, down, alpha, hr, q)
            outhat = np.zeros(n)
            np.add.at(outhat, gauge_cells, qhat[t] * nu_dt)
            ahat, ga = _route_adj(levels, down, alpha, acc, hrhat, outhat)
            galpha += ga
            hrhat = ahat.copy()
            hphat, hthat, gc, gt, gk = _cell_adj(
                cp, ct, ke, hp, ht, p, e, inter, ahat, hphat, hthat
            )
            gcp += gc
            gct += gt
            gke += gk
    return gcp, gct, gke, galpha, hphat, hthat, hrhat
