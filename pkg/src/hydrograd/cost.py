"""Calibration cost and validation metrics over gauge discharge series.

The calibration cost is a weighted sum of per-gauge 1 - NSE terms over an
evaluation window.  Missing observations (NaN) are excluded pointwise; the
observed mean in the NSE denominator is taken over non-missing steps only.
KGE is a validation-only metric; its variability term uses the population
standard deviation.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllGaugesDegenerateError,
    ConfigError,
    DegenerateGaugeWarning,
    DegenerateObservationsError,
    EmptyEventError,
    ZeroBaselineError,
)


def _masked_pair(qsim, qobs):
    qsim = np.asarray(qsim, dtype=np.float64)
    qobs = np.asarray(qobs, dtype=np.float64)
    if qsim.shape != qobs.shape:
        raise DegenerateObservationsError(
            f"series lengths differ: {qsim.shape} vs {qobs.shape}"
        )
    mask = ~np.isnan(qobs)
    return qsim, qobs, mask


def nse(qsim, qobs) -> float:
    """Nash-Sutcliffe efficiency, 1 - sum(err^2)/sum((obs-mean)^2)."""
    qsim, qobs, mask = _masked_pair(qsim, qobs)
    if mask.sum() < 2:
        raise DegenerateObservationsError(
            f"need at least 2 observed values, have {int(mask.sum())}"
        )
    o = qobs[mask]
    s = qsim[mask]
    den = float(np.sum((o - o.mean()) ** 2))
    if den == 0.0:
        raise DegenerateObservationsError("observed series is constant")
    return 1.0 - float(np.sum((o - s) ** 2)) / den


def kge(qsim, qobs, a1: float = 1.0 / 3.0, a2: float = 1.0 / 3.0,
        a3: float = 1.0 / 3.0) -> float:
    """Kling-Gupta efficiency: 1 - [a1(r-1)^2 + a2(beta-1)^2 + a3(alpha-1)^2].

    r is the Pearson correlation, beta the mean ratio, alpha the ratio of
    population standard deviations.  Weights must sum to 1.
    """
    if abs(a1 + a2 + a3 - 1.0) > 1e-12:
        raise ConfigError(f"KGE weights must sum to 1, got {a1 + a2 + a3}")
    qsim, qobs, mask = _masked_pair(qsim, qobs)
    if mask.sum() < 2:
        raise DegenerateObservationsError(
            f"need at least 2 observed values, have {int(mask.sum())}"
        )
    o = qobs[mask]
    s = qsim[mask]
    mo, ms = o.mean(), s.mean()
    so = float(np.sqrt(np.mean((o - mo) ** 2)))
    ss = float(np.sqrt(np.mean((s - ms) ** 2)))
    if mo == 0.0 or so == 0.0:
        raise DegenerateObservationsError("observed mean or variance is zero")
    r = 0.0 if ss == 0.0 else float(np.mean((o - mo) * (s - ms))) / (so * ss)
    beta = ms / mo
    alpha = ss / so
    return 1.0 - (a1 * (r - 1.0) ** 2 + a2 * (beta - 1.0) ** 2
                  + a3 * (alpha - 1.0) ** 2)


def improvement_rate(nse_a: float, nse_b: float) -> float:
    """Signed relative improvement of score a over baseline b."""
    if nse_b == 0.0:
        raise ZeroBaselineError("baseline score is zero")
    return (nse_a - nse_b) / abs(nse_b)


# --------------------------------------------------------------------------
# multi-gauge cost
# --------------------------------------------------------------------------

def _window_slice(nt: int, window) -> slice:
    if window is None:
        return slice(0, nt)
    t0, t1 = int(window[0]), int(window[1])
    if not (0 <= t0 < t1 <= nt):
        raise ConfigError(f"window {window} outside series of {nt} steps")
    return slice(t0, t1)


def multi_gauge_cost(sim, obs, weights, window=None, return_seed: bool = False):
    """Weighted sum of per-gauge 1 - NSE over the window.

    sim, obs: (nt, n_gauges); weights: (n_gauges,).  Degenerate gauges are
    excluded with weight renormalization and a warning.  With return_seed,
    also returns dJ/dQsim over the full (nt, n_gauges) array.
    """
    sim = np.asarray(sim, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if sim.shape != obs.shape or sim.ndim != 2 or weights.shape != (sim.shape[1],):
        raise ConfigError(
            f"inconsistent shapes sim {sim.shape}, obs {obs.shape}, "
            f"weights {weights.shape}"
        )
    sl = _window_slice(sim.shape[0], window)
    n_gauges = sim.shape[1]
    usable = np.zeros(n_gauges, dtype=bool)
    dens = np.zeros(n_gauges)
    for g in range(n_gauges):
        if weights[g] == 0.0:
            continue
        o = obs[sl, g]
        m = ~np.isnan(o)
        if m.sum() < 2:
            continue
        den = float(np.sum((o[m] - o[m].mean()) ** 2))
        if den == 0.0:
            continue
        usable[g] = True
        dens[g] = den
    active = usable & (weights > 0)
    if not active.any():
        raise AllGaugesDegenerateError(
            "no gauge has enough valid observations in the window"
        )
    excluded = (~usable) & (weights > 0)
    w = np.where(active, weights, 0.0)
    if excluded.any():
        warnings.warn(
            f"gauges {np.nonzero(excluded)[0].tolist()} degenerate; "
            "weights renormalized",
            DegenerateGaugeWarning,
        )
    w = w / w.sum()

    cost = 0.0
    seed = np.zeros_like(sim) if return_seed else None
    for g in np.nonzero(active)[0]:
        o = obs[sl, g]
        s = sim[sl, g]
        m = ~np.isnan(o)
        err = np.where(m, o - s, 0.0)
        cost += w[g] * float(np.sum(err ** 2)) / dens[g]
        if return_seed:
            seed[sl, g] = -2.0 * w[g] * err / dens[g]
    if return_seed:
        return cost, seed
    return cost


# --------------------------------------------------------------------------
# flood-event signatures (simplified segmentation)
# --------------------------------------------------------------------------

@dataclass
class FloodEvent:
    start: int
    end: int      # exclusive


@dataclass
class EventSignatures:
    start: int
    end: int
    epf: float
    eff: float
    erc: float          # NaN when skipped
    skipped: bool
    reason: str


def segment_events(qobs, window=None, high_quantile: float = 0.9,
                   low_quantile: float = 0.5, end_run: int = 24,
                   min_length: int = 12, merge_gap: int = 12) -> list:
    """Simplified flood-event segmentation on the observed series.

    An event opens when the series exceeds the high quantile of the window
    and closes once it stays below the low quantile for end_run consecutive
    steps.  Events closer than merge_gap are merged; events shorter than
    min_length are dropped.  Missing values count as below threshold.
    """
    qobs = np.asarray(qobs, dtype=np.float64)
    sl = _window_slice(qobs.shape[0], window)
    series = qobs[sl]
    valid = series[~np.isnan(series)]
    if valid.size < 2:
        return []
    q_hi = float(np.quantile(valid, high_quantile))
    q_lo = float(np.quantile(valid, low_quantile))

    events = []
    in_event = False
    start = 0
    below = 0
    for t, v in enumerate(series):
        if not in_event:
            if not np.isnan(v) and v > q_hi:
                in_event = True
                start = t
                below = 0
        else:
            if np.isnan(v) or v < q_lo:
                below += 1
                if below >= end_run:
                    events.append([start, t - end_run + 1])
                    in_event = False
            else:
                below = 0
    if in_event:
        events.append([start, len(series)])

    merged = []
    for ev in events:
        if merged and ev[0] - merged[-1][1] < merge_gap:
            merged[-1][1] = ev[1]
        else:
            merged.append(ev)
    out = [
        FloodEvent(start=sl.start + a, end=sl.start + b)
        for a, b in merged
        if b - a >= min_length
    ]
    return out


def flood_signatures(qsim, qobs, rain_volume, events, dt: float) -> list:
    """Relative errors of peak flow, mean flow, and runoff coefficient.

    rain_volume: per-step rainfall volume (m3) over the gauge's catchment.
    The runoff coefficient compares event discharge volume to total event
    rainfall volume; events without rainfall are skipped and flagged.
    """
    qsim = np.asarray(qsim, dtype=np.float64)
    qobs = np.asarray(qobs, dtype=np.float64)
    rain_volume = np.asarray(rain_volume, dtype=np.float64)
    out = []
    for ev in events:
        o = qobs[ev.start:ev.end]
        s = qsim[ev.start:ev.end]
        m = ~np.isnan(o)
        if not m.any():
            raise EmptyEventError(
                f"event [{ev.start}, {ev.end}) has no valid observations"
            )
        o = o[m]
        s = s[m]
        peak_obs = float(o.max())
        mean_obs = float(o.mean())
        if peak_obs <= 0.0 or mean_obs <= 0.0:
            raise EmptyEventError(
                f"event [{ev.start}, {ev.end}) has non-positive observed flow"
            )
        epf = abs(float(s.max()) - peak_obs) / peak_obs
        eff = abs(float(s.mean()) - mean_obs) / mean_obs
        rain = float(rain_volume[ev.start:ev.end].sum())
        if rain <= 0.0:
            out.append(EventSignatures(
                start=ev.start, end=ev.end, epf=epf, eff=eff,
                erc=float("nan"), skipped=True, reason="zero rainfall",
            ))
            continue
        vol_obs = float(np.sum(o) * dt)
        vol_sim = float(np.sum(s) * dt)
        rc_obs = vol_obs / rain
        rc_sim = vol_sim / rain
        erc = abs(rc_sim - rc_obs) / rc_obs
        out.append(EventSignatures(
            start=ev.start, end=ev.end, epf=epf, eff=eff, erc=erc,
            skipped=False, reason="",
        ))
    return out
