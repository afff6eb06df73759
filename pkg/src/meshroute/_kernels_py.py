"""Numpy implementations of the routing kernels.

Used when the compiled ``_kernels`` extension is unavailable.  Every function
here has the same signature and the same tie-break semantics as its Cython
twin: among equal scores the lowest index wins, which is the lowest node id
because node indices are assigned in ascending id order.
"""

import numpy as np

INF = float("inf")


def dv_next_hops(w, adv, usable, hop, score):
    """Per-destination argmin of ``w[k] + adv[k, d]`` over usable neighbors.

    Writes the winning neighbor index (or -1) into ``hop`` and its score into
    ``score``.
    """
    n = adv.shape[0]
    totals = w[:, None] + adv
    totals[usable == 0, :] = INF
    best = np.argmin(totals, axis=0)
    vals = totals[best, np.arange(n)]
    hop[:] = np.where(np.isinf(vals), -1, best)
    score[:] = vals


def drain_time(w, hop, q):
    """Local draining time ``sum_j q[j] * w[hop[j]]`` over routable ``j``."""
    mask = (hop >= 0) & (q > 0)
    if not mask.any():
        return 0.0
    return float(np.dot(q[mask], w[hop[mask]]))


def backpressure_hop(w, adv, usable, q_own, d, etx, unit):
    """Best neighbor for destination ``d`` under the (E-)BP score.

    The score is ``(adv[k, d] - q_own) * unit / w[k]``, plus ``etx[k, d] / unit``
    when ``etx`` is given.  Returns ``(k, score)`` with ``k == -1`` when no
    neighbor has a finite score.
    """
    col = adv[:, d]
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (col - q_own) * unit / w
        if etx is not None:
            s = s + etx[:, d] / unit
    s = np.where((usable != 0) & np.isfinite(s), s, INF)
    k = int(np.argmin(s))
    val = float(s[k])
    if val == INF:
        return -1, INF
    return k, val


def backpressure_select(w, adv, usable, q, self_idx, etx, unit):
    """Flow selection: argmin over queued destinations of their best hop score.

    Returns ``(d, k, score)``; ``d == -1`` if nothing is queued or every score
    is infinite.
    """
    best_d, best_k, best_s = -1, -1, INF
    for d in np.flatnonzero(q > 0):
        d = int(d)
        if d == self_idx:
            continue
        k, s = backpressure_hop(w, adv, usable, float(q[d]), d, etx, unit)
        if s < best_s:
            best_d, best_k, best_s = d, k, s
    return best_d, best_k, best_s


def dv_round(W, cur, out):
    """One synchronous distance-vector relaxation over all nodes.

    ``W[n, k]`` is the link cost (inf when absent), ``cur[k, d]`` the values
    advertised last round.  ``out[n, d] = min_k W[n, k] + cur[k, d]`` with
    ``out[d, d] = 0``.  Returns True if any entry changed.
    """
    n = W.shape[0]
    for i in range(n):
        totals = W[i, :, None] + cur
        out[i] = totals.min(axis=0)
    np.fill_diagonal(out, 0.0)
    return not np.array_equal(out, cur)
