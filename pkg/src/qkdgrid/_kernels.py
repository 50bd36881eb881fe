"""Hot loops: key allocation and the per-step buffer recursion.

Two interchangeable backends are provided. The numba backend compiles the
scalar loops below with ``@njit``; the numpy backend vectorises across nodes
and keeps a Python loop over time. Set ``QKDGRID_BACKEND=numpy`` to force the
pure-numpy path (numba is also skipped automatically when it cannot be
imported). Both backends accumulate in the same order and produce identical
results.
"""

from __future__ import annotations

import os

import numpy as np

# accumulator fields, per node and per window (0: all steps, 1: post warm-up)
STEPS, OUTAGE, FALLBACK, CONSUMED, SUPPLIED, SHORTFALL, OVERFLOW = range(7)
N_ACC = 7

MAXMIN, WEIGHTED = 0, 1

_requested = os.environ.get("QKDGRID_BACKEND", "numba").strip().lower()
try:
    if _requested == "numpy":
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover - exercised via the env flag
    njit = None

BACKEND = "numba" if njit is not None else "numpy"


def _maxmin_fill(budget, req, out):
    """Progressive filling: equal shares, capped at each request."""
    m = req.shape[0]
    order = np.argsort(req, kind="mergesort")
    remaining = budget
    for k in range(m):
        i = order[k]
        share = remaining / (m - k)
        if req[i] < share:
            out[i] = req[i]
            remaining -= req[i]
            continue
        # the water level is set once: every larger request gets the same share
        for kk in range(k, m):
            out[order[kk]] = share
        return 0.0
    return remaining


def _weighted_fill(budget, req, w, out):
    """Weight-proportional shares, capped at each request, excess redistributed."""
    m = req.shape[0]
    active = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        out[i] = 0.0
        active[i] = w[i] > 0.0 and req[i] > 0.0
    remaining = budget
    while remaining > 0.0:
        wsum = 0.0
        for i in range(m):
            if active[i]:
                wsum += w[i]
        if wsum <= 0.0:
            break
        capped = False
        for i in range(m):
            if active[i] and remaining * w[i] / wsum >= req[i] - out[i]:
                capped = True
        if not capped:
            for i in range(m):
                if active[i]:
                    out[i] += remaining * w[i] / wsum
            remaining = 0.0
            break
        taken = 0.0
        for i in range(m):
            if active[i] and remaining * w[i] / wsum >= req[i] - out[i]:
                taken += req[i] - out[i]
                out[i] = req[i]
                active[i] = False
        remaining -= taken
    return remaining


def _allocate_shared(mid, b_max, a, link_bits_t, fed_ptr, fed_idx, fed_w, policy, req, w, alloc):
    n_links = fed_ptr.shape[0] - 1
    for l in range(n_links):
        lo, hi = fed_ptr[l], fed_ptr[l + 1]
        m = hi - lo
        for p in range(m):
            i = fed_idx[lo + p]
            h = b_max[i] - mid[i] - a[i]
            req[p] = h if h > 0.0 else 0.0
            w[p] = fed_w[lo + p]
        if policy == MAXMIN:
            _maxmin_fill(link_bits_t[l], req[:m], alloc[:m])
        else:
            _weighted_fill(link_bits_t[l], req[:m], w[:m], alloc[:m])
        for p in range(m):
            a[fed_idx[lo + p]] += alloc[p]


def _buffer_loop(B, chi, demand, link_bits, fed_ptr, fed_idx, fed_w, shared, policy,
                 phi, b_min, b_clear, b_max, w0, acc, record, rec_B, rec_chi, rec_deff, rec_sup):
    n, T = demand.shape
    n_links = fed_ptr.shape[0] - 1
    a = np.zeros(n)
    mid = np.zeros(n)
    deff = np.zeros(n)
    width = 1
    for l in range(n_links):
        if fed_ptr[l + 1] - fed_ptr[l] > width:
            width = fed_ptr[l + 1] - fed_ptr[l]
    req = np.zeros(width)
    w = np.zeros(width)
    alloc = np.zeros(width)
    for t in range(T):
        for i in range(n):
            f = 1.0 if chi[i] else 0.0
            deff[i] = demand[i, t] * (1.0 - phi[i] * f)
            m = B[i] - deff[i]
            mid[i] = m if m > 0.0 else 0.0
            a[i] = 0.0
        if shared:
            _allocate_shared(mid, b_max, a, link_bits[:, t], fed_ptr, fed_idx, fed_w, policy,
                             req, w, alloc)
        else:
            for l in range(n_links):
                for p in range(fed_ptr[l], fed_ptr[l + 1]):
                    a[fed_idx[p]] += link_bits[l, t]
        for i in range(n):
            short = deff[i] - B[i]
            if short < 0.0:
                short = 0.0
            cons = deff[i] - short
            tot = mid[i] + a[i]
            nb = tot if tot < b_max[i] else b_max[i]
            over = tot - nb
            out = 1.0 if B[i] < b_min[i] else 0.0
            fb = 1.0 if chi[i] else 0.0
            if record:
                rec_B[i, t] = B[i]
                rec_chi[i, t] = chi[i]
                rec_deff[i, t] = deff[i]
                rec_sup[i, t] = a[i]
            for k in range(2):
                if k == 1 and t < w0:
                    continue
                acc[i, k, 0] += 1.0
                acc[i, k, 1] += out
                acc[i, k, 2] += fb
                acc[i, k, 3] += cons
                acc[i, k, 4] += a[i]
                acc[i, k, 5] += short
                acc[i, k, 6] += over
            B[i] = nb
            if chi[i]:
                chi[i] = nb < b_clear[i]
            else:
                chi[i] = nb < b_min[i]


def _buffer_loop_numpy(B, chi, demand, link_bits, fed_ptr, fed_idx, fed_w, shared, policy,
                       phi, b_min, b_clear, b_max, w0, acc, record, rec_B, rec_chi, rec_deff,
                       rec_sup):
    n, T = demand.shape
    n_links = fed_ptr.shape[0] - 1
    if not shared:
        sup = np.zeros((n, T))
        for l in range(n_links):
            for p in range(fed_ptr[l], fed_ptr[l + 1]):
                sup[fed_idx[p]] += link_bits[l]
    width = max([1] + [int(fed_ptr[l + 1] - fed_ptr[l]) for l in range(n_links)])
    req, w, alloc = np.zeros(width), np.zeros(width), np.zeros(width)
    zero = np.zeros(n)
    for t in range(T):
        deff = demand[:, t] * (1.0 - phi * chi.astype(float))
        mid = np.maximum(B - deff, 0.0)
        if shared:
            a = np.zeros(n)
            _allocate_shared(mid, b_max, a, link_bits[:, t], fed_ptr, fed_idx, fed_w, policy,
                             req, w, alloc)
        else:
            a = sup[:, t] + zero
        short = np.maximum(deff - B, 0.0)
        cons = deff - short
        tot = mid + a
        nb = np.minimum(tot, b_max)
        over = tot - nb
        out = (B < b_min).astype(float)
        fb = chi.astype(float)
        if record:
            rec_B[:, t] = B
            rec_chi[:, t] = chi
            rec_deff[:, t] = deff
            rec_sup[:, t] = a
        for k in (0, 1):
            if k == 1 and t < w0:
                continue
            row = acc[:, k]
            row[:, 0] += 1.0
            row[:, 1] += out
            row[:, 2] += fb
            row[:, 3] += cons
            row[:, 4] += a
            row[:, 5] += short
            row[:, 6] += over
        B[:] = nb
        chi[:] = np.where(chi, nb < b_clear, nb < b_min)


if njit is not None:
    # rebinding the module globals lets the compiled loops call compiled helpers
    _maxmin_fill = njit(cache=True)(_maxmin_fill)
    _weighted_fill = njit(cache=True)(_weighted_fill)
    _allocate_shared = njit(cache=True)(_allocate_shared)
    _buffer_loop_jit = njit(cache=True)(_buffer_loop)
    buffer_loop = _buffer_loop_jit
else:
    buffer_loop = _buffer_loop_numpy

maxmin_fill = _maxmin_fill
weighted_fill = _weighted_fill


def run_chunk(B, chi, demand, link_bits, csr, shared, policy, phi, b_min, b_clear, b_max, w0,
              acc, record=None, backend=None):
    """Advance the buffers over one chunk of steps in place.

    ``record`` is either None or a tuple of four ``(n, T)`` arrays receiving the
    level at step start, fallback flag, effective demand and supply.
    """
    fed_ptr, fed_idx, fed_w = csr
    if record is None:
        empty = np.zeros((0, 0))
        rec = (empty, np.zeros((0, 0), dtype=np.bool_), empty, empty)
    else:
        rec = record
    fn = buffer_loop
    if backend == "numpy":
        fn = _buffer_loop_numpy
    elif backend == "python":
        fn = _buffer_loop
    fn(B, chi, np.ascontiguousarray(demand), np.ascontiguousarray(link_bits), fed_ptr, fed_idx,
       fed_w, bool(shared), int(policy), phi, b_min, b_clear, b_max, int(w0), acc,
       record is not None, *rec)
