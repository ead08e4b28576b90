"""Compiled inner loops for the sampler's likelihood evaluations.

Layouts: per-state arrays are (N, n_dives) so a state's column is
contiguous; ``offsets`` holds the M+1 frame boundaries.
"""

import math

import numpy as np
from numba import njit

# forward vectors are rescaled only when their mass leaves this range
_RESCALE = 1e-150
_RESCALE_HI = 1e150


@njit(cache=True, nogil=True)
def gamma_logpdf_into(x, logx, shape, rate, out):
    const = shape * np.log(rate) - math.lgamma(shape)
    sm1 = shape - 1.0
    for t in range(x.shape[0]):
        if sm1 == 0.0:
            out[t] = const - rate * x[t]
        else:
            out[t] = const + sm1 * logx[t] - rate * x[t]


@njit(cache=True, nogil=True)
def wiggliness_logpdf_into(x, logx, is_zero, shape, rate, zero_mass, out):
    const = shape * np.log(rate) - math.lgamma(shape)
    sm1 = shape - 1.0
    log_zero = np.log(zero_mass) if zero_mass > 0.0 else -np.inf
    log_pos = np.log1p(-zero_mass) if zero_mass < 1.0 else -np.inf
    for t in range(x.shape[0]):
        if is_zero[t]:
            out[t] = log_zero
        elif sm1 == 0.0:
            out[t] = log_pos + const - rate * x[t]
        else:
            out[t] = log_pos + const + sm1 * logx[t] - rate * x[t]


@njit(cache=True, nogil=True)
def _forward3(b, offsets, g, init, out):
    g00, g01, g02 = g[0, 0], g[0, 1], g[0, 2]
    g10, g11, g12 = g[1, 0], g[1, 1], g[1, 2]
    g20, g21, g22 = g[2, 0], g[2, 1], g[2, 2]
    b0, b1, b2 = b[0], b[1], b[2]
    for m in range(offsets.shape[0] - 1):
        start = offsets[m]
        a0 = init[0] * b0[start]
        a1 = init[1] * b1[start]
        a2 = init[2] * b2[start]
        logscale = 0.0
        dead = False
        for t in range(start + 1, offsets[m + 1]):
            n0 = (a0 * g00 + a1 * g10 + a2 * g20) * b0[t]
            n1 = (a0 * g01 + a1 * g11 + a2 * g21) * b1[t]
            n2 = (a0 * g02 + a1 * g12 + a2 * g22) * b2[t]
            s = n0 + n1 + n2
            if s < _RESCALE or s > _RESCALE_HI:
                if not s > 0.0:
                    dead = True
                    break
                inv = 1.0 / s
                logscale += np.log(s)
                n0 *= inv
                n1 *= inv
                n2 *= inv
            a0, a1, a2 = n0, n1, n2
        s = a0 + a1 + a2
        out[m] = -np.inf if (dead or not s > 0.0) else logscale + np.log(s)


@njit(cache=True, nogil=True)
def _forward_generic(b, offsets, g, init, out):
    n_states = g.shape[0]
    alpha = np.empty(n_states)
    nxt = np.empty(n_states)
    for m in range(offsets.shape[0] - 1):
        start = offsets[m]
        for j in range(n_states):
            alpha[j] = init[j] * b[j, start]
        logscale = 0.0
        dead = False
        for t in range(start + 1, offsets[m + 1]):
            s = 0.0
            for j in range(n_states):
                acc = 0.0
                for i in range(n_states):
                    acc += alpha[i] * g[i, j]
                nxt[j] = acc * b[j, t]
                s += nxt[j]
            if s < _RESCALE or s > _RESCALE_HI:
                if not s > 0.0:
                    dead = True
                    break
                inv = 1.0 / s
                logscale += np.log(s)
                for j in range(n_states):
                    nxt[j] *= inv
            for j in range(n_states):
                alpha[j] = nxt[j]
        s = 0.0
        for j in range(n_states):
            s += alpha[j]
        out[m] = -np.inf if (dead or not s > 0.0) else logscale + np.log(s)


@njit(cache=True, nogil=True)
def frame_logliks_into(b, offsets, g, init, shift_sums, out):
    """Production log-likelihood of every frame under one t.p.m.

    ``b`` holds densities divided by exp(shift); ``shift_sums`` adds the
    per-frame total of those shifts back.
    """
    if g.shape[0] == 3:
        _forward3(b, offsets, g, init, out)
    else:
        _forward_generic(b, offsets, g, init, out)
    for m in range(out.shape[0]):
        out[m] += shift_sums[m]


@njit(cache=True, nogil=True)
def outer_loglik(frame_ll, g, init):
    """Forward pass over internal states; ``frame_ll`` is (K, M)."""
    n_int, n_frames = frame_ll.shape
    alpha = np.empty(n_int)
    nxt = np.empty(n_int)
    total = 0.0
    for m in range(n_frames):
        shift = -np.inf
        for k in range(n_int):
            if frame_ll[k, m] > shift:
                shift = frame_ll[k, m]
        if shift == -np.inf:
            return -np.inf
        s = 0.0
        for k in range(n_int):
            e = np.exp(frame_ll[k, m] - shift)
            if m == 0:
                nxt[k] = init[k] * e
            else:
                acc = 0.0
                for i in range(n_int):
                    acc += alpha[i] * g[i, k]
                nxt[k] = acc * e
            s += nxt[k]
        if not s > 0.0:
            return -np.inf
        total += np.log(s) + shift
        for k in range(n_int):
            alpha[k] = nxt[k] / s
    return total
