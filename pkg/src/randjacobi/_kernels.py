"""Compiled inner loops.  All loops are sequential over one trajectory."""

import math

import numpy as np
from numba import njit

HALF_PI = 0.5 * math.pi


@njit(cache=True)
def rotate_word(idx, A, B, Q, PHI, K, theta, count):
    """Iterate lifted phase maps theta -> theta + d_s(theta) + PHI[s] + K[s] pi.

    d_s is the displacement of the positive-definite polar factor of block s,
    parametrized by A = (p + r) / 2, B = (p - r) / 2, Q = q.  The phase is kept
    in [-pi/2, pi/2) with whole half-turns carried in the integer ``count``.
    """
    pi = math.pi
    for i in range(idx.shape[0]):
        s = idx[i]
        c2 = math.cos(2.0 * theta)
        s2 = math.sin(2.0 * theta)
        cross = Q[s] * c2 - B[s] * s2
        dot = A[s] + B[s] * c2 + Q[s] * s2
        theta = theta + math.atan2(cross, dot) + PHI[s]
        count += K[s]
        n = math.floor((theta + HALF_PI) / pi)
        theta -= n * pi
        count += np.int64(n)
    return theta, count


@njit(cache=True)
def free_prufer(t, v, energy, theta0, steps, out_theta, out_logr):
    """Free Pruefer phases with the increment window (-pi/2, 3pi/2).

    Writes states 0..steps into the output arrays (pass length-1 arrays to
    keep only the final state).  Returns (final lift, final log amplitude).
    """
    two_pi = 2.0 * math.pi
    x0 = math.cos(theta0)
    x1 = math.sin(theta0)
    base = math.atan2(x1, x0)
    lift = theta0
    logr = 0.0
    keep = out_theta.shape[0] > 1
    out_theta[0] = lift
    out_logr[0] = 0.0
    for n in range(steps):
        tn = t[n]
        y0 = ((v[n] - energy) / tn) * x0 - tn * x1
        y1 = x0 / tn
        norm = math.hypot(y0, y1)
        ang = math.atan2(y1, y0)
        inc = (ang - base + HALF_PI) % two_pi - HALF_PI
        lift += inc
        base = ang
        logr += math.log(norm)
        x0 = y0 / norm
        x1 = y1 / norm
        if keep:
            out_theta[n + 1] = lift
            out_logr[n + 1] = logr
    if not keep:
        out_theta[0] = lift
        out_logr[0] = logr
    return lift, logr


@njit(cache=True)
def sturm_pair_counts(diag, off2, energies, pivmin):
    """Negative-pivot counts of LDL^T of (H - E) for each energy.

    ``off2[k]`` is the squared coupling between sites k-1 and k (off2[0] unused).
    Zero pivots are replaced by +pivmin.  Returns (counts, perturbations).
    """
    m = energies.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    perturbed = np.zeros(m, dtype=np.int64)
    for j in range(m):
        E = energies[j]
        d = diag[0] - E
        if d == 0.0:
            d = pivmin
            perturbed[j] += 1
        c = 1 if d < 0.0 else 0
        for k in range(1, diag.shape[0]):
            d = diag[k] - E - off2[k] / d
            if d == 0.0:
                d = pivmin
                perturbed[j] += 1
            if d < 0.0:
                c += 1
        counts[j] = c
    return counts, perturbed
