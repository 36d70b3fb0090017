"""Compiled inner loop for bandit iterates; mirrors the Python step functions."""

import numpy as np
from numba import njit

STANDARD, HIGHER, MODIFIED = 0, 1, 2


@njit(cache=True)
def _project_eps(x, k, eps, out):
    # Sort-and-threshold projection onto {s >= eps, sum(s) = 1}.
    mass = 1.0 - eps * k
    if mass <= 0.0:
        for j in range(k):
            out[j] = 1.0 / k
        return
    u = np.empty(k)
    for j in range(k):
        u[j] = x[j] - eps
    for j in range(1, k):
        key = u[j]
        m = j - 1
        while m >= 0 and u[m] < key:
            u[m + 1] = u[m]
            m -= 1
        u[m + 1] = key
    css = 0.0
    theta = 0.0
    for j in range(k):
        css += u[j]
        t = (css - mass) / (j + 1)
        if u[j] - t > 0:
            theta = t
    for j in range(k):
        w = x[j] - eps - theta
        out[j] = (w if w > 0.0 else 0.0) + eps


@njit(cache=True)
def run_chunk(
    variant, ks, ds, eps, delta, t_start, x, v, xi,
    N, E, F, G, H, util, strides, modified, beta, L,
    ua, un, snap_steps, snap_pos, snaps, step0,
    window, counts, payoff_sum, xi_sup, min_x,
):
    n = ks.shape[0]
    kmax = x.shape[1]
    mmax = kmax - 1
    steps = ua.shape[0]
    sigma = np.zeros((n, kmax))
    acts = np.zeros(n, dtype=np.int64)
    y = np.zeros(mmax)
    u = np.zeros(mmax)
    phi = np.zeros(kmax)
    dxi = np.zeros(xi.shape[1])
    koff = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        koff[i + 1] = koff[i] + ks[i]
    doff = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        doff[i + 1] = doff[i] + ds[i]
    for s in range(steps):
        t = t_start + s
        # Strategies and actions.
        flat = 0
        for i in range(n):
            k = ks[i]
            _project_eps(x[i], k, eps, sigma[i])
            tot = 0.0
            for j in range(k):
                tot += sigma[i, j]
            target = ua[s, i] * tot
            c = 0.0
            a = k - 1
            for j in range(k):
                c += sigma[i, j]
                if target < c:
                    a = j
                    break
            acts[i] = a
            flat += a * strides[i]
        gstep = step0 + s
        w = gstep // window
        for i in range(n):
            counts[w, koff[i] + acts[i]] += 1
        for i in range(n):
            k = ks[i]
            m = k - 1
            d = ds[i]
            r = util[i, flat]
            payoff_sum[w, i] += r
            kap = delta[i] / (t + 1.0)
            a = acts[i]
            if variant == STANDARD:
                for j in range(k):
                    e = 1.0 if j == a else 0.0
                    x[i, j] = x[i, j] + kap * r * (e - x[i, j])
            else:
                pt = r / sigma[i, a]
                for j in range(m):
                    y[j] = N[i, a, j] * pt - v[i, j]
                for j in range(m):
                    acc = 0.0
                    for l in range(d):
                        acc += G[i, j, l] * xi[i, l]
                    for l in range(m):
                        acc += H[i, j, l] * y[l]
                    u[j] = acc
                xphi = 0.0
                for j in range(k):
                    acc = 0.0
                    for l in range(m):
                        acc += N[i, j, l] * u[l]
                    phi[j] = acc
                    xphi += x[i, j] * acc
                for j in range(k):
                    e = 1.0 if j == a else 0.0
                    x[i, j] = x[i, j] + kap * (r * (e - x[i, j]) + (phi[j] - xphi) * x[i, j])
                nrm2 = 0.0
                for l in range(d):
                    nrm2 += xi[i, l] * xi[i, l]
                damp = nrm2 if nrm2 < beta[i] else beta[i]
                for l in range(d):
                    acc = 0.0
                    for q in range(d):
                        acc += E[i, l, q] * xi[i, q]
                    for q in range(m):
                        acc += F[i, l, q] * y[q]
                    if variant == MODIFIED and modified[i]:
                        acc += -damp * xi[i, l] + L[i] * (2.0 * un[s, doff[i] + l] - 1.0)
                    dxi[l] = acc
                for l in range(d):
                    xi[i, l] = xi[i, l] + kap * dxi[l]
                for j in range(m):
                    v[i, j] = v[i, j] + kap * y[j]
            tot = 0.0
            for j in range(k):
                tot += x[i, j]
            for j in range(k):
                x[i, j] = x[i, j] / tot
                if x[i, j] < min_x[i]:
                    min_x[i] = x[i, j]
            nrm2 = 0.0
            for l in range(d):
                nrm2 += xi[i, l] * xi[i, l]
            if nrm2 > xi_sup[i]:
                xi_sup[i] = nrm2
        if snap_pos[0] < snap_steps.shape[0] and gstep + 1 == snap_steps[snap_pos[0]]:
            p = snap_pos[0]
            col = 0
            for i in range(n):
                for j in range(ks[i]):
                    snaps[p, col] = x[i, j]
                    col += 1
            for i in range(n):
                for j in range(ks[i] - 1):
                    snaps[p, col] = v[i, j]
                    col += 1
            for i in range(n):
                for l in range(ds[i]):
                    snaps[p, col] = xi[i, l]
                    col += 1
            snap_pos[0] = p + 1
