"""Independent reference computations shared by the tests."""

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def cluster_loglik_mp(theta, r, n_m, n, xbar, delta):
    # independent high-precision evaluation of the cluster log-likelihood in (mu, vech Sigma)
    mu = mp.matrix([theta[i] for i in range(r)])
    u = theta[r:]
    sig = mp.matrix(r, r)
    k = 0
    for j in range(r):
        for i in range(j, r):
            sig[i, j] = sig[j, i] = u[k]
            k += 1
    d = mp.matrix([xbar[i] for i in range(r)]) - mu
    scat = mp.matrix(delta.tolist()) + n_m * (d * d.T)
    inv = sig ** -1
    tr = sum(inv[i, j] * scat[j, i] for i in range(r) for j in range(r))
    return (n_m * mp.log(mp.mpf(n_m) / n) - mp.mpf(r * n_m) / 2 * mp.log(2 * mp.pi)
            - mp.mpf(n_m) / 2 * mp.log(mp.det(sig)) - tr / 2)


def fd_hessian(f, theta, rel=1e-5):
    p = len(theta)
    h = [rel * max(1.0, abs(float(t))) for t in theta]
    out = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            def at(si, sj):
                t = [mp.mpf(v) for v in theta]
                t[i] += si * h[i]
                t[j] += sj * h[j]
                return f(t)
            val = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h[i] * h[j])
            out[i, j] = out[j, i] = float(val)
    return out
