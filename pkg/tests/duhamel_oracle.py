"""Second-order iteration of the moment equations, independent of the diagram machinery.

The two-point function is expanded twice; the resulting Gaussian four-point
moments are evaluated by Wick's rule and the nested time integrals by
Gauss-Legendre quadrature.
"""

import itertools

import numpy as np


def _flat(c, L):
    c = np.mod(c, L)
    return (c[..., 0] * L + c[..., 1]) * L + c[..., 2]


def _wick4(ks, ss, W, L):
    """Gaussian moment <a(k1,s1)..a(k4,s4)> with <a(k,s) a(k',-s)> = L^3 delta W(k)."""
    total = 0.0
    for (a, b), (c, d) in (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))):
        f1 = (ks[a] == ks[b]) * (ss[a] == -ss[b]) * L**3 * W[ks[a]]
        f2 = (ks[c] == ks[d]) * (ss[c] == -ss[d]) * L**3 * W[ks[c]]
        total = total + f1 * f2
    return total


def first_correction(q, eps, t, W, omega, lam=1.0, nodes=10):
    """``W_1^eps(q, t)`` at flat grid index ``q``."""
    W = np.asarray(W, dtype=float).ravel()
    omega = np.asarray(omega, dtype=float).ravel()
    M = len(W)
    L = round(M ** (1 / 3))
    coords = np.indices((L, L, L)).reshape(3, -1).T
    T = t / eps
    x, wts = np.polynomial.legendre.leggauss(nodes)
    # s in [0, T], u in [0, s]
    s = 0.5 * T * (x + 1)
    ws = 0.5 * T * wts
    u = 0.5 * s[:, None] * (x[None, :] + 1)
    wu = 0.5 * s[:, None] * wts[None, :]

    def phi(a, b, c):
        return lam / np.sqrt(8 * omega[a] * omega[b] * omega[c])

    qc = coords[q]
    legs2 = [(qc, -1), (qc, 1)]
    om2 = -omega[q] + omega[q]
    total = 0.0 + 0.0j
    kp = coords[:, None, :]   # first-iteration summation momentum k'
    mp = coords[None, :, :]   # second-iteration summation momentum m'
    for l1 in range(2):
        kl, sl = legs2[l1]
        other = legs2[1 - l1]
        for s1, s2 in itertools.product((1, -1), repeat=2):
            k1 = kp
            k2 = s2 * (sl * kl - s1 * k1)
            legs3 = [(np.broadcast_to(other[0], k1.shape), other[1]), (k1, s1), (k2, s2)]
            i_kl = _flat(np.asarray(kl), L)
            i1, i2 = _flat(k1, L), _flat(k2, L)
            v1 = sl * phi(i_kl, i1, i2)
            om3 = sum(sg * omega[_flat(kk, L)] for kk, sg in legs3)
            for l2 in range(3):
                km, sm = legs3[l2]
                rest = [legs3[j] for j in range(3) if j != l2]
                for r1, r2 in itertools.product((1, -1), repeat=2):
                    m1 = np.broadcast_to(mp, (M, M, 3))
                    m2 = r2 * (sm * km - r1 * m1)
                    legs4 = [(np.broadcast_to(kk, (M, M, 3)), sg) for kk, sg in rest] + [(m1, r1), (m2, r2)]
                    idx = [_flat(kk, L) for kk, _ in legs4]
                    sg4 = [sg for _, sg in legs4]
                    v2 = sm * phi(_flat(km, L), idx[2], idx[3])
                    om4 = sum(sg * omega[i] for i, sg in zip(idx, sg4))
                    g4 = _wick4(idx, sg4, W, L)
                    amp = np.broadcast_to(v1, (M, M)) * v2 * g4 / L**6
                    # time factor: int ds e^{i(T-s)om2} int du e^{i(s-u)om3} e^{i u om4}
                    o3 = np.broadcast_to(om3, (M, M))
                    tf = np.zeros((M, M), dtype=complex)
                    for a in range(nodes):
                        inner = np.zeros((M, M), dtype=complex)
                        for b in range(nodes):
                            inner += wu[a, b] * np.exp(1j * (s[a] - u[a, b]) * o3 + 1j * u[a, b] * om4)
                        tf += ws[a] * np.exp(1j * (T - s[a]) * om2) * inner
                    total += np.sum(amp * tf)
    # two powers of i sqrt(eps), and <a(q,-)a(q,+)> = L^3 (W + W_1 + ...)
    return -eps * total / L**3
