"""Compute reference values independently of the package and freeze them.

Run once with ``python tests/oracles/build_oracles.py``; the tests only read
``frozen.json``.  Nothing here imports ``chemocons``.
"""
import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 40
OUT = Path(__file__).with_name("frozen.json")


def dense_dirichlet_1d(n, u_const, v_bar):
    """Cell-centred 3-point system for -v'' + u v = 0, v = v_bar half a cell out."""
    h = 1.0 / n
    a = np.zeros((n, n))
    rhs = np.zeros(n)
    for i in range(n):
        a[i, i] = 2.0 / h**2 + u_const
        if i > 0:
            a[i, i - 1] = -1.0 / h**2
        if i < n - 1:
            a[i, i + 1] = -1.0 / h**2
    # boundary faces: (v_i - v_bar) / (h/2) flux, i.e. one extra 1/h^2 and 2 v_bar / h^2
    for i in (0, n - 1):
        a[i, i] += 1.0 / h**2
        rhs[i] += 2.0 * v_bar / h**2
    v = np.linalg.solve(a, rhs)
    x = (np.arange(n) + 0.5) * h
    exact = np.array([float(mp.cosh(2 * (mp.mpf(xi) - mp.mpf(1) / 2)) / mp.cosh(1)) for xi in x])
    return float(np.max(np.abs(v - exact)))


def rk4_logistic(lam, k, y0, t_end, dt):
    f = lambda y: lam * y - k * y * y
    y = mp.mpf(y0)
    n = int(round(t_end / dt))
    dt = mp.mpf(t_end) / n
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + dt / 2 * k1)
        k3 = f(y + dt / 2 * k2)
        k4 = f(y + dt * k3)
        y += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return float(y)


def c14(a, b, tau, theta):
    ystar = (mp.mpf(b) / a) ** (1 / mp.mpf(theta))
    g = lambda z: mp.quad(lambda y: 1 / (a * y**theta - b), [z, 2 * z, mp.inf]) - tau
    lo, hi = ystar * (1 + mp.mpf(10) ** -30), ystar + 1
    while g(hi) > 0:
        hi *= 2
    z = mp.findroot(g, (lo, hi), solver="anderson")
    return float(max(ystar, z))


def decay_F(inf_u0, lam, mu, vb, c22, eps1):
    inf_u0, lam, mu, vb, c22, eps1 = map(mp.mpf, (inf_u0, lam, mu, vb, c22, eps1))
    return float(min(inf_u0, lam / (mu + vb)) + mp.e**(-vb) * lam / mu - lam / mu
                 - vb**2 * c22 / mu - vb**2 * lam**2 * mp.e**(2 * vb) / (4 * eps1 * mu**3))


def main():
    frozen = {
        "inv_cosh_1": float(1 / mp.cosh(1)),
        "coth_1": float(mp.coth(1)),
        "pi_over_sqrt2": float(mp.pi / mp.sqrt(2)),
        "v_seminorm_sin": float((1 + mp.pi) / mp.sqrt(2)),
        "elliptic_err_n32": dense_dirichlet_1d(32, 4.0, 1.0),
        "elliptic_err_n64": dense_dirichlet_1d(64, 4.0, 1.0),
        "logistic_rk4_l1_k2_y01_t1": rk4_logistic(1.0, 2.0, 0.1, 1.0, 1e-4),
        "c14_a1_b1_t1_th3": c14(1, 1, 1, 3),
        "c14_a2_b3_t05_th15": c14(2, 3, 0.5, 1.5),
        "F_u03_l1_m1_vb01_c22_02_e1_015": decay_F(0.3, 1, 1, 0.1, 0.2, 0.15),
        "F_u05_l2_m05_vb005_c22_0_e1_02": decay_F(0.5, 2, 0.5, 0.05, 0.0, 0.2),
    }
    OUT.write_text(json.dumps(frozen, indent=2, sort_keys=True) + "\n")
    print(json.dumps(frozen, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
