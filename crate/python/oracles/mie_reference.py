"""Arbitrary-precision Mie efficiencies used to freeze benchmark values.

Evaluates the Mie series directly from spherical Bessel functions with
mpmath (no recurrences), so it shares no numerical path with the Rust
implementation. Prints one line per benchmark point:

    x  m_re  m_im  q_ext  q_sca
"""

import sys

import mpmath as mp

mp.mp.dps = 40


def riccati_psi(n, z):
    return z * mp.sqrt(mp.pi / (2 * z)) * mp.besselj(n + mp.mpf(1) / 2, z)


def riccati_chi(n, z):
    return -z * mp.sqrt(mp.pi / (2 * z)) * mp.bessely(n + mp.mpf(1) / 2, z)


def efficiencies(x, m):
    x = mp.mpf(x)
    m = mp.mpc(m)
    mx = m * x
    nstop = int(mp.ceil(x + 4.05 * mp.cbrt(x) + 2))
    # a few extra terms so the reference is converged beyond the truncation
    nmax = nstop + 10
    psi = [riccati_psi(n, x) for n in range(nmax + 1)]
    chi = [riccati_chi(n, x) for n in range(nmax + 1)]
    psi_m = [riccati_psi(n, mx) for n in range(nmax + 1)]
    q_ext = mp.mpf(0)
    q_sca = mp.mpf(0)
    for n in range(1, nmax + 1):
        xi = psi[n] - 1j * chi[n]
        xi_prev = psi[n - 1] - 1j * chi[n - 1]
        dpsi = psi[n - 1] - n / x * psi[n]
        dxi = xi_prev - n / x * xi
        dpsi_m = psi_m[n - 1] - n / mx * psi_m[n]
        a = (m * psi_m[n] * dpsi - psi[n] * dpsi_m) / (m * psi_m[n] * dxi - xi * dpsi_m)
        b = (psi_m[n] * dpsi - m * psi[n] * dpsi_m) / (psi_m[n] * dxi - m * xi * dpsi_m)
        q_ext += (2 * n + 1) * mp.re(a + b)
        q_sca += (2 * n + 1) * (abs(a) ** 2 + abs(b) ** 2)
    return 2 * q_ext / x**2, 2 * q_sca / x**2


POINTS = [
    (1e-3, 1.54, 0.0),
    (1e-3, 1.5, 0.1),
    (1e-2, 1.33, 0.0),
    (1e-2, 2.0, 1.0),
    (0.1, 1.54, 0.0),
    (0.1, 1.33, 0.01),
    (0.3, 0.75, 0.0),
    (0.5, 1.5, 0.1),
    (1.0, 1.54, 0.0),
    (1.0, 2.0, 1.0),
    (2.0, 1.33, 0.0),
    (3.0, 1.55, 0.0),
    (5.0, 1.5, 0.01),
    (10.0, 1.54, 0.0),
    (10.0, 1.33, 1e-8),
    (10.0, 1.5, 0.1),
    (20.0, 0.75, 0.0),
    (30.0, 1.54, 0.0),
    (50.0, 1.33, 0.01),
    (100.0, 1.54, 0.0),
    (100.0, 1.5, 0.1),
    (300.0, 1.33, 0.0),
    (500.0, 1.54, 0.0),
    (1000.0, 1.54, 0.0),
    (1000.0, 1.5, 0.1),
]

if __name__ == "__main__":
    pts = POINTS if len(sys.argv) == 1 else [tuple(map(float, sys.argv[1:4]))]
    for x, mr, mi in pts:
        qe, qs = efficiencies(x, mp.mpc(mr, mi))
        print(f"{x!r} {mr!r} {mi!r} {mp.nstr(qe, 17)} {mp.nstr(qs, 17)}", flush=True)
