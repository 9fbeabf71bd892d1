"""Dormand-Prince 5(4) stepping compiled with numba.

``make_solver(rhs, event)`` closes over two jitted callables

    rhs(t, y, p, out)   writes dy/dt into ``out``
    event(t, y, p)      0 to continue, otherwise a status code that stops the run

and returns a jitted driver.  Samples are thinned on the fly (every
``stride``-th accepted step, with the stride doubled whenever the buffer
fills), so memory stays bounded on very long runs.
"""

import numpy as np
from numba import njit

OK = 0
AMPLITUDE_UNDERFLOW = 1
STEP_UNDERFLOW = 2
MAX_STEPS = 3
NON_FINITE = 4
STOPPED = 5

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

H_MIN = 1e-12


def make_solver(rhs, event):
    @njit(cache=False, nogil=True)
    def solve(t0, y0, t_end, p, rtol, atol, h_init, h_max, h_fixed,
              stride, max_samples, max_steps):
        n = y0.size
        ts = np.empty(max_samples)
        ys = np.empty((max_samples, n))
        y = y0.copy()
        t = t0
        k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
        k5 = np.empty(n); k6 = np.empty(n); k7 = np.empty(n)
        tmp = np.empty(n); y_new = np.empty(n)
        rhs(t, y, p, k1)

        span = t_end - t0
        if h_fixed > 0.0:
            h = h_fixed
        elif h_init > 0.0:
            h = h_init
        else:
            # Hairer's starting-step heuristic
            d0 = 0.0
            d1 = 0.0
            for i in range(n):
                sc = atol + rtol * abs(y[i])
                d0 += (y[i] / sc) ** 2
                d1 += (k1[i] / sc) ** 2
            d0 = np.sqrt(d0 / n)
            d1 = np.sqrt(d1 / n)
            h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
            h = min(h, 0.01 * span)
        h = min(h, h_max)

        n_out = 0
        ts[0] = t
        ys[0, :] = y
        n_out = 1
        skip = 0
        steps = 0
        rejected = 0
        max_err = 0.0
        status = 0
        err_old = 1e-4

        while t < t_end:
            if steps + rejected >= max_steps:
                status = 3
                break
            last = False
            if t + h >= t_end:
                h = t_end - t
                last = True
            for i in range(n):
                tmp[i] = y[i] + h * A21 * k1[i]
            rhs(t + C2 * h, tmp, p, k2)
            for i in range(n):
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
            rhs(t + C3 * h, tmp, p, k3)
            for i in range(n):
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            rhs(t + C4 * h, tmp, p, k4)
            for i in range(n):
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            rhs(t + C5 * h, tmp, p, k5)
            for i in range(n):
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                     + A64 * k4[i] + A65 * k5[i])
            rhs(t + h, tmp, p, k6)
            for i in range(n):
                y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                       + B5 * k5[i] + B6 * k6[i])
            rhs(t + h, y_new, p, k7)

            err = 0.0
            finite = True
            for i in range(n):
                e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                         + E6 * k6[i] + E7 * k7[i])
                sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
                err += (e / sc) ** 2
                if not np.isfinite(y_new[i]):
                    finite = False
            err = np.sqrt(err / n)
            if not finite or not np.isfinite(err):
                if h_fixed > 0.0:
                    status = 4
                    break
                rejected += 1
                h *= 0.25
                if h < H_MIN:
                    status = 2
                    break
                continue

            if h_fixed > 0.0 or err <= 1.0:
                t = t0 + span if last else t + h
                for i in range(n):
                    y[i] = y_new[i]
                    k1[i] = k7[i]
                steps += 1
                if err > max_err:
                    max_err = err
                code = event(t, y, p)
                skip += 1
                if skip >= stride or last or code != 0:
                    skip = 0
                    if n_out == max_samples:
                        # halve the buffer, double the stride
                        half = (max_samples + 1) // 2
                        for j in range(half):
                            ts[j] = ts[2 * j]
                            ys[j, :] = ys[2 * j, :]
                        n_out = half
                        stride *= 2
                    ts[n_out] = t
                    ys[n_out, :] = y
                    n_out += 1
                if code != 0:
                    status = code
                    break
                if h_fixed > 0.0:
                    continue
                # PI step control (Gustafsson), exponents as in Hairer's DOPRI5
                e = max(err, 1e-10)
                fac = 0.9 * e ** -0.17 * err_old ** 0.04
                h = h * min(10.0, max(0.2, fac))
                err_old = max(err, 1e-4)
                h = min(h, h_max)
            else:
                rejected += 1
                h = h * max(0.2, 0.9 * err ** -0.17)
                if h < H_MIN:
                    status = 2
                    break
        return status, ts[:n_out].copy(), ys[:n_out].copy(), steps, rejected, max_err

    return solve


@njit(nogil=True)
def horner_z(coeffs, offset, z):
    """sum coeffs[k] z**(offset+k)."""
    acc = 0.0
    for k in range(coeffs.size - 1, -1, -1):
        acc = acc * z + coeffs[k]
    return acc * z ** offset


@njit(nogil=True)
def horner_z_dtau(coeffs, offset, q, z):
    """d/dtau of sum coeffs[k] z**(offset+k), z = tau**(-1/q)."""
    acc = 0.0
    for k in range(coeffs.size - 1, -1, -1):
        acc = acc * z + coeffs[k] * (-(offset + k) / q)
    return acc * z ** (offset + q)
