"""Hand-coded closed-form coefficient families for the bivariate benchmark.

These are independent transcriptions of the printed K = 2 coefficients of the
unit-diffusion mean-reverting model dY = kappa(eta - Y)dt + dW, kept free of
any package machinery so they can serve as an oracle for the recursion.
"""

import numpy as np


def c_minus1(y, y0, theta):
    y, y0 = np.asarray(y, float), np.asarray(y0, float)
    return -0.5 * (y[0] - y0[0]) ** 2 - 0.5 * (y[1] - y0[1]) ** 2


def c_0(y, y0, theta):
    e1, e2 = theta["eta1"], theta["eta2"]
    k11, k12, k21, k22 = theta["k11"], theta["k12"], theta.get("k21", 0.0), theta["k22"]
    d1, d2 = y[0] - y0[0], y[1] - y0[1]
    s1 = y[0] + y0[0] - 2 * e1
    s2 = y[1] + y0[1] - 2 * e2
    return -0.5 * d1 * (s1 * k11 + s2 * k12) - 0.5 * d2 * (s1 * k21 + s2 * k22)


def c_1(y, y0, theta):
    e1, e2 = theta["eta1"], theta["eta2"]
    k11, k12, k21, k22 = theta["k11"], theta["k12"], theta.get("k21", 0.0), theta["k22"]
    d1, d2 = y[0] - y0[0], y[1] - y0[1]
    a1 = y0[0] - e1
    a2 = y0[1] - e2
    out = 0.5 * (k11 - (a1 * k11 + a2 * k12) ** 2)
    out += 0.5 * (k22 - (a1 * k21 + a2 * k22) ** 2)
    out += -0.5 * d1 * (a1 * (k11**2 + k21**2) + a2 * (k11 * k12 + k21 * k22))
    out += (1.0 / 24.0) * d1**2 * (-4 * k11**2 + k12**2 - 2 * k12 * k21 - 3 * k21**2)
    out += -0.5 * d2 * (a1 * (k11 * k12 + k21 * k22) + a2 * (k12**2 + k22**2))
    out += (1.0 / 24.0) * d2**2 * (-4 * k22**2 + k21**2 - 2 * k12 * k21 - 3 * k12**2)
    out += -(1.0 / 3.0) * d1 * d2 * (k11 * k12 + k21 * k22)
    return out


def c_2(y, y0, theta):
    e1, e2 = theta["eta1"], theta["eta2"]
    k11, k12, k21, k22 = theta["k11"], theta["k12"], theta.get("k21", 0.0), theta["k22"]
    d1, d2 = y[0] - y0[0], y[1] - y0[1]
    a1 = y0[0] - e1
    a2 = y0[1] - e2
    out = -(1.0 / 12.0) * (2 * k11**2 + 2 * k22**2 + (k12 + k21) ** 2)
    out += (
        (1.0 / 6.0)
        * d1
        * (k12 - k21)
        * (a1 * (k11 * k12 + k21 * k22) + a2 * (k12**2 + k22**2))
    )
    out += (1.0 / 12.0) * d1**2 * (k12 - k21) * (k11 * k12 + k21 * k22)
    out += (1.0 / 12.0) * d2**2 * (k21 - k12) * (k11 * k12 + k21 * k22)
    out += (
        (1.0 / 6.0)
        * d2
        * (k21 - k12)
        * (a1 * (k11**2 + k21**2) + a2 * (k11 * k12 + k21 * k22))
    )
    out += (
        (1.0 / 12.0)
        * d1
        * d2
        * (k12 - k21)
        * (k22**2 + k12**2 - k11**2 + k21**2)
    )
    return out


PRINTED_COEFFS = {-1: c_minus1, 0: c_0, 1: c_1, 2: c_2}
