"""Compiled inner loops."""

import numba
import numpy as np

# exp(x) is exactly 0.0 in float64 for x < -745.2, so pairs beyond this
# exponent contribute nothing and can be skipped without changing any sum.
_UNDERFLOW_EXPONENT = -746.0


@numba.njit(cache=True)
def leave_one_out_moments(d, y, h):
    """Kernel moments at each ``d[i]`` over all ``j != i``.

    ``d`` must be sorted ascending.  Weights are ``exp(-(d_j - d_i)**2 / (2 h**2))``
    without the ``1/(h sqrt(2 pi))`` factor.  Returns ``(s0, s1, s2, t0, t1)``
    with ``s_k = sum w x**k``, ``t_k = sum w x**k y_j``, ``x = d_j - d_i``.
    Each pair's weight is computed once and credited to both ends.
    """
    n = d.size
    s0 = np.zeros(n)
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    t0 = np.zeros(n)
    t1 = np.zeros(n)
    c = -0.5 / (h * h)
    for i in range(n):
        di = d[i]
        yi = y[i]
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        b0 = 0.0
        b1 = 0.0
        for j in range(i + 1, n):
            x = d[j] - di
            e = c * x * x
            if e < _UNDERFLOW_EXPONENT:
                break
            w = np.exp(e)
            wx = w * x
            wxx = wx * x
            yj = y[j]
            a0 += w
            a1 += wx
            a2 += wxx
            b0 += w * yj
            b1 += wx * yj
            s0[j] += w
            s1[j] -= wx
            s2[j] += wxx
            t0[j] += w * yi
            t1[j] -= wx * yi
        s0[i] += a0
        s1[i] += a1
        s2[i] += a2
        t0[i] += b0
        t1[i] += b1
    return s0, s1, s2, t0, t1
