"""Burg linear prediction for complex records."""
import numpy as np
from scipy import signal

STABILITY_TOL = 1e-9


def burg(x, order):
    """Burg recursion up to ``order`` on the complex record ``x``.

    Returns the prediction-error filters of every order (``filters[m]`` has
    length m + 1 with leading 1) and the reflection coefficients.
    A zero record yields zero reflections rather than NaN.
    """
    x = np.asarray(x, dtype=complex)
    n = x.size
    if order < 0 or order >= n:
        raise ValueError("Burg order {} needs a record longer than {}".format(order, n))

    ef = x.copy()
    eb = x.copy()
    a = np.ones(1, dtype=complex)
    filters = [a]
    k = np.zeros(order, dtype=complex)

    for m in range(order):
        efp = ef[1:]
        ebp = eb[:-1]
        num = -2.0 * np.vdot(ebp, efp)
        den = np.vdot(efp, efp).real + np.vdot(ebp, ebp).real
        k[m] = num / den if den > 0 else 0.0

        ef = efp + k[m] * ebp
        eb = ebp + np.conj(k[m]) * efp

        ext = np.concatenate([a, [0.0]])
        a = ext + k[m] * np.conj(ext[::-1])
        filters.append(a)

    return filters, k


def is_stable(reflections, tol=STABILITY_TOL):
    """All poles inside the unit circle (up to ``tol``) and finite."""
    reflections = np.asarray(reflections)
    return bool(np.all(np.isfinite(reflections)) and np.all(np.abs(reflections) <= 1.0 + tol))


def extrapolate(x, a, n_out):
    """Continue ``x`` by ``n_out`` samples with the prediction-error filter ``a``."""
    x = np.asarray(x, dtype=complex)
    order = len(a) - 1
    if order == 0:
        return np.zeros(n_out, dtype=complex)
    assert x.size >= order
    zi = signal.lfiltic([1.0], a, x[::-1][:order])
    y, _ = signal.lfilter([1.0], a, np.zeros(n_out, dtype=complex), zi=zi)
    return y
