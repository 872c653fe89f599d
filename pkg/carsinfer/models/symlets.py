"""Symlet scaling filters.

PyWavelets tabulates symlets up to order 20. Higher orders are computed by
spectral factorization of the Daubechies half-band polynomial, keeping the
root set whose filter phase is closest to linear.
"""
import itertools
import logging
from functools import lru_cache

import mpmath
import numpy as np
import pywt

logger = logging.getLogger("global")

TABULATED_MAX = 20
MAX_ORDER = 38
_PHASE_POINTS = 512
_DPS = 80


def _halfband_roots(order):
    """Roots in y of sum_k C(N-1+k, k) y^k, y = sin^2(w/2)."""
    coeffs = [mpmath.binomial(order - 1 + k, k) for k in range(order)]
    # polyroots wants the highest degree first
    return mpmath.polyroots(coeffs[::-1], maxsteps=2000, extraprec=4 * _DPS)


def _root_groups(order):
    """Per real-coefficient factor group, the two admissible z-root choices."""
    groups = []
    for y in _halfband_roots(order):
        y = mpmath.mpc(y)
        if y.imag < -mpmath.mpf(10) ** (-_DPS // 2):
            # represented by its conjugate
            continue
        b = 2 - 4 * y
        disc = mpmath.sqrt(b * b - 4)
        z = (b + disc) / 2
        if abs(z) > 1:
            z = (b - disc) / 2
        is_real = abs(y.imag) <= mpmath.mpf(10) ** (-_DPS // 2)
        if is_real:
            z = mpmath.mpf(z.real)
            groups.append(([z], [1 / z]))
        else:
            groups.append(([z, mpmath.conj(z)], [1 / z, 1 / mpmath.conj(z)]))
    return groups


def _group_phase(roots, omega):
    phase = np.zeros_like(omega)
    for r in roots:
        r = complex(r)
        phase += np.unwrap(np.angle(1.0 - r * np.exp(-1j * omega)))
    return phase


def _select_least_asymmetric(groups):
    omega = np.linspace(0.0, np.pi, _PHASE_POINTS)
    base = np.zeros_like(omega)
    deltas = []
    for inside, outside in groups:
        p0 = _group_phase(inside, omega)
        base += p0
        deltas.append(_group_phase(outside, omega) - p0)
    deltas = np.array(deltas).reshape(len(groups), -1)

    # project out the linear-phase part (constant + slope)
    basis = np.stack([np.ones_like(omega), omega], axis=1)
    q, _ = np.linalg.qr(basis)

    def project(v):
        return v - (v @ q) @ q.T

    base_p = project(base)
    deltas_p = project(deltas)
    gram = deltas_p @ deltas_p.T
    lin = deltas_p @ base_p

    choices = np.array(list(itertools.product((0.0, 1.0), repeat=len(groups))))
    cost = 2.0 * choices @ lin + np.einsum("ij,jk,ik->i", choices, gram, choices)
    best = choices[int(np.argmin(cost))]
    return best.astype(bool)


def _poly_mul(a, b):
    out = [mpmath.mpc(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def _factorize(order):
    with mpmath.workdps(_DPS):
        groups = _root_groups(order)
        flips = _select_least_asymmetric(groups)
        poly = [mpmath.mpc(1)]
        for _ in range(order):
            poly = _poly_mul(poly, [mpmath.mpc(1), mpmath.mpc(1)])
        for (inside, outside), flip in zip(groups, flips):
            for r in (outside if flip else inside):
                poly = _poly_mul(poly, [mpmath.mpc(1), -r])
        total = mpmath.fsum(c.real for c in poly)
        scale = mpmath.sqrt(2) / total
        return np.array([float(c.real * scale) for c in poly])


@lru_cache(maxsize=None)
def symlet_filter(order):
    """Scaling filter h of the symlet with ``order`` vanishing moments (sum h = sqrt 2)."""
    if int(order) != order or order < 2 or order > MAX_ORDER:
        raise ValueError("unsupported symlet order {}".format(order))
    if order <= TABULATED_MAX:
        return np.asarray(pywt.Wavelet("sym{}".format(order)).rec_lo)
    logger.info("Building sym{} filter by spectral factorization".format(order))
    h = _factorize(order)
    h.setflags(write=False)
    return h


@lru_cache(maxsize=None)
def symlet_wavelet(order):
    """A pywt.Wavelet for the symlet of ``order``, tabulated or factorized."""
    if int(order) != order or order < 2 or order > MAX_ORDER:
        raise ValueError("unsupported symlet order {}".format(order))
    if order <= TABULATED_MAX:
        return pywt.Wavelet("sym{}".format(order))
    bank = pywt.orthogonal_filter_bank(symlet_filter(order))
    wavelet = pywt.Wavelet("sym{}".format(order), filter_bank=bank)
    wavelet.orthogonal = True
    return wavelet
