"""Parametrized sigmoid used as a smooth stand-in for the Heaviside step.

    sigma_{s,q}(y) = (1 + q) / (1 + exp(-s y) / q) - q
                   = q (1 - E) / (q + E),   E = exp(-s y)

The second form is used for evaluation: it returns exactly 0 at y = 0 and
keeps the derivatives free of overflow. For y < 0 it is rewritten with
G = 1/E = exp(s y) <= 1 so that rounding can never leave the range [-q, 1].
"""
import numpy as np

# bound on the exponent -s*y
EXP_CLAMP = 500.0


def _decay(y, s):
    return np.exp(np.clip(-s * np.asarray(y, dtype=float), -EXP_CLAMP, EXP_CLAMP))


def heaviside(y):
    """1 where y >= 0, else 0."""
    return np.where(np.asarray(y) >= 0, 1.0, 0.0)


def sigmoid(y, s, q):
    y = np.asarray(y, dtype=float)
    E = _decay(y, s)
    G = _decay(-y, s)
    with np.errstate(invalid="ignore"):
        pos = q * (1.0 - E) / (q + E)
        neg = -q * ((1.0 - G) / (1.0 + q * G))
    return np.where(y >= 0, pos, neg)


def sigmoid_deriv(y, s, q):
    E = _decay(y, s)
    return s * q * (1.0 + q) * (E / (q + E)) / (q + E)


def sigmoid_second_deriv(y, s, q):
    E = _decay(y, s)
    return s * s * q * (1.0 + q) * (E / (q + E)) * ((E - q) / (q + E)) / (q + E)


def sigmoid_gap(y, s, q):
    """H(y) - sigma_{s,q}(y), computed without cancellation.

    For y >= 0 the gap is (1 + q) E / (q + E); for y < 0 it is -sigma. Both are
    strictly positive whenever E is representable, which makes the strict
    ordering H > sigma checkable in floating point even where sigma itself
    rounds to 1.0.
    """
    y = np.asarray(y, dtype=float)
    E = _decay(y, s)
    upper = (1.0 + q) * E / (q + E)
    lower = q * (E - 1.0) / (q + E)
    return np.where(y >= 0, upper, lower)
