"""Compensated summation helpers.

Quantitative checks in this package assert identities (mass ledgers, moment
annihilation, certificate values) at absolute tolerances around 1e-12 of the
natural scale.  Naive left-to-right accumulation of O(N^2) terms is not safe
at that level, so the reductions that feed those checks go through the
helpers below:

* ``csum`` wraps ``math.fsum`` (exactly rounded, order independent) for 1-D
  reductions.
* ``CompensatedAccumulator`` is a Neumaier-style accumulator vectorised over
  numpy arrays; it is used where a sum is built up slice-by-slice in
  ascending index order, e.g. the quadratic interaction convolution.

The per-term rounding of the summands themselves bounds the final error by
roughly ``eps * sum(|terms|)`` regardless of term count, which is what the
1e-12 tolerances rely on.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["csum", "cdot", "CompensatedAccumulator"]


def csum(values) -> float:
    """Exactly rounded sum of a 1-D array or iterable of floats."""
    arr = np.asarray(values, dtype=float)
    return math.fsum(arr.tolist())


def cdot(x, y) -> float:
    """Exactly rounded dot product of two 1-D arrays.

    The elementwise products round once each, so the result is within
    eps * sum(|x_i y_i|) of the true value.
    """
    arr = np.asarray(x, dtype=float) * np.asarray(y, dtype=float)
    return math.fsum(arr.tolist())


class CompensatedAccumulator:
    """Neumaier (improved Kahan) accumulator over a numpy array.

    Keeps a running sum and a running compensation per component.  Each
    ``add`` costs a handful of vector operations; the accumulated error per
    component stays at a couple of ulps of the running sum instead of
    growing with the number of contributions.
    """

    def __init__(self, shape):
        self.sum = np.zeros(shape, dtype=float)
        self._comp = np.zeros(shape, dtype=float)

    def add(self, values: np.ndarray, start: int = 0) -> None:
        """Add ``values`` into components ``start:start+len(values)``."""
        stop = start + values.shape[0]
        s = self.sum[start:stop]
        c = self._comp[start:stop]
        t = s + values
        # |s| >= |v|: the low-order bits lost belong to v, and vice versa.
        big = np.abs(s) >= np.abs(values)
        lost = np.where(big, (s - t) + values, (values - t) + s)
        c += lost
        self.sum[start:stop] = t

    def value(self) -> np.ndarray:
        """Current compensated total."""
        return self.sum + self._comp
