"""Deterministic adaptive Simpson quadrature and cached antiderivatives.

Used as the fallback when a law has no closed-form antiderivative.  Closed
forms are always preferred; these routines exist so custom callables can be
plugged in without giving up the 1e-12 accuracy the derived-function
identities rely on.
"""

from __future__ import annotations

import numpy as np


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=48):
    """Integral of ``f`` over [a, b] by adaptive Simpson to absolute ``tol``."""
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) * (f0 + 4.0 * f1 + f2) / 6.0

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = float(f(xl))
        fr = float(f(xr))
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        return (recurse(x0, xm, f0, fl, f1, left, eps / 2.0, depth + 1)
                + recurse(xm, x2, f1, fr, f2, right, eps / 2.0, depth + 1))

    fa = float(f(a))
    fm = float(f(0.5 * (a + b)))
    fb = float(f(b))
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


class CachedAntiderivative:
    """F(x) = integral of ``f`` from ``anchor`` to x, F(anchor) = 0.

    Node values at multiples of ``step`` from the anchor are accumulated once
    and cached; each query integrates only the short remainder segment, so
    results are independent of query order.
    """

    def __init__(self, f, anchor=0.0, step=0.25, tol=1e-12):
        self.f = f
        self.anchor = float(anchor)
        self.step = float(step)
        self.tol = float(tol)
        self._nodes = {0: 0.0}
        self._lo = 0     # lowest cached node index
        self._hi = 0     # highest cached node index

    def _node_x(self, idx):
        return self.anchor + idx * self.step

    def _extend_to(self, idx):
        while self._hi < idx:
            x0 = self._node_x(self._hi)
            inc = adaptive_simpson(self.f, x0, x0 + self.step, self.tol)
            self._hi += 1
            self._nodes[self._hi] = self._nodes[self._hi - 1] + inc
        while self._lo > idx:
            x1 = self._node_x(self._lo)
            inc = adaptive_simpson(self.f, x1 - self.step, x1, self.tol)
            self._lo -= 1
            self._nodes[self._lo] = self._nodes[self._lo + 1] - inc

    def _value(self, x):
        idx = int(np.floor((x - self.anchor) / self.step))
        self._extend_to(idx)
        base = self._nodes[idx]
        x0 = self._node_x(idx)
        if x == x0:
            return base
        return base + adaptive_simpson(self.f, x0, x, self.tol)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return self._value(float(arr))
        out = np.array([self._value(v) for v in arr.ravel()])
        return out.reshape(arr.shape)
