"""Scalar root-finding helpers: doubling brackets and residual polish.

All hot-path roots in the package go through Brent's method on a bracket
grown by doubling, followed (where a derivative is cheap) by a couple of
guarded Newton corrections that drive the *residual* below a caller-chosen
tolerance rather than relying on an x-tolerance alone.
"""

import math

from scipy.optimize import brentq

from .errors import BracketError

_BRENT_XTOL = 1e-300
_BRENT_RTOL = 8.881784197001252e-16  # 4 * machine epsilon, scipy's minimum


def grow_upper(f, lo, hi, *, factor=2.0, max_doublings=200):
    """Return ``hi`` such that f changes sign on [lo, hi], doubling from the
    initial guess. f(lo) must already be evaluated by the caller as nonzero;
    the search assumes a single sign change exists to the right."""
    flo = f(lo)
    fhi = f(hi)
    n = 0
    while flo * fhi > 0.0:
        n += 1
        if n > max_doublings:
            raise BracketError(
                f"no sign change located while doubling bracket from {lo!r} "
                f"(reached {hi!r})"
            )
        lo, flo = hi, fhi
        hi = hi * factor
        fhi = f(hi)
    return lo, hi


def brent(f, lo, hi):
    """Brent root on a known bracket, at machine tolerance."""
    return brentq(f, lo, hi, xtol=_BRENT_XTOL, rtol=_BRENT_RTOL)


def polish_newton(f, fprime, x, lo, hi, tol, max_iter=8):
    """Guarded Newton refinement of a Brent root until |f| <= tol.

    Falls back to bisection against the bracket when a Newton step leaves
    [lo, hi] or fails to reduce the residual.
    """
    fx = f(x)
    it = 0
    while abs(fx) > tol and it < max_iter:
        it += 1
        d = fprime(x)
        if d != 0.0 and math.isfinite(d):
            step = fx / d
            xn = x - step
        else:
            xn = math.nan
        if not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        fn = f(xn)
        if abs(fn) >= abs(fx):
            # bisect against whichever side keeps the sign change
            if fx * f(lo) < 0.0:
                hi = x
            else:
                lo = x
            xn = 0.5 * (lo + hi)
            fn = f(xn)
        x, fx = xn, fn
    return x
