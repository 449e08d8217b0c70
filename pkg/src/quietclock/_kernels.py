"""Compiled inner loops for the serial energy recurrence.

The pendulum energy is carried as an unevaluated pair ``hi + lo`` (error-free
``two_sum`` updates), so adding ``delta`` to an energy many orders of
magnitude larger loses nothing to rounding and the energy ledger closes.
"""

import numba


@numba.njit(cache=True)
def add_compensated(hi, lo, x):
    """Return the renormalized pair for ``(hi + lo) + x``."""
    s = hi + x
    bb = s - hi
    err = (hi - (s - bb)) + (x - bb)
    lo = lo + err
    hi = s + lo
    lo = lo - (hi - s)
    return hi, lo


@numba.njit(cache=True)
def damping_mark(hi, lo, w, exact):
    """Energy removed by one damping event acting on energy ``hi + lo``."""
    e = hi + lo
    if exact:
        return e * w / (1.0 + w)
    return w * e


@numba.njit(cache=True)
def clock_chunk(u, hi, lo, delta, p, w, exact, samples):
    """Advance the clock over ``len(u)`` periods, writing dissipated energy to ``samples``.

    Returns the final energy pair and the Kahan-compensated sum of the
    end-of-period energies.
    """
    esum = 0.0
    comp = 0.0
    for i in range(u.shape[0]):
        hi, lo = add_compensated(hi, lo, delta)
        if u[i] < p:
            m = damping_mark(hi, lo, w, exact)
            hi, lo = add_compensated(hi, lo, -m)
            samples[i] = m
        else:
            samples[i] = 0.0
        y = hi - comp
        t = esum + y
        comp = (t - esum) - y
        esum = t
    return hi, lo, esum
