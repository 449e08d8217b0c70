"""Spectral density of the dissipated-power sequence.

Convention (two-sided in angular frequency, per-period sampling)::

    S(omega_j) = < |sum_k (P_k - mean) * win_k * exp(-1j * omega_j * k)|^2 > / sum_k win_k^2

with ``omega_j = 2*pi*j/M`` for ``j = 1 .. M/2`` and ``<.>`` the average over
non-overlapping segments of length ``M``.  White noise of variance ``s2``
gives a flat ``S = s2``; a marked Bernoulli stream with rate ``p`` and mark
``delta/p`` gives ``p*(1-p)*(delta/p)**2``, which is the high-frequency limit
``delta**2/p`` of the clock formula up to the finite-``p`` factor ``1-p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Union

import numpy as np
from scipy.optimize import least_squares

WINDOWS = ("rectangular", "hann")


def analytic_psd(params, omega):
    """Clock spectrum ``(delta**2/p) / (1 + (p*w/omega)**2)``.

    ``omega`` in rad/period, scalar or array; must be > 0.
    """
    om = np.asarray(omega, dtype=float)
    if np.any(~(om > 0)):
        raise ValueError("omega must be > 0")
    plateau = params.delta**2 / params.p
    out = plateau / (1.0 + (params.p * params.w / om) ** 2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PsdEstimate:
    """Spectral density on ``freqs`` (rad/period), averaged over ``segments``.

    ``dc`` is the segment-averaged zero-frequency periodogram of the
    mean-subtracted data, kept for the Parseval check.  ``counts`` is set on
    log-binned estimates: how many raw bins each point averages.
    """

    freqs: np.ndarray
    values: np.ndarray
    segments: int
    window: str = "rectangular"
    segment_len: Optional[int] = None
    dc: float = 0.0
    mean: float = 0.0
    n_samples: int = 0
    counts: Optional[np.ndarray] = None

    def total_power(self) -> float:
        """Per-sample power implied by the full two-sided spectrum (DC included).

        For the rectangular window and ``n`` a multiple of the segment length
        this equals the sample variance about the global mean.
        """
        M = self.segment_len
        if M is None or self.counts is not None:
            raise ValueError("total_power needs an unbinned estimate")
        v = self.values
        return (self.dc + 2.0 * v[:-1].sum() + v[-1]) / M


def _check_segment_len(M):
    M = int(M)
    if M < 2 or M & (M - 1):
        raise ValueError(f"segment_len must be a power of two >= 2, got {M}")
    return M


def make_window(kind: str, M: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(M)
    if kind == "hann":
        # Periodic Hann: exact zeros of its transform beyond bin 1.
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(M) / M)
    raise ValueError(f"unknown window {kind!r}; expected one of {WINDOWS}")


class PsdAccumulator:
    """Streaming segment-averaged periodogram with O(M) memory.

    Feed samples in chunks of any size.  Segments are transformed about a
    reference level (``mean_hint`` if given, else the first segment's mean);
    the exact global mean is applied at ``result()`` through the linear
    correction::

        |X - d*W|^2 = |X|^2 - 2 d Re(conj(W) X) + d^2 |W|^2

    where ``W`` is the window transform and ``d`` the gap between the global
    mean and the reference.  The estimate therefore equals the two-pass
    computation that subtracts the global mean first.
    """

    def __init__(self, segment_len: int, window: str = "rectangular", mean_hint: Optional[float] = None):
        self.M = _check_segment_len(segment_len)
        self.window = window
        self._win = make_window(window, self.M)
        self._norm = float(np.dot(self._win, self._win))
        self._ref = mean_hint
        self._buf = np.empty(self.M)
        self._fill = 0
        self._pow = np.zeros(self.M // 2 + 1)
        self._lin = np.zeros(self.M // 2 + 1, dtype=complex)
        self.segments = 0
        self._sum_parts: list[float] = []
        self.n = 0

    def feed(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self._sum_parts.append(math.fsum(x))
        self.n += x.size
        pos = 0
        while pos < x.size:
            take = min(self.M - self._fill, x.size - pos)
            self._buf[self._fill:self._fill + take] = x[pos:pos + take]
            self._fill += take
            pos += take
            if self._fill == self.M:
                self._segment(self._buf)
                self._fill = 0

    def _segment(self, seg):
        if self._ref is None:
            self._ref = math.fsum(seg) / self.M
        X = np.fft.rfft((seg - self._ref) * self._win)
        self._pow += X.real**2 + X.imag**2
        self._lin += X
        self.segments += 1

    @property
    def global_mean(self) -> float:
        if self.n == 0:
            raise ValueError("no samples fed")
        return math.fsum(self._sum_parts) / self.n

    def result(self, mean: Optional[float] = None) -> PsdEstimate:
        if self.segments == 0:
            raise ValueError(f"stream of {self.n} samples is shorter than one segment ({self.M})")
        mu = self.global_mean if mean is None else float(mean)
        d = mu - self._ref
        W = np.fft.rfft(self._win)
        cross = W.real * self._lin.real + W.imag * self._lin.imag
        total = self._pow - 2.0 * d * cross + self.segments * d * d * (W.real**2 + W.imag**2)
        S = np.maximum(total, 0.0) / (self.segments * self._norm)
        j = np.arange(1, self.M // 2 + 1)
        return PsdEstimate(
            freqs=2.0 * np.pi * j / self.M,
            values=S[1:],
            segments=self.segments,
            window=self.window,
            segment_len=self.M,
            dc=float(S[0]),
            mean=mu,
            n_samples=self.n,
        )


Source = Union[np.ndarray, Iterable]


def _iter_arrays(source):
    if isinstance(source, np.ndarray) or (isinstance(source, (list, tuple)) and source
                                           and np.isscalar(source[0])):
        yield np.asarray(source, dtype=float)
        return
    for item in source:
        yield getattr(item, "samples", item)


def estimate_psd(source: Source, segment_len: int, window: str = "rectangular",
                 mean: Optional[float] = None, mean_hint: Optional[float] = None) -> PsdEstimate:
    """Segment-averaged periodogram of ``source``.

    ``source`` is an array, or an iterable of arrays / ``SeriesChunk`` objects
    (e.g. a model stream).  The global sample mean is subtracted unless
    ``mean`` is supplied.
    """
    acc = PsdAccumulator(segment_len, window, mean_hint)
    for arr in _iter_arrays(source):
        acc.feed(arr)
    return acc.result(mean)


def brute_force_psd(samples, segment_len: int, window: str = "rectangular",
                    mean: Optional[float] = None, max_len: int = 2**16) -> PsdEstimate:
    """Reference estimator: every bin by direct summation of the defining sum.

    Same segmentation, mean and normalization as ``estimate_psd`` but no FFT
    and no streaming correction; O(n*M) work.
    """
    x = np.asarray(samples, dtype=float)
    M = _check_segment_len(segment_len)
    if x.size > max_len:
        raise ValueError(f"brute-force oracle limited to {max_len} samples, got {x.size}")
    nseg = x.size // M
    if nseg == 0:
        raise ValueError(f"series of {x.size} samples is shorter than one segment ({M})")
    mu = math.fsum(x) / x.size if mean is None else float(mean)
    win = make_window(window, M)
    norm = float(np.dot(win, win))
    k = np.arange(M)
    j = np.arange(M // 2 + 1)
    acc = np.zeros(M // 2 + 1)
    block = max(1, 2**22 // M)
    for s in range(nseg):
        y = (x[s * M:(s + 1) * M] - mu) * win
        for b in range(0, j.size, block):
            jj = j[b:b + block]
            # Reduce j*k mod M in integers so the phase stays exact for large M.
            phase = 2.0 * np.pi * ((jj[:, None] * k[None, :]) % M) / M
            re = np.cos(phase) @ y
            im = np.sin(phase) @ y
            acc[b:b + block] += re * re + im * im
    S = acc / (nseg * norm)
    return PsdEstimate(
        freqs=2.0 * np.pi * j[1:] / M,
        values=S[1:],
        segments=nseg,
        window=window,
        segment_len=M,
        dc=float(S[0]),
        mean=mu,
        n_samples=x.size,
    )


def log_edges(lo: float, hi: float, bins_per_decade: int) -> np.ndarray:
    """Decade-aligned band edges ``10**(i/b)`` covering ``[lo, hi]``."""
    b = int(bins_per_decade)
    i0 = math.floor(math.log10(lo) * b + 1e-9)
    i1 = math.ceil(math.log10(hi) * b - 1e-9)
    if i1 <= i0:
        i1 = i0 + 1
    return 10.0 ** (np.arange(i0, i1 + 1) / b)


def _band_index(freqs, bins_per_decade):
    # Integer band label floor(b*log10(omega)), robust at exact powers of ten.
    return np.floor(np.log10(freqs) * bins_per_decade + 1e-9).astype(np.int64)


def log_bin(est: PsdEstimate, bins_per_decade: int) -> PsdEstimate:
    """Average an estimate into logarithmic bands.

    Band frequency is the geometric mean of member frequencies; band value the
    arithmetic mean of member values.  Empty bands are dropped.
    """
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be >= 1")
    if len(est.freqs) == 0:
        raise ValueError("cannot bin an empty estimate")
    labels = _band_index(est.freqs, bins_per_decade)
    uniq, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    logf = np.bincount(inv, weights=np.log(est.freqs)) / counts
    vals = np.bincount(inv, weights=est.values) / counts
    return replace(est, freqs=np.exp(logf), values=vals, counts=counts)


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    omega: float
    n_bins: int
    s_est: float
    s_ref: float

    @property
    def ratio(self) -> float:
        return self.s_est / self.s_ref if self.s_ref > 0 else math.nan


def band_compare(omega, s_est, s_ref, bins_per_decade: int = 10,
                 lo: float = 0.0, hi: float = math.inf, weights=None) -> list[Band]:
    """Band-average two spectra sampled on the same grid.

    Only points with ``lo <= omega <= hi`` take part.  ``weights`` (bin counts
    of an already log-binned file) make the averages count-weighted.
    """
    om = np.asarray(omega, float)
    a = np.asarray(s_est, float)
    r = np.asarray(s_ref, float)
    wt = np.ones_like(om) if weights is None else np.asarray(weights, float)
    sel = (om >= lo) & (om <= hi)
    om, a, r, wt = om[sel], a[sel], r[sel], wt[sel]
    out = []
    if om.size == 0:
        return out
    labels = _band_index(om, bins_per_decade)
    for lab in np.unique(labels):
        m = labels == lab
        ww = wt[m]
        out.append(Band(
            lo=10.0 ** (lab / bins_per_decade),
            hi=10.0 ** ((lab + 1) / bins_per_decade),
            omega=float(np.exp(np.average(np.log(om[m]), weights=ww))),
            n_bins=int(ww.sum()),
            s_est=float(np.average(a[m], weights=ww)),
            s_ref=float(np.average(r[m], weights=ww)),
        ))
    return out


def fit_corner(omega, values, weights=None):
    """Least-squares fit of ``A / (1 + (c/omega)**2)`` in log space.

    Returns ``(plateau A, corner c)``.
    """
    om = np.asarray(omega, float)
    v = np.asarray(values, float)
    keep = v > 0
    om, v = om[keep], v[keep]
    wt = np.ones_like(om) if weights is None else np.sqrt(np.asarray(weights, float)[keep])
    logv = np.log(v)

    def resid(theta):
        logA, logc = theta
        model = logA - np.log1p((np.exp(logc) / om) ** 2)
        return wt * (logv - model)

    # Start from the top-decade level and the frequency where the curve halves.
    A0 = np.median(v[om >= om.max() / 10])
    below = om[v < A0 / 2]
    c0 = below.max() if below.size else om.min()
    sol = least_squares(resid, x0=[math.log(A0), math.log(c0)], method="lm", xtol=1e-14, ftol=1e-14)
    return float(np.exp(sol.x[0])), float(np.exp(sol.x[1]))
