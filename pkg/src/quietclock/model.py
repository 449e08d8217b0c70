"""Pendulum-clock energy recurrence and the two contrast event processes.

Time is counted in pendulum periods (T = 1).  Each model is exposed two ways:

* a *stream* (``ClockStream``, ``PoissonStream``, ``LaserStream``) that yields
  fixed-size chunks and never holds more than one chunk of samples, and
* a ``gen_*_series`` function that materializes the whole run as a
  ``DissipationSeries`` for runs that fit the memory budget.

Both routes consume exactly one uniform draw per period from the seeded
generator, so a series is independent of the chunk size used to produce it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, NamedTuple, Optional

import numpy as np

from ._kernels import add_compensated, clock_chunk, damping_mark

#: Samples a materialized series may hold before generation is refused.
MAX_SAMPLES = 2**26
DEFAULT_CHUNK = 2**20
RNG_ALGORITHM = "numpy.random.PCG64"


class ResourceBudgetError(MemoryError):
    """Raised when a materialized run would exceed the sample budget."""


class DampingRule(str, Enum):
    LINEARIZED = "linearized"
    EXACT = "exact"


@dataclass(frozen=True)
class ClockParams:
    """Clock constants: escapement input ``delta`` (J/period), event
    probability ``p``, molecule/bob weight ratio ``w`` and initial energy ``e0``
    (defaults to the stationary mean ``delta / (p * w)``)."""

    delta: float
    p: float
    w: float
    damping_rule: DampingRule = DampingRule.LINEARIZED
    e0: Optional[float] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta!r}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not 0 < self.w < 1:
            raise ValueError(f"w must lie in (0, 1), got {self.w!r}")
        object.__setattr__(self, "damping_rule", DampingRule(self.damping_rule))
        if self.e0 is None:
            object.__setattr__(self, "e0", mean_energy(self))
        elif not self.e0 > 0:
            raise ValueError(f"e0 must be > 0, got {self.e0!r}")


@dataclass(frozen=True)
class PoissonParams:
    p: float
    mark: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not self.mark > 0:
            raise ValueError(f"mark must be > 0, got {self.mark!r}")


@dataclass(frozen=True)
class LaserAnalogParams:
    """Constant pump ``delta`` per period feeding fixed-size events ``quantum``."""

    delta: float
    quantum: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta!r}")
        if not self.quantum > 0:
            raise ValueError(f"quantum must be > 0, got {self.quantum!r}")


@dataclass(frozen=True)
class EnergyState:
    """Stored energy ``e`` after ``k`` periods.

    ``lo`` is the rounding remainder of ``e`` (true energy is ``e + lo``),
    kept so long runs conserve energy to well below one ulp per period.
    """

    e: float
    k: int = 0
    lo: float = 0.0


class DissipationEvent(NamedTuple):
    k: int
    mark: float


class SeriesChunk(NamedTuple):
    """One block of consecutive periods ``[start, start + len(samples))``."""

    start: int
    samples: np.ndarray
    event_k: np.ndarray
    event_marks: np.ndarray
    energy_sum: float = 0.0


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DissipationSeries:
    """A materialized run.

    ``samples[k]`` is the energy dissipated during period ``k``; events are
    stored column-wise in ``event_k``/``event_marks`` (see ``events`` for the
    record view).  ``initial_state`` and ``final_state`` hold the stored
    energy (pendulum energy or accumulator residue) before and after the run.
    """

    n: int
    samples: np.ndarray
    event_k: np.ndarray
    event_marks: np.ndarray
    final_state: EnergyState
    initial_state: EnergyState = EnergyState(0.0)
    input_total: float = 0.0
    energy_sum: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples, np.float64))
        object.__setattr__(self, "event_k", _frozen(self.event_k, np.int64))
        object.__setattr__(self, "event_marks", _frozen(self.event_marks, np.float64))

    @property
    def events(self) -> list[DissipationEvent]:
        return [DissipationEvent(int(k), float(m)) for k, m in zip(self.event_k, self.event_marks)]

    @property
    def mean_energy(self) -> Optional[float]:
        """Time average of the end-of-period pendulum energy (clock runs only)."""
        if self.energy_sum is None or self.n == 0:
            return None
        return self.energy_sum / self.n

    @property
    def stored_delta(self) -> float:
        a, b = self.initial_state, self.final_state
        return (b.e - a.e) + (b.lo - a.lo)

    @classmethod
    def empty(cls, initial_energy: float = 0.0) -> "DissipationSeries":
        z = np.zeros(0)
        st = EnergyState(initial_energy, 0)
        return cls(0, z, np.zeros(0, np.int64), z, st, st)


def mean_energy(params) -> float:
    """Stationary pendulum energy, where input ``delta`` balances the mean loss ``p*w*E``."""
    return params.delta / (params.p * params.w)


def period_from_length(length: float, g: float) -> float:
    """Small-amplitude pendulum period ``2*pi*sqrt(L/g)`` in seconds."""
    if not length > 0:
        raise ValueError(f"length must be > 0, got {length!r}")
    if not g > 0:
        raise ValueError(f"g must be > 0, got {g!r}")
    return 2.0 * math.pi * math.sqrt(length / g)


def step_clock(state: EnergyState, params: ClockParams, u: float):
    """Advance the clock by one period using the uniform draw ``u``.

    The escapement adds ``delta`` first; the damping event (``u < p``) then acts
    on the incremented energy ``e_in``, removing ``w*e_in`` (linearized) or
    ``w*e_in/(1+w)`` (exact, i.e. ``e_out = e_in/(1+w)``).  Returns
    ``(new_state, event_or_None)``; the mark is exactly the energy removed.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u!r}")
    hi, lo = add_compensated(state.e, state.lo, params.delta)
    if u < params.p:
        m = damping_mark(hi, lo, params.w, params.damping_rule is DampingRule.EXACT)
        hi, lo = add_compensated(hi, lo, -m)
        return EnergyState(hi, state.k + 1, lo), DissipationEvent(state.k, m)
    return EnergyState(hi, state.k + 1, lo), None


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"period count must be an integer >= 1, got {n!r}")
    return int(n)


class _Stream:
    """Chunked, restartable source of per-period dissipation samples.

    Each iteration regenerates the run from the seed, which makes a second
    pass (e.g. for a global mean) bit-identical to the first.  The attributes
    ``final_state``, ``input_total`` and ``dissipated_total`` describe the most
    recently completed pass.
    """

    input_per_period: Optional[float] = None

    def __init__(self, n: int, chunk_len: int = DEFAULT_CHUNK):
        self.n = _check_n(n)
        if chunk_len < 1:
            raise ValueError("chunk_len must be >= 1")
        self.chunk_len = int(chunk_len)
        self.final_state: Optional[EnergyState] = None
        self.input_total: Optional[float] = None
        self.dissipated_total: Optional[float] = None
        self.energy_sum: Optional[float] = None

    @property
    def initial_state(self) -> EnergyState:
        return EnergyState(0.0)

    def __iter__(self) -> Iterator[SeriesChunk]:
        raise NotImplementedError

    def _bounds(self):
        for start in range(0, self.n, self.chunk_len):
            yield start, min(self.chunk_len, self.n - start)


class ClockStream(_Stream):
    """Clock recurrence.  ``burn_in`` periods are simulated and discarded
    first (drawing from the same generator); the reported run and its ledger
    start from the energy reached at the end of the burn-in."""

    def __init__(self, params: ClockParams, seed: int, n: int, chunk_len: int = DEFAULT_CHUNK,
                 burn_in: int = 0):
        super().__init__(n, chunk_len)
        if burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        self.params = params
        self.seed = seed
        self.burn_in = int(burn_in)
        self.input_per_period = params.delta
        self._start = EnergyState(float(params.e0)) if burn_in == 0 else None

    @property
    def initial_state(self):
        if self._start is None:
            raise RuntimeError("initial energy is known after the first pass")
        return self._start

    def __iter__(self):
        prm = self.params
        rng = make_rng(self.seed)
        exact = prm.damping_rule is DampingRule.EXACT
        hi, lo = float(prm.e0), 0.0
        for start in range(0, self.burn_in, self.chunk_len):
            size = min(self.chunk_len, self.burn_in - start)
            hi, lo, _ = clock_chunk(rng.random(size), hi, lo, prm.delta, prm.p, prm.w, exact, np.empty(size))
        self._start = EnergyState(hi, 0, lo)
        marks_parts, esum_parts = [], []
        for start, size in self._bounds():
            u = rng.random(size)
            samples = np.empty(size)
            hi, lo, esum = clock_chunk(u, hi, lo, prm.delta, prm.p, prm.w, exact, samples)
            idx = np.flatnonzero(u < prm.p)
            marks = samples[idx]
            marks_parts.append(math.fsum(marks))
            esum_parts.append(esum)
            yield SeriesChunk(start, samples, idx + start, marks, esum)
        self.final_state = EnergyState(hi, self.n, lo)
        self.input_total = self.n * prm.delta
        self.dissipated_total = math.fsum(marks_parts)
        self.energy_sum = math.fsum(esum_parts)


class PoissonStream(_Stream):
    """Constant-mark events, independently with probability ``p`` each period."""

    def __init__(self, params: PoissonParams, seed: int, n: int, chunk_len: int = DEFAULT_CHUNK):
        super().__init__(n, chunk_len)
        self.params = params
        self.seed = seed

    def __iter__(self):
        prm = self.params
        rng = make_rng(self.seed)
        count = 0
        for start, size in self._bounds():
            hit = rng.random(size) < prm.p
            samples = np.where(hit, prm.mark, 0.0)
            idx = np.flatnonzero(hit)
            count += idx.size
            yield SeriesChunk(start, samples, idx + start, samples[idx])
        self.final_state = EnergyState(0.0, self.n)
        # No storage: every unit of input leaves in the same period.
        self.dissipated_total = count * prm.mark
        self.input_total = self.dissipated_total


def _exact_fraction(x: float) -> Fraction:
    # Shortest decimal repr, so 1e-5 / 1e-3 is exactly 1/100.
    return Fraction(repr(float(x)))


class LaserStream(_Stream):
    """Integrate-and-fire pump: ``acc += delta`` each period, one event of
    size ``quantum`` fires each time ``acc`` reaches ``quantum``.

    The accumulator is kept in exact rational arithmetic on the decimal values
    of ``delta`` and ``quantum`` so event timing never drifts by rounding.
    """

    def __init__(self, params: LaserAnalogParams, n: int, chunk_len: int = DEFAULT_CHUNK):
        super().__init__(n, chunk_len)
        self.params = params
        self.input_per_period = params.delta
        self._d = _exact_fraction(params.delta)
        self._q = _exact_fraction(params.quantum)
        ratio = self._d / self._q
        self._num, self._den = ratio.numerator, ratio.denominator

    def _counts(self, t):
        # Events emitted after t completed periods: floor(t * delta / quantum).
        if self._num * (self.n + 1) < 2**62:
            return (t * self._num) // self._den
        return np.array([(int(x) * self._num) // self._den for x in t], dtype=np.int64)

    def __iter__(self):
        q = float(self.params.quantum)
        for start, size in self._bounds():
            t = np.arange(start, start + size + 1, dtype=np.int64)
            per = np.diff(self._counts(t))
            samples = per * q
            idx = np.flatnonzero(per)
            event_k = np.repeat(idx + start, per[idx])
            yield SeriesChunk(start, samples, event_k, np.full(event_k.size, q))
        total = (self.n * self._num) // self._den
        self.final_state = EnergyState(float(self.n * self._d - total * self._q), self.n)
        self.input_total = self.n * self.params.delta
        self.dissipated_total = total * q


def collect(stream: _Stream, max_samples: int = MAX_SAMPLES) -> DissipationSeries:
    """Run ``stream`` to completion and materialize it."""
    if stream.n > max_samples:
        raise ResourceBudgetError(
            f"{stream.n} periods exceed the in-memory budget of {max_samples} samples; "
            "attach a streaming consumer instead"
        )
    chunks = list(stream)
    return DissipationSeries(
        n=stream.n,
        samples=np.concatenate([c.samples for c in chunks]),
        event_k=np.concatenate([c.event_k for c in chunks]),
        event_marks=np.concatenate([c.event_marks for c in chunks]),
        final_state=stream.final_state,
        initial_state=stream.initial_state,
        input_total=stream.input_total,
        energy_sum=stream.energy_sum,
    )


def gen_clock_series(params: ClockParams, seed: int, n: int, *, chunk_len: int = DEFAULT_CHUNK,
                     burn_in: int = 0, max_samples: int = MAX_SAMPLES) -> DissipationSeries:
    return collect(ClockStream(params, seed, n, chunk_len, burn_in), max_samples)


def gen_poisson_series(params: PoissonParams, seed: int, n: int, *, chunk_len: int = DEFAULT_CHUNK,
                       max_samples: int = MAX_SAMPLES) -> DissipationSeries:
    return collect(PoissonStream(params, seed, n, chunk_len), max_samples)


def gen_laser_series(params: LaserAnalogParams, n: int, *, chunk_len: int = DEFAULT_CHUNK,
                     max_samples: int = MAX_SAMPLES) -> DissipationSeries:
    return collect(LaserStream(params, n, chunk_len), max_samples)
