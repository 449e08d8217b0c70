"""Quiet-oscillator clock simulator: dissipated-power generation, spectra and counting statistics."""

__version__ = "0.1.0"

from .model import (
    ClockParams,
    DampingRule,
    DissipationEvent,
    DissipationSeries,
    EnergyState,
    LaserAnalogParams,
    PoissonParams,
    gen_clock_series,
    gen_laser_series,
    gen_poisson_series,
    mean_energy,
    period_from_length,
    step_clock,
)
from .spectral import PsdEstimate, analytic_psd, brute_force_psd, estimate_psd, log_bin
from .stats import fano_factor, interevent_stats, ledger, mark_stats
