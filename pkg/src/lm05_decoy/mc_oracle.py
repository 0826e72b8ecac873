"""Pulse-level Monte Carlo simulation of the two-way link.

Each pulse draws a hidden photon number ``n ~ Poisson(intensity)``. A signal
click happens with probability ``1 - (1 - eta)^n`` and an independent
background click with probability ``Y0``. A detected pulse is wrong with
probability ``e_detector`` when a signal photon clicked, and ``e0`` when only
the background did.

Pulses are processed in fixed-size chunks, each with its own random stream
spawned from the master seed, so results do not depend on how chunks are
scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel_model import POISSON_TAIL, SystemParams, transmittance
from .decoy_bounds import MeasuredStats
from .errors import ConfigurationError, DomainError, UsageError

__all__ = ["McConfig", "IntensityTally", "McStats", "simulate", "measured_stats_from_mc"]

CHUNK = 1 << 20


@dataclass(frozen=True)
class McConfig:
    pulses: int
    seed: int
    intensities: tuple[float, ...]
    distance_km: float
    workers: int = 1

    def __post_init__(self) -> None:
        if isinstance(self.pulses, bool) or int(self.pulses) != self.pulses or self.pulses < 1:
            raise DomainError(f"pulses must be a positive integer, got {self.pulses}")
        if not self.intensities:
            raise ConfigurationError("at least one intensity is required")
        if any(not (x >= 0 and math.isfinite(x)) for x in self.intensities):
            raise DomainError(f"intensities must be finite and >= 0, got {self.intensities}")
        if len(set(self.intensities)) != len(self.intensities):
            raise ConfigurationError("intensities must be distinct")
        if not self.distance_km >= 0:
            raise DomainError(f"distance must be >= 0 km, got {self.distance_km}")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "intensities", tuple(float(x) for x in self.intensities))


@dataclass(frozen=True)
class IntensityTally:
    """Counts for one intensity. Per-class arrays are indexed by photon number."""

    intensity: float
    pulses: int
    detected: int
    errors: int
    sent_by_n: np.ndarray = field(repr=False)
    detected_by_n: np.ndarray = field(repr=False)
    errors_by_n: np.ndarray = field(repr=False)

    @property
    def q_hat(self) -> float:
        return self.detected / self.pulses

    @property
    def e_hat(self) -> float:
        # no clicks -> no observed errors
        return self.errors / self.detected if self.detected else 0.0

    @property
    def q_se(self) -> float:
        q = self.q_hat
        return math.sqrt(q * (1 - q) / self.pulses)

    @property
    def e_se(self) -> float:
        if not self.detected:
            return 0.0
        e = self.e_hat
        return math.sqrt(e * (1 - e) / self.detected)

    def y_hat(self, n: int) -> float:
        sent = self._at(self.sent_by_n, n)
        return self._at(self.detected_by_n, n) / sent if sent else float("nan")

    def y_se(self, n: int) -> float:
        sent = self._at(self.sent_by_n, n)
        if not sent:
            return float("nan")
        y = self.y_hat(n)
        return math.sqrt(y * (1 - y) / sent)

    @staticmethod
    def _at(arr: np.ndarray, n: int) -> int:
        return int(arr[n]) if n < len(arr) else 0


@dataclass(frozen=True)
class McStats:
    config: McConfig
    eta: float
    tallies: dict[float, IntensityTally]

    def __getitem__(self, intensity: float) -> IntensityTally:
        try:
            return self.tallies[float(intensity)]
        except KeyError:
            raise UsageError(f"intensity {intensity} was not simulated") from None


def _photon_cdf(intensity: float) -> np.ndarray:
    """Cumulative Poisson table, cut where the survivor function drops below the tail."""
    pmf = [math.exp(-intensity)]
    cdf = [pmf[0]]
    n = 0
    while 1.0 - cdf[-1] >= POISSON_TAIL and n < 10_000:
        n += 1
        pmf.append(pmf[-1] * intensity / n)
        cdf.append(cdf[-1] + pmf[-1])
        if n > intensity and pmf[-1] < POISSON_TAIL:
            break
    return np.array(cdf)


def _run_chunk(seed_seq, size, cdf, eta_n, params):
    rng = np.random.default_rng(seed_seq)
    n = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(cdf) - 1)
    signal = rng.random(size) < eta_n[n]
    background = rng.random(size) < params.y0
    detected = signal | background
    u = rng.random(size)
    wrong = np.where(signal, u < params.e_detector, u < params.e0) & detected
    bins = len(cdf)
    return (
        np.bincount(n, minlength=bins),
        np.bincount(n[detected], minlength=bins),
        np.bincount(n[wrong], minlength=bins),
    )


def _simulate_intensity(intensity, pulses, seed_seq, eta, params, workers) -> IntensityTally:
    cdf = _photon_cdf(intensity)
    eta_n = 1.0 - (1.0 - eta) ** np.arange(len(cdf))
    sizes = [CHUNK] * (pulses // CHUNK)
    if pulses % CHUNK:
        sizes.append(pulses % CHUNK)
    children = seed_seq.spawn(len(sizes))
    jobs = list(zip(children, sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _run_chunk(job[0], job[1], cdf, eta_n, params), jobs))
    else:
        parts = [_run_chunk(s, size, cdf, eta_n, params) for s, size in jobs]
    sent = sum(p[0] for p in parts)
    det = sum(p[1] for p in parts)
    err = sum(p[2] for p in parts)
    return IntensityTally(
        intensity=intensity,
        pulses=pulses,
        detected=int(det.sum()),
        errors=int(err.sum()),
        sent_by_n=sent,
        detected_by_n=det,
        errors_by_n=err,
    )


def simulate(config: McConfig, params: SystemParams) -> McStats:
    """Simulate ``config.pulses`` pulses at every intensity in ``config``."""
    _, eta = transmittance(config.distance_km, params)
    root = np.random.SeedSequence(config.seed)
    streams = root.spawn(len(config.intensities))
    tallies = {
        x: _simulate_intensity(x, config.pulses, s, eta, params, config.workers)
        for x, s in zip(config.intensities, streams)
    }
    return McStats(config=config, eta=eta, tallies=tallies)


def measured_stats_from_mc(
    mc: McStats, mu: Optional[float] = None, nu: Optional[float] = None, e0: float = 0.5
) -> MeasuredStats:
    """Package empirical gains and QBERs for the decoy bounds.

    By default ``mu`` is the largest simulated intensity and ``nu`` the
    smallest non-zero one. If a vacuum intensity was simulated its gain is
    reported as the measured background yield.
    """
    nonzero = sorted(x for x in mc.tallies if x > 0)
    if mu is None:
        if not nonzero:
            raise UsageError("no signal intensity was simulated")
        mu = nonzero[-1]
    if nu is None:
        rest = [x for x in nonzero if x < mu]
        if not rest:
            raise UsageError("no decoy intensity below mu was simulated")
        nu = rest[0]
    sig, dec = mc[mu], mc[nu]
    vacuum = mc.tallies.get(0.0)
    return MeasuredStats(
        q_mu=sig.q_hat,
        e_mu=sig.e_hat,
        q_nu=dec.q_hat,
        e_nu=dec.e_hat,
        y0_known=vacuum.q_hat if vacuum is not None else None,
        e0=e0,
    )

