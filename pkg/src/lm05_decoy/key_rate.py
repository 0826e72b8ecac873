"""Secure key rate lower bounds.

The rate per signal pulse is the privacy-amplified single/double photon gain
minus the error-correction leakage ``Q_mu * f * H(E_mu)``. For a two-way
protocol the phase-error penalty is ``tau(e) = log2(1 + 4e - 4e^2)`` rather
than ``H(e)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channel_model import ChannelPoint, PulseSettings, SystemParams, error_i, gain_i, yield_i
from .decoy_bounds import BoundSet, Scheme
from .errors import DomainError, SchemeMismatchError

__all__ = [
    "RateResult",
    "shannon_h",
    "tau",
    "rate_r12sum",
    "rate_r12lump",
    "rate_infinite",
]


@dataclass(frozen=True)
class RateResult:
    """A key rate together with its ingredients.

    ``rate`` is floored at zero; ``raw_rate`` keeps the sign for diagnostics.
    """

    scheme: Scheme
    rate: float
    raw_rate: float
    ec_term: float
    pa_terms: Mapping[str, float] = field(default_factory=dict)
    f_ec: float = 1.0

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "rate": self.rate,
            "raw_rate": self.raw_rate,
            "ec_term": self.ec_term,
            "pa_terms": dict(self.pa_terms),
            "f_ec": self.f_ec,
        }


def _check_probability(e, name: str) -> np.ndarray:
    arr = np.asarray(e, dtype=float)
    if np.any(~((arr >= 0) & (arr <= 1))):
        raise DomainError(f"{name} argument must lie in [0, 1], got {e}")
    return arr


def _scalar_or_array(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def shannon_h(e):
    """Binary entropy in bits, with ``0 log 0 = 0``."""
    e = _check_probability(e, "shannon_h")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = -e * np.log2(e) - (1 - e) * np.log2(1 - e)
    return _scalar_or_array(np.where((e == 0) | (e == 1), 0.0, terms))


def tau(e):
    """Two-way privacy-amplification cost; saturates at 1 from ``e = 1/2``."""
    e = _check_probability(e, "tau")
    with np.errstate(invalid="ignore"):
        below = np.log2(1 + 4 * e - 4 * e**2)
    return _scalar_or_array(np.where(e >= 0.5, 1.0, below))


def ec_term(q_mu, e_mu, f_ec):
    return q_mu * f_ec * shannon_h(e_mu)


def pa_term(q, e):
    return q * (1 - tau(e))


def _finish(scheme: Scheme, ec: float, pa: dict[str, float], f_ec: float) -> RateResult:
    raw = -ec + sum(pa.values())
    return RateResult(scheme=scheme, rate=max(raw, 0.0), raw_rate=raw, ec_term=ec, pa_terms=pa, f_ec=f_ec)


def rate_r12sum(channel: ChannelPoint, bounds: BoundSet, params: SystemParams) -> RateResult:
    """Rate with separately bounded single- and double-photon contributions."""
    if bounds.scheme not in (Scheme.WV_R12SUM, Scheme.ONE_R12SUM):
        raise SchemeMismatchError(f"rate_r12sum cannot use {bounds.scheme.value} bounds")
    ec = float(ec_term(channel.q_mu, channel.e_mu, params.f_ec))
    pa = {
        "1": float(pa_term(bounds.q1_lower, bounds.e1_upper)),
        "2": float(pa_term(bounds.q2_lower, bounds.e2_upper)),
    }
    return _finish(bounds.scheme, ec, pa, params.f_ec)


def rate_r12lump(channel: ChannelPoint, bounds: BoundSet, params: SystemParams) -> RateResult:
    """Rate with the single- and double-photon gains lumped together."""
    if bounds.scheme not in (Scheme.WV_R12LUMP, Scheme.ONE_R12LUMP):
        raise SchemeMismatchError(f"rate_r12lump cannot use {bounds.scheme.value} bounds")
    ec = float(ec_term(channel.q_mu, channel.e_mu, params.f_ec))
    pa = {"12": float(pa_term(bounds.q12_lower, bounds.eps_upper))}
    return _finish(bounds.scheme, ec, pa, params.f_ec)


def rate_infinite(channel: ChannelPoint, params: SystemParams, pulses: PulseSettings) -> RateResult:
    """Reference rate with exact per-photon gains and error rates.

    Only the one- and two-photon classes contribute, as in the finite-decoy
    sum formula; higher photon numbers are given to the eavesdropper.
    """
    ec = float(ec_term(channel.q_mu, channel.e_mu, params.f_ec))
    pa = {}
    for i in (1, 2):
        if yield_i(params, channel.eta, i) == 0:
            pa[str(i)] = 0.0
            continue
        q = float(gain_i(params, pulses.mu, channel.eta, i))
        e = float(error_i(params, channel.eta, i))
        pa[str(i)] = float(pa_term(q, min(e, 1.0)))
    return _finish(Scheme.INFINITE, ec, pa, params.f_ec)
