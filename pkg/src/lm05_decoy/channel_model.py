"""Analytic source, channel and detector model for a two-way fiber link.

A weak coherent source emits Poisson-distributed photon numbers. Photons
travel Alice -> Bob -> Alice, so the fiber loss is paid twice. Detection of an
``i``-photon pulse is modelled as the union of an independent background
click (probability ``Y0``) and at least one of the ``i`` photons surviving
(probability ``eta_i``).

Everything here is a pure function of immutable records and accepts numpy
arrays wherever a scalar intensity or efficiency is expected.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError, DegenerateDenominatorError, DomainError

__all__ = [
    "SystemParams",
    "PulseSettings",
    "ChannelPoint",
    "default_params",
    "load_params",
    "transmittance",
    "eta_i",
    "yield_i",
    "gain_i",
    "error_i",
    "overall_gain_qber",
    "channel_point",
    "photon_cutoff",
]

POISSON_TAIL = 1e-15
MIN_PHOTON_CUTOFF = 60


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the link.

    Attributes:
        alpha: Fiber loss coefficient in dB/km.
        eta_bob: Transmittance of Bob's apparatus times detector efficiency.
        y0: Background detection probability per pulse.
        e0: Error rate of background clicks.
        e_detector: Probability that a signal photon lands in the wrong detector.
        f_ec: Error-correction inefficiency (>= 1).
    """

    alpha: float
    eta_bob: float
    y0: float
    e0: float
    e_detector: float
    f_ec: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigurationError(f"{f.name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigurationError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if self.alpha < 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        for name in ("eta_bob", "y0", "e0", "e_detector"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")
        if self.f_ec < 1:
            raise ConfigurationError(f"f_ec must be >= 1, got {self.f_ec}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SystemParams":
        """Build from a mapping whose keys are exactly the field names."""
        if not isinstance(data, Mapping):
            raise ConfigurationError("parameter document must be a JSON object")
        expected = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - expected)
        missing = sorted(expected - set(data))
        if unknown:
            raise ConfigurationError(f"unknown parameter keys: {', '.join(unknown)}")
        if missing:
            raise ConfigurationError(f"missing parameter keys: {', '.join(missing)}")
        return cls(**{name: data[name] for name in expected})

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def replace(self, **changes: float) -> "SystemParams":
        return SystemParams(**{**self.to_dict(), **changes})


@dataclass(frozen=True)
class PulseSettings:
    """Signal intensity ``mu`` and weak-decoy intensity ``nu``.

    The vacuum decoy (second decoy intensity) is always zero and is not
    represented explicitly.
    """

    mu: float
    nu: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and math.isfinite(self.nu)):
            raise DomainError("intensities must be finite")
        if self.mu <= 0:
            raise DomainError(f"mu must be > 0, got {self.mu}")
        if not 0 <= self.nu < self.mu:
            raise DomainError(f"need 0 <= nu < mu, got mu={self.mu}, nu={self.nu}")


@dataclass(frozen=True)
class ChannelPoint:
    """Per-distance quantities Alice and Bob would measure."""

    distance_km: float
    t_c: float
    eta: float
    mu: float
    nu: float
    q_mu: float
    e_mu: float
    q_nu: float
    e_nu: float


def _read_defaults_document() -> dict[str, Any]:
    text = resources.files("lm05_decoy").joinpath("data/gys_params.json").read_text()
    return json.loads(text)


def default_params() -> SystemParams:
    """The GYS parameter set shipped with the package."""
    return SystemParams.from_mapping(_read_defaults_document()["params"])


def load_params(path: str | Path) -> SystemParams:
    """Load a flat JSON object with exactly the :class:`SystemParams` fields."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read parameter file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"parameter file {path} is not valid JSON: {exc}") from exc
    return SystemParams.from_mapping(data)


def transmittance(l_c, params: SystemParams) -> tuple[float, float]:
    """Two-way channel transmittance ``t_c`` and overall efficiency ``eta``.

    The loss ``alpha * l_c`` dB is counted once per direction.
    """
    if not np.all(np.asarray(l_c) >= 0):
        raise DomainError(f"distance must be >= 0 km, got {l_c}")
    t_c = 10.0 ** (-(2.0 * params.alpha * np.asarray(l_c, dtype=float)) / 10.0)
    if t_c.ndim == 0:
        t_c = float(t_c)
    return t_c, t_c * params.eta_bob


def _check_eta(eta):
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(~((eta_arr >= 0) & (eta_arr <= 1))):
        raise DomainError(f"eta must lie in [0, 1], got {eta}")


def eta_i(eta, i):
    """Probability that at least one of ``i`` photons is detected."""
    _check_eta(eta)
    if np.any(np.asarray(i) < 0):
        raise DomainError(f"photon number must be >= 0, got {i}")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -np.expm1(np.multiply(i, np.log1p(-np.asarray(eta, dtype=float))))
    # i = 1 is exactly eta; i = 0 avoids 0 * log(0) when eta = 1
    out = np.where(np.asarray(i) == 1, eta, np.where(np.asarray(i) == 0, 0.0, out))
    return float(out) if out.ndim == 0 else out


def yield_i(params: SystemParams, eta, i):
    """Exact ``i``-photon yield ``Y0 + eta_i - eta_i * Y0``."""
    ei = eta_i(eta, i)
    return params.y0 + ei - ei * params.y0


def poisson_weight(mu, i):
    return np.exp(-mu) * np.power(mu, i) / _factorial(i)


def _factorial(i):
    if np.ndim(i) == 0:
        return float(math.factorial(int(i)))
    return np.array([math.factorial(int(k)) for k in np.ravel(i)], dtype=float).reshape(np.shape(i))


def gain_i(params: SystemParams, mu, eta, i):
    """Joint probability of emitting ``i`` photons and getting a click."""
    if np.any(np.asarray(mu) <= 0):
        raise DomainError(f"mu must be > 0, got {mu}")
    return yield_i(params, eta, i) * poisson_weight(mu, i)


def error_i(params: SystemParams, eta, i):
    """Error rate of detected ``i``-photon pulses.

    The numerator ``e0*Y0 + e_detector*eta_i`` is divided by the yield
    ``Y_i``; dividing by the Poisson-weighted gain instead would not give a
    probability.
    """
    y = np.asarray(yield_i(params, eta, i), dtype=float)
    if np.any(y == 0):
        raise DegenerateDenominatorError("error rate undefined: Y_i = 0 (no clicks at all)")
    out = (params.e0 * params.y0 + params.e_detector * eta_i(eta, i)) / y
    return float(out) if out.ndim == 0 else out


def gain_qber_kernel(eta, intensity, y0, e0, e_detector):
    """Array form of :func:`overall_gain_qber` with no validation."""
    signal = -np.expm1(-np.multiply(eta, intensity))
    q = y0 + (1.0 - y0) * signal
    with np.errstate(divide="ignore", invalid="ignore"):
        e = (e0 * y0 + e_detector * signal) / q
    return q, e


def overall_gain_qber(params: SystemParams, intensity, eta):
    """Overall gain and QBER of pulses with mean photon number ``intensity``.

    The gain is the exact Poisson mixture of :func:`yield_i`, i.e.
    ``1 - (1 - Y0) exp(-eta * intensity)``.
    """
    if np.any(np.asarray(intensity) < 0):
        raise DomainError(f"intensity must be >= 0, got {intensity}")
    _check_eta(eta)
    q, e = gain_qber_kernel(eta, intensity, params.y0, params.e0, params.e_detector)
    if np.any(np.asarray(q) == 0):
        raise DegenerateDenominatorError("overall gain is zero (Y0 = 0 and eta*intensity = 0)")
    if np.ndim(q) == 0:
        return float(q), float(e)
    return q, e


def channel_point(l_c: float, params: SystemParams, pulses: PulseSettings) -> ChannelPoint:
    """Evaluate the channel at distance ``l_c`` for both intensities."""
    t_c, eta = transmittance(l_c, params)
    q_mu, e_mu = overall_gain_qber(params, pulses.mu, eta)
    q_nu, e_nu = overall_gain_qber(params, pulses.nu, eta)
    return ChannelPoint(
        distance_km=float(l_c),
        t_c=t_c,
        eta=eta,
        mu=pulses.mu,
        nu=pulses.nu,
        q_mu=q_mu,
        e_mu=e_mu,
        q_nu=q_nu,
        e_nu=e_nu,
    )


def photon_cutoff(mu: float) -> int:
    """Largest photon number kept when summing over a Poisson(``mu``) source.

    Stops at the first ``i`` beyond the mode whose weight drops below 1e-15,
    and never below 60.
    """
    if mu < 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    if mu == 0:
        return MIN_PHOTON_CUTOFF
    i = max(int(math.floor(mu)), 0)
    log_mu = math.log(mu)
    while -mu + i * log_mu - math.lgamma(i + 1) >= math.log(POISSON_TAIL):
        i += 1
    return max(i, MIN_PHOTON_CUTOFF)
