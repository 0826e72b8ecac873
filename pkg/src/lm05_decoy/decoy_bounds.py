"""Decoy-state bounds for the two-way protocol.

Two families of key-rate formula are supported. The *sum* family bounds the
single-photon and double-photon contributions separately. The *lump* family
bounds the combined one-plus-two photon yield. Each family comes in two
flavours:

* weak+vacuum: a weak decoy ``nu`` plus a vacuum decoy, so the background
  yield ``Y0`` is measured directly;
* one decoy: only the weak decoy, so ``Y0`` is replaced by the upper bound
  ``E_mu Q_mu e^mu / e0`` in the yield bounds and by the lower bound ``0``
  in the upper yield and error-rate bounds.

Every formula is evaluated literally, then clamped to its physical range.
Clamped fields are recorded in :attr:`BoundSet.clamped` together with their
raw value so that callers can tell the two apart.

The ``*_raw`` kernels and :func:`bound_arrays` work elementwise on numpy
arrays. The optimizer uses them to evaluate whole intensity grids in one call.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Mapping, Optional

import numpy as np

from .channel_model import PulseSettings
from .errors import DomainError, InvalidIntensitiesError, UsageError

__all__ = [
    "Scheme",
    "MeasuredStats",
    "BoundSet",
    "clamp",
    "wv_single_photon",
    "wv_double_photon",
    "y1_upper",
    "wv_error_bounds",
    "wv_lumped",
    "one_decoy_y0_bounds",
    "wv_r12sum",
    "wv_r12lump",
    "one_decoy_r12sum",
    "one_decoy_r12lump",
    "compute_bounds",
    "bound_arrays",
]

E_MAX = 0.5


class Scheme(str, enum.Enum):
    INFINITE = "infinite"
    WV_R12SUM = "wv-r12sum"
    WV_R12LUMP = "wv-r12lump"
    ONE_R12SUM = "one-r12sum"
    ONE_R12LUMP = "one-r12lump"

    @property
    def is_finite(self) -> bool:
        return self is not Scheme.INFINITE

    @property
    def lumped(self) -> bool:
        return self in (Scheme.WV_R12LUMP, Scheme.ONE_R12LUMP)

    @property
    def knows_y0(self) -> bool:
        """True when a vacuum decoy lets the parties measure ``Y0``."""
        return self in (Scheme.WV_R12SUM, Scheme.WV_R12LUMP)

    @classmethod
    def parse(cls, name: "str | Scheme") -> "Scheme":
        if isinstance(name, Scheme):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise UsageError(f"unknown scheme {name!r}; choose from {', '.join(m.value for m in cls)}")


@dataclass(frozen=True)
class MeasuredStats:
    """Gains and QBERs observed for the signal and weak-decoy intensities.

    ``y0_known`` is the background yield measured with the vacuum decoy; it is
    ``None`` for one-decoy schemes.
    """

    q_mu: float
    e_mu: float
    q_nu: float
    e_nu: float
    y0_known: Optional[float] = None
    e0: float = 0.5

    def __post_init__(self) -> None:
        for name in ("q_mu", "e_mu", "q_nu", "e_nu"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
        if self.y0_known is not None and not 0.0 <= self.y0_known <= 1.0:
            raise DomainError(f"y0_known must lie in [0, 1], got {self.y0_known}")
        if not 0.0 < self.e0 <= 1.0:
            raise DomainError(f"e0 must lie in (0, 1], got {self.e0}")


@dataclass(frozen=True)
class BoundSet:
    """Bounds produced by one decoy scheme. Fields the scheme does not use stay ``None``."""

    scheme: Scheme
    y1_lower: Optional[float] = None
    q1_lower: Optional[float] = None
    y1_upper: Optional[float] = None
    y2_lower: Optional[float] = None
    q2_lower: Optional[float] = None
    e1_upper: Optional[float] = None
    e2_upper: Optional[float] = None
    y12_lower: Optional[float] = None
    q12_lower: Optional[float] = None
    eps_upper: Optional[float] = None
    y0_upper: Optional[float] = None
    y0_lower: Optional[float] = None
    y2_inf: Optional[float] = None
    clamped: frozenset = frozenset()
    raw: Mapping[str, float] = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        """The populated bound fields, in declaration order."""
        skip = {"scheme", "clamped", "raw"}
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in skip and getattr(self, f.name) is not None
        }

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            **self.values(),
            "clamped": sorted(self.clamped),
            "raw": {k: self.raw[k] for k in sorted(self.raw)},
        }


def clamp(x, lo, hi):
    """Clip ``x`` into ``[lo, hi]`` and report which entries moved.

    Returns ``(clipped, flag)``. NaN inputs are mapped to ``lo`` and flagged.
    """
    x = np.asarray(x, dtype=float)
    out = np.where(np.isnan(x), lo, np.minimum(np.maximum(x, lo), hi))
    return out, out != x


# -- raw kernels -------------------------------------------------------------
# Plain transcriptions; no validation, no clamping.


def y1_lower_raw(q_mu, q_nu, mu, nu, y0):
    """Single-photon yield lower bound; ``y0`` is ``Y0`` or its upper bound."""
    bracket = q_nu * np.exp(nu) - q_mu * np.exp(mu) * nu**2 / mu**2 - (mu**2 - nu**2) / mu**2 * y0
    return mu / (mu * nu - nu**2) * bracket


def y1_upper_raw(q_nu, nu, y0_bound, y2_inf):
    """Single-photon yield upper bound; ``y0_bound`` is ``Y0`` or its lower bound."""
    return (2 * q_nu * np.exp(nu) - 2 * y0_bound - y2_inf * nu**2) / (2 * nu)


def double_photon_bracket(q_mu, q_nu, mu, nu, y0, y1_up):
    return (
        q_nu * np.exp(nu)
        - nu**3 / mu**3 * q_mu * np.exp(mu)
        - (mu**3 - nu**3) / mu**3 * y0
        - (nu * mu**2 - nu**3) / mu**2 * y1_up
    )


def y2_lower_raw(q_mu, q_nu, mu, nu, y0, y1_up):
    bracket = double_photon_bracket(q_mu, q_nu, mu, nu, y0, y1_up)
    return 2 * mu * bracket / (nu**2 * mu - nu**3)


def e1_upper_raw(q_mu, e_mu, q_nu, e_nu, mu, nu, e0, y0_bound, y1_low):
    num = e_nu * q_nu * np.exp(nu) * mu**2 - e_mu * q_mu * np.exp(mu) * nu**2 - e0 * y0_bound * (mu**2 - nu**2)
    return num / (y1_low * (nu * mu**2 - mu * nu**2))


def e2_upper_raw(q_mu, e_mu, q_nu, e_nu, mu, nu, e0, y0_bound, y2_low):
    # numerator and denominator are both negative for 0 < nu < mu
    num = 2 * (e_nu * q_nu * np.exp(nu) * mu - e_mu * q_mu * np.exp(mu) * nu - e0 * y0_bound * (mu - nu))
    return num / (y2_low * (mu * nu**2 - nu * mu**2))


def y12_lower_raw(q_mu, q_nu, mu, nu, y0, y1_low):
    num = (
        mu**3 * np.exp(nu) * q_nu
        - (mu**3 - nu**3) * y0
        - nu**3 * q_mu * np.exp(mu)
        + (nu**3 * mu - 0.5 * nu**3 * mu**2) * y1_low
    )
    return num / (mu**3 * (nu - 0.5 * nu**3 / mu))


def q12_lower_raw(mu, y12_low, y1_low):
    return (y12_low / 2 * mu**2 + (y1_low * mu - y1_low * mu**2 / 2)) * np.exp(-mu)


def eps_upper_raw(q_mu, e_mu, mu, e0, y0_sub, q12_low):
    return (e_mu * q_mu - e0 * y0_sub * np.exp(-mu)) / q12_low


def y0_upper_raw(q_mu, e_mu, mu, e0):
    return e_mu * q_mu * np.exp(mu) / e0


# -- array chain -------------------------------------------------------------


def _check_intensities(mu, nu, lumped: bool = False) -> None:
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if not np.all((nu > 0) & (nu < mu)):
        raise InvalidIntensitiesError("decoy bounds need 0 < nu < mu")
    if lumped and not np.all(mu**3 * (nu - 0.5 * nu**3 / mu) > 0):
        raise InvalidIntensitiesError("lumped bound denominator mu^3 (nu - nu^3 / (2 mu)) must be > 0")


def bound_arrays(scheme: Scheme, q_mu, e_mu, q_nu, e_nu, mu, nu, *, y0_known=None, e0=0.5, y2_inf=None):
    """Evaluate every bound of ``scheme`` elementwise.

    Returns ``(values, flags, raws)``: dicts keyed by :class:`BoundSet` field
    name holding the clamped values, the clamp flags and the pre-clamp values.
    Intensities are validated; the measured quantities are not.
    """
    scheme = Scheme.parse(scheme)
    if not scheme.is_finite:
        raise UsageError("the infinite-decoy scheme has no finite bounds")
    _check_intensities(mu, nu, lumped=scheme.lumped)

    values: dict = {}
    flags: dict = {}
    raws: dict = {}

    def put(name, raw, lo, hi):
        val, flag = clamp(raw, lo, hi)
        values[name], flags[name], raws[name] = val, flag, np.asarray(raw, dtype=float)
        return val

    def put_error(name, raw, guard):
        # no surviving signal -> worst-case error rate
        with np.errstate(divide="ignore", invalid="ignore"):
            val, flag = clamp(raw, 0.0, E_MAX)
        ok = guard > 0
        values[name] = np.where(ok, val, E_MAX)
        flags[name] = np.where(ok, flag, True)
        raws[name] = np.asarray(raw, dtype=float)
        return values[name]

    if scheme.knows_y0:
        if y0_known is None:
            raise UsageError(f"{scheme.value} needs the vacuum-decoy yield y0_known")
        y0_for_lower = y0_known
        y0_for_upper = y0_known
    else:
        y0_up = put("y0_upper", y0_upper_raw(q_mu, e_mu, mu, e0), 0.0, 1.0)
        values["y0_lower"] = np.zeros_like(y0_up)
        flags["y0_lower"] = np.zeros_like(y0_up, dtype=bool)
        y0_for_lower = y0_up
        y0_for_upper = values["y0_lower"]

    y1_low = put("y1_lower", y1_lower_raw(q_mu, q_nu, mu, nu, y0_for_lower), 0.0, 1.0)

    if scheme.lumped:
        y12_low = put("y12_lower", y12_lower_raw(q_mu, q_nu, mu, nu, y0_for_lower, y1_low), 0.0, 1.0)
        q12_low = put("q12_lower", q12_lower_raw(mu, y12_low, y1_low), 0.0, 1.0)
        # the one-decoy effective error takes Y0 = 0
        y0_sub = y0_known if scheme.knows_y0 else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            eps_raw = eps_upper_raw(q_mu, e_mu, mu, e0, y0_sub, q12_low)
        put_error("eps_upper", eps_raw, q12_low)
        return values, flags, raws

    if y2_inf is None:
        raise UsageError(f"{scheme.value} needs the infinite-decoy double-photon yield y2_inf")
    values["y2_inf"] = np.broadcast_to(np.asarray(y2_inf, dtype=float), y1_low.shape).copy()
    flags["y2_inf"] = np.zeros_like(y1_low, dtype=bool)
    values["q1_lower"] = mu * np.exp(-mu) * y1_low
    flags["q1_lower"] = np.zeros_like(y1_low, dtype=bool)
    y1_up = put("y1_upper", y1_upper_raw(q_nu, nu, y0_for_upper, y2_inf), 0.0, 1.0)
    # lower edge of the y1_upper clamp is y1_lower itself
    raised = y1_up < y1_low
    values["y1_upper"] = np.where(raised, y1_low, y1_up)
    flags["y1_upper"] = flags["y1_upper"] | raised
    y1_up = values["y1_upper"]

    y2_low = put("y2_lower", y2_lower_raw(q_mu, q_nu, mu, nu, y0_for_lower, y1_up), 0.0, 1.0)
    values["q2_lower"] = mu**2 / 2 * np.exp(-mu) * y2_low
    flags["q2_lower"] = np.zeros_like(y2_low, dtype=bool)

    with np.errstate(divide="ignore", invalid="ignore"):
        e1_raw = e1_upper_raw(q_mu, e_mu, q_nu, e_nu, mu, nu, e0, y0_for_upper, y1_low)
        e2_raw = e2_upper_raw(q_mu, e_mu, q_nu, e_nu, mu, nu, e0, y0_for_upper, y2_low)
    put_error("e1_upper", e1_raw, y1_low)
    put_error("e2_upper", e2_raw, y2_low)
    return values, flags, raws


def _bound_set(scheme: Scheme, stats: MeasuredStats, pulses: PulseSettings, y2_inf=None) -> BoundSet:
    values, flags, raws = bound_arrays(
        scheme,
        stats.q_mu,
        stats.e_mu,
        stats.q_nu,
        stats.e_nu,
        pulses.mu,
        pulses.nu,
        y0_known=stats.y0_known,
        e0=stats.e0,
        y2_inf=y2_inf,
    )
    clamped = frozenset(name for name, flag in flags.items() if bool(flag))
    return BoundSet(
        scheme=scheme,
        clamped=clamped,
        raw={name: float(raws[name]) for name in clamped if name in raws},
        **{name: float(v) for name, v in values.items()},
    )


# -- single-quantity operations ----------------------------------------------


def _require_y0(stats: MeasuredStats) -> float:
    if stats.y0_known is None:
        raise UsageError("weak+vacuum bounds need stats.y0_known")
    return stats.y0_known


def _y1_lower(stats: MeasuredStats, pulses: PulseSettings) -> float:
    """Clamped single-photon lower bound using whichever ``Y0`` estimate the stats allow."""
    if stats.y0_known is not None:
        y0 = stats.y0_known
    else:
        y0 = float(clamp(y0_upper_raw(stats.q_mu, stats.e_mu, pulses.mu, stats.e0), 0.0, 1.0)[0])
    return float(clamp(y1_lower_raw(stats.q_mu, stats.q_nu, pulses.mu, pulses.nu, y0), 0.0, 1.0)[0])


def wv_single_photon(stats: MeasuredStats, pulses: PulseSettings) -> tuple[float, float]:
    """Lower bounds ``(Y1L, Q1L)`` on the single-photon yield and gain."""
    _check_intensities(pulses.mu, pulses.nu)
    _require_y0(stats)
    y1 = _y1_lower(stats, pulses)
    return y1, float(pulses.mu * np.exp(-pulses.mu) * y1)


def wv_double_photon(stats: MeasuredStats, pulses: PulseSettings, y1_upper: float) -> tuple[float, float]:
    """Lower bounds ``(Y2L, Q2L)`` on the double-photon yield and gain."""
    _check_intensities(pulses.mu, pulses.nu)
    y0 = _require_y0(stats)
    if not np.isfinite(y1_upper):
        raise DomainError(f"y1_upper must be finite, got {y1_upper}")
    raw = y2_lower_raw(stats.q_mu, stats.q_nu, pulses.mu, pulses.nu, y0, y1_upper)
    y2 = float(clamp(raw, 0.0, 1.0)[0])
    return y2, float(pulses.mu**2 / 2 * np.exp(-pulses.mu) * y2)


def y1_upper(stats: MeasuredStats, pulses: PulseSettings, y2_inf: float, y0_bound: float) -> float:
    """Upper bound on the single-photon yield.

    ``y0_bound`` is the measured ``Y0`` for weak+vacuum and the lower bound
    ``Y0L = 0`` for one decoy. The result is clamped to ``[Y1L, 1]``.
    """
    if not pulses.nu > 0:
        raise InvalidIntensitiesError("y1_upper needs nu > 0")
    raw = float(y1_upper_raw(stats.q_nu, pulses.nu, y0_bound, y2_inf))
    if pulses.nu < pulses.mu:
        low = _y1_lower(stats, pulses)
    else:
        low = 0.0
    return min(max(raw, low), 1.0)


def _error_bounds(stats, pulses, y1_low, y2_low, y0_bound) -> tuple[float, float]:
    args = (stats.q_mu, stats.e_mu, stats.q_nu, stats.e_nu, pulses.mu, pulses.nu, stats.e0, y0_bound)
    if y1_low > 0:
        e1 = float(clamp(e1_upper_raw(*args, y1_low), 0.0, E_MAX)[0])
    else:
        e1 = E_MAX
    if y2_low > 0:
        e2 = float(clamp(e2_upper_raw(*args, y2_low), 0.0, E_MAX)[0])
    else:
        e2 = E_MAX
    return e1, e2


def wv_error_bounds(stats: MeasuredStats, pulses: PulseSettings, y1_lower: float, y2_lower: float) -> tuple[float, float]:
    """Upper bounds ``(e1U, e2U)`` on the single- and double-photon error rates.

    A non-positive yield bound yields the worst case 1/2 instead of raising.
    """
    _check_intensities(pulses.mu, pulses.nu)
    return _error_bounds(stats, pulses, y1_lower, y2_lower, _require_y0(stats))


def wv_lumped(stats: MeasuredStats, pulses: PulseSettings, y1_lower: float) -> tuple[float, float, float]:
    """Lumped bounds ``((Y1+Y2)L, Q12L, epsU)`` for weak+vacuum."""
    _check_intensities(pulses.mu, pulses.nu, lumped=True)
    y0 = _require_y0(stats)
    mu, nu = pulses.mu, pulses.nu
    y12 = float(clamp(y12_lower_raw(stats.q_mu, stats.q_nu, mu, nu, y0, y1_lower), 0.0, 1.0)[0])
    q12 = float(clamp(q12_lower_raw(mu, y12, y1_lower), 0.0, 1.0)[0])
    if q12 > 0:
        eps = float(clamp(eps_upper_raw(stats.q_mu, stats.e_mu, mu, stats.e0, y0, q12), 0.0, E_MAX)[0])
    else:
        eps = E_MAX
    return y12, q12, eps


def one_decoy_y0_bounds(stats: MeasuredStats, pulses: PulseSettings) -> tuple[float, float]:
    """Background-yield bounds ``(Y0U, Y0L)`` when no vacuum decoy is sent.

    ``Y0U = E_mu Q_mu e^mu / e0`` attributes every error to background clicks;
    ``Y0L`` is 0.
    """
    return float(y0_upper_raw(stats.q_mu, stats.e_mu, pulses.mu, stats.e0)), 0.0


def wv_r12sum(stats: MeasuredStats, pulses: PulseSettings, y2_inf: float) -> BoundSet:
    return _bound_set(Scheme.WV_R12SUM, stats, pulses, y2_inf)


def wv_r12lump(stats: MeasuredStats, pulses: PulseSettings) -> BoundSet:
    return _bound_set(Scheme.WV_R12LUMP, stats, pulses)


def one_decoy_r12sum(stats: MeasuredStats, pulses: PulseSettings, y2_inf: float) -> BoundSet:
    """Separate single/double photon bounds with one decoy.

    ``Y0U`` replaces ``Y0`` in the yield and gain bounds; ``Y0L = 0`` is used
    in ``Y1U`` and in both error-rate bounds.
    """
    return _bound_set(Scheme.ONE_R12SUM, stats, pulses, y2_inf)


def one_decoy_r12lump(stats: MeasuredStats, pulses: PulseSettings) -> BoundSet:
    """Lumped bounds with one decoy; ``Y0U`` enters the yield bounds, ``Y0 = 0`` the error bound."""
    return _bound_set(Scheme.ONE_R12LUMP, stats, pulses)


def compute_bounds(scheme, stats: MeasuredStats, pulses: PulseSettings, y2_inf: Optional[float] = None) -> BoundSet:
    """Dispatch to the bound set of ``scheme``."""
    scheme = Scheme.parse(scheme)
    if not scheme.is_finite:
        raise UsageError("the infinite-decoy scheme has no finite bounds")
    if scheme.knows_y0 and stats.y0_known is None:
        raise UsageError(f"{scheme.value} needs stats.y0_known")
    return _bound_set(scheme, stats, pulses, y2_inf if not scheme.lumped else None)
