"""Per-distance intensity optimization, distance sweeps and cutoff search.

The key rate surface has kinks wherever a bound hits its clamp, so the search
is derivative free: an exhaustive grid over ``(mu, nu/mu)`` followed by a few
rounds of grid search on a window shrunk around the incumbent. A final
hill climb on the finest grid spacing, using the scalar formula chain, makes
sure no neighbouring cell beats the reported optimum. The decoy
intensity is searched as a fraction of ``mu`` so that ``nu < mu`` holds by
construction. The infinite-decoy reference only depends on ``mu``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .channel_model import (
    ChannelPoint,
    PulseSettings,
    SystemParams,
    channel_point,
    gain_qber_kernel,
    transmittance,
    yield_i,
)
from .decoy_bounds import BoundSet, MeasuredStats, Scheme, bound_arrays, compute_bounds
from .errors import ConfigurationError, DomainError
from .key_rate import RateResult, ec_term, pa_term, rate_infinite, rate_r12lump, rate_r12sum

__all__ = [
    "OptimizeConfig",
    "SweepPoint",
    "exact_stats",
    "evaluate_point",
    "raw_rate_surface",
    "optimize_at_distance",
    "sweep",
    "max_secure_distance",
]


@dataclass(frozen=True)
class OptimizeConfig:
    mu_range: tuple[float, float] = (0.01, 1.0)
    # (min fraction, max fraction) of mu
    nu_range: tuple[float, float] = (0.005, 0.5)
    grid_size: int = 60
    refine_rounds: int = 3
    shrink: float = 5.0
    step_km: float = 1.0
    zero_threshold: float = 0.0
    search_limit_km: float = 500.0
    resolution_km: float = 0.1
    workers: int = 1

    def __post_init__(self) -> None:
        mu_min, mu_max = self.mu_range
        frac_min, frac_max = self.nu_range
        if not (0 < mu_min < mu_max and math.isfinite(mu_max)):
            raise ConfigurationError(f"need 0 < mu_min < mu_max, got {self.mu_range}")
        if not 0 < frac_min < frac_max < 1:
            raise ConfigurationError(f"need 0 < nu fraction min < max < 1, got {self.nu_range}")
        if self.grid_size < 2:
            raise ConfigurationError("grid_size must be >= 2")
        if self.refine_rounds < 0:
            raise ConfigurationError("refine_rounds must be >= 0")
        if self.shrink <= 1:
            raise ConfigurationError("shrink must be > 1")
        if not self.step_km > 0:
            raise ConfigurationError("step_km must be > 0")
        if not (self.resolution_km > 0 and self.search_limit_km >= 0):
            raise ConfigurationError("resolution_km must be > 0 and search_limit_km >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def fine_cell(self) -> tuple[float, float]:
        """Grid spacing of the last refinement round for ``mu`` and the ``nu`` fraction."""
        scale = self.shrink**self.refine_rounds * (self.grid_size - 1)
        return (
            (self.mu_range[1] - self.mu_range[0]) / scale,
            (self.nu_range[1] - self.nu_range[0]) / scale,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepPoint:
    distance_km: float
    scheme: Scheme
    mu_opt: float
    nu_opt: Optional[float]
    rate: float
    raw_rate: float
    clamp_flags: tuple[str, ...] = ()


def exact_stats(channel: ChannelPoint, params: SystemParams, scheme: Scheme) -> MeasuredStats:
    """Noise-free measurements at ``channel``; ``Y0`` is revealed only to vacuum-decoy schemes."""
    return MeasuredStats(
        q_mu=channel.q_mu,
        e_mu=channel.e_mu,
        q_nu=channel.q_nu,
        e_nu=channel.e_nu,
        y0_known=params.y0 if scheme.knows_y0 else None,
        e0=params.e0,
    )


def evaluate_point(
    scheme, l_c: float, mu: float, nu: Optional[float], params: SystemParams
) -> tuple[ChannelPoint, Optional[BoundSet], RateResult]:
    """Run the full formula chain at one operating point."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.INFINITE:
        pulses = PulseSettings(mu, 0.0)
        channel = channel_point(l_c, params, pulses)
        return channel, None, rate_infinite(channel, params, pulses)
    pulses = PulseSettings(mu, nu)
    channel = channel_point(l_c, params, pulses)
    stats = exact_stats(channel, params, scheme)
    y2_inf = float(yield_i(params, channel.eta, 2))
    bounds = compute_bounds(scheme, stats, pulses, y2_inf)
    if scheme.lumped:
        return channel, bounds, rate_r12lump(channel, bounds, params)
    return channel, bounds, rate_r12sum(channel, bounds, params)


def raw_rate_surface(scheme, l_c: float, mu, nu, params: SystemParams) -> np.ndarray:
    """Unfloored key rate at every ``(mu, nu)`` pair; ``nu`` is ignored for the infinite scheme.

    Non-finite values (from degenerate inputs) are returned as ``-inf``.
    """
    scheme = Scheme.parse(scheme)
    mu = np.asarray(mu, dtype=float)
    _, eta = transmittance(l_c, params)
    q_mu, e_mu = gain_qber_kernel(eta, mu, params.y0, params.e0, params.e_detector)
    ec = ec_term(q_mu, np.clip(e_mu, 0.0, 1.0), params.f_ec)
    if scheme is Scheme.INFINITE:
        pa = np.zeros_like(mu)
        for i in (1, 2):
            y = float(yield_i(params, eta, i))
            if y == 0:
                continue
            e_i = (params.e0 * params.y0 + params.e_detector * (1 - (1 - eta) ** i)) / y
            q_i = y * mu**i / math.factorial(i) * np.exp(-mu)
            pa = pa + pa_term(q_i, min(e_i, 1.0))
    else:
        nu = np.asarray(nu, dtype=float)
        q_nu, e_nu = gain_qber_kernel(eta, nu, params.y0, params.e0, params.e_detector)
        values, _, _ = bound_arrays(
            scheme,
            q_mu,
            e_mu,
            q_nu,
            e_nu,
            mu,
            nu,
            y0_known=params.y0 if scheme.knows_y0 else None,
            e0=params.e0,
            y2_inf=float(yield_i(params, eta, 2)),
        )
        if scheme.lumped:
            pa = pa_term(values["q12_lower"], values["eps_upper"])
        else:
            pa = pa_term(values["q1_lower"], values["e1_upper"]) + pa_term(values["q2_lower"], values["e2_upper"])
    raw = pa - ec
    return np.where(np.isfinite(raw), raw, -np.inf)


def _window(center: float, width: float, lo: float, hi: float, n: int) -> np.ndarray:
    a = max(lo, center - width / 2)
    b = min(hi, center + width / 2)
    return np.linspace(a, b, n)


def _best_on_grid(scheme, l_c, mus, fracs, params):
    """Best ``(raw, mu, frac)`` on the product grid; ties go to smaller mu, then smaller frac."""
    if fracs is None:
        raw = raw_rate_surface(scheme, l_c, mus, None, params)
        k = int(np.argmax(raw))
        return float(raw[k]), float(mus[k]), None
    mu_grid, frac_grid = np.meshgrid(mus, fracs, indexing="ij")
    raw = raw_rate_surface(scheme, l_c, mu_grid, mu_grid * frac_grid, params)
    k = int(np.argmax(raw))
    i, j = np.unravel_index(k, raw.shape)
    return float(raw[i, j]), float(mus[i]), float(fracs[j])


def _better(cand, incumbent) -> bool:
    raw_c, mu_c, f_c = cand
    raw_i, mu_i, f_i = incumbent
    if raw_c != raw_i:
        return raw_c > raw_i
    if mu_c != mu_i:
        return mu_c < mu_i
    return (f_c or 0.0) < (f_i or 0.0)


def optimize_at_distance(l_c: float, scheme, params: SystemParams, config: OptimizeConfig = OptimizeConfig()) -> SweepPoint:
    """Maximize the raw key rate over the intensities at one distance."""
    scheme = Scheme.parse(scheme)
    if not l_c >= 0:
        raise DomainError(f"distance must be >= 0 km, got {l_c}")
    mu_lo, mu_hi = config.mu_range
    f_lo, f_hi = config.nu_range
    n = config.grid_size
    finite = scheme.is_finite

    mus = np.linspace(mu_lo, mu_hi, n)
    fracs = np.linspace(f_lo, f_hi, n) if finite else None
    best = _best_on_grid(scheme, l_c, mus, fracs, params)
    if best[0] == -np.inf:
        raise ConfigurationError(f"no feasible intensities for {scheme.value} at {l_c} km")

    mu_width, f_width = mu_hi - mu_lo, f_hi - f_lo
    for _ in range(config.refine_rounds):
        mu_width /= config.shrink
        f_width /= config.shrink
        mus = _window(best[1], mu_width, mu_lo, mu_hi, n)
        fracs = _window(best[2], f_width, f_lo, f_hi, n) if finite else None
        cand = _best_on_grid(scheme, l_c, mus, fracs, params)
        if _better(cand, best):
            best = cand

    mu_opt, frac, bounds, result = _polish(scheme, l_c, best[1], best[2], params, config)
    nu_opt = mu_opt * frac if finite else None
    return SweepPoint(
        distance_km=float(l_c),
        scheme=scheme,
        mu_opt=mu_opt,
        nu_opt=nu_opt,
        rate=result.rate,
        raw_rate=result.raw_rate,
        clamp_flags=tuple(sorted(bounds.clamped)) if bounds is not None else (),
    )


def _polish(scheme, l_c, mu, frac, params, config, max_steps=10_000):
    """Climb to a point none of whose one-cell neighbours has a better scalar rate."""
    d_mu, d_frac = config.fine_cell()
    mu_lo, mu_hi = config.mu_range
    f_lo, f_hi = config.nu_range
    finite = frac is not None

    def score(m, f):
        _, b, r = evaluate_point(scheme, l_c, m, m * f if finite else None, params)
        return (r.raw_rate, m, f), b, r

    best, bounds, result = score(mu, frac)
    for _ in range(max_steps):
        moved = False
        steps = [(i, j) for i in (-1, 0, 1) for j in ((-1, 0, 1) if finite else (0,)) if i or j]
        for i, j in steps:
            m = best[1] + i * d_mu
            f = best[2] + j * d_frac if finite else None
            if not mu_lo <= m <= mu_hi or (finite and not f_lo <= f <= f_hi):
                continue
            cand = score(m, f)
            if _better(cand[0], best):
                best, bounds, result = cand
                moved = True
        if not moved:
            break
    return best[1], best[2], bounds, result


def _optimize_task(args):
    return optimize_at_distance(*args)


def _distances(l_max: float, step: float) -> list[float]:
    count = int(math.floor(l_max / step + 1e-9))
    return [k * step for k in range(count + 1)]


def sweep(scheme, params: SystemParams, config: OptimizeConfig = OptimizeConfig(), l_max: float = 80.0) -> list[SweepPoint]:
    """Optimized rates at ``0, step, 2 step, ...`` up to ``l_max``.

    Stops after the first point whose rate is at or below the zero threshold
    (that point is included).
    """
    scheme = Scheme.parse(scheme)
    if not l_max >= 0:
        raise DomainError(f"l_max must be >= 0, got {l_max}")
    distances = _distances(l_max, config.step_km)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            computed = list(pool.map(_optimize_task, [(d, scheme, params, config) for d in distances]))
    else:
        computed = None

    points = []
    for k, d in enumerate(distances):
        point = computed[k] if computed is not None else optimize_at_distance(d, scheme, params, config)
        points.append(point)
        if point.rate <= config.zero_threshold:
            break
    return points


def max_secure_distance(scheme, params: SystemParams, config: OptimizeConfig = OptimizeConfig()) -> float:
    """Largest distance in km with a positive optimized key rate.

    The grid sweep brackets the cutoff, then bisection narrows the bracket to
    ``config.resolution_km``; the positive end of the bracket is returned.
    """
    scheme = Scheme.parse(scheme)
    points = sweep(scheme, params, config, config.search_limit_km)
    positive = [p for p in points if p.rate > config.zero_threshold]
    if not positive:
        return 0.0
    last = positive[-1]
    if last is points[-1]:
        # never reached zero inside the search limit
        return last.distance_km
    lo, hi = last.distance_km, points[-1].distance_km
    while hi - lo > config.resolution_km:
        mid = 0.5 * (lo + hi)
        if optimize_at_distance(mid, scheme, params, config).rate > config.zero_threshold:
            lo = mid
        else:
            hi = mid
    return lo
