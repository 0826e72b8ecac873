import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from lm05_decoy.channel_model import (
    PulseSettings,
    SystemParams,
    channel_point,
    default_params,
    error_i,
    eta_i,
    gain_i,
    load_params,
    overall_gain_qber,
    photon_cutoff,
    transmittance,
    yield_i,
)
from lm05_decoy.errors import ConfigurationError, DegenerateDenominatorError, DomainError


def test_defaults_are_gys(gys):
    assert gys == SystemParams(alpha=0.21, eta_bob=0.045, y0=1.7e-6, e0=0.5, e_detector=0.033, f_ec=1.22)


@pytest.mark.parametrize(
    "l_c, expected",
    [(0.0, 1.0), (10.0, 0.3801893963205612), (50.0, 7.943282347242814e-3)],
)
def test_transmittance(gys, l_c, expected):
    t_c, eta = transmittance(l_c, gys)
    assert t_c == pytest.approx(expected, rel=1e-14)
    assert eta == pytest.approx(expected * 0.045, rel=1e-14)


def test_transmittance_zero_distance_is_exact(gys):
    assert transmittance(0.0, gys) == (1.0, gys.eta_bob)


def test_negative_distance_rejected(gys):
    with pytest.raises(DomainError):
        transmittance(-1.0, gys)


@given(st.floats(0, 300))
def test_two_way_factor(l_c):
    params = default_params()
    one_way = 10 ** (-params.alpha * l_c / 10)
    assert transmittance(l_c, params)[0] == pytest.approx(one_way**2, rel=1e-12, abs=1e-300)


def test_eta_i():
    assert eta_i(0.1, 1) == 0.1
    assert eta_i(1.0, 0) == 0.0 and eta_i(1.0, 3) == 1.0
    assert eta_i(0.1, 2) == pytest.approx(0.19, abs=1e-15)
    assert eta_i(0.37, 0) == 0.0
    with pytest.raises(DomainError):
        eta_i(1.5, 1)
    with pytest.raises(DomainError):
        eta_i(0.5, -1)


def test_yield_examples(gys):
    for i in range(5):
        assert yield_i(gys, 0.0, i) == pytest.approx(gys.y0, abs=1e-18)
    assert yield_i(gys.replace(y0=0.0), 0.1, 2) == pytest.approx(0.19, abs=1e-15)
    assert yield_i(gys, 0.1, 2) == pytest.approx(0.190001377, abs=1e-12)


def test_gain_and_error_examples(gys):
    assert gain_i(gys, 0.5, 0.3, 0) == pytest.approx(gys.y0 * math.exp(-0.5), rel=1e-14)
    assert error_i(gys, 0.3, 0) == 0.5
    assert error_i(gys, 0.045, 1) == pytest.approx(0.03301769768372912, rel=1e-12)


def test_error_degenerate():
    params = default_params().replace(y0=0.0)
    with pytest.raises(DegenerateDenominatorError):
        error_i(params, 0.2, 0)


def test_overall_gain_examples(gys):
    q, e = overall_gain_qber(gys, 0.5, 0.0)
    assert (q, e) == (pytest.approx(gys.y0, rel=1e-15), 0.5)
    q, e = overall_gain_qber(gys, 0.0, 0.02)
    assert q == gys.y0 and e == 0.5
    # exact mixture of the exact yields; the Y0 + 1 - exp(-eta mu) approximation gives 0.02225046
    q, e = overall_gain_qber(gys, 0.5, 0.045)
    assert q == pytest.approx(0.022250424983766882, rel=1e-12)
    assert e == pytest.approx(0.03303573631317934, rel=1e-12)


def test_overall_gain_degenerate():
    with pytest.raises(DegenerateDenominatorError):
        overall_gain_qber(default_params().replace(y0=0.0), 0.5, 0.0)


@settings(max_examples=200)
@given(st.floats(0.001, 2.0), st.floats(0, 1), st.floats(1e-9, 1e-3), st.floats(0, 0.2))
def test_series_and_mixture_consistency(mu, eta, y0, e_det):
    params = default_params().replace(y0=y0, e_detector=e_det)
    n = photon_cutoff(mu)
    q_sum = sum(gain_i(params, mu, eta, i) for i in range(n + 1))
    q, e = overall_gain_qber(params, mu, eta)
    assert abs(q_sum - q) < 1e-12
    eq_sum = sum(error_i(params, eta, i) * gain_i(params, mu, eta, i) for i in range(n + 1))
    assert abs(eq_sum - e * q) < 1e-12


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(1e-9, 1e-2), st.floats(0, 0.49))
def test_physical_ranges(eta, y0, e_det):
    params = default_params().replace(y0=y0, e_detector=e_det)
    ys = [yield_i(params, eta, i) for i in range(8)]
    assert all(0 <= y <= 1 for y in ys)
    assert all(a <= b + 1e-15 for a, b in zip(ys, ys[1:]))
    for i in range(8):
        if ys[i] > 0:
            assert 0 <= error_i(params, eta, i) <= 0.5
    q, e = overall_gain_qber(params, 0.5, eta)
    assert y0 <= q <= 1 and 0 <= e <= 0.5


def test_monotone_in_distance(gys):
    d = np.linspace(0, 150, 301)
    pts = [channel_point(x, gys, PulseSettings(0.5, 0.1)) for x in d]
    q = np.array([p.q_mu for p in pts])
    e = np.array([p.e_mu for p in pts])
    assert np.all(np.diff(q) < 0)
    assert np.all(np.diff(e) >= -1e-15)


def test_channel_point_matches_poisson_sum(gys):
    p = channel_point(25.0, gys, PulseSettings(0.6, 0.15))
    eta = oracle.eta_at(25.0)
    assert p.eta == pytest.approx(eta, rel=1e-14)
    for x, q, e in ((0.6, p.q_mu, p.e_mu), (0.15, p.q_nu, p.e_nu)):
        q_ref, e_ref = oracle.gain_qber(eta, x)
        assert q == pytest.approx(q_ref, rel=1e-12)
        assert e == pytest.approx(e_ref, rel=1e-12)


def test_photon_cutoff():
    assert photon_cutoff(0.5) == 60
    assert photon_cutoff(0.0) == 60
    n = photon_cutoff(30.0)
    assert n > 60
    assert math.exp(-30 + n * math.log(30) - math.lgamma(n + 1)) < 1e-15


def test_pulse_settings_validation():
    PulseSettings(0.5, 0.0)
    for mu, nu in ((0.0, 0.0), (0.5, 0.5), (0.5, -0.1), (0.5, 0.7)):
        with pytest.raises(DomainError):
            PulseSettings(mu, nu)


def test_load_params_roundtrip(tmp_path, gys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(gys.to_dict()))
    assert load_params(path) == gys


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1.0),
        lambda d: d.pop("y0"),
        lambda d: d.update(eta_bob=1.5),
        lambda d: d.update(f_ec=0.9),
        lambda d: d.update(alpha="0.2"),
    ],
)
def test_load_params_rejects(tmp_path, gys, mutate):
    data = gys.to_dict()
    mutate(data)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigurationError):
        load_params(path)


def test_load_params_unreadable(tmp_path):
    with pytest.raises(ConfigurationError):
        load_params(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_params(bad)
