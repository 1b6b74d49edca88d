import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatial_iva.geometry import (
    ArrayGeometry,
    BackgroundPrior,
    BuiltPriors,
    ChannelPrior,
    PriorSpec,
    build_priors,
    precision_null,
    precision_one,
    prior_penalty,
    steering_vector,
)
from spatial_iva.types import new_demixing_state, DemixingState

from conftest import crandn

angles = st.floats(0.0, math.pi)
freqs = st.floats(0.0, 8000.0)


def ula(M, d=0.042):
    return ArrayGeometry.uniform_linear(M, d)


def test_broadside_and_dc_are_all_ones():
    g = ula(4)
    np.testing.assert_array_equal(steering_vector(g, 0.0, 0.3), np.ones(4))
    np.testing.assert_allclose(steering_vector(g, 1234.0, math.pi / 2), np.ones(4), atol=1e-15)


def test_endfire_phase_value():
    h = steering_vector(ula(2), 1000.0, 0.0)
    assert h[0] == 1 + 0j
    assert np.angle(h[1]) == pytest.approx(2 * math.pi * 1000 * 0.042 / 343)
    assert np.angle(h[1]) == pytest.approx(0.769370, abs=1e-6)


@given(f=freqs, th=angles, M=st.integers(1, 6))
def test_unit_modulus(f, th, M):
    h = steering_vector(ula(M), f, th)
    assert h[0] == 1 + 0j
    np.testing.assert_allclose(np.abs(h), 1.0, atol=1e-15)


def test_vector_frequency_shape():
    h = steering_vector(ula(3), np.array([0.0, 100.0, 200.0]), 0.4)
    assert h.shape == (3, 3)
    np.testing.assert_allclose(h[1], steering_vector(ula(3), 100.0, 0.4))


def test_precision_examples():
    g = ula(2)
    np.testing.assert_allclose(precision_null(g, 500.0, [], 1.0, []), np.eye(2))
    np.testing.assert_allclose(precision_null(g, 500.0, [math.pi / 2], 1.0, [2.0]), [[3, 2], [2, 3]], atol=1e-14)
    np.testing.assert_allclose(precision_one(g, 500.0, [math.pi / 2], 1.0, [1.0]), [[0, -1], [-1, 0]], atol=1e-14)
    np.testing.assert_allclose(precision_one(g, 500.0, [], 0.7, []), 0.7 * np.eye(2))


@given(f=freqs, th=angles, lt=st.floats(1e-3, 10), lam=st.floats(0, 10), M=st.integers(1, 5))
def test_precision_properties(f, th, lt, lam, M):
    g = ula(M)
    Pn = precision_null(g, f, [th], lt, [lam])
    Po = precision_one(g, f, [th], lt, [lam])
    assert np.abs(Pn - Pn.conj().T).max() == 0
    assert np.abs(Po - Po.conj().T).max() == 0
    np.linalg.cholesky(Pn)
    assert np.linalg.eigvalsh(Pn).min() >= lt * (1 - 1e-9)
    np.testing.assert_allclose(Po, 2 * lt * np.eye(M) - Pn, atol=1e-12)
    h = steering_vector(g, f, th)
    assert (h.conj() @ Pn @ h).real == pytest.approx(lt * M + lam * M**2, rel=1e-10)


def test_prior_penalty_examples():
    g = ula(2)
    f = np.array([0.0, 1000.0])
    W = new_demixing_state(2, 2, 2)
    assert prior_penalty(W, build_priors(PriorSpec(), g, f)) == 0
    spec = PriorSpec([ChannelPrior("euclidean_one", [0.3], gamma=1.0)])
    built = build_priors(spec, g, f)
    W.W[:, 0, :] = built.targets[0].conj()
    assert prior_penalty(W, built) == pytest.approx(0, abs=1e-28)
    W = new_demixing_state(2, 2, 1)
    built = BuiltPriors(PriorSpec([ChannelPrior("quadratic_null", gamma=1.0)]), {0: np.eye(2)[None]}, {}, None)
    assert prior_penalty(W, built) == pytest.approx(1.0)


def test_prior_penalty_brute_force():
    rng = np.random.default_rng(3)
    g = ula(3)
    f = np.array([100.0, 900.0, 2500.0])
    spec = PriorSpec(
        [
            ChannelPrior("quadratic_one", [0.5], [0.8], 1.0, 0.7),
            ChannelPrior("euclidean_one", [1.9], gamma=2.0),
        ],
        BackgroundPrior([1.0], [1.5], 0.1, 3.0),
    )
    built = build_priors(spec, g, f)
    W = DemixingState(crandn(rng, 3, 3, 3), 2)
    total = 0.0
    for k in range(3):
        w0, w1, b = W.W[k, 0].conj(), W.W[k, 1].conj(), W.W[k, 2].conj()
        P1 = np.eye(3) * 1.0 - 0.8 * np.outer(steering_vector(g, f[k], 0.5), steering_vector(g, f[k], 0.5).conj())
        total += 0.7 * (w0.conj() @ P1 @ w0).real
        total += 2.0 * np.sum(np.abs(w1 - steering_vector(g, f[k], 1.9)) ** 2)
        hb = steering_vector(g, f[k], 1.0)
        total += 3.0 * (b.conj() @ (0.1 * np.eye(3) + 1.5 * np.outer(hb, hb.conj())) @ b).real
    assert prior_penalty(W, built) == pytest.approx(total, rel=1e-12)
    assert prior_penalty(W, built, include_background=False) < total


def test_penalty_ignores_unconstrained_channels():
    g = ula(3)
    f = np.array([300.0])
    rng = np.random.default_rng(0)
    W = DemixingState(crandn(rng, 1, 3, 3), 3)
    one = ChannelPrior("quadratic_null", [0.2], [1.0], 1.0, 1.0)
    a = prior_penalty(W, build_priors(PriorSpec([one]), g, f))
    b = prior_penalty(W, build_priors(PriorSpec([one, ChannelPrior(), ChannelPrior()]), g, f))
    assert a == b


def test_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ChannelPrior("bogus")
    with pytest.raises(ValueError):
        ChannelPrior("euclidean_one", [0.1, 0.2])
    with pytest.raises(ValueError):
        precision_null(ula(2), 100.0, [0.1], 0.0, [1.0])
    with pytest.raises(ValueError):
        steering_vector(ula(2), -1.0, 0.0)


def test_indefinite_one_precision_warns(caplog):
    spec = PriorSpec([ChannelPrior("quadratic_one", [1.0], [2.0], 1.0, 1.5)])
    with caplog.at_level("WARNING", logger="spatial_iva.geometry"):
        build_priors(spec, ula(4), np.array([500.0]))
    assert "indefinite" in caplog.text
