import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phononkin.errors import ConfigError, ModelError
from phononkin.lattice import FieldState, PotentialSpec, evolve, harmonic_energy, k_grid
from phononkin.spectral import (afield_energy, afield_to_state, cosine_model, dft, dispersion_eval, flat_model,
                                from_afield, harmonic_propagate, idft, model_from_name, nn_model,
                                state_to_afield, to_afield)

MODELS = [nn_model(1.0), cosine_model(1.0), flat_model(1.0), nn_model(0.5), cosine_model(2.0)]


def naive_dft(f):
    L = f.shape[-1]
    x = np.indices((L, L, L)).reshape(3, -1).T
    out = np.empty((L, L, L), dtype=complex)
    for n in np.ndindex(L, L, L):
        ph = np.exp(-2j * np.pi * (x @ np.array(n)) / L)
        out[n] = np.sum(ph * f.ravel())
    return out


def test_dft_delta_and_cosine():
    L = 4
    f = np.zeros((L, L, L))
    f[0, 0, 0] = 1
    np.testing.assert_allclose(dft(f), 1.0)
    x = np.indices((L, L, L))
    k0 = (1, 0, 3)
    g = np.cos(2 * np.pi * sum(k0[a] * x[a] for a in range(3)) / L)
    gh = dft(g)
    expect = np.zeros((L, L, L))
    expect[k0] = L**3 / 2
    expect[tuple((-c) % L for c in k0)] = L**3 / 2
    np.testing.assert_allclose(gh, expect, atol=1e-12)


def test_dft_matches_naive_and_roundtrip():
    f = np.random.default_rng(0).standard_normal((4, 4, 4))
    np.testing.assert_allclose(dft(f), naive_dft(f), atol=1e-11)
    np.testing.assert_allclose(idft(dft(f)).real, f, atol=1e-12)
    np.testing.assert_allclose(np.sum(f**2), np.sum(np.abs(dft(f)) ** 2) / 64, rtol=1e-12)


def test_dispersion_values():
    cm = cosine_model(1.0)
    assert dispersion_eval(cm, np.zeros(3)) == pytest.approx(1.0)
    assert dispersion_eval(cm, np.full(3, 0.5)) == pytest.approx(7.0)
    assert dispersion_eval(nn_model(1.0), np.array([0.5, 0, 0])) == pytest.approx(np.sqrt(5.0))
    assert dispersion_eval(nn_model(2.0), np.array([0.5, 0, 0])) == pytest.approx(np.sqrt(8.0))


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.name}-{m.omega0}")
def test_even_and_bounded_below(model):
    for L in (5, 8):
        w = model.on_grid(L)
        wr = w[(-np.arange(L)) % L][:, (-np.arange(L)) % L][:, :, (-np.arange(L)) % L]
        np.testing.assert_allclose(w, wr, rtol=1e-14)
        assert np.min(w) >= model.omega0 - 1e-14


def test_stencil_model_from_json_and_instability():
    m = model_from_name('stencil:{"offsets": [[0,0,0],[1,0,0],[-1,0,0]], "values": ["2", -1, -1]}', 1.0)
    assert m.omega(np.array([0.5, 0, 0])) == pytest.approx(np.sqrt(5.0))
    with pytest.raises(ModelError):
        model_from_name('stencil:{"offsets": [[0,0,0],[1,0,0],[-1,0,0]], "values": [-2, 1, 1]}', 1.0)
    with pytest.raises(ConfigError):
        model_from_name("nonsense")


def test_afield_single_mode():
    L = 4
    m = nn_model(1.0)
    qh = np.zeros((L, L, L), dtype=complex)
    qh[1, 0, 0] = 1.0
    a = to_afield(qh, np.zeros_like(qh), m)
    assert a[1, 0, 0] == pytest.approx(np.sqrt(m.on_grid(L)[1, 0, 0] / 2))
    assert np.count_nonzero(np.abs(a) > 1e-15) == 1
    assert np.all(to_afield(np.zeros_like(qh), np.zeros_like(qh), m) == 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), which=st.integers(0, len(MODELS) - 1))
def test_afield_roundtrips(seed, which):
    m = MODELS[which]
    rng = np.random.default_rng(seed)
    L = 5
    q, p = rng.standard_normal((2, L, L, L))
    qh, ph = dft(q), dft(p)
    a = to_afield(qh, ph, m)
    q2, p2 = from_afield(a, m)
    np.testing.assert_allclose(q2, qh, atol=1e-12 * L**3)
    np.testing.assert_allclose(p2, ph, atol=1e-12 * L**3)
    b = rng.standard_normal((L, L, L)) + 1j * rng.standard_normal((L, L, L))
    s = afield_to_state(b, m)
    assert s.q.dtype == float
    np.testing.assert_allclose(state_to_afield(s, m), b, atol=1e-12)


@pytest.mark.parametrize("model", MODELS[:3], ids=lambda m: m.name)
def test_afield_energy_equals_harmonic_energy(model):
    rng = np.random.default_rng(1)
    s = FieldState(rng.standard_normal((6, 6, 6)), rng.standard_normal((6, 6, 6)))
    a = state_to_afield(s, model)
    h0 = harmonic_energy(s, model.stencil, model.omega0)
    assert afield_energy(a, model) == pytest.approx(h0, rel=1e-10)


def test_harmonic_propagate_flow():
    m = cosine_model(1.0)
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 4, 4)) + 1j * rng.standard_normal((4, 4, 4))
    np.testing.assert_array_equal(harmonic_propagate(a, 0.0, m), a)
    ab = harmonic_propagate(harmonic_propagate(a, 0.3, m), 0.9, m)
    np.testing.assert_allclose(ab, harmonic_propagate(a, 1.2, m), atol=1e-12)
    np.testing.assert_allclose(np.abs(harmonic_propagate(a, 7.7, m)), np.abs(a), rtol=1e-13)


def test_verlet_tracks_exact_flow():
    m = cosine_model(1.0)
    L = 6
    rng = np.random.default_rng(3)
    a = rng.standard_normal((L, L, L)) + 1j * rng.standard_normal((L, L, L))
    s = afield_to_state(a, m)
    pot = PotentialSpec(0.0, 1.0, 1.0)
    errs = []
    for h in (0.02, 0.01):
        out = evolve(s, 1.0, h, m.stencil, pot)
        errs.append(np.max(np.abs(state_to_afield(out, m) - harmonic_propagate(a, 1.0, m))))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_max_grad_cosine():
    m = cosine_model(1.0)
    assert m.max_grad() == pytest.approx(2 * np.pi * np.sqrt(3.0))
    g = m.grad(k_grid(4))
    assert np.all(np.linalg.norm(g, axis=-1) <= m.max_grad() + 1e-12)
