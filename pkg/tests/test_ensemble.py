import numpy as np
import pytest

from phononkin.errors import ConfigError
from phononkin.ensemble import (GaussianFieldSpec, conserved_totals, eval_k_expression, eval_y_expression,
                                jackknife, modulated_sample, rng_stream, sample, sample_set, table_from_rows,
                                table_totals, wigner_homogeneous, wigner_inhomogeneous, wigner_rows)
from phononkin.lattice import harmonic_energy
from phononkin.spectral import afield_to_state, cosine_model, harmonic_propagate, nn_model

MODEL = cosine_model(1.0)


def test_zero_table_gives_zero_field():
    spec = GaussianFieldSpec(np.zeros((4, 4, 4)))
    assert np.all(sample(spec, rng_stream(0, 0)) == 0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        GaussianFieldSpec(-np.ones((4, 4, 4)))
    with pytest.raises(ConfigError):
        GaussianFieldSpec(np.ones((4, 4, 5)))


def test_constant_table_moments():
    w0, L, S = 2.0, 4, 100
    spec = GaussianFieldSpec(np.full((L, L, L), w0), seed=5)
    a = sample_set(spec, S)
    x = np.abs(a) ** 2 / L**3
    n = x.size
    assert abs(x.mean() - w0) < 3 * w0 / np.sqrt(n)
    # |a|^2 is exponential: variance equals the squared mean
    assert x.var() == pytest.approx(w0**2, rel=0.1)
    pair = np.mean(a * a, axis=0) / (L**3 * w0)
    assert np.max(np.abs(pair)) < 5 / np.sqrt(S)
    assert abs(np.mean(a)) < 3 * np.sqrt(L**3 * w0 / n)


def test_sampling_reproducible():
    W = eval_k_expression("1 + 0.5*c1", 4)
    s1 = sample_set(GaussianFieldSpec(W, seed=11), 6)
    s2 = sample_set(GaussianFieldSpec(W, seed=11), 6)
    assert s1.tobytes() == s2.tobytes()
    s3 = sample_set(GaussianFieldSpec(W, seed=12), 6)
    assert not np.array_equal(s1, s3)
    tail = sample_set(GaussianFieldSpec(W, seed=11), 3, start=3)
    assert tail.tobytes() == s1[3:].tobytes()


def test_expression_parser():
    L = 4
    W = eval_k_expression("(1 + 0.3*c1)/omega", L, MODEL)
    np.testing.assert_allclose(W, (1 + 0.3 * np.cos(2 * np.pi * np.arange(L) / L))[:, None, None] / MODEL.on_grid(L))
    assert np.all(eval_k_expression("w0", 3, w0=2.5) == 2.5)
    for bad in ("__import__('os')", "k4", "1 +", "c1.real"):
        with pytest.raises(ConfigError):
            eval_k_expression(bad, 4)
    prof = eval_y_expression("1 + cos(2*pi*y2)", 4)
    np.testing.assert_allclose(prof[0, :, 0], [2, 1, 0, 1], atol=1e-15)


def test_jackknife_mean_matches_standard_error():
    x = np.random.default_rng(0).standard_normal(50)
    est, err = jackknife(x)
    assert est == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / np.sqrt(50))
    est2, err2 = jackknife(x, stat=lambda v: v.mean(axis=0))
    assert err2 == pytest.approx(err)


def test_wigner_single_sample_unit():
    L = 4
    phase = np.exp(2j * np.pi * np.random.default_rng(1).random((L, L, L)))
    t = wigner_homogeneous(np.sqrt(L**3) * phase)
    np.testing.assert_allclose(t.values, 1.0)
    assert t.sample_count == 1


@pytest.mark.parametrize("expr", ["2.0", "1 + 0.5*c1"])
def test_wigner_estimate_unbiased(expr):
    L, S = 4, 400
    W = eval_k_expression(expr, L)
    t = wigner_homogeneous(sample_set(GaussianFieldSpec(W, seed=3), S))
    z = (t.values - W) / t.stderr
    assert np.max(np.abs(z)) < 4.5
    assert abs(z.mean()) * np.sqrt(z.size) < 3


def test_wigner_rows_roundtrip():
    W = eval_k_expression("1 + 0.5*c2", 3)
    t = wigner_homogeneous(sample_set(GaussianFieldSpec(W), 4))
    back = table_from_rows(list(wigner_rows(t)))
    np.testing.assert_array_equal(back.values, t.values)
    np.testing.assert_array_equal(back.stderr, t.stderr)


def test_wigner_invariant_under_harmonic_flow():
    a = sample_set(GaussianFieldSpec(eval_k_expression("1/omega", 5, MODEL)), 8)
    before = wigner_homogeneous(a).values
    after = wigner_homogeneous(harmonic_propagate(a, 3.7, MODEL)).values
    np.testing.assert_allclose(after, before, rtol=1e-13)


def test_inhomogeneous_commensurability():
    a = sample_set(GaussianFieldSpec(np.ones((10, 10, 10))), 1)
    with pytest.raises(ConfigError):
        wigner_inhomogeneous(a, 0.3)


def test_inhomogeneous_normalization_and_translation_invariance():
    L, S = 4, 400
    W = eval_k_expression("1 + 0.5*c1", L)
    a = sample_set(GaussianFieldSpec(W, seed=2), S)
    t = wigner_inhomogeneous(a, 0.25)
    assert t.values.shape == (L,) * 6
    number = conserved_totals(a, MODEL)["phonon_number"]
    assert t.phonon_number() == pytest.approx(number, rel=1e-10)
    hom = wigner_homogeneous(a).values
    np.testing.assert_allclose(t.values.mean(axis=(0, 1, 2)), hom, rtol=1e-10)
    dens = t.density()
    mean = W.mean()
    assert np.max(np.abs(dens - mean)) < 5 * mean / np.sqrt(S)


def test_inhomogeneous_window():
    a = sample_set(GaussianFieldSpec(np.ones((4, 4, 4))), 3)
    full = wigner_inhomogeneous(a, 0.5)
    part = wigner_inhomogeneous(a, 0.5, window=(1, 2))
    np.testing.assert_array_equal(part.values, full.values[1:3, 1:3, 1:3])


def test_modulated_profile_recovered():
    L, S, eps = 8, 200, 0.25
    spec = GaussianFieldSpec(np.ones((L, L, L)), seed=9)

    def env(r):
        return np.sqrt(1 + 0.5 * np.cos(2 * np.pi * r[..., 0] / (eps * L)))

    a = np.stack([modulated_sample(spec, env, eps, rng_stream(9, i, "mod")) for i in range(S)])
    t = wigner_inhomogeneous(a, eps)
    profile = t.density().mean(axis=(1, 2))
    expect = 1 + 0.5 * np.cos(2 * np.pi * np.arange(L) / L)
    # per-plane relative error is about 1/sqrt(S L^2)
    assert np.max(np.abs(profile - expect) / expect) < 5 / np.sqrt(S * L**2)


def test_conserved_totals_match_lattice_energy():
    L = 6
    a = sample_set(GaussianFieldSpec(eval_k_expression("(1 + 0.3*c1)/omega", L, MODEL), seed=4), 10)
    tot = conserved_totals(a, MODEL)
    for i in range(10):
        h0 = harmonic_energy(afield_to_state(a[i], MODEL), MODEL.stencil, MODEL.omega0)
        assert tot["energy_per_sample"][i] == pytest.approx(float(h0), rel=1e-10)
    assert conserved_totals(np.zeros((4, 4, 4)), MODEL)["energy"] == 0.0


def test_energy_per_phonon_within_dispersion_range():
    t = conserved_totals(sample_set(GaussianFieldSpec(np.full((6, 6, 6), 0.7)), 5), MODEL)
    assert 1.0 <= t["energy"] / t["phonon_number"] <= 7.0
    tt = table_totals(wigner_homogeneous(sample_set(GaussianFieldSpec(np.ones((4, 4, 4))), 2)), nn_model(1.0))
    assert tt["energy"] > tt["phonon_number"]


def test_energy_extensive_in_volume():
    expr = "(1 + 0.3*c1)/omega"
    res = {}
    for L, S in ((4, 800), (8, 100)):
        e = conserved_totals(sample_set(GaussianFieldSpec(eval_k_expression(expr, L, MODEL), seed=L), S),
                             MODEL)["energy_per_sample"]
        res[L] = jackknife(e)
    (e4, s4), (e8, s8) = res[4], res[8]
    ratio = e8 / e4
    sig = ratio * np.hypot(s4 / e4, s8 / e8)
    assert abs(ratio - 8) < 3 * sig
