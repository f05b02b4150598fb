"""Acceptance criteria 1-10, one recorded verdict line each."""

import math
import time

import numpy as np

from phononkin.boltzmann import factorization_check, perturbative_series, rayleigh_jeans, rj_tolerance, solve_homogeneous
from phononkin.collision import (CollisionConfig, MollifierSpec, c0_bound, collision_apply, collision_measure,
                                 get_kernel, resolution_floor)
from phononkin.diagrams import (assign_momenta, census, census_summary, classify, enumerate_diagrams,
                                example_diagram, example_labels, pairing_count, perfect_matchings, vertex_constraints,
                                wigner_correction)
from phononkin.ensemble import (GaussianFieldSpec, conserved_totals, eval_k_expression, sample_set,
                                wigner_inhomogeneous)
from phononkin.experiments import DiagramPlan, ExperimentPlan, monotone_with_slack, rerun, run_diagram_vs_series, \
    run_kinetic_comparison
from phononkin.lattice import FieldState, PotentialSpec, energy, evolve, forces, harmonic_energy
from phononkin.spectral import afield_to_state, cosine_model, harmonic_propagate, nn_model, state_to_afield

from brute_force_diagrams import brute_force_set
from duhamel_oracle import first_correction

COS = cosine_model(1.0)


def floor_cfg(model, N, lam=1.0, factor=1.0):
    return CollisionConfig(model, lam, N, MollifierSpec("gaussian", factor * resolution_floor(model, N)))


def test_criterion_1_verlet_order(verdict):
    start = time.perf_counter()
    L, T = 16, 1.0
    rng = np.random.default_rng(1)
    a = rng.standard_normal((L, L, L)) + 1j * rng.standard_normal((L, L, L))
    pot = PotentialSpec(0.0, 1.0, 1.0)
    exact = harmonic_propagate(a, T, COS)
    errs = []
    for h in (0.04, 0.02, 0.01):
        out = evolve(afield_to_state(a, COS), T, h, COS.stencil, pot)
        errs.append(float(np.max(np.abs(state_to_afield(out, COS) - exact))))
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]
    elapsed = time.perf_counter() - start
    ok = min(orders) >= 1.9 and elapsed < 60
    verdict(1, ok, f"errors={[f'{e:.3e}' for e in errs]} orders={[round(o, 3) for o in orders]} time={elapsed:.1f}s")


def test_criterion_2_forces_are_gradient(verdict):
    L, h = 5, 1e-5
    rng = np.random.default_rng(2)
    worst = 0.0
    for quartic in (True, False):
        pot = PotentialSpec(1.0, 0.04, 1.0, quartic)
        for _ in range(100):
            s = FieldState(0.5 * rng.standard_normal((L,) * 3), 0.5 * rng.standard_normal((L,) * 3))
            f = forces(s, COS.stencil, pot)
            fd = np.empty_like(f)
            for x in np.ndindex(L, L, L):
                qp, qm = s.q.copy(), s.q.copy()
                qp[x] += h
                qm[x] -= h
                fd[x] = -(energy(FieldState(qp, s.p), COS.stencil, pot)
                          - energy(FieldState(qm, s.p), COS.stencil, pot)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - f)) / np.max(np.abs(f))))
    verdict(2, worst < 1e-6, f"max relative error={worst:.2e} over 200 states")


def test_criterion_3_wigner_normalization(verdict):
    L, S = 6, 20
    W = eval_k_expression("(1 + 0.3*c1 - 0.2*c2*c3)/omega", L, COS)
    a = sample_set(GaussianFieldSpec(W, seed=3), S)
    tot = conserved_totals(a, COS)
    norm = max(abs(wigner_inhomogeneous(a[i:i + 1], 0.5).phonon_number() / tot["phonon_number_per_sample"][i] - 1)
               for i in range(S))
    h0 = max(abs(tot["energy_per_sample"][i] / float(harmonic_energy(afield_to_state(a[i], COS), COS.stencil, 1.0))
                 - 1) for i in range(S))
    verdict(3, norm < 1e-10 and h0 < 1e-10, f"normalization={norm:.1e} energy={h0:.1e}")


def test_criterion_4a_no_collisions_for_nn(verdict):
    start = time.perf_counter()
    N = 16
    W = eval_k_expression("1 + 0.5*c1", N)
    nn = nn_model(1.0)
    vals = [float(np.max(np.abs(collision_apply(W, CollisionConfig(nn, 1.0, N, MollifierSpec("gaussian", e))))))
            for e in (0.08, 0.06, 0.04)]
    ref = float(np.max(np.abs(collision_apply(W, floor_cfg(COS, N)))))
    ok = vals[0] > vals[1] > vals[2] and vals[2] < 1e-3 * ref
    elapsed = time.perf_counter() - start
    verdict("4a", ok and elapsed < 300,
            f"sup|C| at eta=0.08,0.06,0.04: {[f'{v:.2e}' for v in vals]} reference={ref:.3e} time={elapsed:.1f}s")


def test_criterion_4b_rayleigh_jeans_stationary(verdict):
    start = time.perf_counter()
    N, T = 16, 1.0
    cfg = floor_cfg(COS, N)
    W0 = rayleigh_jeans(COS, N, T)
    t_end = 5 * get_kernel(cfg).collision_time(W0)
    tr = solve_homogeneous(W0, t_end, t_end / 50, cfg)
    drift = float(np.max(np.abs(tr.final - W0)))
    tol = rj_tolerance(cfg, T, t_end)
    elapsed = time.perf_counter() - start
    verdict("4b", drift < 5 * tol and elapsed < 300,
            f"drift={drift:.3e} tolerance={tol:.3e} t_end={t_end:.3g} time={elapsed:.1f}s")


def test_criterion_5_collision_positivity(verdict):
    m = collision_measure(floor_cfg(COS, 16))
    c = c0_bound(floor_cfg(COS, 24))
    verdict(5, m.positive and c.stable,
            f"measure={m.extrapolated:.4g}+-{m.error:.2g} c0 sups={[round(s, 4) for s in c.sups]} "
            f"variation={c.variation:.3f}")


def test_criterion_6_series_and_hierarchy(verdict):
    start = time.perf_counter()
    N = 6
    cfg = floor_cfg(COS, N)
    W0 = eval_k_expression("(1 + 0.3*c1 - 0.2*c2*c3)/omega", N, COS)
    t = 0.1 * get_kernel(cfg).collision_time(W0)
    ref = solve_homogeneous(W0, t, t / 200, cfg).final
    errs = [float(np.max(np.abs(p - ref))) for p in perturbative_series(W0, t, 4, cfg).partial_sums()]
    dev = [factorization_check(W0, t, 2, cfg, dt).deviation for dt in (t / 2, t / 4, t / 8)]
    ok = all(b < a for a, b in zip(errs, errs[1:])) and all(b < a for a, b in zip(dev, dev[1:]))
    elapsed = time.perf_counter() - start
    verdict(6, ok and elapsed < 300, f"series errors={[f'{e:.1e}' for e in errs]} "
            f"factorization={[f'{d:.1e}' for d in dev]} time={elapsed:.1f}s")


def test_criterion_7_diagram_census(verdict):
    counts = {n: len(enumerate_diagrams(n)) for n in (1, 2)}
    brute = {n: brute_force_set(n) for n in (1, 2)}
    same = all({(d.n, d.schedule, d.orientations, d.pairing) for d in enumerate_diagrams(n)} == brute[n]
               and counts[n] == len(brute[n]) for n in (1, 2))
    formula = all(pairing_count(n) == len(list(perfect_matchings(range(2 * n + 2))))
                  == math.factorial(2 * n + 2) // (2 ** (n + 1) * math.factorial(n + 1)) for n in (1, 2, 3))
    d = example_diagram()
    lab = example_labels()
    got = [{lab[b]: s for s, b in terms} for _, terms in vertex_constraints(d)]
    expect = [{"q": 1, "k1": 1, "k2": -1}, {"k2": 1, "k3": 1, "k4": 1}, {"p": -1, "k5": -1, "k6": -1},
              {"k1": -1, "k7": 1, "k8": -1}]

    def norm(e):
        first = e[min(e)]
        return tuple(sorted((k, v * first) for k, v in e.items()))

    deltas = sorted(map(norm, got)) == sorted(map(norm, expect))
    label = classify(d, assign_momenta(d)).label
    summ = census_summary(census(1))
    ok = same and formula and deltas and label == "Subleading"
    verdict(7, ok, f"counts={counts} brute_force_equal={same} pairing_formula={formula} "
            f"example_deltas={deltas} example_class={label} first_order_leading={summ['leading']}")


def test_criterion_8_diagrams_approach_series(verdict):
    start = time.perf_counter()
    rep = run_diagram_vs_series(DiagramPlan(L=12, eps=(0.2, 0.1, 0.05), t=0.02, census=False))
    L = 4
    W = eval_k_expression("(1 + 0.3*c1)/omega", L, COS)
    qs = [0, 1, 5, 21, 42, 63]
    r = wigner_correction(1, 1.0, 0.1, W, COS, qs=qs, include_degenerate=True)
    oracle = [first_correction(q, 1.0, 0.1, W, COS.on_grid(L), nodes=16) for q in qs]
    rel = max(abs(v - o) / abs(o) for v, o in zip(r.values, oracle))
    elapsed = time.perf_counter() - start
    verdict(8, rep.monotone and rel < 1e-6 and elapsed < 600,
            f"gaps={[f'{g:.3e}' for g in rep.gaps]} duhamel_rel={rel:.1e} time={elapsed:.1f}s")


def test_criterion_9_kinetic_trend(verdict):
    start = time.perf_counter()
    rep = run_kinetic_comparison(ExperimentPlan(L=16, samples=256, eps=(0.2, 0.1, 0.05), t=0.1))
    mono = monotone_with_slack(rep.D, rep.sigma)
    elapsed = time.perf_counter() - start
    verdict(9, mono and rep.control_ok,
            f"D={[f'{d:.3e}' for d in rep.D]} sigma={[f'{s:.1e}' for s in rep.sigma]} "
            f"control={[f'{d:.1e}' for d in rep.D_control]} time={elapsed:.0f}s")


def test_criterion_10_bit_identical_rerun(verdict, tmp_path):
    plan = ExperimentPlan(L=8, samples=16, eps=(0.4, 0.2), t=0.05, batch=4)
    run_kinetic_comparison(plan, tmp_path / "kin")
    rerun(tmp_path / "kin", tmp_path / "kin2", threads=2)
    run_diagram_vs_series(DiagramPlan(L=4, eps=(0.5,), t=0.05, census=False), tmp_path / "dia")
    rerun(tmp_path / "dia", tmp_path / "dia2", threads=2)
    same = []
    for a, b in (("kin", "kin2"), ("dia", "dia2")):
        fa = {p.name: p.read_bytes() for p in (tmp_path / a).iterdir()}
        fb = {p.name: p.read_bytes() for p in (tmp_path / b).iterdir()}
        same.append(fa == fb)
    verdict(10, all(same), f"kinetic identical={same[0]} diagrams identical={same[1]} (threads 1 vs 2)")
