"""End-to-end experiments: microscopic ensembles against kinetic predictions.

The homogeneous comparison draws a Gaussian ensemble with covariance ``W0``,
runs the lattice dynamics with cubic coupling ``sqrt(eps) lam`` up to the
microscopic time ``t / eps`` and compares the change of the estimated Wigner
function with the change predicted by the homogeneous Boltzmann equation
at kinetic time ``t``.

Here ``eps`` and ``L`` are independent knobs: without spatial structure
``eps`` enters only through the time horizon and the coupling strength.

Variance control
    Samples come in antithetic pairs ``(a, -a)``.  The order-``lam`` part
    of the increment is odd in the field and cancels within a pair, leaving
    the order-``lam^2`` collision signal.  Increments are measured against the
    same sample at time zero, so the O(1) sampling noise of ``|a|^2`` drops out.
    The a-field is read out with the frequency ``w sqrt(1 - h^2 w^2 / 4)``
    whose quadratic form velocity Verlet conserves exactly; for ``lam = 0``
    the increments then vanish to rounding.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .boltzmann import perturbative_series, solve_homogeneous
from .collision import CollisionConfig, MollifierSpec, resolution_floor
from .diagrams import (census, census_summary, example_diagram, kinetic_limit_first_order,
                       wigner_correction)
from .ensemble import GaussianFieldSpec, eval_k_expression, rng_stream, sample
from .errors import BlowUp, ConfigError
from .lattice import PotentialSpec, energy, evolve
from .reporting import canonical_json, config_hash, ensure_dir, header_block, write_csv, write_text
from .spectral import afield_to_state, dft, model_from_name


def _sound_cone(model, t, eps, L):
    reach = (t / eps) * model.max_grad() / (2 * math.pi)
    return reach, reach < L / 2


@dataclass(frozen=True)
class ExperimentPlan:
    """Parameters of :func:`run_kinetic_comparison`.

    ``h``, ``eta`` and ``dt`` default (``None``) to ``0.05 / w_max``, the
    resolution floor of the ``L`` grid and ``t / 10``.
    """

    model: str = "nn-nnn-311"
    omega0: float = 1.0
    lam: float = 1.0
    w0: str = "(1 + 0.3*c1)/omega"
    eps: tuple = (0.2, 0.1, 0.05)
    L: int = 16
    samples: int = 256
    t: float = 0.1
    h: float | None = None
    eta: float | None = None
    dt: float | None = None
    seed: int = 0
    quartic_stabilizer: bool = True
    control: bool = True
    batch: int = 16
    threads: int = 1
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if not self.eps or any(not (0 < e <= 1) for e in self.eps):
            raise ConfigError("eps values must lie in (0, 1]")
        if self.L < 2 or self.samples < 2 or self.samples % 2:
            raise ConfigError("need L >= 2 and an even sample count >= 2")
        if self.t <= 0:
            raise ConfigError("kinetic time t must be positive")
        for name in ("h", "eta", "dt"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.batch < 1 or self.threads < 1:
            raise ConfigError("batch and threads must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eps"] = list(self.eps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        d = dict(d)
        if "eps" in d:
            d["eps"] = tuple(d["eps"])
        return cls(**d)

    def physics(self) -> dict:
        """The fields that determine the numbers (output location and threading excluded)."""
        d = self.to_dict()
        for k in ("out", "threads"):
            d.pop(k)
        return d

    def check(self):
        """Sound-cone guard ``(t/eps) max|grad w| / 2 pi < L / 2`` for every ``eps``."""
        model = model_from_name(self.model, self.omega0)
        for e in self.eps:
            reach, ok = _sound_cone(model, self.t, e, self.L)
            if not ok:
                raise ConfigError(f"sound-cone guard violated at eps={e}: signal reach {reach:.3g} >= L/2 = {self.L / 2}")
        return model


@dataclass
class KineticReport:
    plan: ExperimentPlan
    eps: list
    D: list
    sigma: list
    D_control: list
    sigma_control: list
    energy_drift: list
    condensate: list
    boltzmann_change: float
    monotone: bool
    control_ok: bool
    increments: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "tool": f"phononkin {__version__}",
            "config_hash": config_hash(self.plan.physics()),
            "seed": self.plan.seed,
            "eps": self.eps,
            "D": self.D,
            "sigma": self.sigma,
            "D_control": self.D_control,
            "sigma_control": self.sigma_control,
            "energy_drift": self.energy_drift,
            "condensate_increment": self.condensate,
            "boltzmann_change_sup": self.boltzmann_change,
            "verdict_monotone": self.monotone,
            "verdict_control": self.control_ok,
        }


# -- microscopic side ------------------------------------------------------------


def verlet_frequency(model, L: int, h: float) -> np.ndarray:
    """``w sqrt(1 - h^2 w^2 / 4)``: the harmonic frequency seen by velocity Verlet."""
    w = model.on_grid(L)
    arg = 1 - (h * w) ** 2 / 4
    if np.any(arg <= 0):
        raise ConfigError("timestep beyond the Verlet stability limit")
    return w * np.sqrt(arg)


def _occupation(state, wt) -> np.ndarray:
    qh, ph = dft(state.q), dft(state.p)
    a = (np.sqrt(wt) * qh + 1j * ph / np.sqrt(wt)) / np.sqrt(2.0)
    return np.abs(a) ** 2


def _pair_fields(spec, seed, start, count, model):
    """``count`` antithetic pairs, pair ``i`` seeded by stream ``(seed, start + i)``."""
    fields = []
    for i in range(start, start + count):
        a = sample(spec, rng_stream(seed, i, "ensemble"))
        fields.extend([a, -a])
    return afield_to_state(np.stack(fields), model)


def _run_batch(plan, model, spec, eps, lam, start, count):
    """Per-pair increments of ``L^-3 |a|^2`` and energies before/after."""
    L = plan.L
    pot = PotentialSpec(lam, eps, plan.omega0, plan.quartic_stabilizer)
    stencil = model.stencil
    T = plan.t / eps
    h = plan.h or 0.05 / model.omega_max(L)
    nsteps = max(1, math.ceil(T / h - 1e-12))
    wt = verlet_frequency(model, L, T / nsteps)
    state = _pair_fields(spec, plan.seed, start, count, model)
    n0 = _occupation(state, wt)
    e0 = energy(state, stencil, pot)
    try:
        final = evolve(state, T, h, stencil, pot)
    except BlowUp as exc:
        raise BlowUp(f"eps={eps}: {exc}", t=exc.t, max_amplitude=exc.max_amplitude) from exc
    n1 = _occupation(final, wt)
    e1 = energy(final, stencil, pot)
    inc = (n1 - n0) / L**3
    inc = 0.5 * (inc[0::2] + inc[1::2])
    return inc, float(np.sum(e0)), float(np.sum(e1))


def microscopic_increments(plan: ExperimentPlan, model, W0, eps: float, lam: float):
    """Pair-averaged increments ``(P, L, L, L)`` and the relative energy change of the ensemble."""
    spec = GaussianFieldSpec(W0, plan.seed)
    pairs = plan.samples // 2
    per = max(1, plan.batch // 2)
    jobs = [(s, min(per, pairs - s)) for s in range(0, pairs, per)]
    run = lambda job: _run_batch(plan, model, spec, eps, lam, *job)
    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    inc = np.concatenate([r[0] for r in results])
    e0 = math.fsum(r[1] for r in results)
    e1 = math.fsum(r[2] for r in results)
    return inc, abs(e1 - e0) / abs(e0)


def discrepancy(inc: np.ndarray, target: np.ndarray, skip_zero: bool = True):
    """Debiased L2-over-k distance between the mean increment and ``target``.

    ``D^2 = mean_k (mean_s d)^2 - mean_k var_s(d) / S`` is unbiased and may come
    out negative when noise dominates; ``D = sqrt(max(D^2, 0))``.  The
    leave-one-out jackknife error ``s`` of ``D^2`` is mapped to the upward
    excursion ``sigma = sqrt(max(D^2, 0) + s) - D``.

    The ``k = 0`` mode is left out by default: the cubic term drives a coherent
    mean displacement there, a zero-momentum effect outside the kinetic
    description (reported separately as the condensate increment).
    Returns ``(D, sigma)``.
    """
    d = (inc - target).reshape(inc.shape[0], -1)
    if skip_zero:
        d = d[:, 1:]
    S = d.shape[0]

    def d2(sum1, sum2, n):
        mean = sum1 / n
        var = (sum2 - n * mean**2) / (n - 1)
        return np.mean(mean**2, axis=-1) - np.mean(var, axis=-1) / n

    s1, s2 = d.sum(axis=0), (d * d).sum(axis=0)
    est = float(d2(s1, s2, S))
    D = math.sqrt(max(est, 0.0))
    if S < 3:
        return D, math.nan
    loo = np.array([d2(s1 - d[i], s2 - d[i] ** 2, S - 1) for i in range(S)])
    err = float(np.sqrt((S - 1) / S * np.sum((loo - loo.mean()) ** 2)))
    return D, math.sqrt(max(est, 0.0) + err) - D


def monotone_with_slack(D, sigma, slack: float = 1.0) -> bool:
    """``D[i+1] <= D[i] + slack * sqrt(sigma[i]^2 + sigma[i+1]^2)`` for consecutive entries."""
    return all(D[i + 1] <= D[i] + slack * math.hypot(sigma[i], sigma[i + 1]) for i in range(len(D) - 1))


def run_kinetic_comparison(plan: ExperimentPlan, out_dir=None) -> KineticReport:
    """Microscopic Wigner increments against the Boltzmann prediction for each ``eps``."""
    model = plan.check()
    L = plan.L
    W0 = eval_k_expression(plan.w0, L, model)
    eta = plan.eta or resolution_floor(model, L)
    cfg = CollisionConfig(model, plan.lam, L, MollifierSpec("gaussian", eta))
    dt = plan.dt or plan.t / 10
    traj = solve_homogeneous(W0, plan.t, dt, cfg)
    target = traj.final - W0
    D, sig, D0, sig0, drift, cond, incs = [], [], [], [], [], [], {}
    for e in plan.eps:
        inc, de = microscopic_increments(plan, model, W0, e, plan.lam)
        d, s = discrepancy(inc, target)
        D.append(d)
        sig.append(s)
        drift.append(de)
        cond.append(float(inc[:, 0, 0, 0].mean()))
        incs[e] = (inc.mean(axis=0), inc.std(axis=0, ddof=1) / math.sqrt(inc.shape[0]))
        if plan.control:
            inc0, _ = microscopic_increments(plan, model, W0, e, 0.0)
            d0, s0 = discrepancy(inc0, np.zeros_like(W0))
            D0.append(d0)
            sig0.append(s0)
    floor = 1e-12 * float(np.max(np.abs(W0)))
    control_ok = all(d <= 3 * s + floor for d, s in zip(D0, sig0)) if plan.control else True
    report = KineticReport(plan, list(plan.eps), D, sig, D0, sig0, drift, cond,
                           float(np.max(np.abs(target))), monotone_with_slack(D, sig), control_ok,
                           {"W0": W0, "boltzmann": target, "micro": incs})
    out_dir = out_dir or plan.out
    if out_dir is not None:
        write_kinetic_report(report, out_dir)
    return report


def write_kinetic_report(report: KineticReport, out_dir) -> Path:
    out = ensure_dir(out_dir)
    plan = report.plan
    phys = plan.physics()
    meta = header_block(phys, plan.seed)
    manifest = {"kind": "kinetic-compare", "schema": 1, "header": meta, "plan": phys}
    write_text(out / "plan.json", canonical_json(manifest))
    rows = []
    for i, e in enumerate(report.eps):
        c = (report.D_control[i], report.sigma_control[i]) if plan.control else (math.nan, math.nan)
        rows.append((e, plan.t / e, report.D[i], report.sigma[i], *c, report.energy_drift[i], report.condensate[i]))
    write_csv(out / "discrepancy.csv",
              ["eps", "t_micro", "D", "sigma", "D_control", "sigma_control", "energy_drift", "condensate_increment"],
              rows, meta)
    L = plan.L
    W0 = report.increments["W0"]
    tgt = report.increments["boltzmann"]
    micro = report.increments["micro"]
    cols = ["k1", "k2", "k3", "W0", "dW_boltzmann"]
    for e in report.eps:
        cols += [f"dW_micro[eps={e!r}]", f"stderr[eps={e!r}]"]
    rows = []
    for n3 in range(L):
        for n2 in range(L):
            for n1 in range(L):
                r = [n1 / L, n2 / L, n3 / L, W0[n1, n2, n3], tgt[n1, n2, n3]]
                for e in report.eps:
                    m, s = micro[e]
                    r += [m[n1, n2, n3], s[n1, n2, n3]]
                rows.append(r)
    write_csv(out / "increments.csv", cols, rows, meta)
    write_text(out / "summary.json", canonical_json(report.summary()))
    return out


# -- diagrams against the series ------------------------------------------------------


@dataclass(frozen=True)
class DiagramPlan:
    """Parameters of :func:`run_diagram_vs_series` (``n`` is 1 or 2)."""

    model: str = "nn-nnn-311"
    omega0: float = 1.0
    lam: float = 1.0
    w0: str = "(1 + 0.3*c1)/omega"
    eps: tuple = (0.2, 0.1, 0.05)
    L: int = 12
    t: float = 0.02
    eta: float | None = None
    n: int = 1
    qs: tuple | None = None
    tau: float = 0.1
    census: bool = True
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.qs is not None:
            object.__setattr__(self, "qs", tuple(int(q) for q in self.qs))
        if self.n not in (1, 2):
            raise ConfigError("diagram comparison supports n = 1 or 2")
        if not self.eps or any(not (0 < e <= 1) for e in self.eps) or self.t <= 0:
            raise ConfigError("need eps in (0, 1] and t > 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eps"] = list(self.eps)
        d["qs"] = None if self.qs is None else list(self.qs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiagramPlan":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**d)

    def physics(self) -> dict:
        d = self.to_dict()
        d.pop("out")
        return d


@dataclass
class DiagramReport:
    plan: DiagramPlan
    eps: list
    gaps: list
    series: np.ndarray
    diagrams: dict
    qs: np.ndarray
    monotone: bool
    census: dict | None = None
    example_line: str | None = None
    kinetic_gap: float | None = None

    def summary(self) -> dict:
        return {
            "tool": f"phononkin {__version__}",
            "config_hash": config_hash(self.plan.physics()),
            "seed": "none",
            "order": self.plan.n,
            "eps": self.eps,
            "sup_gap": self.gaps,
            "series_sup": float(np.max(np.abs(self.series))),
            "verdict_monotone": self.monotone,
            "census": self.census,
            "example_diagram": self.example_line,
            "kinetic_limit_gap": self.kinetic_gap,
        }


def run_diagram_vs_series(plan: DiagramPlan, out_dir=None) -> DiagramReport:
    """``W_n^eps`` from diagrams against the order-``n`` series term over ``plan.eps``."""
    model = model_from_name(plan.model, plan.omega0)
    L = plan.L
    W0 = eval_k_expression(plan.w0, L, model)
    eta = plan.eta or resolution_floor(model, L)
    cfg = CollisionConfig(model, plan.lam, L, MollifierSpec("gaussian", eta))
    series = perturbative_series(W0, plan.t, plan.n, cfg).terms[plan.n].ravel()
    qs = np.arange(L**3) if plan.qs is None else np.asarray(plan.qs, dtype=int)
    series = series[qs]
    gaps, vals = [], {}
    for e in plan.eps:
        r = wigner_correction(plan.n, e, plan.t, W0, model, plan.lam, qs=qs, tau=plan.tau)
        vals[e] = r.values.real
        gaps.append(float(np.max(np.abs(r.values.real - series))))
    mono = all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))
    kin_gap = None
    if plan.n == 1:
        kin = kinetic_limit_first_order(W0, plan.t, cfg).ravel()[qs]
        kin_gap = float(np.max(np.abs(kin - series)))
    cen, line = None, None
    if plan.census and plan.n == 2:
        recs = census(2)
        cen = census_summary(recs)
        ex = example_diagram()
        line = next(r.line() for r in recs if r.diagram == ex)
    report = DiagramReport(plan, list(plan.eps), gaps, series, vals, qs, mono, cen, line, kin_gap)
    out_dir = out_dir or plan.out
    if out_dir is not None:
        write_diagram_report(report, out_dir)
    return report


def write_diagram_report(report: DiagramReport, out_dir) -> Path:
    out = ensure_dir(out_dir)
    plan = report.plan
    phys = plan.physics()
    meta = header_block(phys, None)
    write_text(out / "plan.json", canonical_json({"kind": "diagram-vs-series", "schema": 1, "header": meta,
                                                  "plan": phys}))
    write_csv(out / "gaps.csv", ["eps", "sup_gap"], list(zip(report.eps, report.gaps)), meta)
    L = plan.L
    cols = ["q", "k1", "k2", "k3", "series"] + [f"diagrams[eps={e!r}]" for e in report.eps]
    rows = []
    for i, q in enumerate(report.qs):
        n1, n2, n3 = np.unravel_index(int(q), (L, L, L))
        rows.append([int(q), n1 / L, n2 / L, n3 / L, report.series[i]] + [report.diagrams[e][i] for e in report.eps])
    write_csv(out / "per_k.csv", cols, rows, meta)
    write_text(out / "summary.json", canonical_json(report.summary()))
    return out


# -- re-running stored reports -------------------------------------------------------------


def load_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / "plan.json"
    with open(path) as fh:
        m = json.load(fh)
    kind = m.get("kind")
    if kind == "kinetic-compare":
        return ExperimentPlan.from_dict(m["plan"])
    if kind == "diagram-vs-series":
        return DiagramPlan.from_dict(m["plan"])
    raise ConfigError(f"unknown manifest kind {kind!r}")


def rerun(manifest, out_dir, threads: int = 1):
    """Re-run the experiment stored in ``manifest`` (a report directory or plan file) into ``out_dir``."""
    plan = load_manifest(manifest)
    if isinstance(plan, ExperimentPlan):
        plan = dataclasses.replace(plan, threads=threads)
        return run_kinetic_comparison(plan, out_dir)
    return run_diagram_vs_series(plan, out_dir)
