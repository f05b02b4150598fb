"""Homogeneous and inhomogeneous Boltzmann solvers, the hierarchy and the perturbative series."""

from __future__ import annotations

import math
import string
import warnings
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionConfig, get_kernel
from .errors import ConfigError, NegativityWarning, ResourceGuard, StepError
from .spectral import DispersionModel
from .lattice import k_grid


@dataclass
class Trajectory:
    """Snapshots ``values[i]`` at ``times[i]`` with the energy functional per snapshot."""

    times: np.ndarray
    values: np.ndarray
    energy: np.ndarray
    steps: int = 0
    rejected: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def rows(self):
        """``t, k1, k2, k3, W`` rows, k3 fastest."""
        N = self.values.shape[-1]
        for t, v in zip(self.times, self.values):
            for n, val in np.ndenumerate(v):
                yield (repr(float(t)),) + tuple(repr(c / N) for c in n) + (repr(float(val)),)


def energy_functional(W, model: DispersionModel) -> np.ndarray:
    """``N^-3 sum_k w(k) W(k)`` over the last three axes."""
    W = np.asarray(W)
    N = W.shape[-1]
    return np.sum(model.on_grid(N) * W, axis=(-3, -2, -1)) / N**3


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_negative(W, tol, t):
    m = float(np.min(W))
    if m < -tol:
        warnings.warn(f"Wigner table minimum {m:.3e} at t={t:.4g}", NegativityWarning, stacklevel=3)


def solve_homogeneous(W0, t_end: float, dt: float, cfg: CollisionConfig, *, adaptive: bool = False,
                      rtol: float = 1e-8, save_every: int = 1, neg_tol: float = 1e-12,
                      dt_min: float = 1e-10) -> Trajectory:
    """Classical RK4 for ``dW/dt = C W``.

    With ``adaptive`` each step is checked against two half steps and halved
    until the difference is below ``rtol * max|W|``; ``StepError`` is raised
    below ``dt_min``.
    """
    W = np.array(W0, dtype=float)
    if W.shape != (cfg.N,) * 3:
        raise ConfigError(f"initial table shape {W.shape} does not match N={cfg.N}")
    if not np.all(np.isfinite(W)):
        raise ConfigError("initial table must be finite")
    if t_end < 0 or dt <= 0:
        raise ConfigError("need t_end >= 0 and dt > 0")
    rhs = (lambda v: np.zeros_like(v)) if cfg.lam == 0 else get_kernel(cfg).apply
    times, vals = [0.0], [W.copy()]
    t, steps, rejected = 0.0, 0, 0
    nsteps = max(1, math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    h = t_end / nsteps if nsteps else dt
    for i in range(nsteps):
        if adaptive:
            sub, hh = 0.0, h
            while sub < h * (1 - 1e-14):
                hh = min(hh, h - sub)
                full = _rk4(rhs, W, hh)
                half = _rk4(rhs, _rk4(rhs, W, hh / 2), hh / 2)
                if np.max(np.abs(full - half)) <= rtol * max(np.max(np.abs(W)), 1e-300):
                    W, sub = half, sub + hh
                else:
                    rejected += 1
                    hh /= 2
                    if hh < dt_min:
                        raise StepError(f"step size fell below {dt_min:g} at t={t + sub:.4g}")
                steps += 1
        else:
            W = _rk4(rhs, W, h)
            steps += 1
        t = (i + 1) * h
        _check_negative(W, neg_tol * max(1.0, float(np.max(np.abs(W)))), t)
        if (i + 1) % save_every == 0 or i == nsteps - 1:
            times.append(t)
            vals.append(W.copy())
    values = np.stack(vals)
    return Trajectory(np.array(times), values, energy_functional(values, cfg.model), steps, rejected,
                      {"dt": h, "adaptive": adaptive})


def rayleigh_jeans(model: DispersionModel, N: int, T: float = 1.0) -> np.ndarray:
    return T / model.on_grid(N)


def rj_tolerance(cfg: CollisionConfig, T: float, t_end: float) -> float:
    """``t_end * |C_eta(T/w)|_inf``: the drift a width-``eta`` kernel permits at equilibrium."""
    return t_end * float(np.max(np.abs(get_kernel(cfg).apply(rayleigh_jeans(cfg.model, cfg.N, T)))))


# -- transport ---------------------------------------------------------------


def _shift_axis(W, disp, axis):
    """Periodic linear interpolation ``W(j - disp)`` along spatial ``axis``; ``disp`` broadcasts over k."""
    Y = W.shape[axis]
    i = np.floor(disp).astype(int)
    f = disp - i
    j = np.arange(Y).reshape([-1 if a == axis else 1 for a in range(3)] + [1, 1, 1])
    i = i[None, None, None]
    f = f[None, None, None]
    a = np.take_along_axis(W, np.broadcast_to((j - i) % Y, W.shape), axis=axis)
    b = np.take_along_axis(W, np.broadcast_to((j - i - 1) % Y, W.shape), axis=axis)
    return (1 - f) * a + f * b


def free_streaming_step(W, dt: float, model: DispersionModel, dr: float = 1.0) -> np.ndarray:
    """Semi-Lagrangian step ``W(r, k) <- W(r - v(k) dt, k)`` with ``v = grad w / 2 pi``.

    ``W`` has shape (Y, Y, Y, N, N, N) on a periodic spatial grid of spacing
    ``dr``; the three separable linear interpolations form a trilinear one.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 6:
        raise ConfigError("free streaming needs a (Y, Y, Y, N, N, N) table")
    v = model.velocity(k_grid(W.shape[-1]))
    out = W
    for a in range(3):
        out = _shift_axis(out, v[..., a] * dt / dr, a)
    return out


def cfl_number(model: DispersionModel, dt: float, dr: float = 1.0) -> float:
    return model.max_grad() / (2 * math.pi) * dt / dr


def solve_inhomogeneous(W0, t_end: float, dt: float, cfg: CollisionConfig, dr: float = 1.0,
                        save_every: int = 1) -> Trajectory:
    """Strang splitting: half transport, one RK4 collision step at every ``r``, half transport."""
    W = np.array(W0, dtype=float)
    if W.ndim != 6 or W.shape[-3:] != (cfg.N,) * 3:
        raise ConfigError("initial table must have shape (Y, Y, Y, N, N, N) matching the grid")
    rhs = (lambda v: np.zeros_like(v)) if cfg.lam == 0 else get_kernel(cfg).apply
    nsteps = max(1, math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    h = t_end / nsteps if nsteps else dt
    times, vals = [0.0], [W.copy()]
    for i in range(nsteps):
        W = free_streaming_step(W, h / 2, cfg.model, dr)
        W = _rk4(rhs, W, h)
        W = free_streaming_step(W, h / 2, cfg.model, dr)
        if (i + 1) % save_every == 0 or i == nsteps - 1:
            times.append((i + 1) * h)
            vals.append(W.copy())
    values = np.stack(vals)
    # spatial mean, so a uniform profile reports the homogeneous value
    energy = energy_functional(values, cfg.model).mean(axis=(1, 2, 3))
    return Trajectory(np.array(times), values, energy, nsteps, 0, {"dt": h, "dr": dr})


# -- hierarchy -----------------------------------------------------------------


def _flat_tensor(f, n, M):
    f = np.asarray(f, dtype=float)
    if f.size != M**n:
        raise ConfigError(f"tensor of order {n} must have {M}^{n} entries")
    return f.reshape((M,) * n)


def hierarchy_collision(f_next, n: int, cfg: CollisionConfig, tensor_limit: float = 2e7) -> np.ndarray:
    """``C_{n,n+1} f_{n+1}`` on ``(k-grid)^n`` with flat momentum indices.

    For each slot ``l`` and channel: replace ``k_l`` by ``k'`` and append
    ``k''``, plus ``2 s2 f(k_1..k_n, k')``, weighted like the collision kernel.
    """
    M = cfg.M
    if M ** (n + 1) > tensor_limit:
        raise ResourceGuard(f"order-{n + 1} tensor on N={cfg.N} exceeds {tensor_limit:g} entries")
    f = _flat_tensor(f_next, n + 1, M)
    out = np.zeros((M,) * n)
    if cfg.lam == 0:
        return out
    ker = get_kernel(cfg)
    letters = string.ascii_lowercase
    ar = np.arange(M)
    for (s1, s2), w, idx in zip(ker.channels, ker.weights, ker.index):
        for ell in range(n):
            # gain: sum_k' w[k_l, k'] f(.., k' at l, .., idx[k_l, k'])
            g = np.moveaxis(f, ell, 0)
            gain = np.empty((M,) * n)
            for k in range(M):
                gain[k] = np.tensordot(w[k], g[ar, ..., idx[k]], axes=(0, 0))
            out += np.moveaxis(gain, 0, ell)
            # loss-type term: 2 s2 sum_k' w[k_l, k'] f(k_1..k_n, k')
            ins = letters[:n]
            spec = f"{ins[ell]}z,{ins}z->{ins}"
            out += 2 * s2 * np.einsum(spec, w, f)
    return out


def tensor_power(W, n: int) -> np.ndarray:
    v = np.asarray(W, dtype=float).ravel()
    out = v
    for _ in range(n - 1):
        out = np.multiply.outer(out, v)
    return out


def hierarchy_rhs(fs, cfg: CollisionConfig, closure: str = "factorized"):
    """Right-hand sides for ``f_1..f_nmax`` with ``f_{nmax+1} = f_1^{x(nmax+1)}``."""
    n_max = len(fs)
    if closure != "factorized":
        raise ConfigError(f"unknown closure {closure!r}")
    top = tensor_power(fs[0], n_max + 1)
    return [hierarchy_collision(fs[n] if n < n_max else top, n, cfg) for n in range(1, n_max + 1)]


@dataclass
class HierarchyState:
    fs: list
    t: float = 0.0

    @property
    def n_max(self) -> int:
        return len(self.fs)

    def symmetry_defect(self, rng=None, trials: int = 4) -> float:
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        for f in self.fs:
            if f.ndim < 2:
                continue
            for _ in range(trials):
                perm = rng.permutation(f.ndim)
                worst = max(worst, float(np.max(np.abs(f - np.transpose(f, perm)))))
        return worst


def evolve_hierarchy(W0, t_end: float, dt: float, n_max: int, cfg: CollisionConfig) -> HierarchyState:
    """RK4 for the truncated hierarchy from factorized data ``f_n(0) = W0^{x n}``."""
    fs = [tensor_power(W0, n) for n in range(1, n_max + 1)]
    nsteps = max(1, math.ceil(t_end / dt - 1e-12))
    h = t_end / nsteps

    def add(a, b, c):
        return [x + c * y for x, y in zip(a, b)]

    for _ in range(nsteps):
        k1 = hierarchy_rhs(fs, cfg)
        k2 = hierarchy_rhs(add(fs, k1, h / 2), cfg)
        k3 = hierarchy_rhs(add(fs, k2, h / 2), cfg)
        k4 = hierarchy_rhs(add(fs, k3, h), cfg)
        fs = [f + h / 6 * (a + 2 * b + 2 * c + d) for f, a, b, c, d in zip(fs, k1, k2, k3, k4)]
    return HierarchyState(fs, nsteps * h)


@dataclass
class FactorizationReport:
    t: float
    dt: float
    n_max: int
    deviation: float
    symmetry_defect: float


def factorization_check(W0, t: float, n_max: int, cfg: CollisionConfig, dt: float) -> FactorizationReport:
    """Max deviation of the hierarchy's ``f_2`` from ``W x W`` with ``W`` the Boltzmann solution."""
    if n_max < 2:
        raise ConfigError("factorization check needs n_max >= 2")
    st = evolve_hierarchy(W0, t, dt, n_max, cfg)
    W = solve_homogeneous(W0, t, dt, cfg).final
    dev = float(np.max(np.abs(st.fs[1] - tensor_power(W, 2))))
    return FactorizationReport(t, t / max(1, math.ceil(t / dt - 1e-12)), n_max, dev, st.symmetry_defect())


# -- perturbative series --------------------------------------------------------


def collision_bilinear(u, v, cfg: CollisionConfig) -> np.ndarray:
    """Symmetric bilinear form with ``B(W, W) = C W``."""
    if cfg.lam == 0:
        return np.zeros(np.shape(u))
    ker = get_kernel(cfg)
    uf = np.asarray(u, dtype=float).ravel()
    vf = np.asarray(v, dtype=float).ravel()
    out = np.zeros_like(uf)
    for (s1, s2), w, idx in zip(ker.channels, ker.weights, ker.index):
        out += 0.5 * (np.einsum("ij,ij,j->i", w, vf[idx], uf) + np.einsum("ij,ij,j->i", w, uf[idx], vf))
        out += s2 * (uf * np.einsum("ij,j->i", w, vf) + vf * np.einsum("ij,j->i", w, uf))
    return out.reshape(np.shape(u))


@dataclass
class SeriesExpansion:
    """Terms ``W_n(k, t) = c_n t^n``; ``coefficients`` holds ``c_n``."""

    coefficients: np.ndarray
    t: float

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    @property
    def terms(self) -> np.ndarray:
        powers = self.t ** np.arange(self.order + 1)
        return self.coefficients * powers.reshape((-1,) + (1,) * (self.coefficients.ndim - 1))

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.terms, axis=0)

    def at(self, t: float) -> "SeriesExpansion":
        return SeriesExpansion(self.coefficients, t)


def perturbative_series(W0, t: float, order: int, cfg: CollisionConfig, max_order: int = 12) -> SeriesExpansion:
    """Taylor coefficients of the Boltzmann flow.

    ``(m + 1) c_{m+1} = sum_{i+j=m} B(c_i, c_j)``, which equals
    ``C_{1,2} ... C_{m,m+1} W0^{x(m+1)} / m!`` for factorized data without
    building any tensor.
    """
    if order < 0 or order > max_order:
        raise ResourceGuard(f"series order must lie in [0, {max_order}]")
    W0 = np.asarray(W0, dtype=float)
    cs = [W0]
    for m in range(order):
        acc = np.zeros_like(W0)
        for i in range(m + 1):
            j = m - i
            if i > j:
                break
            b = collision_bilinear(cs[i], cs[j], cfg)
            acc += b if i == j else 2 * b
        cs.append(acc / (m + 1))
    return SeriesExpansion(np.stack(cs), t)


def series_term_tensor(W0, n: int, cfg: CollisionConfig) -> np.ndarray:
    """``C_{1,2} ... C_{n,n+1} W0^{x(n+1)} / n!`` by materializing the tensors (small grids only)."""
    f = tensor_power(W0, n + 1)
    for m in range(n, 0, -1):
        f = hierarchy_collision(f, m, cfg)
    return f.reshape(np.shape(W0)) / math.factorial(n)
