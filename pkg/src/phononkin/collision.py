"""Three-phonon collision operator with a mollified energy delta.

The momentum delta is resolved exactly on the ``N^3`` grid: for each output
``k`` and summation point ``k1`` the third momentum is
``k2 = -sigma2 (k + sigma1 k1) mod 1``.  The energy delta is replaced by a
Gaussian or Lorentzian of width ``eta``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConfigError, ResolutionError, ResourceGuard
from .spectral import DispersionModel

ALL_CHANNELS = ((1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class VertexWeight:
    lam: float
    model: DispersionModel

    def phi(self, k, k1, k2) -> np.ndarray:
        return vertex_phi(k, k1, k2, self)


def vertex_phi(k, k1, k2, vw: VertexWeight) -> np.ndarray:
    """``lam (8 w(k) w(k1) w(k2))^(-1/2)``; the product is taken in sorted order so swaps are exact."""
    w = vw.model.omega
    ws = np.sort(np.stack(np.broadcast_arrays(w(k), w(k1), w(k2))), axis=0)
    return vw.lam / np.sqrt(8.0 * ws[0] * ws[1] * ws[2])


@dataclass(frozen=True)
class MollifierSpec:
    kind: str = "gaussian"
    width: float = 0.1

    def __post_init__(self):
        if self.kind not in ("gaussian", "lorentzian"):
            raise ConfigError(f"unknown mollifier kind {self.kind!r}")
        if not self.width > 0:
            raise ConfigError("mollifier width must be positive")

    def scaled(self, factor: float) -> "MollifierSpec":
        return MollifierSpec(self.kind, self.width * factor)


def mollified_delta(x, m: MollifierSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    eta = m.width
    if m.kind == "gaussian":
        return np.exp(-0.5 * (x / eta) ** 2) / (eta * math.sqrt(2 * math.pi))
    return (eta / math.pi) / (x * x + eta * eta)


@dataclass(frozen=True)
class CollisionConfig:
    model: DispersionModel
    lam: float
    N: int
    mollifier: MollifierSpec = field(default_factory=MollifierSpec)
    channels: tuple = ALL_CHANNELS
    memory_budget: float = 2.5e9

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError("grid resolution N must be at least 2")
        ch = tuple(tuple(int(s) for s in c) for c in self.channels)
        for c in ch:
            if len(c) != 2 or any(s not in (1, -1) for s in c):
                raise ConfigError(f"malformed channel {c}")
            if c == (1, 1):
                raise ConfigError("the (+,+) channel has no energy shell and must be excluded")
        if len(set(ch)) != len(ch):
            raise ConfigError("duplicate channels")
        object.__setattr__(self, "channels", ch)

    @property
    def eta(self) -> float:
        return self.mollifier.width

    @property
    def M(self) -> int:
        return self.N**3

    def with_width(self, eta: float) -> "CollisionConfig":
        return CollisionConfig(self.model, self.lam, self.N, MollifierSpec(self.mollifier.kind, eta),
                               self.channels, self.memory_budget)

    def with_lam(self, lam: float) -> "CollisionConfig":
        return CollisionConfig(self.model, lam, self.N, self.mollifier, self.channels, self.memory_budget)

    def describe(self) -> dict:
        return {
            "model": self.model.describe(),
            "lam": self.lam,
            "N": self.N,
            "mollifier": {"kind": self.mollifier.kind, "width": self.eta},
            "channels": [list(c) for c in self.channels],
        }


# -- energy-shell diagnostics ---------------------------------------------------


def _grid_indices(N: int) -> np.ndarray:
    n = np.indices((N, N, N)).reshape(3, -1).T
    return n


def _flat(n: np.ndarray, N: int) -> np.ndarray:
    n = np.mod(n, N)
    return (n[..., 0] * N + n[..., 1]) * N + n[..., 2]


def _gap_function(model: DispersionModel):
    def g(x):
        k, kp = x[:3], x[3:]
        return float(model.omega(k) + model.omega(kp) - model.omega(k + kp))

    def g2(x):
        k, kp = x[:3], x[3:]
        val = g(x)
        gs = model.grad(k + kp)
        jac = np.concatenate([model.grad(k) - gs, model.grad(kp) - gs])
        return val * val, 2 * val * jac

    return g, g2


@dataclass
class GapReport:
    levels: list
    grid_gaps: list
    refined_gap: float
    argmin: tuple
    verdict: str

    def lines(self):
        yield f"levels: {self.levels}"
        yield f"grid_min_gaps: {[float(g) for g in self.grid_gaps]}"
        yield f"min_gap: {self.refined_gap!r}"
        yield f"argmin_k: {list(self.argmin[:3])}"
        yield f"argmin_kprime: {list(self.argmin[3:])}"
        yield f"verdict: {self.verdict}"


def _grid_gap(model: DispersionModel, N: int, top: int):
    w = model.on_grid(N).ravel()
    n = _grid_indices(N)
    best = np.inf
    cands = []
    chunk = max(1, 2**22 // len(w))
    for s in range(0, len(w), chunk):
        rows = np.arange(s, min(s + chunk, len(w)))
        idx = _flat(n[rows][:, None, :] + n[None, :, :], N)
        g = np.abs(w[rows][:, None] + w[None, :] - w[idx])
        flat = np.argpartition(g.ravel(), min(top, g.size - 1))[:top]
        for f in flat:
            i, j = divmod(int(f), len(w))
            cands.append((float(g[i, j]), int(rows[i]), j))
        best = min(best, float(g.min()))
    cands.sort()
    pts = [np.concatenate([n[i], n[j]]) / N for _, i, j in cands[:top]]
    return best, pts


def no_collision_check(model: DispersionModel, levels=(8, 12, 16), refine: int = 8, tol: float = 1e-6) -> GapReport:
    """Minimum of ``|w(k) + w(k') - w(k + k')|`` over nested grids plus local refinement.

    The refinement minimizes the squared gap from the best grid candidates of
    the finest level with a gradient-based local search on the torus.
    """
    grid_gaps = []
    pts = []
    for N in levels:
        gap, pts = _grid_gap(model, N, refine)
        grid_gaps.append(gap)
    g, g2 = _gap_function(model)
    best = grid_gaps[-1]
    arg = tuple(float(c) for c in pts[0]) if pts else (0.0,) * 6
    for x0 in pts:
        res = optimize.minimize(g2, x0, jac=True, method="BFGS", options={"gtol": 1e-14, "maxiter": 500})
        val = abs(g(res.x))
        if val < best:
            best = val
            arg = tuple(float(c) for c in np.mod(res.x, 1.0))
    verdict = "min_gap > 0" if best > tol else "min_gap = 0 (resonances exist)"
    return GapReport(list(levels), grid_gaps, float(best), arg, verdict)


@functools.lru_cache(maxsize=16)
def shell_gap(model: DispersionModel) -> float:
    """Sampling-certified lower bound of the energy-shell gap (0 when resonances exist)."""
    return no_collision_check(model).refined_gap


def resolution_floor(model: DispersionModel, N: int) -> float:
    """Smallest admissible mollifier width ``2 max|grad w| / N``."""
    return 2.0 * model.max_grad() / N


def check_resolution(cfg: CollisionConfig) -> str:
    """Enforce the mollifier resolution criterion.

    Widths below the floor are admitted for Gaussian mollifiers when the
    whole energy shell is at distance more than ``8 eta`` (the kernel is then
    uniformly below ``e^-32`` and nothing needs resolving).  Returns the
    reason the configuration was accepted.
    """
    floor = resolution_floor(cfg.model, cfg.N)
    if cfg.eta >= floor * (1 - 1e-12):
        return "resolved"
    if cfg.mollifier.kind == "gaussian" and shell_gap(cfg.model) > 8 * cfg.eta:
        return "empty-shell"
    raise ResolutionError(
        f"mollifier width {cfg.eta:g} below resolution floor {floor:g} for N={cfg.N} "
        f"(model {cfg.model.name})"
    )


# -- kernel ------------------------------------------------------------------


class CollisionKernel:
    """Precomputed quadrature weights and gather indices for each channel.

    ``weights[c][i, j] = 4 pi phi^2 delta_eta(w_i + s1 w_j + s2 w_m) / N^3`` with
    ``m = index[c][i, j]`` the flat index of ``k2``.
    """

    def __init__(self, cfg: CollisionConfig, check: bool = True):
        self.cfg = cfg
        self.status = check_resolution(cfg) if check else "unchecked"
        N, M = cfg.N, cfg.M
        need = len(cfg.channels) * M * M * 12
        if need > cfg.memory_budget:
            raise ResourceGuard(f"collision kernel needs {need / 1e9:.2f} GB (budget {cfg.memory_budget / 1e9:.2f} GB)")
        w = cfg.model.on_grid(N).ravel()
        self.omega = w
        n = _grid_indices(N)
        self.weights = []
        self.index = []
        chunk = max(1, 2**21 // M)
        for s1, s2 in cfg.channels:
            W = np.empty((M, M))
            I = np.empty((M, M), dtype=np.int32)
            for s in range(0, M, chunk):
                rows = np.arange(s, min(s + chunk, M))
                idx = _flat(-s2 * (n[rows][:, None, :] + s1 * n[None, :, :]), N)
                arg = w[rows][:, None] + s1 * w[None, :] + s2 * w[idx]
                phi2 = cfg.lam**2 / (8.0 * w[rows][:, None] * w[None, :] * w[idx])
                W[rows] = 4 * math.pi * phi2 * mollified_delta(arg, cfg.mollifier) / M
                I[rows] = idx
            self.weights.append(W)
            self.index.append(I)

    @property
    def channels(self):
        return self.cfg.channels

    def _flatten(self, W):
        W = np.asarray(W, dtype=float)
        N = self.cfg.N
        if W.shape[-3:] != (N, N, N):
            raise ConfigError(f"table shape {W.shape} does not match grid N={N}")
        return W.reshape(W.shape[:-3] + (N**3,))

    def apply(self, W) -> np.ndarray:
        """``sum_c sum_k1 w (W1 W2 + 2 s2 W W1)``; accepts leading batch axes."""
        Wf = self._flatten(W)
        batch = Wf.reshape(-1, Wf.shape[-1])
        out = np.zeros_like(batch)
        for (s1, s2), w, idx in zip(self.channels, self.weights, self.index):
            for b, v in enumerate(batch):
                out[b] += np.einsum("ij,ij,j->i", w, v[idx], v) + 2 * s2 * v * np.einsum("ij,j->i", w, v)
        return out.reshape(np.shape(W))

    def apply_symmetric(self, W) -> np.ndarray:
        """Three-term form ``W1 W2 + s1 W W2 + s2 W W1`` summed over channels."""
        Wf = self._flatten(W)
        batch = Wf.reshape(-1, Wf.shape[-1])
        out = np.zeros_like(batch)
        for (s1, s2), w, idx in zip(self.channels, self.weights, self.index):
            for b, v in enumerate(batch):
                v2 = v[idx]
                out[b] += np.einsum("ij,ij,j->i", w, v2, v) + s1 * v * np.einsum("ij,ij->i", w, v2) + s2 * v * np.einsum("ij,j->i", w, v)
        return out.reshape(np.shape(W))

    def rate(self, W) -> np.ndarray:
        """Collision rate ``nu(k) = sum_c sum_k1 w 2|W(k1)|``."""
        v = np.abs(self._flatten(W))
        nu = sum(2 * np.einsum("ij,j->i", w, v) for w in self.weights)
        return nu.reshape(np.shape(W))

    def collision_time(self, W) -> float:
        nu = float(np.max(self.rate(W)))
        return math.inf if nu == 0 else 1.0 / nu

    def energy_residual(self, W) -> float:
        """``N^-3 sum_k w(k) (C W)(k)``; vanishes as ``eta -> 0``."""
        c = self._flatten(self.apply(W))
        return float(np.sum(self.omega * c) / self.cfg.M)


_KERNELS: dict = {}


def get_kernel(cfg: CollisionConfig) -> CollisionKernel:
    """Kernel for ``cfg``, keeping the two most recent ones alive."""
    ker = _KERNELS.pop(cfg, None)
    if ker is None:
        ker = CollisionKernel(cfg)
    _KERNELS[cfg] = ker
    while len(_KERNELS) > 2:
        _KERNELS.pop(next(iter(_KERNELS)))
    return ker


def collision_apply(W, cfg: CollisionConfig, form: str = "reduced") -> np.ndarray:
    """``(C W)(k)`` on the grid; ``form`` is ``"reduced"`` (2 s2 W W1) or ``"symmetric"``."""
    if cfg.lam == 0:
        return np.zeros(np.shape(W))
    ker = get_kernel(cfg)
    if form == "reduced":
        return ker.apply(W)
    if form == "symmetric":
        return ker.apply_symmetric(W)
    raise ConfigError(f"unknown collision form {form!r}")


# -- shell measure and c0 --------------------------------------------------------


def _shell_sums(model: DispersionModel, N: int, m: MollifierSpec):
    """Row sums ``N^-3 sum_k' delta_eta(w(k) + w(k') - w(k + k'))`` for every grid k."""
    w = model.on_grid(N).ravel()
    M = len(w)
    n = _grid_indices(N)
    out = np.empty(M)
    chunk = max(1, 2**22 // M)
    for s in range(0, M, chunk):
        rows = np.arange(s, min(s + chunk, M))
        idx = _flat(n[rows][:, None, :] + n[None, :, :], N)
        out[rows] = mollified_delta(w[rows][:, None] + w[None, :] - w[idx], m).sum(axis=1) / M
    return out


@dataclass
class MeasureReport:
    etas: list
    values: list
    extrapolated: float
    error: float
    status: str

    @property
    def positive(self) -> bool:
        return self.extrapolated - self.error > 0

    def rows(self):
        for e, v in zip(self.etas, self.values):
            yield (repr(e), repr(v))


def collision_measure(cfg: CollisionConfig, factors=(2.0, math.sqrt(2.0), 1.0)) -> MeasureReport:
    """Mollified ``int int delta(w(k) + w(k') - w(k + k')) dk dk'`` extrapolated to ``eta -> 0``.

    Values at ``eta = cfg.eta * f`` are fitted by ``a + b eta^2``.  The error
    bar combines the fit residual and the spread between the two-point
    Richardson extrapolations of the coarse and the fine pair.
    """
    status = check_resolution(cfg.with_width(cfg.eta * min(factors)))
    etas = [cfg.eta * f for f in factors]
    vals = [float(_shell_sums(cfg.model, cfg.N, cfg.mollifier.scaled(f)).mean()) for f in factors]
    e2 = np.array(etas) ** 2
    A = np.stack([np.ones_like(e2), e2], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.array(vals), rcond=None)
    resid = np.abs(A @ coef - vals).max()

    def rich(i, j):
        return (vals[j] * e2[i] - vals[i] * e2[j]) / (e2[i] - e2[j])

    spread = abs(rich(0, 1) - rich(1, 2)) if len(vals) >= 3 else 0.0
    err = float(resid + spread)
    return MeasureReport(etas, vals, float(coef[0]), err, status)


@dataclass
class C0Report:
    etas: list
    sups: list
    argmax: list
    variation: float

    @property
    def stable(self) -> bool:
        return self.variation < 0.1


def c0_bound(cfg: CollisionConfig, factors=(math.sqrt(2.0), 1.0)) -> C0Report:
    """``sup_k int dk' delta_eta(w(k) + w(k') - w(k + k'))`` at successive widths."""
    check_resolution(cfg.with_width(cfg.eta * min(factors)))
    N = cfg.N
    sups, args, etas = [], [], []
    for f in factors:
        s = _shell_sums(cfg.model, N, cfg.mollifier.scaled(f))
        i = int(np.argmax(s))
        etas.append(cfg.eta * f)
        sups.append(float(s[i]))
        args.append(tuple(int(c) / N for c in np.unravel_index(i, (N, N, N))))
    top = max(max(sups), 1e-300)
    variation = (max(sups) - min(sups)) / top if max(sups) > 0 else 0.0
    return C0Report(etas, sups, args, float(variation))
