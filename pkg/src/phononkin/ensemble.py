"""Gaussian initial ensembles for the a-field and Wigner function estimators."""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .lattice import LATTICE_AXES, k_grid
from .spectral import DispersionModel, afield_energy, dft, idft

# -- expressions for W(k) ---------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"cos": np.cos, "sin": np.sin, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}


def _eval_node(node, names):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ConfigError(f"unknown name {node.id!r} in expression")
        return names[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left, names), _eval_node(node.right, names))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval_node(node.operand, names))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        return _FUNCS[node.func.id](*[_eval_node(a, names) for a in node.args])
    raise ConfigError(f"unsupported construct in expression: {ast.dump(node)}")


def eval_k_expression(expr: str, L: int, model: DispersionModel | None = None, **params) -> np.ndarray:
    """Evaluate an expression for ``W(k)`` on the ``L``-grid.

    Available names: ``k1 k2 k3``, ``c1 c2 c3`` (``cos 2 pi k^a``), ``s1 s2 s3``,
    ``pi``, ``omega`` (needs ``model``) and any keyword ``params``.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc.msg}") from exc
    k = k_grid(L)
    names = {"pi": math.pi}
    for a in range(3):
        names[f"k{a + 1}"] = k[..., a]
        names[f"c{a + 1}"] = np.cos(2 * np.pi * k[..., a])
        names[f"s{a + 1}"] = np.sin(2 * np.pi * k[..., a])
    if model is not None:
        names["omega"] = model.on_grid(L)
    names.update({key: float(v) for key, v in params.items()})
    out = _eval_node(tree, names)
    return np.broadcast_to(np.asarray(out, dtype=float), (L, L, L)).copy()


def eval_y_expression(expr: str, Y: int, **params) -> np.ndarray:
    """Evaluate a spatial profile on a ``Y^3`` grid; names ``y1 y2 y3`` run over ``[0, 1)``."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc.msg}") from exc
    y = np.stack(np.meshgrid(*(np.arange(Y) / Y,) * 3, indexing="ij"), axis=-1)
    names = {"pi": math.pi, **{f"y{a + 1}": y[..., a] for a in range(3)}}
    names.update({key: float(v) for key, v in params.items()})
    out = _eval_node(tree, names)
    return np.broadcast_to(np.asarray(out, dtype=float), (Y, Y, Y)).copy()


# -- sampling -----------------------------------------------------------------


@dataclass(frozen=True)
class GaussianFieldSpec:
    """Translation-invariant Gaussian measure with ``E[a(k)* a(k')] = L^3 delta W(k)``."""

    W: np.ndarray
    seed: int = 0

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 3 or len(set(W.shape)) != 1:
            raise ConfigError("W must be a cubic (L, L, L) table")
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise ConfigError("W must be finite and non-negative")
        object.__setattr__(self, "W", W)

    @property
    def L(self) -> int:
        return self.W.shape[0]


def rng_stream(seed: int, index: int, *names) -> np.random.Generator:
    """Counter-based generator for sample ``index`` under root ``seed``."""
    key = (int(index),) + tuple(int.from_bytes(n.encode(), "little") % (2**32) for n in names)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def sample(spec: GaussianFieldSpec, rng: np.random.Generator) -> np.ndarray:
    """One a-field draw: independent circular complex Gaussians per grid point."""
    L = spec.L
    z = rng.standard_normal((2, L, L, L))
    return np.sqrt(L**3 * spec.W / 2) * (z[0] + 1j * z[1])


def sample_set(spec: GaussianFieldSpec, count: int, start: int = 0) -> np.ndarray:
    """``count`` samples, sample ``i`` drawn from ``rng_stream(spec.seed, start + i)``."""
    L = spec.L
    out = np.empty((count, L, L, L), dtype=complex)
    for i in range(count):
        out[i] = sample(spec, rng_stream(spec.seed, start + i))
    return out


def modulated_sample(spec: GaussianFieldSpec, envelope, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Locally stationary draw: the stationary field multiplied by ``envelope(eps x)`` in position space.

    ``envelope`` maps macroscopic positions ``r`` (array (..., 3)) to amplitudes;
    the resulting Wigner function is close to ``envelope(r)^2 W(k)``.
    """
    a = sample(spec, rng)
    L = spec.L
    x = np.stack(np.meshgrid(*(np.arange(L),) * 3, indexing="ij"), axis=-1).astype(float)
    return dft(envelope(eps * x) * idft(a))


# -- estimators ---------------------------------------------------------------


def jackknife(values: np.ndarray, stat=None):
    """Leave-one-out jackknife along axis 0; returns ``(estimate, stderr)``."""
    values = np.asarray(values)
    n = values.shape[0]
    if stat is None:
        est = values.mean(axis=0)
        if n < 2:
            return est, np.full(np.shape(est), np.nan)
        loo = (values.sum(axis=0) - values) / (n - 1)
    else:
        est = stat(values)
        if n < 2:
            return est, np.full(np.shape(est), np.nan)
        loo = np.stack([stat(np.delete(values, i, axis=0)) for i in range(n)])
    err = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return est, err


@dataclass
class WignerTable:
    """Wigner function on the k-grid, optionally resolved in macroscopic position.

    ``values`` has shape (L, L, L) (homogeneous) or (Y, Y, Y, L, L, L).
    """

    values: np.ndarray
    stderr: np.ndarray | None = None
    eps: float | None = None
    sample_count: int = 0
    imag_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.values.shape[-1]

    @property
    def homogeneous(self) -> bool:
        return self.values.ndim == 3

    def phonon_number(self) -> float:
        """``sum_y int dk W(y, k)`` with ``int dk -> L^-3 sum_k``."""
        return float(self.values.sum() / self.L**3)

    def density(self) -> np.ndarray:
        """Spatial profile ``int dk W(y, k)``."""
        return self.values.sum(axis=LATTICE_AXES) / self.L**3


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] < 1:
        raise ConfigError("expected a non-empty stack of a-fields")
    return arr


def wigner_homogeneous(samples) -> WignerTable:
    """``L^-3`` times the sample mean of ``|a(k)|^2`` with jackknife errors."""
    arr = _as_samples(samples)
    L = arr.shape[-1]
    vals = np.abs(arr) ** 2 / L**3
    est, err = jackknife(vals)
    return WignerTable(est, err, None, arr.shape[0])


def wigner_inhomogeneous(samples, eps: float, window=None) -> WignerTable:
    """Position-resolved Wigner function ``W(y, k)`` at ``y = eps x``.

    For each grid shift ``m`` the covariance ``<a(k_-)* a(k_+)>`` with
    ``k_+ - k_- = m / L`` is estimated over samples, where the half shift is
    rounded as ``k_- = k - floor(m/2)/L``, ``k_+ = k + ceil(m/2)/L``.
    The sum over ``m`` with phase ``exp(2 pi i x.m / L)`` is an inverse DFT,
    which makes ``sum_y sum_k L^-3 W`` equal the phonon number exactly.

    ``window`` optionally restricts the output to lattice sites
    ``x in start + [0, size)^3`` given as ``(start, size)``.
    """
    arr = _as_samples(samples)
    S, L = arr.shape[0], arr.shape[-1]
    inv = 1.0 / eps
    if abs(inv - round(inv)) > 1e-9 or abs(eps * L - round(eps * L)) > 1e-9:
        raise ConfigError(f"eps={eps} is not commensurate with L={L}: need 1/eps and eps*L integer")
    cov = np.empty((L, L, L, L, L, L), dtype=complex)
    for m1 in range(L):
        for m2 in range(L):
            for m3 in range(L):
                m = (m1, m2, m3)
                lo = tuple(c // 2 for c in m)
                hi = tuple(c - c // 2 for c in m)
                a_minus = np.roll(arr, lo, axis=LATTICE_AXES)
                a_plus = np.roll(arr, tuple(-c for c in hi), axis=LATTICE_AXES)
                cov[m1, m2, m3] = np.mean(np.conj(a_minus) * a_plus, axis=0)
    W = np.fft.ifftn(cov, axes=(0, 1, 2))
    if window is not None:
        start, size = window
        idx = [np.arange(start, start + size) % L] * 3
        W = W[np.ix_(*idx)]
    scale = max(float(np.max(np.abs(W.real))), 1e-300)
    table = WignerTable(W.real.copy(), None, eps, S, float(np.max(np.abs(W.imag)) / scale))
    table.meta["positions"] = "eps * x"
    return table


def conserved_totals(samples, model: DispersionModel) -> dict:
    """Phonon number ``L^-3 sum |a|^2`` and harmonic energy ``L^-3 sum w |a|^2``.

    Returns sample means under ``phonon_number``/``energy`` and the per-sample
    arrays under ``*_per_sample``.
    """
    arr = _as_samples(samples)
    L = arr.shape[-1]
    number = np.sum(np.abs(arr) ** 2, axis=LATTICE_AXES) / L**3
    en = afield_energy(arr, model)
    return {
        "phonon_number": float(number.mean()),
        "energy": float(en.mean()),
        "phonon_number_per_sample": number,
        "energy_per_sample": en,
    }


def table_totals(table: WignerTable, model: DispersionModel) -> dict:
    """Phonon number and energy carried by a homogeneous table."""
    L = table.L
    w = model.on_grid(L)
    vals = table.values if table.homogeneous else table.values.sum(axis=(0, 1, 2))
    return {"phonon_number": float(vals.sum() / L**3), "energy": float((w * vals).sum() / L**3)}


def wigner_rows(table: WignerTable):
    """CSV rows ``k1, k2, k3, W, stderr`` (k1 fastest) for a homogeneous table."""
    if not table.homogeneous:
        raise ConfigError("row export is defined for homogeneous tables")
    L = table.L
    err = table.stderr if table.stderr is not None else np.full(table.values.shape, np.nan)
    for n3 in range(L):
        for n2 in range(L):
            for n1 in range(L):
                yield (repr(n1 / L), repr(n2 / L), repr(n3 / L),
                       repr(float(table.values[n1, n2, n3])), repr(float(err[n1, n2, n3])))


def table_from_rows(rows) -> WignerTable:
    rows = list(rows)
    L = round(len(rows) ** (1 / 3))
    if L**3 != len(rows):
        raise ConfigError("row count is not a cube")
    vals = np.empty((L, L, L))
    err = np.empty((L, L, L))
    for r in rows:
        idx = tuple(int(round(float(c) * L)) % L for c in r[:3])
        vals[idx] = float(r[3])
        err[idx] = float(r[4])
    return WignerTable(vals, err)
