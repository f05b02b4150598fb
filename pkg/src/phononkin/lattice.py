"""Microscopic model: scalar displacement field on a periodic cubic lattice.

The Hamiltonian is

    H = 1/2 sum_x (p_x^2 + w0^2 q_x^2) + 1/2 sum_{x,y} alpha(x-y) q_x q_y + sum_x V(q_x)

with the on-site anharmonicity ``V(u) = sqrt(eps) lam u^3 / 3`` and an optional
quartic term ``eps lam^2 u^4 / (18 w0^2)`` that makes ``H`` bounded below.

Fields are numpy arrays whose last three axes are the lattice; any leading
axes are treated as a batch (independent copies evolved together).
"""

from __future__ import annotations

import functools
import math
import struct
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .errors import BlowUp, ConfigError, ModelError

LATTICE_AXES = (-3, -2, -1)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(float(value))


@dataclass(frozen=True)
class CouplingStencil:
    """Finite harmonic coupling ``alpha(x)`` stored as exact rationals.

    ``offsets`` and ``values`` are parallel tuples.  Symmetry and the zero-sum
    rule are checked exactly at construction.
    """

    offsets: tuple
    values: tuple
    name: str = "custom"
    alpha0: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        offs = tuple(tuple(int(c) for c in o) for o in self.offsets)
        vals = tuple(_as_fraction(v) for v in self.values)
        if len(offs) != len(vals):
            raise ModelError("offsets and values differ in length")
        if any(len(o) != 3 for o in offs):
            raise ModelError("stencil offsets must be 3-vectors")
        table = {}
        for o, v in zip(offs, vals):
            table[o] = table.get(o, Fraction(0)) + v
        for o, v in table.items():
            if table.get(tuple(-c for c in o), Fraction(0)) != v:
                raise ModelError(f"stencil not symmetric at offset {o}")
        if sum(table.values(), Fraction(0)) != 0:
            raise ModelError("stencil values do not sum to zero")
        keys = sorted(table)
        object.__setattr__(self, "offsets", tuple(keys))
        object.__setattr__(self, "values", tuple(table[k] for k in keys))

    def as_dict(self) -> dict:
        return dict(zip(self.offsets, self.values))

    def symbol(self, k) -> np.ndarray:
        """Fourier symbol ``sum_x alpha(x) cos(2 pi k.x)`` at wave vectors ``k`` (..., 3)."""
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape[:-1])
        for o, v in zip(self.offsets, self.values):
            if v == 0:
                continue
            out = out + float(v) * np.cos(2 * np.pi * (k @ np.asarray(o, dtype=float)))
        return out

    def symbol_gradient(self, k) -> np.ndarray:
        """Gradient of :meth:`symbol` with respect to ``k``."""
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape)
        for o, v in zip(self.offsets, self.values):
            if v == 0:
                continue
            ov = np.asarray(o, dtype=float)
            s = np.sin(2 * np.pi * (k @ ov))
            out = out - 2 * np.pi * float(v) * s[..., None] * ov
        return out

    def folded(self, L: int) -> dict:
        """Offsets reduced mod ``L``; overlaps are summed and flagged once."""
        return dict(_folded(self, L))

    def grid_symbol(self, L: int) -> np.ndarray:
        return _grid_symbol(self, L).copy()

    def check_stability(self, L: int):
        """Raise :class:`ModelError` unless the symbol is positive off ``k = 0``.

        The all-zero stencil is accepted (flat dispersion).
        """
        if all(v == 0 for v in self.values):
            return
        sym = _grid_symbol(self, L).copy()
        sym[0, 0, 0] = np.inf
        if np.min(sym) <= 0:
            raise ModelError(f"stencil {self.name!r} is not mechanically stable on L={L}")


@functools.lru_cache(maxsize=64)
def _folded(stencil: CouplingStencil, L: int) -> tuple:
    out = {}
    for o, v in zip(stencil.offsets, stencil.values):
        key = tuple(c % L for c in o)
        if key in out:
            warnings.warn(f"stencil {stencil.name!r}: offsets fold onto {key} for L={L}", stacklevel=3)
        out[key] = out.get(key, Fraction(0)) + v
    return tuple(sorted(out.items()))


@functools.lru_cache(maxsize=64)
def _grid_symbol(stencil: CouplingStencil, L: int) -> np.ndarray:
    sym = stencil.symbol(k_grid(L))
    sym.setflags(write=False)
    return sym


def zero_stencil() -> CouplingStencil:
    return CouplingStencil((), (), name="zero")


def nearest_neighbor_stencil() -> CouplingStencil:
    """alpha(0) = 6, alpha(e) = -1 for the six unit vectors."""
    offs = [(0, 0, 0)]
    vals = [6]
    for a in range(3):
        for s in (1, -1):
            e = [0, 0, 0]
            e[a] = s
            offs.append(tuple(e))
            vals.append(-1)
    return CouplingStencil(tuple(offs), tuple(vals), name="nn", alpha0=6.0, gamma=1.0)


def cosine_dispersion_stencil(omega0) -> CouplingStencil:
    """Stencil whose dispersion is ``w0 + sum_a (1 - cos 2 pi k^a)``.

    ``w(k)^2 - w0^2`` is a trigonometric polynomial, so the couplings are exact:
    nearest neighbours, the doubled axis offsets ``2 e_a`` and the planar
    diagonals ``e_a +- e_b``.
    """
    w0 = _as_fraction(omega0)
    c = w0 + 3
    offs = [(0, 0, 0)]
    vals = [c * c + Fraction(3, 2) - w0 * w0]
    for a in range(3):
        for s in (1, -1):
            e = [0, 0, 0]
            e[a] = s
            offs.append(tuple(e))
            vals.append(-c)
            e2 = [0, 0, 0]
            e2[a] = 2 * s
            offs.append(tuple(e2))
            vals.append(Fraction(1, 4))
    for a in range(3):
        for b in range(a + 1, 3):
            for sa in (1, -1):
                for sb in (1, -1):
                    e = [0, 0, 0]
                    e[a] = sa
                    e[b] = sb
                    offs.append(tuple(e))
                    vals.append(Fraction(1, 2))
    return CouplingStencil(tuple(offs), tuple(vals), name="nn-nnn-311", alpha0=float(vals[0]), gamma=1.0)


@dataclass(frozen=True)
class PotentialSpec:
    lam: float
    eps: float
    omega0: float
    quartic_stabilizer: bool = False

    def __post_init__(self):
        if not (0 < self.eps <= 1):
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if self.omega0 <= 0:
            raise ConfigError("omega0 must be positive")

    @property
    def cubic(self) -> float:
        return math.sqrt(self.eps) * self.lam

    @property
    def quartic(self) -> float:
        if not self.quartic_stabilizer:
            return 0.0
        return self.eps * self.lam**2 / (18 * self.omega0**2)

    def onsite(self, u):
        return self.cubic * u**3 / 3 + self.quartic * u**4

    def onsite_force(self, u):
        out = -self.cubic * u * u
        if self.quartic_stabilizer:
            out = out - 4 * self.quartic * u**3
        return out


@dataclass(frozen=True)
class FieldState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape or q.ndim < 3 or len(set(q.shape[-3:])) != 1:
            raise ConfigError(f"q and p must be cubic lattice fields of equal shape, got {q.shape} and {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def L(self) -> int:
        return self.q.shape[-1]

    @classmethod
    def zeros(cls, L: int, batch=()):
        shape = tuple(batch) + (L, L, L)
        return cls(np.zeros(shape), np.zeros(shape), 0.0)


def k_grid(L: int) -> np.ndarray:
    """Wave vectors ``n / L`` of the discrete torus, shape (L, L, L, 3)."""
    n = np.arange(L) / L
    return np.stack(np.meshgrid(n, n, n, indexing="ij"), axis=-1)


def _check_finite(arr, what, t=None):
    if not np.all(np.isfinite(arr)):
        raise BlowUp(f"non-finite values in {what}", t=t)


def harmonic_coupling(q: np.ndarray, stencil: CouplingStencil, method: str = "direct") -> np.ndarray:
    """``sum_y alpha(y - x) q_y`` with periodic wrapping."""
    L = q.shape[-1]
    if method == "direct":
        out = np.zeros_like(q)
        for off, v in _folded(stencil, L):
            if v == 0:
                continue
            out += float(v) * np.roll(q, shift=tuple(-c for c in off), axis=LATTICE_AXES)
        return out
    if method == "spectral":
        sym = _grid_symbol(stencil, L)
        return np.fft.ifftn(sym * np.fft.fftn(q, axes=LATTICE_AXES), axes=LATTICE_AXES).real
    raise ValueError(f"unknown method {method!r}")


def energy(state: FieldState, stencil: CouplingStencil, pot: PotentialSpec, method: str = "direct"):
    """Total energy; one value per batch entry."""
    q, p = state.q, state.p
    _check_finite(q, "q", state.t)
    _check_finite(p, "p", state.t)
    dens = 0.5 * (p * p + pot.omega0**2 * q * q) + 0.5 * q * harmonic_coupling(q, stencil, method)
    dens = dens + pot.onsite(q)
    return dens.sum(axis=LATTICE_AXES)


def harmonic_energy(state: FieldState, stencil: CouplingStencil, omega0: float, method: str = "direct"):
    """Quadratic part ``H_0`` of the Hamiltonian."""
    q, p = state.q, state.p
    dens = 0.5 * (p * p + omega0**2 * q * q) + 0.5 * q * harmonic_coupling(q, stencil, method)
    return dens.sum(axis=LATTICE_AXES)


def forces(state_or_q, stencil: CouplingStencil, pot: PotentialSpec, method: str = "direct") -> np.ndarray:
    """``-dH/dq_x``; accepts a :class:`FieldState` or a bare displacement array."""
    q = state_or_q.q if isinstance(state_or_q, FieldState) else np.asarray(state_or_q, dtype=float)
    f = -harmonic_coupling(q, stencil, method) - pot.omega0**2 * q + pot.onsite_force(q)
    _check_finite(f, "forces")
    return f


def omega_max(stencil: CouplingStencil, omega0: float, L: int) -> float:
    return float(np.sqrt(omega0**2 + np.max(_grid_symbol(stencil, L))))


def default_timestep(stencil: CouplingStencil, omega0: float, L: int) -> float:
    return 0.05 / omega_max(stencil, omega0, L)


def amplitude_ceiling(pot: PotentialSpec) -> float:
    return 10.0 / math.sqrt(pot.eps)


def _check_amplitude(q, ceiling, t):
    if not np.all(np.isfinite(q)):
        raise BlowUp(f"non-finite displacement at t={t:.6g}", t=t)
    amax = float(np.max(np.abs(q))) if q.size else 0.0
    if amax > ceiling:
        raise BlowUp(f"|q| reached {amax:.4g} > ceiling {ceiling:.4g} at t={t:.6g}", t=t, max_amplitude=amax)


def verlet_step(state: FieldState, h: float, stencil: CouplingStencil, pot: PotentialSpec,
                ceiling: float | None = None, method: str = "direct") -> FieldState:
    """One velocity-Verlet step of length ``h``."""
    if h <= 0:
        raise ConfigError("timestep must be positive")
    if ceiling is None:
        ceiling = amplitude_ceiling(pot)
    p_half = state.p + 0.5 * h * forces(state.q, stencil, pot, method)
    q = state.q + h * p_half
    _check_amplitude(q, ceiling, state.t + h)
    p = p_half + 0.5 * h * forces(q, stencil, pot, method)
    return FieldState(q, p, state.t + h)


def evolve(state: FieldState, T: float, h: float, stencil: CouplingStencil, pot: PotentialSpec,
           observer: Callable[[FieldState, int], None] | None = None, stride: int = 1,
           ceiling: float | None = None, method: str = "direct") -> FieldState:
    """Integrate for a duration ``T``.

    The number of steps is ``ceil(T / h)`` with the step shortened so that the
    final time is hit exactly.  ``observer(state, step)`` is called at step 0
    and every ``stride`` steps thereafter, and always at the last step.
    """
    if T < 0:
        raise ConfigError("duration must be non-negative")
    if ceiling is None:
        ceiling = amplitude_ceiling(pot)
    nsteps = int(math.ceil(T / h - 1e-12)) if T > 0 else 0
    if observer is not None:
        observer(state, 0)
    if nsteps == 0:
        return state
    hh = T / nsteps
    q, p = state.q.copy(), state.p.copy()
    f = forces(q, stencil, pot, method)
    for step in range(1, nsteps + 1):
        p += 0.5 * hh * f
        q += hh * p
        t = state.t + step * hh
        _check_amplitude(q, ceiling, t)
        f = forces(q, stencil, pot, method)
        p += 0.5 * hh * f
        if observer is not None and (step % stride == 0 or step == nsteps):
            observer(FieldState(q.copy(), p.copy(), t), step)
    return FieldState(q, p, state.t + T)


def hessian_product(q, v, stencil: CouplingStencil, pot: PotentialSpec, method: str = "direct"):
    """``H''(q) v`` for the potential part of the Hamiltonian."""
    out = harmonic_coupling(v, stencil, method) + pot.omega0**2 * v + 2 * pot.cubic * q * v
    if pot.quartic_stabilizer:
        out = out + 12 * pot.quartic * q * q * v
    return out


def shadow_energy(state: FieldState, h: float, stencil: CouplingStencil, pot: PotentialSpec,
                  method: str = "direct"):
    """Modified energy conserved by velocity Verlet.

    For ``lam == 0`` this is the exact quadratic invariant
    ``H_0 - h^2/8 |A q|^2`` with ``A = w0^2 + alpha``; otherwise the
    second-order expansion ``H + h^2 (p.U''p / 12 - |U'|^2 / 24)``.
    """
    if pot.lam == 0:
        aq = harmonic_coupling(state.q, stencil, method) + pot.omega0**2 * state.q
        return harmonic_energy(state, stencil, pot.omega0, method) - h * h / 8 * (aq * aq).sum(axis=LATTICE_AXES)
    f = forces(state.q, stencil, pot, method)
    pup = (state.p * hessian_product(state.q, state.p, stencil, pot, method)).sum(axis=LATTICE_AXES)
    return energy(state, stencil, pot, method) + h * h * (pup / 12 - (f * f).sum(axis=LATTICE_AXES) / 24)


@dataclass
class EnergyTrace:
    """Energy diagnostics gathered along a trajectory (see :func:`energy_observer`)."""

    times: list
    energies: list
    shadow: list

    def fluctuation(self) -> float:
        e = np.asarray(self.energies, dtype=float)
        return float(np.max(np.abs(e - e[0])) / abs(e[0]))

    def secular_drift(self) -> float:
        """Relative change of ``H`` over the run from a least-squares linear fit."""
        t = np.asarray(self.times)
        e = np.asarray(self.energies, dtype=float)
        if len(t) < 2:
            return 0.0
        slope = np.polyfit(t - t[0], e, 1)[0]
        return float(abs(slope) * (t[-1] - t[0]) / abs(e[0]))

    def shadow_drift(self) -> float:
        s = np.asarray(self.shadow, dtype=float)
        return float(np.max(np.abs(s - s[0])) / abs(s[0]))


def energy_observer(h, stencil, pot, method: str = "direct"):
    """Observer for :func:`evolve` recording ``H`` and the shadow energy (unbatched fields)."""
    trace = EnergyTrace([], [], [])

    def observe(state, step):
        trace.times.append(state.t)
        trace.energies.append(float(np.sum(energy(state, stencil, pot, method))))
        trace.shadow.append(float(np.sum(shadow_energy(state, h, stencil, pot, method))))

    return trace, observe


# -- snapshot I/O -----------------------------------------------------------

_HEADER = struct.Struct("<q4d")


def write_snapshot(path, state: FieldState, pot: PotentialSpec):
    """Flat binary snapshot: header (L, t, eps, lam, w0) then q and p, x1 fastest."""
    if state.q.ndim != 3:
        raise ConfigError("snapshots hold a single (unbatched) field")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(state.L, state.t, pot.eps, pot.lam, pot.omega0))
        fh.write(np.asarray(state.q, dtype="<f8").ravel(order="F").tobytes())
        fh.write(np.asarray(state.p, dtype="<f8").ravel(order="F").tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(state, header_dict)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    L, t, eps, lam, w0 = _HEADER.unpack_from(raw)
    n = L**3
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != 2 * n:
        raise ConfigError(f"snapshot payload has {data.size} values, expected {2 * n}")
    q = data[:n].reshape((L, L, L), order="F").copy()
    p = data[n:].reshape((L, L, L), order="F").copy()
    return FieldState(q, p, t), {"L": L, "t": t, "eps": eps, "lam": lam, "omega0": w0}


def snapshot_rows(state: FieldState) -> Iterable[tuple]:
    """Rows ``(x1, x2, x3, q, p)`` in x1-fastest order, for CSV export."""
    L = state.L
    for x3 in range(L):
        for x2 in range(L):
            for x1 in range(L):
                yield (x1, x2, x3, repr(float(state.q[x1, x2, x3])), repr(float(state.p[x1, x2, x3])))
