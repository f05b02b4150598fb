"""Fourier conventions, dispersion relations and the complex a-field.

Conventions on a periodic box of side ``L``::

    f_hat(k) = sum_x exp(-2 pi i k.x) f_x,     k = n / L
    f_x      = L^-3 sum_k exp(+2 pi i k.x) f_hat(k)

so torus integrals ``int dk`` become ``L^-3 sum_k``.  These are exactly numpy's
``fftn``/``ifftn`` over the last three axes.
"""

from __future__ import annotations

import functools
import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ModelError
from .lattice import (
    LATTICE_AXES,
    CouplingStencil,
    cosine_dispersion_stencil,
    k_grid,
    nearest_neighbor_stencil,
    zero_stencil,
)


def dft(f) -> np.ndarray:
    f = np.asarray(f)
    if f.ndim < 3:
        raise ConfigError("dft expects a field with three lattice axes")
    return np.fft.fftn(f, axes=LATTICE_AXES)


def idft(fhat, real: bool = False) -> np.ndarray:
    out = np.fft.ifftn(np.asarray(fhat), axes=LATTICE_AXES)
    return out.real if real else out


def reflect(a: np.ndarray) -> np.ndarray:
    """Return ``a(-k)`` on the grid (index ``n -> -n mod L`` on the last three axes)."""
    return np.roll(np.flip(a, axis=LATTICE_AXES), 1, axis=LATTICE_AXES)


@dataclass(frozen=True)
class DispersionModel:
    """Dispersion relation ``omega(k)`` on the unit torus.

    ``form == "sqrt"``: ``omega = (omega0^2 + alpha_hat(k))^(1/2)`` from the stencil.
    ``form == "direct"``: the closed form ``omega0 + sum_a (1 - cos 2 pi k^a)``;
    the attached stencil reproduces it exactly and drives the lattice dynamics.
    """

    name: str
    omega0: float
    stencil: CouplingStencil
    form: str = "sqrt"

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ModelError("omega0 must be positive")
        if self.form not in ("sqrt", "direct"):
            raise ModelError(f"unknown dispersion form {self.form!r}")

    def omega(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.form == "direct":
            return self.omega0 + np.sum(1.0 - np.cos(2 * np.pi * k), axis=-1)
        sq = self.omega0**2 + self.stencil.symbol(k)
        if np.any(sq < self.omega0**2 - 1e-9):
            raise ModelError(f"{self.name}: alpha_hat(k) < 0 violates stability")
        return np.sqrt(sq)

    def grad(self, k) -> np.ndarray:
        """``nabla_k omega`` (exact formula for the cosine model, spectral for stencils)."""
        k = np.asarray(k, dtype=float)
        if self.form == "direct":
            return 2 * np.pi * np.sin(2 * np.pi * k)
        return self.stencil.symbol_gradient(k) / (2 * self.omega(k))[..., None]

    def velocity(self, k) -> np.ndarray:
        """Transport velocity ``nabla omega / 2 pi``."""
        return self.grad(k) / (2 * np.pi)

    def on_grid(self, L: int) -> np.ndarray:
        return _omega_grid(self, L).copy()

    def omega_max(self, L: int) -> float:
        return float(_omega_grid(self, L).max())

    def max_grad(self, samples: int = 48) -> float:
        """Sup of ``|nabla omega|`` over the torus (dense sampling plus known maxima)."""
        return _max_grad(self, samples)

    def describe(self) -> dict:
        d = {"name": self.name, "omega0": self.omega0, "form": self.form}
        if self.name.startswith("stencil"):
            d["stencil"] = stencil_to_dict(self.stencil)
        return d


@functools.lru_cache(maxsize=64)
def _omega_grid(model: DispersionModel, L: int) -> np.ndarray:
    w = model.omega(k_grid(L))
    w.setflags(write=False)
    return w


@functools.lru_cache(maxsize=32)
def _max_grad(model: DispersionModel, samples: int) -> float:
    best = 0.0
    n = np.arange(samples) / samples
    for i in range(samples):
        k = np.stack(np.broadcast_arrays(n[i], n[:, None], n[None, :]), axis=-1)
        best = max(best, float(np.max(np.linalg.norm(model.grad(k), axis=-1))))
    if model.form == "direct":
        # attained at k = (1/4, 1/4, 1/4)
        best = max(best, 2 * np.pi * np.sqrt(3.0))
    return best


def dispersion_eval(model: DispersionModel, k) -> np.ndarray:
    """``omega(k)`` for grid or arbitrary torus points."""
    return model.omega(k)


def flat_model(omega0: float = 1.0) -> DispersionModel:
    return DispersionModel("flat", float(omega0), zero_stencil(), "sqrt")


def nn_model(omega0: float = 1.0) -> DispersionModel:
    return DispersionModel("nn", float(omega0), nearest_neighbor_stencil(), "sqrt")


def cosine_model(omega0: float = 1.0) -> DispersionModel:
    return DispersionModel("nn-nnn-311", float(omega0), cosine_dispersion_stencil(omega0), "direct")


def stencil_model(stencil: CouplingStencil, omega0: float) -> DispersionModel:
    """Wrap a stencil; rejects ``alpha_hat < 0`` anywhere on a 32^3 probe grid."""
    model = DispersionModel("stencil", float(omega0), stencil, "sqrt")
    model.omega(k_grid(32))
    return model


def stencil_to_dict(stencil: CouplingStencil) -> dict:
    return {"offsets": [list(o) for o in stencil.offsets], "values": [str(v) for v in stencil.values]}


def model_from_name(spec: str, omega0: float = 1.0) -> DispersionModel:
    """Build a model from ``"nn"``, ``"nn-nnn-311"``, ``"flat"`` or ``"stencil:{json}"``.

    The JSON form carries ``offsets`` (list of 3-vectors) and ``values``
    (numbers or rational strings such as ``"1/4"``).
    """
    spec = spec.strip()
    if spec == "nn":
        return nn_model(omega0)
    if spec in ("nn-nnn-311", "cosine", "311"):
        return cosine_model(omega0)
    if spec == "flat":
        return flat_model(omega0)
    m = re.fullmatch(r"stencil:(.*)", spec, flags=re.S)
    if m:
        try:
            data = json.loads(m.group(1))
            from fractions import Fraction

            vals = [Fraction(v) if isinstance(v, str) else v for v in data["values"]]
            st = CouplingStencil(tuple(map(tuple, data["offsets"])), tuple(vals), name="stencil")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ConfigError(f"malformed stencil specification: {exc}") from exc
        return stencil_model(st, omega0)
    raise ConfigError(f"unknown dispersion model {spec!r}")


def to_afield(qhat, phat, model: DispersionModel) -> np.ndarray:
    """``a(k) = (sqrt(w) q_hat + i p_hat / sqrt(w)) / sqrt(2)``."""
    qhat = np.asarray(qhat)
    w = _omega_grid(model, qhat.shape[-1])
    sw = np.sqrt(w)
    return (sw * qhat + 1j * phat / sw) / np.sqrt(2.0)


def from_afield(a, model: DispersionModel):
    """Inverse of :func:`to_afield`; returns ``(q_hat, p_hat)``.

    The result is the transform of a real field pair for any complex ``a``.
    """
    a = np.asarray(a, dtype=complex)
    w = _omega_grid(model, a.shape[-1])
    ar = np.conj(reflect(a))
    qhat = (a + ar) / np.sqrt(2 * w)
    phat = 1j * np.sqrt(w / 2) * (ar - a)
    return qhat, phat


def state_to_afield(state, model: DispersionModel) -> np.ndarray:
    return to_afield(dft(state.q), dft(state.p), model)


def afield_to_state(a, model: DispersionModel, t: float = 0.0):
    from .lattice import FieldState

    qhat, phat = from_afield(a, model)
    return FieldState(idft(qhat, real=True), idft(phat, real=True), t)


def harmonic_propagate(a, t: float, model: DispersionModel) -> np.ndarray:
    """Exact harmonic flow ``a(k) -> exp(-i w(k) t) a(k)``."""
    a = np.asarray(a, dtype=complex)
    w = _omega_grid(model, a.shape[-1])
    return np.exp(-1j * w * t) * a


def afield_energy(a, model: DispersionModel) -> np.ndarray:
    """``L^-3 sum_k w(k) |a(k)|^2``, equal to the harmonic energy ``H_0``."""
    a = np.asarray(a)
    L = a.shape[-1]
    w = _omega_grid(model, L)
    return np.sum(w * np.abs(a) ** 2, axis=LATTICE_AXES) / L**3
