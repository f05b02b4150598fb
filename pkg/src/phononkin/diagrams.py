"""Feynman diagrams of the time-dependent perturbation series for the two-point function.

Encoding of an order-``n`` diagram:

* bonds are numbered ``0`` (left root, momentum ``q``, sigma -1),
  ``1`` (right root, ``p``, sigma +1) and ``2 + 2j``, ``3 + 2j`` for the two
  children created by the ``j``-th branching;
* ``schedule[j]`` is the position, in the current left-to-right list of open
  bonds, of the bond that branches at level ``2n - j``; the branching bond is
  replaced in place by its two children;
* ``orientations[j]`` gives the sigmas of those two children;
* ``pairing`` is a perfect matching of positions in the final list of
  ``2n + 2`` level-0 bonds, pairing up arrows with down arrows.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigError, InconsistentSystem, ResourceGuard
from .spectral import DispersionModel

ORIENTATION_CHOICES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def perfect_matchings(items):
    """All perfect matchings of ``items`` as tuples of sorted pairs."""
    items = tuple(items)
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for m in perfect_matchings(rest[:i] + rest[i + 1:]):
            yield ((first, other),) + m


def pairing_count(n: int) -> int:
    """``(2n+2)! / (2^(n+1) (n+1)!)`` matchings of the level-0 bonds."""
    return math.factorial(2 * n + 2) // (2 ** (n + 1) * math.factorial(n + 1))


def schedule_count(n: int) -> int:
    """Number of branch schedules: ``2 * 3 * ... * (2n+1) = (2n+1)!``."""
    return math.factorial(2 * n + 1)


@dataclass(frozen=True)
class FeynmanDiagram:
    n: int
    schedule: tuple
    orientations: tuple
    pairing: tuple

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(int(s) for s in self.schedule))
        object.__setattr__(self, "orientations", tuple(tuple(int(s) for s in o) for o in self.orientations))
        object.__setattr__(self, "pairing", tuple(sorted(tuple(sorted(int(i) for i in p)) for p in self.pairing)))
        self.validate()

    @property
    def nbonds(self) -> int:
        return 4 * self.n + 2

    @functools.cached_property
    def structure(self):
        """``(sigma, top, bottom, branch_bond, leaves)`` for every bond.

        Bond ``b`` lives between level lines ``bottom[b] < top[b]``.
        """
        n = self.n
        nb = self.nbonds
        sigma = np.zeros(nb, dtype=int)
        top = np.zeros(nb, dtype=int)
        bottom = np.zeros(nb, dtype=int)
        sigma[0], sigma[1] = -1, 1
        top[0] = top[1] = 2 * n + 1
        active = [0, 1]
        branch_bond = []
        for j, (pos, ori) in enumerate(zip(self.schedule, self.orientations)):
            level = 2 * n - j
            b = active[pos]
            bottom[b] = level
            branch_bond.append(b)
            c1, c2 = 2 + 2 * j, 3 + 2 * j
            sigma[c1], sigma[c2] = ori
            top[c1] = top[c2] = level
            active[pos:pos + 1] = [c1, c2]
        return sigma, top, bottom, tuple(branch_bond), tuple(active)

    @property
    def sigma(self) -> np.ndarray:
        return self.structure[0]

    @property
    def branch_bond(self) -> tuple:
        return self.structure[3]

    @property
    def leaves(self) -> tuple:
        return self.structure[4]

    def children(self, j: int) -> tuple:
        return 2 + 2 * j, 3 + 2 * j

    def slab_bonds(self, m: int) -> list:
        """Bonds crossing the slab between level lines ``m`` and ``m + 1``."""
        _, top, bottom, _, _ = self.structure
        return [b for b in range(self.nbonds) if bottom[b] <= m < top[b]]

    def validate(self):
        n = self.n
        if n < 0:
            raise ConfigError("order must be non-negative")
        if len(self.schedule) != 2 * n or len(self.orientations) != 2 * n:
            raise ConfigError("need exactly one branching per level line 1..2n")
        for j, (pos, ori) in enumerate(zip(self.schedule, self.orientations)):
            if not 0 <= pos < 2 + j:
                raise ConfigError(f"branch position {pos} out of range at step {j}")
            if ori not in ORIENTATION_CHOICES:
                raise ConfigError(f"bad orientation {ori}")
        flat = sorted(i for p in self.pairing for i in p)
        if flat != list(range(2 * n + 2)) or any(len(p) != 2 for p in self.pairing):
            raise ConfigError("pairing must be a perfect matching of the level-0 bonds")
        sigma, leaves = self.structure[0], self.structure[4]
        for a, b in self.pairing:
            if sigma[leaves[a]] == sigma[leaves[b]]:
                raise ConfigError("pairing must join an up arrow with a down arrow")

    def encode(self) -> str:
        sch = ",".join(map(str, self.schedule)) or "-"
        ori = ",".join("".join("+" if s > 0 else "-" for s in o) for o in self.orientations) or "-"
        pr = ",".join(f"{a}-{b}" for a, b in self.pairing)
        return f"order={self.n} schedule={sch} orientations={ori} pairing={pr}"

    @classmethod
    def decode(cls, text: str) -> "FeynmanDiagram":
        fields = dict(tok.split("=", 1) for tok in text.split())
        n = int(fields["order"])
        sch = () if fields["schedule"] == "-" else tuple(int(s) for s in fields["schedule"].split(","))
        ori = () if fields["orientations"] == "-" else tuple(
            tuple(1 if c == "+" else -1 for c in o) for o in fields["orientations"].split(","))
        pr = tuple(tuple(int(i) for i in p.split("-")) for p in fields["pairing"].split(","))
        return cls(n, sch, ori, pr)


def example_diagram() -> FeynmanDiagram:
    """A reference order-2 diagram: q branches, then its second child, then p, then q's first child."""
    return FeynmanDiagram(2, (0, 1, 3, 0), ((1, -1), (1, 1), (-1, -1), (1, -1)), ((0, 5), (1, 2), (3, 4)))


def example_labels() -> dict:
    """Human labels ``q, p, k1..k8`` for the bonds of :func:`example_diagram`."""
    return {0: "q", 1: "p", **{b: f"k{b - 1}" for b in range(2, 10)}}


# -- enumeration ---------------------------------------------------------------


def _leaf_sigmas(n, schedule, orientations):
    sig = [-1, 1]
    for pos, ori in zip(schedule, orientations):
        sig[pos:pos + 1] = list(ori)
    return sig


def estimated_count(n: int) -> int:
    """Upper bound on the number of diagrams of order ``n``."""
    return schedule_count(n) * 4 ** (2 * n) * pairing_count(n)


def iter_diagrams(n: int, limit: float = 5e6):
    """Diagrams of order ``n`` in a fixed canonical order (schedule, orientations, pairing)."""
    if n < 0:
        raise ConfigError("order must be non-negative")
    if estimated_count(n) > limit:
        raise ResourceGuard(f"order {n} enumeration exceeds the limit of {limit:g} candidates")
    schedules = itertools.product(*[range(2 + j) for j in range(2 * n)])
    for sch in schedules:
        for ori in itertools.product(ORIENTATION_CHOICES, repeat=2 * n):
            sig = _leaf_sigmas(n, sch, ori)
            up = [i for i, s in enumerate(sig) if s > 0]
            down = [i for i, s in enumerate(sig) if s < 0]
            if len(up) != len(down):
                continue
            pairings = sorted(tuple(sorted(tuple(sorted(p)) for p in zip(up, perm)))
                              for perm in itertools.permutations(down))
            for pr in pairings:
                yield FeynmanDiagram(n, sch, ori, pr)


def enumerate_diagrams(n: int, limit: float = 5e6) -> list:
    return list(iter_diagrams(n, limit))


# -- symmetry classes -------------------------------------------------------------


def _relabel_key(d: FeynmanDiagram, mask: int) -> tuple:
    sigma = d.structure[0].tolist()
    leaves = d.leaves
    active = [0, 1]
    sch, ori = [], []
    for j, b in enumerate(d.branch_bond):
        pos = active.index(b)
        c = [2 + 2 * j, 3 + 2 * j]
        if mask >> j & 1:
            c.reverse()
        sch.append(pos)
        ori.append((sigma[c[0]], sigma[c[1]]))
        active[pos:pos + 1] = c
    where = {b: i for i, b in enumerate(active)}
    pr = []
    for a, b in d.pairing:
        x, y = where[leaves[a]], where[leaves[b]]
        pr.append((x, y) if x < y else (y, x))
    pr.sort()
    return (tuple(sch), tuple(ori), tuple(pr))


def relabel(d: FeynmanDiagram, mask: int) -> FeynmanDiagram:
    """Swap the two children of every branching ``j`` with bit ``j`` of ``mask`` set."""
    return FeynmanDiagram(d.n, *_relabel_key(d, mask))


def _key(d: FeynmanDiagram):
    return (d.schedule, d.orientations, d.pairing)


def canonical_form(d: FeynmanDiagram) -> FeynmanDiagram:
    """Minimal encoding over all child swaps; swapped diagrams have identical integrals."""
    return FeynmanDiagram(d.n, *min(_relabel_key(d, m) for m in range(2 ** (2 * d.n))))


def symmetry_classes(diagrams) -> list:
    """``[(representative, multiplicity)]`` in canonical order."""
    counts: dict = {}
    for d in diagrams:
        c = canonical_form(d)
        counts[c] = counts.get(c, 0) + 1
    return sorted(counts.items(), key=lambda kv: _key(kv[0]))


@functools.lru_cache(maxsize=4)
def _classes(n: int) -> tuple:
    return tuple(symmetry_classes(iter_diagrams(n)))


# -- momenta ---------------------------------------------------------------------


@dataclass
class MomentumAssignment:
    """Bond momenta as integer combinations of the pair momenta ``b_0..b_n``.

    ``reduced`` rewrites them over ``(q, f_1..f_n)`` after eliminating pair
    ``pivot`` through ``q = q_expr(b)``; when ``q_expr`` vanishes
    identically (``q_forced_zero``) ``reduced`` is over all ``b`` instead.
    """

    basis: np.ndarray
    q_expr: np.ndarray
    pivot: int | None
    reduced: np.ndarray
    free: tuple
    degenerate: bool
    q_forced_zero: bool

    @property
    def zero_bonds(self) -> list:
        return [int(b) for b in np.flatnonzero(~self.basis.any(axis=1))]


def vertex_constraints(d: FeynmanDiagram) -> list:
    """``[(parent, [(sign, bond), ...])]`` with ``-s1 k1 + s2 k2 + s3 k3 = 0`` per branching."""
    sigma = d.sigma
    out = []
    for j, b in enumerate(d.branch_bond):
        c1, c2 = d.children(j)
        out.append((b, [(-int(sigma[b]), b), (int(sigma[c1]), c1), (int(sigma[c2]), c2)]))
    return out


def assign_momenta(d: FeynmanDiagram) -> MomentumAssignment:
    n = d.n
    nb = d.nbonds
    basis = np.zeros((nb, n + 1), dtype=np.int64)
    known = np.zeros(nb, dtype=bool)
    for j, (a, b) in enumerate(d.pairing):
        for pos in (a, b):
            basis[d.leaves[pos], j] = 1
            known[d.leaves[pos]] = True
    sigma = d.sigma
    for j in reversed(range(2 * n)):
        parent = d.branch_bond[j]
        c1, c2 = d.children(j)
        if not (known[c1] and known[c2]):
            raise InconsistentSystem("children momenta undetermined")
        basis[parent] = sigma[parent] * (sigma[c1] * basis[c1] + sigma[c2] * basis[c2])
        known[parent] = True
    for parent, terms in vertex_constraints(d):
        if np.any(sum(s * basis[b] for s, b in terms)):
            raise InconsistentSystem("Kirchhoff rule violated")
    q_expr, p_expr = basis[0], basis[1]
    if not np.array_equal(q_expr, p_expr):
        raise InconsistentSystem("root momenta differ; no overall delta(q - p)")
    degenerate = bool(np.any(~basis.any(axis=1)))
    if not q_expr.any():
        return MomentumAssignment(basis, q_expr, None, basis.copy(), tuple(range(n + 1)), degenerate, True)
    units = [j for j in range(n + 1) if abs(q_expr[j]) == 1]
    if not units:
        raise InconsistentSystem("no unimodular pivot for eliminating a pair momentum")
    piv = units[0]
    c = q_expr[piv]
    free = tuple(j for j in range(n + 1) if j != piv)
    # b_piv = c (q - sum_{i != piv} q_i b_i)
    sub = np.zeros((n + 1, n + 1), dtype=np.int64)  # rows: b_j over (q, free...)
    for col, j in enumerate(free, start=1):
        sub[j, col] = 1
    sub[piv, 0] = c
    for col, j in enumerate(free, start=1):
        sub[piv, col] = -c * q_expr[j]
    reduced = basis @ sub
    return MomentumAssignment(basis, q_expr, piv, reduced, free, degenerate, False)


# -- classification ------------------------------------------------------------------


@dataclass(frozen=True)
class Classification:
    leading: bool
    reason: str = ""
    slab: int | None = None

    @property
    def label(self) -> str:
        return "Leading" if self.leading else "Subleading"


def _canonical_sign(expr: np.ndarray) -> tuple:
    nz = np.flatnonzero(expr)
    if nz.size and expr[nz[0]] < 0:
        expr = -expr
    return tuple(int(v) for v in expr)


def slab_multiset(d: FeynmanDiagram, asg: MomentumAssignment, m: int) -> list:
    """``(sigma, canonical expression)`` for the bonds between level lines ``m`` and ``m + 1``."""
    return sorted((int(d.sigma[b]), _canonical_sign(asg.basis[b])) for b in d.slab_bonds(m))


def _cancels(items) -> bool:
    counts: dict = {}
    for s, e in items:
        counts[e] = counts.get(e, 0) + s
    return all(v == 0 for v in counts.values())


def classify(d: FeynmanDiagram, asg: MomentumAssignment | None = None) -> Classification:
    """Leading iff no momentum is forced to zero and every even slab cancels pairwise.

    Cancellation uses ``w(-k) = w(k)``: within slab ``2m`` the bonds must split
    into pairs with opposite sigma and momenta equal up to sign.
    """
    asg = assign_momenta(d) if asg is None else asg
    if asg.degenerate:
        return Classification(False, "forced-zero", None)
    for m in range(d.n + 1):
        if not _cancels(slab_multiset(d, asg, 2 * m)):
            return Classification(False, f"slab {m} (levels {2 * m}-{2 * m + 1}) does not cancel", m)
    return Classification(True)


# -- time integrals --------------------------------------------------------------------


_TAYLOR_TERMS = 24
_INV_FACT = np.array([1.0 / math.factorial(r) for r in range(2 * _TAYLOR_TERMS + 16)])


@numba.njit(cache=True)
def _dd_rows(x, tau, inv_fact, terms):
    P, K1 = x.shape
    out = np.empty(P, dtype=np.complex128)
    nodes = np.empty(K1, dtype=np.complex128)
    table = np.empty(K1, dtype=np.complex128)
    h = np.empty(terms + 1, dtype=np.complex128)
    for p in range(P):
        for i in range(K1):
            nodes[i] = x[p, i]
        # insertion sort by (imag, real)
        for i in range(1, K1):
            v = nodes[i]
            j = i - 1
            while j >= 0 and (nodes[j].imag > v.imag or (nodes[j].imag == v.imag and nodes[j].real > v.real)):
                nodes[j + 1] = nodes[j]
                j -= 1
            nodes[j + 1] = v
        for i in range(K1):
            table[i] = np.exp(nodes[i])
        for r in range(1, K1):
            for i in range(K1 - r):
                spread = 0.0
                for a in range(i, i + r + 1):
                    for b in range(a + 1, i + r + 1):
                        d = abs(nodes[a] - nodes[b])
                        if d > spread:
                            spread = d
                if spread >= tau:
                    table[i] = (table[i + 1] - table[i]) / (nodes[i + r] - nodes[i])
                else:
                    c = 0.0 + 0.0j
                    for a in range(i, i + r + 1):
                        c += nodes[a]
                    c /= r + 1
                    h[0] = 1.0
                    for q in range(1, terms + 1):
                        h[q] = 0.0
                    for a in range(i, i + r + 1):
                        y = nodes[a] - c
                        for q in range(1, terms + 1):
                            h[q] = h[q] + y * h[q - 1]
                    acc = 0.0 + 0.0j
                    for q in range(terms + 1):
                        acc += h[q] * inv_fact[r + q]
                    table[i] = np.exp(c) * acc
        out[p] = table[0]
    return out


def exp_divided_difference(x, tau: float = 0.1) -> np.ndarray:
    """Divided difference of ``exp`` at the nodes on the last axis of ``x``.

    Nodes are sorted; table entries whose node cluster has spread below
    ``tau`` come from the Taylor series ``e^c sum_r h_r(x - c) / (K + r)!``
    about the cluster mean ``c`` (``h_r`` complete homogeneous), the rest
    from the recursion.
    """
    x = np.asarray(x, dtype=complex)
    if not 0 < tau <= 1:
        raise ConfigError("branch threshold tau must lie in (0, 1]")
    flat = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    # h_q <= C(q + K, K) tau^q, so the tail drops below 1e-18 once tau^q / q! does
    terms = next(q for q in range(1, _TAYLOR_TERMS) if tau**q * _INV_FACT[q] < 1e-18)
    return _dd_rows(flat, float(tau), _INV_FACT, terms).reshape(x.shape[:-1])


def simplex_time_integral(omegas, t: float, eps: float, tau: float = 0.1) -> np.ndarray:
    """``int_{s_0+...+s_K=t, s>=0} exp(i sum_m s_m Omega_m / eps) ds``.

    Equals the divided difference of ``z -> exp(t z)`` at ``z_m = i Omega_m / eps``.
    """
    omegas = np.asarray(omegas, dtype=float)
    K = omegas.shape[-1] - 1
    if t == 0:
        return np.zeros(omegas.shape[:-1], dtype=complex) if K > 0 else np.ones(omegas.shape[:-1], dtype=complex)
    return t**K * exp_divided_difference(1j * t * omegas / eps, tau)


# -- evaluation ---------------------------------------------------------------------------


def _grid_coords(L: int) -> np.ndarray:
    return np.indices((L, L, L)).reshape(3, -1).T


def _flat(c: np.ndarray, L: int) -> np.ndarray:
    c = np.mod(c, L)
    return (c[..., 0] * L + c[..., 1]) * L + c[..., 2]


def _bond_indices(exprs, var_coords, L):
    """Flat grid index of every bond momentum; ``var_coords`` broadcast against each other."""
    zero = np.zeros_like(var_coords[0])
    return [_flat(sum((int(e) * c for e, c in zip(row, var_coords) if e), zero), L) for row in exprs]


def _integrand_sum(d, exprs, var_coords, omega, Wflat, lam, eps, t, tau, L):
    """Vertex x W x time factors on the broadcast grid of the variables in ``var_coords``."""
    idx = _bond_indices(exprs, var_coords, L)
    shape = np.broadcast_shapes(*[i.shape for i in idx])
    w = [np.broadcast_to(omega[i], shape) for i in idx]
    sigma = d.sigma
    vert = np.ones(shape)
    for j, parent in enumerate(d.branch_bond):
        c1, c2 = d.children(j)
        vert = vert * (sigma[parent] * lam / np.sqrt(8.0 * w[parent] * w[c1] * w[c2]))
    wfac = np.ones(shape)
    for a, _ in d.pairing:
        wfac = wfac * np.broadcast_to(Wflat[idx[d.leaves[a]]], shape)
    omegas = np.stack([sum(sigma[b] * w[b] for b in d.slab_bonds(m)) for m in range(2 * d.n + 1)], axis=-1)
    tf = simplex_time_integral(omegas, t, eps, tau)
    return vert * wfac * tf


def evaluate(d: FeynmanDiagram, asg: MomentumAssignment | None, eps: float, t: float, W, model: DispersionModel,
             lam: float = 1.0, qs=None, tau: float = 0.1, chunk: int = 2**20) -> np.ndarray:
    """Contribution of one diagram to ``W_n^eps(q, t)`` at grid points ``qs`` (flat indices).

    ``(-1)^n eps^-n L^-3n sum_free prod(sigma phi) prod W x time integral``.
    Diagrams with ``q`` forced to zero contribute only at ``q = 0`` with the
    extra factor ``L^3 x L^-3`` from the additional free pair momentum.
    """
    asg = assign_momenta(d) if asg is None else asg
    W = np.asarray(W, dtype=float)
    L = W.shape[-1]
    M = L**3
    n = d.n
    omega = model.on_grid(L).ravel()
    Wflat = W.ravel()
    qs = np.arange(M) if qs is None else np.asarray(qs, dtype=int)
    out = np.zeros(len(qs), dtype=complex)
    coords = _grid_coords(L)
    pref = (-1) ** n * eps ** (-n)
    if asg.q_forced_zero:
        sel = np.flatnonzero(qs == 0)
        if sel.size == 0:
            return out
        nv = n + 1
        if M**nv > 50 * chunk:
            raise ResourceGuard("forced-zero diagram sum too large")
        vc = [coords.reshape((1,) * i + (M,) + (1,) * (nv - 1 - i) + (3,)) for i in range(nv)]
        val = _integrand_sum(d, asg.reduced, vc, omega, Wflat, lam, eps, t, tau, L).sum()
        out[sel] = pref * L**3 * val / L ** (3 * nv)
        return out
    nf = len(asg.free)
    qstep = max(1, chunk // max(1, M**nf))
    for s in range(0, len(qs), qstep):
        qq = qs[s:s + qstep]
        vc = [coords[qq].reshape((len(qq),) + (1,) * nf + (3,))]
        for i in range(nf):
            vc.append(coords.reshape((1,) + (1,) * i + (M,) + (1,) * (nf - 1 - i) + (3,)))
        vals = _integrand_sum(d, asg.reduced, vc, omega, Wflat, lam, eps, t, tau, L)
        out[s:s + qstep] = pref * vals.reshape(len(qq), -1).sum(axis=1) / L ** (3 * nf)
    return out


@dataclass
class CorrectionResult:
    values: np.ndarray
    qs: np.ndarray
    imag_ratio: float
    excluded_degenerate: int
    diagrams: int


def wigner_correction(n: int, eps: float, t: float, W, model: DispersionModel, lam: float = 1.0, qs=None,
                      include_degenerate: bool = False, leading_only: bool = False, tau: float = 0.1,
                      check_real: bool = True) -> CorrectionResult:
    """``W_n^eps(q, t)``: the sum of :func:`evaluate` over all order-``n`` diagrams.

    Diagrams equal up to child swaps are evaluated once with their multiplicity.
    """
    if n > 2:
        raise ResourceGuard("diagram evaluation is limited to n <= 2")
    W = np.asarray(W, dtype=float)
    L = W.shape[-1]
    if n == 0:
        q = np.arange(L**3) if qs is None else np.asarray(qs, dtype=int)
        return CorrectionResult(W.ravel()[q].astype(complex), q, 0.0, 0, 1)
    qarr = np.arange(L**3) if qs is None else np.asarray(qs, dtype=int)
    total = np.zeros(len(qarr), dtype=complex)
    excluded = 0
    count = 0
    for rep, mult in _classes(n):
        asg = assign_momenta(rep)
        if asg.degenerate and not include_degenerate:
            excluded += mult
            continue
        if leading_only and not classify(rep, asg).leading:
            continue
        total += mult * evaluate(rep, asg, eps, t, W, model, lam, qarr, tau)
        count += mult
    scale = max(float(np.max(np.abs(total.real))), 1e-300)
    ratio = float(np.max(np.abs(total.imag))) / scale if total.size else 0.0
    if check_real and ratio > 1e-8 and scale > 1e-250:
        raise InconsistentSystem(f"imaginary residue {ratio:.2e} of W_{n} exceeds 1e-8")
    return CorrectionResult(total, qarr, ratio, excluded, count)


def kinetic_limit_first_order(W, t: float, cfg) -> np.ndarray:
    """Small-eps limit of the leading order-1 diagrams with a mollified energy delta.

    Each leading diagram tends to ``-pi t delta(Omega) prod(sigma phi) W W``
    where ``Omega`` is its middle-slab phase; the principal-value parts cancel
    between mirror diagrams.  Diagrams whose middle slab has one common sigma
    have ``|Omega| >= 3 w0`` and drop out exactly.  The sum equals ``t (C W)``
    for the same kernel.
    """
    from .collision import mollified_delta

    W = np.asarray(W, dtype=float)
    L = W.shape[-1]
    M = L**3
    omega = cfg.model.on_grid(L).ravel()
    coords = _grid_coords(L)
    out = np.zeros(M)
    for rep, mult in _classes(1):
        asg = assign_momenta(rep)
        mid_bonds = rep.slab_bonds(1)
        if not classify(rep, asg).leading or len({int(rep.sigma[b]) for b in mid_bonds}) == 1:
            continue
        idx = _bond_indices(asg.reduced, [coords.reshape(M, 1, 3), coords.reshape(1, M, 3)], L)
        w = [omega[np.broadcast_to(i, (M, M))] for i in idx]
        sig = rep.sigma
        vert = np.ones((M, M))
        for j, parent in enumerate(rep.branch_bond):
            c1, c2 = rep.children(j)
            vert = vert * sig[parent] * cfg.lam / np.sqrt(8 * w[parent] * w[c1] * w[c2])
        wfac = np.ones((M, M))
        for a, _ in rep.pairing:
            wfac = wfac * W.ravel()[np.broadcast_to(idx[rep.leaves[a]], (M, M))]
        mid = sum(sig[b] * w[b] for b in mid_bonds)
        out += mult * (-math.pi * t * vert * wfac * mollified_delta(mid, cfg.mollifier)).sum(axis=1) / M
    return out.reshape(W.shape)


# -- census and bounds ----------------------------------------------------------------------


@dataclass
class CensusRecord:
    diagram: FeynmanDiagram
    classification: Classification
    degenerate: bool

    def line(self) -> str:
        c = self.classification
        reason = c.reason.replace(" ", "_") if c.reason else "-"
        return f"{self.diagram.encode()} class={c.label} reason={reason} degenerate={int(self.degenerate)}"


def census(n: int) -> list:
    out = []
    for d in iter_diagrams(n):
        asg = assign_momenta(d)
        out.append(CensusRecord(d, classify(d, asg), asg.degenerate))
    return out


def census_summary(records) -> dict:
    recs = list(records)
    n = recs[0].diagram.n if recs else 0
    lead = sum(r.classification.leading for r in recs)
    return {
        "order": n,
        "diagrams": len(recs),
        "leading": lead,
        "subleading": len(recs) - lead,
        "degenerate": sum(r.degenerate for r in recs),
        "schedules": len({r.diagram.schedule for r in recs}),
        "pairings_before_orientation": pairing_count(n),
    }


def naive_bound_report(n: int, t: float, eps: float, c: float) -> dict:
    """Naive size estimate of ``W_n^eps`` and a census check of its combinatorial factors."""
    time_factor = (t / eps) ** (2 * n) / math.factorial(2 * n)
    ell = math.factorial(2 * n)
    pairs = pairing_count(n)
    bound = eps**n * time_factor * ell * c ** (2 * n) * pairs
    ratio = None
    if n >= 1:
        nxt = eps ** (n + 1) * (t / eps) ** (2 * n + 2) * c ** (2 * n + 2) * pairing_count(n + 1)
        ratio = nxt / bound if bound else math.inf
    report = {
        "order": n,
        "bound": bound,
        "time_factor": time_factor,
        "ell_factor": ell,
        "pairing_factor": pairs,
        "schedules_enumerated": schedule_count(n),
        "growth_ratio": ratio,
    }
    if n <= 2:
        ds = enumerate_diagrams(n)
        report["schedules_enumerated"] = len({d.schedule for d in ds})
        report["pairings_enumerated"] = len(list(perfect_matchings(range(2 * n + 2))))
    return report
