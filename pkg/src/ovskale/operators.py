"""Generators of the truncated birth-and-death correlation hierarchy.

The evolution of truncated correlation vectors is driven by a generator with
four term families, enumerated here entry by entry:

  diagonal   -E^a(eta) k(eta), the pair-competition multiplication;
  crowding   -sum_{y in eta} h^d sum_{x not in eta} a(x - y) k(eta + x);
  death      -m sum_{x in eta} e^{-s E^phi(x, eta - x)}
                 sum_{xi in complement} h^{d|xi|} k(eta + xi)
                 prod_{y in xi} w(x - y),
  birth      +lambda sum_{x in eta} k(eta - x),

where the Moebius weight w and the attraction damping s depend on the scaling
regime: the unscaled hierarchy has w = e^{-phi} - 1, s = 1; the rescaled
family at scaling epsilon > 0 has w = (e^{-eps phi} - 1)/eps, s = eps; the
scaling limit has w = -phi, s = 0.  Output above the truncation order n_max is
dropped and reads from above n_max are zero (closed truncation).

`OperatorHandle` freezes one generator variant and caches a sparse matrix of
the same enumeration for fast repeated application inside the solvers.  The
observable-side generator (the pre-dual under the Lebesgue-Poisson pairing) is
`apply_observable_generator`; the duality tests pit it against the hierarchy
side with no shared code path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionCapError
from .lattice import (
    KernelPair,
    SupportedFunction,
    diff_table,
    layer_offsets,
    pair_energy,
    point_energy,
    subset_position,
    subsets_of_order,
    total_dimension,
)
from .states import CorrelationVector

DENSE_CAP = 20_000  # largest flat dimension assemble_dense will materialize

KIND_HIERARCHY = "hierarchy"
KIND_DIAGONAL = "diagonal"
KIND_PERTURBATION = "perturbation"
KIND_RESCALED = "rescaled"
KIND_RESCALED_DIAGONAL = "rescaled_diagonal"
KIND_RESCALED_PERTURBATION = "rescaled_perturbation"
KIND_LIMIT_PERTURBATION = "limit_perturbation"

_ALL_KINDS = (
    KIND_HIERARCHY,
    KIND_DIAGONAL,
    KIND_PERTURBATION,
    KIND_RESCALED,
    KIND_RESCALED_DIAGONAL,
    KIND_RESCALED_PERTURBATION,
    KIND_LIMIT_PERTURBATION,
)


@dataclass(frozen=True)
class ModelParams:
    """Birth-and-death model rates.

    death_amplitude: strength m of the attraction-damped death term.
    birth_intensity: constant birth rate lambda per unit volume.
    epsilon: scaling parameter of the rescaled family (0 selects the limit).
    """

    death_amplitude: float
    birth_intensity: float
    epsilon: float = 1.0

    def __post_init__(self):
        if not (self.death_amplitude > 0 and math.isfinite(self.death_amplitude)):
            raise ValueError("death_amplitude must be positive and finite")
        if not (self.birth_intensity > 0 and math.isfinite(self.birth_intensity)):
            raise ValueError("birth_intensity must be positive and finite")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be >= 0 and finite")


def _mobius_table(kernels: KernelPair, eps: float | None) -> np.ndarray | None:
    """Per-difference Moebius weights w for the death term, or None if unused."""
    if eps is None:
        return None
    phi = kernels.phi_values
    if eps == 0.0:
        return -phi
    return np.expm1(-eps * phi) / eps


def generator_entries(
    kernels: KernelPair,
    params: ModelParams,
    n_max: int,
    *,
    diagonal_scale: float = 0.0,
    mobius_eps: float | None = None,
    crowding: bool = False,
    birth: bool = False,
):
    """Yield (row, col, value) triplets for the selected generator terms.

    diagonal_scale multiplies the -E^a diagonal (0 omits it); mobius_eps
    selects the death-term regime (None omits it, 0 the scaling limit);
    crowding/birth toggle the remaining two families.  Rows and columns are
    flat indices over the layered state.
    """
    torus = kernels.torus
    s = torus.site_count
    h = torus.cell_volume
    diff = diff_table(torus)
    a_vals = kernels.a_values
    phi_vals = kernels.phi_values
    offs = layer_offsets(s, n_max)
    mob = _mobius_table(kernels, mobius_eps)
    m_rate = params.death_amplitude
    lam = params.birth_intensity
    damp = 0.0 if mobius_eps is None else float(mobius_eps)
    all_sites = range(s)

    for n in range(n_max + 1):
        layer = subsets_of_order(s, n)
        base = offs[n]
        pos_up = subset_position(s, n + 1) if n + 1 <= n_max else None
        pos_down = subset_position(s, n - 1) if n >= 1 else None
        for idx, eta in enumerate(layer):
            row = base + idx
            eta_set = set(eta)
            if diagonal_scale != 0.0 and n >= 2:
                yield row, row, -diagonal_scale * pair_energy(eta, kernels)
            if crowding and pos_up is not None:
                for x in all_sites:
                    if x in eta_set:
                        continue
                    coef = 0.0
                    drow = diff[x]
                    for y in eta:
                        coef += a_vals[drow[y]]
                    if coef != 0.0:
                        col = offs[n + 1] + pos_up[tuple(sorted(eta + (x,)))]
                        yield row, col, -h * coef
            if mob is not None and n >= 1:
                # attraction damping of each removal site against the rest of eta
                prefac = []
                for x in eta:
                    drow = diff[x]
                    e_phi = sum(phi_vals[drow[y]] for y in eta if y != x)
                    prefac.append((x, m_rate * math.exp(-damp * e_phi)))
                complement = [x for x in all_sites if x not in eta_set]
                for j in range(0, min(n_max - n, len(complement)) + 1):
                    weight = h**j
                    pos_tgt = subset_position(s, n + j)
                    off_tgt = offs[n + j]
                    for xi in itertools.combinations(complement, j):
                        val = 0.0
                        for x, pre in prefac:
                            drow = diff[x]
                            prod = pre
                            for y in xi:
                                prod *= mob[drow[y]]
                            val += prod
                        if val != 0.0:
                            col = off_tgt + pos_tgt[tuple(sorted(eta + xi))]
                            yield row, col, -weight * val
            if birth and pos_down is not None:
                off_dn = offs[n - 1]
                for x in eta:
                    col = off_dn + pos_down[tuple(y for y in eta if y != x)]
                    yield row, col, lam


def _term_switches(kind: str, eps: float) -> dict:
    if kind == KIND_HIERARCHY:
        return dict(diagonal_scale=1.0, mobius_eps=1.0, crowding=True, birth=True)
    if kind == KIND_DIAGONAL:
        return dict(diagonal_scale=1.0, mobius_eps=None, crowding=False, birth=False)
    if kind == KIND_PERTURBATION:
        return dict(diagonal_scale=0.0, mobius_eps=1.0, crowding=True, birth=True)
    if kind == KIND_RESCALED:
        return dict(diagonal_scale=eps, mobius_eps=eps, crowding=True, birth=True)
    if kind == KIND_RESCALED_DIAGONAL:
        return dict(diagonal_scale=eps, mobius_eps=None, crowding=False, birth=False)
    if kind == KIND_RESCALED_PERTURBATION:
        return dict(diagonal_scale=0.0, mobius_eps=eps, crowding=True, birth=True)
    if kind == KIND_LIMIT_PERTURBATION:
        return dict(diagonal_scale=0.0, mobius_eps=0.0, crowding=True, birth=True)
    raise ValueError(f"unknown operator kind: {kind!r}")


class OperatorHandle:
    """One frozen generator variant acting on truncated correlation vectors.

    kind, kernels, params, and n_max are fixed at construction; the sparse
    matrix of the term enumeration is built lazily and cached.  Application
    is elementwise-exact linear algebra, safe to share across threads once
    the matrix is built.
    """

    def __init__(self, kind: str, kernels: KernelPair, params: ModelParams, n_max: int):
        if kind not in _ALL_KINDS:
            raise ValueError(f"unknown operator kind: {kind!r}")
        if n_max < 0:
            raise ValueError("n_max must be >= 0")
        self.kind = kind
        self.kernels = kernels
        self.params = params
        self.n_max = n_max
        self._matrix = None
        self._energies = None

    def __repr__(self):
        return f"OperatorHandle(kind={self.kind!r}, n_max={self.n_max})"

    @property
    def torus(self):
        return self.kernels.torus

    @property
    def dimension(self) -> int:
        return total_dimension(self.torus.site_count, self.n_max)

    @property
    def is_diagonal(self) -> bool:
        return self.kind in (KIND_DIAGONAL, KIND_RESCALED_DIAGONAL)

    def entries(self):
        return generator_entries(
            self.kernels, self.params, self.n_max, **_term_switches(self.kind, self.params.epsilon)
        )

    def matrix(self) -> sp.csr_matrix:
        """Sparse matrix of the generator on the flat layered state."""
        if self._matrix is None:
            rows, cols, vals = [], [], []
            for r, c, v in self.entries():
                rows.append(r)
                cols.append(c)
                vals.append(v)
            d = self.dimension
            self._matrix = sp.coo_matrix(
                (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
                shape=(d, d),
            ).tocsr()
        return self._matrix

    def semigroup_energies(self) -> np.ndarray:
        """Flat diagonal energies E with the handle's scaling: apply = mult by -E."""
        if not self.is_diagonal:
            raise ValueError("semigroup energies only defined for diagonal kinds")
        if self._energies is None:
            scale = 1.0 if self.kind == KIND_DIAGONAL else self.params.epsilon
            self._energies = scale * interaction_energies(self.kernels, self.n_max)
        return self._energies

    def apply_flat(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix() @ np.asarray(vec, dtype=float)

    def apply(self, k: CorrelationVector) -> CorrelationVector:
        if k.torus != self.torus or k.n_max != self.n_max:
            raise ValueError("state does not match operator truncation")
        return CorrelationVector.from_flat(self.torus, self.n_max, self.apply_flat(k.flat()))


def interaction_energies(kernels: KernelPair, n_max: int) -> np.ndarray:
    """Flat vector of pair energies E^a(eta) per configuration entry."""
    out = np.empty(total_dimension(kernels.torus.site_count, n_max))
    pos = 0
    for n in range(n_max + 1):
        for eta in subsets_of_order(kernels.torus.site_count, n):
            out[pos] = pair_energy(eta, kernels) if n >= 2 else 0.0
            pos += 1
    return out


def hierarchy_generator(kernels, params, n_max) -> OperatorHandle:
    return OperatorHandle(KIND_HIERARCHY, kernels, params, n_max)


def diagonal_part(kernels, params, n_max) -> OperatorHandle:
    return OperatorHandle(KIND_DIAGONAL, kernels, params, n_max)


def perturbation_part(kernels, params, n_max) -> OperatorHandle:
    return OperatorHandle(KIND_PERTURBATION, kernels, params, n_max)


def rescaled_generator(kernels, params, n_max) -> OperatorHandle:
    return OperatorHandle(KIND_RESCALED, kernels, params, n_max)


def rescaled_diagonal(kernels, params, n_max) -> OperatorHandle:
    return OperatorHandle(KIND_RESCALED_DIAGONAL, kernels, params, n_max)


def rescaled_perturbation(kernels, params, n_max) -> OperatorHandle:
    """Perturbation part of the rescaled family; epsilon = 0 is the limit form."""
    if params.epsilon == 0.0:
        return OperatorHandle(KIND_LIMIT_PERTURBATION, kernels, params, n_max)
    return OperatorHandle(KIND_RESCALED_PERTURBATION, kernels, params, n_max)


def limit_perturbation(kernels, params, n_max) -> OperatorHandle:
    return OperatorHandle(KIND_LIMIT_PERTURBATION, kernels, params, n_max)


def apply_hierarchy_generator(k: CorrelationVector, kernels, params) -> CorrelationVector:
    return hierarchy_generator(kernels, params, k.n_max).apply(k)


def apply_diagonal_part(k: CorrelationVector, kernels, params) -> CorrelationVector:
    return diagonal_part(kernels, params, k.n_max).apply(k)


def apply_perturbation_part(k: CorrelationVector, kernels, params) -> CorrelationVector:
    return perturbation_part(kernels, params, k.n_max).apply(k)


def apply_rescaled_generator(k: CorrelationVector, kernels, params) -> CorrelationVector:
    """Rescaled generator at params.epsilon; at 0 this is the pure limit part."""
    if params.epsilon == 0.0:
        return limit_perturbation(kernels, params, k.n_max).apply(k)
    return rescaled_generator(kernels, params, k.n_max).apply(k)


def semigroup_apply(t: float, k: CorrelationVector, kernels, *, epsilon: float = 1.0):
    """Contraction semigroup of the diagonal part: multiply by e^{-t eps E^a}."""
    if t < 0:
        raise ValueError("semigroup time must be >= 0")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    energies = interaction_energies(kernels, k.n_max)
    return CorrelationVector.from_flat(
        k.torus, k.n_max, np.exp(-t * epsilon * energies) * k.flat()
    )


def assemble_dense(op: OperatorHandle) -> np.ndarray:
    """Dense matrix whose column j is the operator applied to basis vector j."""
    d = op.dimension
    if d > DENSE_CAP:
        raise DimensionCapError(f"dense assembly of dimension {d} exceeds cap {DENSE_CAP}")
    out = np.empty((d, d))
    basis = np.zeros(d)
    for j in range(d):
        basis[j] = 1.0
        out[:, j] = op.apply_flat(basis)
        basis[j] = 0.0
    return out


def apply_observable_generator(
    G: SupportedFunction, kernels: KernelPair, params: ModelParams, n_max: int
) -> SupportedFunction:
    """Generator on the observable side of the Lebesgue-Poisson pairing.

    For every configuration eta with |eta| <= n_max:

      out(eta) = -E^a(eta) G(eta)
                 - sum_{x in eta} (sum_{y in eta - x} a(x - y)) G(eta - x)
                 - m sum_{xi subset eta} G(xi) sum_{x in xi}
                       e^{-E^phi(x, xi - x)} prod_{y in eta - xi} (e^{-phi(x-y)} - 1)
                 + lambda h^d sum_{x not in eta} G(eta + x),

    reading G as zero above its own order or outside its window.  This is the
    exact adjoint of the hierarchy generator on the truncated space.
    """
    torus = kernels.torus
    s = torus.site_count
    h = torus.cell_volume
    diff = diff_table(torus)
    a_vals = kernels.a_values
    phi_vals = kernels.phi_values
    mob = np.expm1(-phi_vals)
    m_rate = params.death_amplitude
    lam = params.birth_intensity
    out = {}
    for n in range(n_max + 1):
        for eta in subsets_of_order(s, n):
            eta_set = set(eta)
            val = 0.0
            if n >= 2:
                g_here = G.value(eta)
                if g_here != 0.0:
                    val -= pair_energy(eta, kernels) * g_here
            for x in eta:
                rest = tuple(y for y in eta if y != x)
                g_rest = G.value(rest)
                if g_rest != 0.0:
                    drow = diff[x]
                    val -= sum(a_vals[drow[y]] for y in rest) * g_rest
            for r in range(n + 1):
                for xi in itertools.combinations(eta, r):
                    g_xi = G.value(xi)
                    if g_xi == 0.0:
                        continue
                    outside = [y for y in eta if y not in xi]
                    acc = 0.0
                    for x in xi:
                        drow = diff[x]
                        term = math.exp(-point_energy(x, tuple(y for y in xi if y != x), kernels))
                        for y in outside:
                            term *= mob[drow[y]]
                        acc += term
                    val -= m_rate * g_xi * acc
            birth_sum = 0.0
            for x in range(s):
                if x not in eta_set:
                    birth_sum += G.value(tuple(sorted(eta + (x,))))
            val += lam * h * birth_sum
            out[eta] = val
    return SupportedFunction(torus, out, n_max, None)


def lp_pairing(F, k: CorrelationVector) -> float:
    """Lebesgue-Poisson pairing of an observable with a correlation vector.

    Layers pair with weight h^{d n} under the canonical-subset convention, up
    to the state's truncation order.
    """
    h = k.torus.cell_volume
    if isinstance(F, SupportedFunction):
        total = 0.0
        for eta, val in F.values.items():
            if val != 0.0 and len(eta) <= k.n_max:
                total += h ** len(eta) * val * k.value(eta)
        return total
    total = 0.0
    for n in range(k.n_max + 1):
        for eta in subsets_of_order(k.torus.site_count, n):
            total += h**n * float(F(eta)) * k.value(eta)
    return total
