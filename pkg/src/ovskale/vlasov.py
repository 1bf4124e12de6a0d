"""Scaled operator family, measured convergence to the limit, and chaos.

The scaling replaces the competition kernel by eps a, the attraction kernel
by eps phi, and the birth intensity by lambda / eps, then renormalizes layer
by layer.  After renormalization the diagonal shrinks to -eps E^a and only
the death term of the perturbation still depends on eps; the crowding and
birth terms are shared by the whole family.  At eps = 0 the diagonal is gone
and the death term carries the bare kernel -phi with no damping.

Nothing here models the abstract convergence coefficients analytically;
every comparison is a measured operator or trajectory gap.  Product-form
states ride through the eps = 0 flow: starting the hierarchy from the
layerwise products of a density field keeps it in product form up to
truncation error, with the field evolving under the kinetic equation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .kinetic import DensityField, integrate_kinetic
from .lattice import KernelPair, subsets_of_order
from .operators import (
    ModelParams,
    interaction_energies,
    rescaled_diagonal,
    rescaled_perturbation,
)
from .scale import BoundModel, ScaleSpec, norm_alpha_flat
from .series import EvolutionResult, SeriesConfig, ovsyannikov_evolve
from .states import CorrelationVector, flat_orders, random_correlation


def thread_cap(n_jobs: int) -> int:
    """Worker count for independent runs, capped by OVSKALE_THREADS."""
    raw = os.environ.get("OVSKALE_THREADS", "")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(n_jobs, cap))


@dataclass(frozen=True)
class EpsilonSweep:
    """A descending scaling sweep ending at the limit point 0."""

    epsilons: tuple
    initial: CorrelationVector
    scale: ScaleSpec
    config: SeriesConfig

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if len(eps) < 2:
            raise ConfigError("sweep needs at least one positive value and the limit 0")
        if any(e < 0 for e in eps):
            raise ConfigError("sweep values must be >= 0")
        if list(eps) != sorted(eps, reverse=True):
            raise ConfigError("sweep values must be sorted descending")
        if eps.count(0.0) != 1 or eps[-1] != 0.0:
            raise ConfigError("the limit point 0 must appear exactly once, at the end")

    @property
    def positive(self) -> tuple:
        return self.epsilons[:-1]


def _test_profiles(torus, n_max: int, alpha_lo: float, samples: int, rng) -> list:
    """Random states in the alpha_lo ball plus the extremal geometric profile."""
    orders = flat_orders(torus, n_max)
    out = [np.power(alpha_lo, orders.astype(float))]
    for _ in range(samples):
        out.append(random_correlation(torus, n_max, alpha_lo, rng).flat())
    return out


def semigroup_gap(
    epsilon: float,
    t: float,
    samples: int,
    kernels: KernelPair,
    n_max: int,
    alpha_lo: float,
    alpha_hi: float,
    rng,
) -> float:
    """Largest relative gap between the scaled semigroup and the identity.

    Measures max over test states of |(e^{-t eps E^a} - 1) u| in the weak
    norm at alpha_hi against |u| in the strong norm at alpha_lo.  The limit
    semigroup is the identity, so epsilon = 0 or t = 0 give exactly 0.
    """
    if epsilon < 0 or t < 0:
        raise ValueError("epsilon and t must be >= 0")
    if not (1.0 < alpha_lo < alpha_hi):
        raise ValueError("need 1 < alpha_lo < alpha_hi")
    if epsilon == 0.0 or t == 0.0:
        return 0.0
    energies = interaction_energies(kernels, n_max)
    factor = np.exp(-t * epsilon * energies) - 1.0
    orders = flat_orders(kernels.torus, n_max)
    best = 0.0
    for u in _test_profiles(kernels.torus, n_max, alpha_lo, samples, rng):
        denom = norm_alpha_flat(u, orders, alpha_lo)
        if denom == 0.0:
            continue
        best = max(best, norm_alpha_flat(factor * u, orders, alpha_hi) / denom)
    return best


def semigroup_gap_intermediate(
    t: float, kernels: KernelPair, n_max: int, alpha_lo: float, alpha_hi: float
) -> float:
    """Per-epsilon slope bound t * sup over entries of E^a(eta) (lo/hi)^|eta|."""
    energies = interaction_energies(kernels, n_max)
    orders = flat_orders(kernels.torus, n_max)
    ratio = alpha_lo / alpha_hi
    return t * float(np.max(energies * ratio**orders.astype(float)))


def semigroup_gap_bound(t: float, kernels: KernelPair, alpha_lo: float, alpha_hi: float) -> float:
    """Closed-form slope bound 4 sup(a) / (e ln(hi/lo))^2 times t."""
    if not (1.0 < alpha_lo < alpha_hi):
        raise ValueError("need 1 < alpha_lo < alpha_hi")
    gap = math.log(alpha_hi / alpha_lo)
    return t * 4.0 * kernels.sup_a / (math.e * gap) ** 2


@dataclass
class ZGapReport:
    """Sampled perturbation gap against the two-pole profile in the index split."""

    epsilon: float
    deltas: np.ndarray
    gaps: np.ndarray
    fitted_pole: float
    residual: float
    max_gap: float

    @property
    def two_pole_ok(self) -> bool:
        return self.residual < 0.10


def perturbation_gap(
    epsilon: float,
    samples: int,
    kernels: KernelPair,
    params: ModelParams,
    n_max: int,
    scale: ScaleSpec,
    rng,
    *,
    ln_split_floor: float = 0.8,
) -> ZGapReport:
    """Measure the operator gap |Z_eps - Z_0| over sampled index pairs.

    Each sample draws a pair alpha_lo < alpha_hi and computes the exact
    induced norm of the difference between the weighted sup-norm balls,
    max over rows of alpha_hi^{-|row|} sum_cols |D| alpha_lo^{|col|}; the
    extremal state is the sign-matched geometric profile, so no state
    sampling is involved.  A one-parameter least squares fit against
    w(delta) = 1/delta + 1/delta^2 captures the expected two-pole shape;
    the reported residual is the relative rms misfit.

    Truncation caps the layer index, so the pole weights sup_r r^j x^r
    saturate unless ln(alpha_hi/alpha_lo) is large enough for their interior
    maximum to fit under the cap.  Pairs are therefore sampled with
    ln(alpha_hi/alpha_lo) >= ln_split_floor, the regime where the truncated
    operator can actually express the two-pole profile; the window must
    satisfy alpha_star > e^{ln_split_floor} for such pairs to exist.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ratio_min = math.exp(ln_split_floor)
    lo_max = scale.alpha_star / ratio_min
    if lo_max <= 1.02:
        raise ValueError(
            f"alpha_star {scale.alpha_star} leaves no room for index splits with "
            f"ln(alpha_hi/alpha_lo) >= {ln_split_floor}"
        )
    z_eps = rescaled_perturbation(kernels, replace(params, epsilon=epsilon), n_max)
    z_lim = rescaled_perturbation(kernels, replace(params, epsilon=0.0), n_max)
    diff_abs = abs((z_eps.matrix() - z_lim.matrix()).tocsr())
    orders = flat_orders(kernels.torus, n_max).astype(float)
    deltas = np.empty(samples)
    gaps = np.empty(samples)
    for i in range(samples):
        alpha_lo = float(rng.uniform(1.02, lo_max))
        alpha_hi = float(rng.uniform(alpha_lo * ratio_min, scale.alpha_star))
        col_scale = np.power(alpha_lo, orders)
        row_scale = np.power(alpha_hi, -orders)
        gaps[i] = float(np.max(row_scale * (diff_abs @ col_scale)))
        deltas[i] = alpha_hi - alpha_lo
    weights = 1.0 / deltas + 1.0 / deltas**2
    wsq = float(np.dot(weights, weights))
    pole = float(np.dot(gaps, weights) / wsq) if wsq > 0 else 0.0
    gsq = float(np.dot(gaps, gaps))
    residual = float(np.sqrt(np.sum((gaps - pole * weights) ** 2) / gsq)) if gsq > 0 else 0.0
    return ZGapReport(epsilon, deltas, gaps, pole, residual, float(gaps.max(initial=0.0)))


@dataclass
class VlasovReport:
    """Sweep outcome: per-epsilon trajectory gaps against the limit run."""

    epsilons: np.ndarray
    sup_gaps: np.ndarray
    ratios: np.ndarray
    strictly_decreasing: bool
    times: np.ndarray
    limit_result: EvolutionResult
    results: dict


def _sweep_operators(eps: float, kernels, params, n_max):
    p = replace(params, epsilon=eps)
    diag = rescaled_diagonal(kernels, p, n_max) if eps > 0.0 else None
    return diag, rescaled_perturbation(kernels, p, n_max)


def vlasov_limit(
    sweep: EpsilonSweep,
    kernels: KernelPair,
    params: ModelParams,
    bound: BoundModel,
    *,
    s: float = 0.0,
) -> VlasovReport:
    """Run the full sweep and measure sup-in-time gaps to the limit flow.

    Every run shares the initial state, scale, and solver configuration, so
    stored time grids align and the gap sup is taken pointwise over them.
    Solver failures carry the offending epsilon in the message.
    """
    u0 = sweep.initial
    n_max = u0.n_max
    t_end = s + sweep.config.upsilon
    jobs = {}
    for eps in sweep.epsilons:
        jobs[eps] = _sweep_operators(eps, kernels, params, n_max)
        jobs[eps][1].matrix()

    def run(eps: float) -> EvolutionResult:
        diag, pert = jobs[eps]
        try:
            return ovsyannikov_evolve(u0, s, t_end, diag, pert, sweep.scale, bound, sweep.config)
        except Exception as err:
            raise type(err)(f"epsilon={eps}: {err}") from err

    order = list(sweep.epsilons)
    with ThreadPoolExecutor(max_workers=thread_cap(len(order))) as pool:
        results = dict(zip(order, pool.map(run, order)))
    limit = results[0.0]
    limit_flats = [st.flat() for st in limit.states]
    orders = flat_orders(u0.torus, n_max)
    alpha_star = sweep.scale.alpha_star
    sup_gaps = []
    for eps in sweep.positive:
        res = results[eps]
        gap = max(
            norm_alpha_flat(st.flat() - ref, orders, alpha_star)
            for st, ref in zip(res.states, limit_flats)
        )
        sup_gaps.append(gap)
    sup_gaps = np.array(sup_gaps)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = sup_gaps[1:] / sup_gaps[:-1]
    strict = bool(np.all(np.diff(sup_gaps) < 0.0))
    return VlasovReport(
        np.array(sweep.positive), sup_gaps, ratios, strict, limit.times, limit, results
    )


@dataclass
class ChaosReport:
    """Distance of the evolved hierarchy from the product of the evolved field."""

    t: float
    n_probe: int
    n_max: int
    refined_n_max: int
    layer_gaps: np.ndarray
    refined_layer_gaps: np.ndarray
    rho_final: np.ndarray
    hierarchy_result: EvolutionResult
    refined_result: EvolutionResult

    @property
    def gap(self) -> float:
        return float(self.layer_gaps[1:].max(initial=0.0))

    @property
    def refined_gap(self) -> float:
        return float(self.refined_layer_gaps[1:].max(initial=0.0))


def _product_layer_gaps(k: CorrelationVector, rho: np.ndarray, n_probe: int) -> np.ndarray:
    """Max absolute entry gap per layer against the product of the field."""
    torus = k.torus
    gaps = np.zeros(n_probe + 1)
    gaps[0] = abs(k.value(()) - 1.0)
    for n in range(1, n_probe + 1):
        worst = 0.0
        for eta in subsets_of_order(torus.site_count, n):
            prod = float(np.prod(rho[list(eta)]))
            worst = max(worst, abs(k.value(eta) - prod))
        gaps[n] = worst
    return gaps


def chaos_check(
    rho0: DensityField,
    t: float,
    n_probe: int,
    kernels: KernelPair,
    params: ModelParams,
    scale: ScaleSpec,
    bound: BoundModel,
    cfg: SeriesConfig,
    n_max: int,
    *,
    refined_n_max: int | None = None,
    kinetic_dt: float = 1e-3,
) -> ChaosReport:
    """Evolve products through the limit hierarchy and compare to the field.

    The hierarchy starts from the layerwise products of rho0 and runs under
    the limit perturbation alone; the field runs under the kinetic equation.
    Both evolutions repeat at a refined truncation order to expose how much
    of the gap is truncation.  At t = 0 the gap vanishes by construction.
    """
    if not (0 <= n_probe <= n_max):
        raise ValueError("need 0 <= n_probe <= n_max")
    if refined_n_max is None:
        refined_n_max = min(2 * n_max, rho0.torus.site_count)
    if refined_n_max < n_max:
        raise ValueError("refined_n_max must be >= n_max")
    if t == 0.0:
        rho_t = rho0.rho.copy()
    else:
        rho_t = integrate_kinetic(rho0, t, kinetic_dt, kernels, params).final

    def run(order: int):
        u0 = CorrelationVector.product_form(rho0.torus, order, rho0.rho)
        pert = rescaled_perturbation(kernels, replace(params, epsilon=0.0), order)
        return ovsyannikov_evolve(u0, 0.0, t, None, pert, scale, bound, cfg)

    with ThreadPoolExecutor(max_workers=thread_cap(2)) as pool:
        coarse, refined = pool.map(run, [n_max, refined_n_max])
    gaps = _product_layer_gaps(coarse.final_state, rho_t, n_probe)
    refined_gaps = _product_layer_gaps(refined.final_state, rho_t, n_probe)
    return ChaosReport(
        t, n_probe, n_max, refined_n_max, gaps, refined_gaps, rho_t, coarse, refined
    )
