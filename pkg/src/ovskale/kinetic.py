"""Nonlocal kinetic equation of the scaling limit, and its fold bifurcation.

The limiting density field rho on the torus obeys

    d rho / d t = -rho (a * rho) - m rho e^{-(phi * rho)} + lambda,

with * the periodic lattice convolution (a * rho)(x) = h^d sum_y a(x-y)
rho(y).  Spatially constant data reduces to the scalar rate

    r' = lambda - avg_a r^2 - m r e^{-avg_phi r}.

Stationary constant states are the roots of x e^{-x} + b x^2 = c after the
substitution x = avg_phi rho, with the dimensionless pair

    b = avg_a / (m avg_phi),      c = lambda avg_phi / m.

The fold structure is classical: extrema of f(x) = x e^{-x} + b x^2 solve
2 b x = (x - 1) e^{-x}; the tangency sits at x0 = (1 + sqrt 5)/2 (the positive
root of x^2 - x - 1), and the fold disappears above

    threshold_b = (3 - sqrt 5)/4 * e^{-(1 + sqrt 5)/2}.

Below threshold the window (c_low, c_high) = (f(x_hi), f(x_lo)) brackets the
three-solution regime, where x_lo in (1, x0) and x_hi in (x0, inf) are the
two extremum locations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StepSizeCollapse
from .lattice import KernelPair, Torus
from .operators import ModelParams


@dataclass(frozen=True, eq=False)
class DensityField:
    """A nonnegative density profile over the torus sites."""

    torus: Torus
    rho: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rho, dtype=float)
        if arr.shape == ():
            arr = np.full(self.torus.site_count, float(arr))
        arr = np.ascontiguousarray(arr)
        if arr.shape != (self.torus.site_count,):
            raise ValueError(f"rho must have shape ({self.torus.site_count},)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("rho must be finite")
        if np.any(arr < 0):
            raise ValueError("rho must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "rho", arr)


def circular_convolution(torus: Torus, kernel: np.ndarray, rho: np.ndarray, method: str = "fft"):
    """Periodic lattice convolution h^d sum_y kernel(x - y) rho(y).

    "fft" runs through the d-dimensional discrete Fourier transform;
    "direct" is the quadratic-cost reference sum.  Both implement the same
    contract and are pitted against each other in the tests.
    """
    kernel = np.asarray(kernel, dtype=float)
    rho = np.asarray(rho, dtype=float)
    shape = (torus.sites_per_axis,) * torus.dim
    if method == "fft":
        out = np.fft.ifftn(np.fft.fftn(kernel.reshape(shape)) * np.fft.fftn(rho.reshape(shape)))
        return torus.cell_volume * np.real(out).reshape(-1)
    if method == "direct":
        s = torus.site_count
        out = np.zeros(s)
        for x in range(s):
            acc = 0.0
            for y in range(s):
                acc += kernel[torus.diff_site(x, y)] * rho[y]
            out[x] = torus.cell_volume * acc
        return out
    raise ValueError(f"unknown convolution method: {method!r}")


def kinetic_rhs(field: DensityField, kernels: KernelPair, params: ModelParams) -> DensityField:
    """Right-hand side of the kinetic equation at the given density."""
    rho = field.rho
    torus = field.torus
    comp = circular_convolution(torus, kernels.a_values, rho)
    attr = circular_convolution(torus, kernels.phi_values, rho)
    rate = (
        -rho * comp
        - params.death_amplitude * rho * np.exp(-attr)
        + params.birth_intensity
    )
    out = object.__new__(DensityField)
    object.__setattr__(out, "torus", torus)
    rate = np.ascontiguousarray(rate)
    rate.setflags(write=False)
    object.__setattr__(out, "rho", rate)
    return out


def _rhs_array(rho: np.ndarray, torus, kernels, params) -> np.ndarray:
    comp = circular_convolution(torus, kernels.a_values, rho)
    attr = circular_convolution(torus, kernels.phi_values, rho)
    return -rho * comp - params.death_amplitude * rho * np.exp(-attr) + params.birth_intensity


@dataclass
class KineticTrajectory:
    times: np.ndarray
    fields: np.ndarray  # (len(times), site_count)
    halvings: int

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]


def integrate_kinetic(
    field0: DensityField,
    t_end: float,
    dt: float,
    kernels: KernelPair,
    params: ModelParams,
    *,
    max_halvings: int = 20,
    store_every: int = 1,
) -> KineticTrajectory:
    """Fixed-step fourth-order Runge-Kutta march of the kinetic equation.

    Steps whose stability indicator dt (avg_a max rho + m) reaches 1, and
    steps producing negative entries, are rejected and retried at half the
    step; more than max_halvings rejections abort the run.
    """
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    torus = field0.torus
    rho = field0.rho.copy()
    avg_a = kernels.avg_a
    m_rate = params.death_amplitude
    times = [0.0]
    fields = [rho.copy()]
    t = 0.0
    step = dt
    halvings = 0
    accepted = 0
    while t < t_end * (1.0 - 1e-15):
        step = min(step, t_end - t)
        if step * (avg_a * float(rho.max()) + m_rate) >= 1.0:
            step *= 0.5
            halvings += 1
            if halvings > max_halvings:
                raise StepSizeCollapse("stability bound forced too many step halvings")
            continue
        k1 = _rhs_array(rho, torus, kernels, params)
        k2 = _rhs_array(rho + 0.5 * step * k1, torus, kernels, params)
        k3 = _rhs_array(rho + 0.5 * step * k2, torus, kernels, params)
        k4 = _rhs_array(rho + step * k3, torus, kernels, params)
        rho_new = rho + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(rho_new < 0.0):
            step *= 0.5
            halvings += 1
            if halvings > max_halvings:
                raise StepSizeCollapse("negativity rejection forced too many step halvings")
            continue
        t += step
        rho = rho_new
        accepted += 1
        if accepted % store_every == 0 or t >= t_end * (1.0 - 1e-15):
            times.append(t)
            fields.append(rho.copy())
    return KineticTrajectory(np.array(times), np.vstack(fields), halvings)


def homogeneous_scalar_ode(
    r0: float,
    t_end: float,
    avg_a: float,
    avg_phi: float,
    death_amplitude: float,
    birth_intensity: float,
) -> float:
    """High-accuracy adaptive solve of the spatially constant reduction."""
    if r0 < 0:
        raise ValueError("r0 must be >= 0")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    if t_end == 0.0:
        return float(r0)

    def rate(_t, r):
        return birth_intensity - avg_a * r * r - death_amplitude * r * np.exp(-avg_phi * r)

    sol = solve_ivp(
        rate, (0.0, t_end), [float(r0)], method="DOP853", rtol=1e-12, atol=1e-14
    )
    if not sol.success:
        raise RuntimeError(f"scalar kinetic solve failed: {sol.message}")
    return float(sol.y[0, -1])


def homogeneous_ode(r0: float, t_end: float, kernels: KernelPair, params: ModelParams) -> float:
    return homogeneous_scalar_ode(
        r0, t_end, kernels.avg_a, kernels.avg_phi, params.death_amplitude, params.birth_intensity
    )


@dataclass(frozen=True)
class BifurcationInput:
    """Dimensionless stationary problem x e^{-x} + b x^2 = c on [0, x_hi]."""

    b: float
    c: float
    x_hi: float = 50.0
    resolution: int = 100_000

    def __post_init__(self):
        if not (self.b >= 0 and math.isfinite(self.b)):
            raise ValueError("b must be >= 0 and finite")
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError("c must be positive and finite")
        if not (self.x_hi > 0):
            raise ValueError("x_hi must be positive")
        if not (self.b * self.x_hi**2 > self.c):
            raise ValueError("x_hi too small: need b * x_hi^2 > c for a right bracket")
        if self.resolution < 100:
            raise ValueError("resolution must be >= 100")


def stationary_curve(x, b: float):
    x = np.asarray(x, dtype=float)
    return x * np.exp(-x) + b * x * x


@dataclass
class ScanResult:
    """Roots of the stationary relation found by scan plus bisection."""

    roots: np.ndarray
    count: int
    edge_warning: bool
    tangency_flag: bool

    def densities(self, avg_phi: float) -> np.ndarray:
        if not (avg_phi > 0):
            raise ValueError("avg_phi must be positive")
        return self.roots / avg_phi


def _bisect(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = fn(lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid == 0.0:
            return mid
        if (flo < 0) == (fmid < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stationary_scan(inp: BifurcationInput) -> ScanResult:
    """Find all roots of x e^{-x} + b x^2 = c on [0, x_hi].

    Dense grid scan for sign changes, bisection to 1e-12 on each bracket.
    Exact tangencies are reported with the lower root count and a flag;
    roots within one grid cell of the window edge raise a warning.
    """
    grid = np.linspace(0.0, inp.x_hi, inp.resolution + 1)
    vals = stationary_curve(grid, inp.b) - inp.c
    fn = lambda x: float(x * math.exp(-x) + inp.b * x * x - inp.c)
    roots = []
    for i in range(len(grid) - 1):
        lo, hi = vals[i], vals[i + 1]
        if lo == 0.0:
            if not roots or abs(roots[-1] - grid[i]) > 1e-9:
                roots.append(float(grid[i]))
        elif lo * hi < 0.0:
            roots.append(_bisect(fn, float(grid[i]), float(grid[i + 1])))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    cell = inp.x_hi / inp.resolution
    scale0 = max(inp.c, 1.0)
    tangency = False
    for i in range(1, len(grid) - 1):
        if vals[i - 1] > vals[i] < vals[i + 1] and abs(vals[i]) < 1e-9 * scale0 and vals[i] > 0.0:
            tangency = True
        if vals[i - 1] < vals[i] > vals[i + 1] and abs(vals[i]) < 1e-9 * scale0 and vals[i] < 0.0:
            tangency = True
    edge = any(r <= cell or r >= inp.x_hi - cell for r in roots)
    if edge:
        warnings.warn("stationary root within one grid cell of the window edge", stacklevel=2)
    return ScanResult(np.array(sorted(roots)), len(roots), edge, tangency)


def threshold_b() -> float:
    """Fold threshold: above it the stationary relation is single-valued."""
    root5 = math.sqrt(5.0)
    return (3.0 - root5) / 4.0 * math.exp(-(1.0 + root5) / 2.0)


def tangency_point() -> float:
    """Extremum-merging location x0, the positive root of x^2 - x - 1."""
    return (1.0 + math.sqrt(5.0)) / 2.0


def critical_c_range(b: float) -> tuple[float, float]:
    """The c-window (c_low, c_high) with three stationary solutions.

    Solves 2 b x = (x - 1) e^{-x} on both sides of the tangency point; the
    local maximum of the stationary curve gives c_high, the local minimum
    gives c_low.  Rejects b outside (0, threshold_b).
    """
    if not (0.0 < b < threshold_b()):
        raise ValueError("critical_c_range needs 0 < b < threshold_b()")
    x0 = tangency_point()

    def extremum_eq(x: float) -> float:
        return (x - 1.0) * math.exp(-x) - 2.0 * b * x

    x_lo = _bisect(extremum_eq, 1.0, x0, tol=1e-14)
    hi = x0 + 1.0
    while extremum_eq(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("failed to bracket the outer extremum")
    x_hi = _bisect(extremum_eq, x0, hi, tol=1e-14)
    c_high = float(stationary_curve(x_lo, b))
    c_low = float(stationary_curve(x_hi, b))
    return c_low, c_high


def bifurcation_input_from_model(
    kernels: KernelPair, params: ModelParams, x_hi: float = 50.0, resolution: int = 100_000
) -> BifurcationInput:
    """Dimensionless (b, c) of a concrete model instance."""
    avg_phi = kernels.avg_phi
    if not (avg_phi > 0):
        raise ValueError("model reduction needs avg_phi > 0")
    b = kernels.avg_a / (params.death_amplitude * avg_phi)
    c = params.birth_intensity * avg_phi / params.death_amplitude
    return BifurcationInput(b=b, c=c, x_hi=x_hi, resolution=resolution)
