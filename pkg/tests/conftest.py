"""Shared model instances for the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from ovskale import (
    BoundModel,
    KernelPair,
    ModelParams,
    ScaleSpec,
    Torus,
    kernel_pair_from_spec,
    model_bound,
    time_horizon,
)

GAUSS_A = {"kind": "gaussian", "params": {"amplitude": 1.0, "sigma": 0.7}}
GAUSS_PHI = {"kind": "gaussian", "params": {"amplitude": 0.8, "sigma": 0.5}}


@dataclass(frozen=True)
class Instance:
    """One assembled model: geometry, kernels, rates, scale, bound."""

    torus: Torus
    kernels: KernelPair
    params: ModelParams
    scale: ScaleSpec
    bound: BoundModel
    n_max: int

    @property
    def horizon(self) -> float:
        return time_horizon(self.scale.alpha_s, self.scale.alpha_star, self.bound, self.scale.nu)


def make_instance(
    sites: int = 6,
    n_max: int = 3,
    spacing: float = 0.5,
    a_spec: dict | None = None,
    phi_spec: dict | None = None,
    m: float = 1.0,
    lam: float = 1.0,
    epsilon: float = 1.0,
    alpha_s: float = 1.5,
    alpha_star: float = 2.5,
) -> Instance:
    torus = Torus(1, sites, spacing)
    kernels = kernel_pair_from_spec(torus, a_spec or GAUSS_A, phi_spec or GAUSS_PHI)
    params = ModelParams(death_amplitude=m, birth_intensity=lam, epsilon=epsilon)
    scale = ScaleSpec(alpha_s=alpha_s, alpha_star=alpha_star)
    bound = model_bound(kernels, params)
    return Instance(torus, kernels, params, scale, bound, n_max)


@pytest.fixture(scope="session")
def stock6() -> Instance:
    return make_instance()


@pytest.fixture(scope="session")
def stock4() -> Instance:
    # small enough for dense oracles and exhaustive enumeration
    return make_instance(sites=4, n_max=2)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260816)
