"""Shared helpers: random families and small fixtures."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from product_chain import GeneratorFamily, StateSpace, build_product_measure
from product_chain.single import assemble_single, compute_tau_minimal
from product_chain.multi import assemble_multi


def random_generator(rng: np.random.Generator, n: int, density: float = 1.0) -> np.ndarray:
    a = rng.uniform(0.1, 2.0, size=(n, n))
    if density < 1.0:
        mask = rng.random((n, n)) < density
        # keep a cycle so the chain stays irreducible
        mask[np.arange(n), (np.arange(n) + 1) % n] = True
        a = a * mask
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, -a.sum(axis=1))
    return a


def random_families(seed: int, nx: int, nz: int, density: float = 1.0):
    rng = np.random.default_rng(seed)
    qf = GeneratorFamily.from_matrices(
        StateSpace.of_size(nz), StateSpace.of_size(nx), [random_generator(rng, nx, density) for _ in range(nz)], name="Q"
    )
    af = GeneratorFamily.from_matrices(
        StateSpace.of_size(nx), StateSpace.of_size(nz), [random_generator(rng, nz, density) for _ in range(nx)], name="A"
    )
    return qf, af


def random_chain(seed, nx, nz, eps=0.05, variant=None, multi=False, density=1.0):
    from product_chain import Variant

    variant = variant or Variant.DEFAULT
    qf, af = random_families(seed, nx, nz, density)
    g = build_product_measure(qf, af, eps)
    if multi:
        return assemble_multi(qf, af, g, variant)
    return assemble_single(qf, af, g, compute_tau_minimal(qf, af, g, variant), variant)


family_shapes = st.tuples(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
