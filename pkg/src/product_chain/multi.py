"""Refined construction with one maintenance state per basic state.

The natural space is split into strata ``{x_i} x Z``.  Maintenance state
``c_i`` only exchanges rates with stratum ``i`` and with its neighbours
``c_{i-1}``, ``c_{i+1}``.  Whatever flux imbalance a stratum leaves in its
``c_i`` is passed down the c-chain one level at a time, starting from the top
stratum, and absorbed at ``c_0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DTYPE, GeneratorFamily, Measure, RateMatrix, StateSpace
from .errors import RecursionImbalance
from .single import (
    BALANCE_RTOL,
    CLAMP_RTOL,
    ProductMeasure,
    TauField,
    Variant,
    close_natural_block,
    compute_tau_minimal,
    product_kernel,
)


@dataclass(frozen=True)
class VLevel:
    """Flux bookkeeping at maintenance state ``c_j``.

    ``v_r`` is the stationary flux into ``c_j`` from its stratum and from
    ``c_{j+1}``; ``v_c`` the flux from ``c_j`` back into its stratum and up
    to ``c_{j+1}``; ``v_m`` is the larger of the two.  ``direction`` records
    which link to ``c_{j-1}`` carries the difference: ``"down"``
    (c_j -> c_{j-1}), ``"up"`` (c_{j-1} -> c_j) or ``"none"``.
    """

    j: int
    v_r: float
    v_c: float
    v_m: float
    direction: str


def _asc_sum(values) -> DTYPE:
    # sequential left-to-right sum: fixed order, bit-reproducible
    values = np.asarray(values, dtype=DTYPE)
    return np.cumsum(values)[-1] if values.size else DTYPE(0)


def _check_balance(residual, gross, what):
    if abs(residual) > BALANCE_RTOL * gross:
        raise RecursionImbalance(f"{what}: residual {float(residual):.3g} vs scale {float(gross):.3g}")


@dataclass(frozen=True, eq=False)
class MultiChain:
    space: StateSpace
    R: RateMatrix
    g: ProductMeasure
    tau: TauField
    V: tuple
    variant: Variant = Variant.DEFAULT
    qf: GeneratorFamily | None = None
    af: GeneratorFamily | None = None

    @property
    def natural_size(self) -> int:
        return self.g.natural.space.size

    @property
    def c_count(self) -> int:
        return self.space.size - self.natural_size

    @property
    def env_size(self) -> int:
        return self.natural_size // self.c_count

    @property
    def c_indices(self) -> list[int]:
        return list(range(self.natural_size, self.space.size))

    @property
    def strata(self) -> np.ndarray:
        return np.arange(self.natural_size) // self.env_size

    @property
    def c_of_natural(self) -> np.ndarray:
        return self.natural_size + self.strata

    @property
    def stationary(self) -> Measure:
        return self.g.as_measure(self.space)

    def c_rate(self, i: int, j: int):
        """``R(c_j | c_i)``."""
        n = self.natural_size
        return self.R.entries[n + i, n + j]


def assemble_multi(qf, af, g: ProductMeasure, variant: Variant = Variant.DEFAULT) -> MultiChain:
    """Assemble the generator on ``(X x Z) + {c_0, ..., c_N}``.

    The natural block and tau are those of the minimal single-c construction.
    Levels are processed from ``j = N`` down to ``j = 1``: the in- and outflow
    of ``c_j`` are compared and the surplus is routed along exactly one of the
    two links between ``c_j`` and ``c_{j-1}``.  ``c_0`` takes the remainder.
    """
    tau = compute_tau_minimal(qf, af, g, variant)
    kernel, diag = product_kernel(qf, af, variant)
    block, to_c, from_c = close_natural_block(kernel, diag, g.weights, tau, g.epsilon)
    eps = g.epsilon
    nx, nz = qf.space.size, af.space.size
    n = nx * nz
    top = nx - 1
    w = g.weights

    R = np.zeros((n + nx, n + nx), dtype=DTYPE)
    R[:n, :n] = block
    for i in range(nx):
        rows = slice(i * nz, (i + 1) * nz)
        R[rows, n + i] = to_c[rows]
        R[n + i, rows] = from_c[rows]
    cc = np.zeros((nx + 1, nx + 1), dtype=DTYPE)  # cc[i, j] = R(c_j | c_i), padded

    def stratum_sums(j):
        rows = slice(j * nz, (j + 1) * nz)
        return _asc_sum(to_c[rows] * w[rows]), _asc_sum(from_c[rows])

    levels = []
    for j in range(top, 0, -1):
        flux_in, rate_out = stratum_sums(j)
        v_r = flux_in + eps * cc[j + 1, j]
        v_c = rate_out * eps + cc[j, j + 1] * eps
        v_m = max(v_r, v_c)
        cc[j, j] = -v_m / eps
        if abs(v_r - v_c) <= CLAMP_RTOL * v_m:
            direction = "none"
        elif v_r > v_c:
            cc[j, j - 1] = (v_r - v_c) / eps
            direction = "down"
        else:
            cc[j - 1, j] = (v_c - v_r) / eps
            direction = "up"
        _check_balance(
            rate_out + cc[j, j] + cc[j, j - 1] + cc[j, j + 1],
            rate_out + abs(cc[j, j]) + cc[j, j - 1] + cc[j, j + 1],
            f"row balance at c_{j}",
        )
        _check_balance(
            flux_in + eps * (cc[j, j] + cc[j - 1, j] + cc[j + 1, j]),
            flux_in + eps * (abs(cc[j, j]) + cc[j - 1, j] + cc[j + 1, j]),
            f"weighted column balance at c_{j}",
        )
        levels.append(VLevel(j, v_r, v_c, v_m, direction))

    flux_in, rate_out = stratum_sums(0)
    cc[0, 0] = -(rate_out + cc[0, 1])
    v_r = flux_in + eps * cc[1, 0]
    v_c = rate_out * eps + cc[0, 1] * eps
    _check_balance(
        flux_in + eps * (cc[0, 0] + cc[1, 0]),
        flux_in + eps * (abs(cc[0, 0]) + cc[1, 0]),
        "weighted column balance at c_0",
    )
    levels.append(VLevel(0, v_r, v_c, max(v_r, v_c), "none"))

    R[n:, n:] = cc[:nx, :nx]
    labels = g.natural.space.labels + tuple(f"c_{x}" for x in qf.space.labels)
    space = StateSpace(labels)
    return MultiChain(space, RateMatrix(space, R), g, tau, tuple(reversed(levels)), variant, qf, af)


def extract_v_profile(chain: MultiChain) -> list[tuple]:
    """``(j, V_r, V_c, V_m)`` for ``j = 0..N`` in ascending order."""
    return [(v.j, v.v_r, v.v_c, v.v_m) for v in chain.V]
