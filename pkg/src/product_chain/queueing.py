"""Job queue in a server-efficiency environment.

Basic states ``X = {0..N}`` count queued jobs: arrivals at rate 1, service at
rate ``mu``.  The environment ``Z = {mu_0..mu_M}`` is a grid of server
efficiencies on ``[1/2, 3/2]``.  With ``i >= 1`` jobs waiting the server drifts
up the grid at rate ``i`` (and down at rate 1); an idle server drifts down,
moving up only at rate ``1/M**2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import DTYPE, GeneratorFamily, Measure, RateMatrix, StateSpace
from .multi import MultiChain, assemble_multi
from .single import (
    CombinedChain,
    Variant,
    assemble_single,
    build_product_measure,
    compute_tau_minimal,
)

MAX_N = 6
MAX_M = 500
# decimal exponent range of the longdouble weights, with headroom for rates
_EXPONENT_BUDGET = 4800


class Mode(enum.Enum):
    SINGLE = "single"
    MULTI = "multi"


@dataclass(frozen=True)
class QueueingParams:
    N: int
    M: int

    def __post_init__(self):
        if int(self.N) != self.N or int(self.M) != self.M:
            raise ValueError("N and M must be integers")
        if self.N < 2 or self.M < 2:
            raise ValueError(f"need N >= 2 and M >= 2, got N={self.N}, M={self.M}")
        if self.N > MAX_N or self.M > MAX_M:
            raise ValueError(
                f"N={self.N}, M={self.M} outside the supported envelope N <= {MAX_N}, M <= {MAX_M}"
            )

    @property
    def mus(self) -> np.ndarray:
        M = DTYPE(self.M)
        return DTYPE(1) / 2 + np.arange(self.M + 1, dtype=DTYPE) / M

    @property
    def basic_space(self) -> StateSpace:
        return StateSpace(tuple(range(self.N + 1)))

    @property
    def env_space(self) -> StateSpace:
        return StateSpace(tuple(f"mu_{j}" for j in range(self.M + 1)))


def _birth_death(n: int, up, down) -> np.ndarray:
    a = np.zeros((n, n), dtype=DTYPE)
    k = np.arange(n - 1)
    a[k, k + 1] = up
    a[k + 1, k] = down
    a[np.diag_indices(n)] = -a.sum(axis=1)
    return a


def _geometric(ratio, n: int) -> np.ndarray:
    """Normalized ``ratio**k`` for ``k = 0..n-1`` without forming huge powers."""
    ratio = DTYPE(ratio)
    k = np.arange(n, dtype=DTYPE)
    w = ratio ** (k - (n - 1)) if ratio > 1 else ratio**k
    return w / w.sum()


def _check_range(p: QueueingParams) -> None:
    # nu^N spans N**M, nu^0 spans M**(2M)
    span = max(p.M * math.log10(p.N), 2 * p.M * math.log10(p.M))
    if span > _EXPONENT_BUDGET:
        raise OverflowError(
            f"stationary weights span 1e{span:.0f} for N={p.N}, M={p.M}; "
            f"representable only while max(M log10 N, 2M log10 M) <= {_EXPONENT_BUDGET}"
        )


def build_Q_family(p: QueueingParams) -> GeneratorFamily:
    """Queue generators ``Q^mu`` with ``m^mu(i)`` proportional to ``mu**(-i)``."""
    X, Z = p.basic_space, p.env_space
    members = []
    for mu in p.mus:
        members.append(
            (RateMatrix(X, _birth_death(X.size, 1, mu)), Measure(X, _geometric(1 / mu, X.size), normalized=True))
        )
    return GeneratorFamily(Z, tuple(members), name="Q")


def build_A_family(p: QueueingParams) -> GeneratorFamily:
    """Environment generators ``A^i``; ``nu^i(mu_j)`` proportional to ``i**j`` (``M**(-2j)`` for ``i = 0``)."""
    _check_range(p)
    X, Z = p.basic_space, p.env_space
    members = []
    for i in range(p.N + 1):
        up = DTYPE(i) if i else 1 / DTYPE(p.M) ** 2
        weights = _geometric(up, Z.size)
        if not (np.all(np.isfinite(weights)) and np.all(weights > 0)):
            raise OverflowError(f"nu^{i} not representable for M={p.M}")
        members.append((RateMatrix(Z, _birth_death(Z.size, up, 1)), Measure(Z, weights, normalized=True)))
    return GeneratorFamily(X, tuple(members), name="A")


def build_queueing_instance(
    p: QueueingParams, epsilon, mode=Mode.SINGLE, variant: Variant = Variant.DEFAULT
) -> CombinedChain | MultiChain:
    qf, af = build_Q_family(p), build_A_family(p)
    g = build_product_measure(qf, af, epsilon)
    if Mode(mode) is Mode.MULTI:
        return assemble_multi(qf, af, g, variant)
    tau = compute_tau_minimal(qf, af, g, variant)
    return assemble_single(qf, af, g, tau, variant)
