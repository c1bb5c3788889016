"""Combined chain on ``(X x Z) + {c}`` with a prescribed product-form stationary measure.

Natural-space rates are products of the two marginal rates,

    R(x', z' | x, z) = |A(z' | z) Q(x' | x)|          if (x', z') != (x, z)
    R(x, z | x, z)   = -tau(x, z) |A(z | z) Q(x | x)|

and a speed-up factor ``tau`` on the diagonal is chosen large enough that both
the row sum and the ``g``-weighted column sum of every natural state are
nonpositive.  The two deficits are then closed through the transitional state
``c``, which carries stationary mass ``epsilon``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (
    DTYPE,
    GeneratorFamily,
    Measure,
    RateMatrix,
    StateSpace,
    as_array,
)
from .errors import (
    IndexMismatch,
    NegativeRate,
    NonPositiveMeasure,
    RecursionImbalance,
    WrongMode,
    ZeroDiagonal,
)

# closing rates within this fraction of the natural flux are rounding noise
CLAMP_RTOL = 1e-12
BALANCE_RTOL = 1e-9


class Variant(enum.Enum):
    """Which marginal index enters the off-diagonal product.

    ``DEFAULT`` uses ``A^x(z'|z) Q^z(x'|x)`` (indices of the source state);
    ``A_PRIME`` swaps in ``A^{x'}``, ``Q_PRIME`` swaps in ``Q^{z'}``, ``BOTH``
    does both.  Every variant yields a valid construction.
    """

    DEFAULT = "default"
    A_PRIME = "a_prime"
    Q_PRIME = "q_prime"
    BOTH = "both"


class TauMode(enum.Enum):
    MINIMAL = "minimal"
    UNIFORM = "uniform"


class Label(enum.Enum):
    JUMPS_TO_C = "ToC"
    RECEIVES_FROM_C = "FromC"
    NEUTRAL = "Neutral"


def natural_space(qf: GeneratorFamily, af: GeneratorFamily) -> StateSpace:
    """Product space with state ``(x, z)`` at flat index ``x * |Z| + z``."""
    return StateSpace(tuple((x, z) for x in qf.space.labels for z in af.space.labels))


def check_transposed(qf: GeneratorFamily, af: GeneratorFamily) -> None:
    """``qf`` must be indexed by ``af``'s state space and vice versa."""
    pairs = ((qf.index_space, af.space, "Q index", "A states"), (af.index_space, qf.space, "A index", "Q states"))
    for idx, sp, a, b in pairs:
        if idx.size != sp.size:
            raise IndexMismatch(f"{a} has {idx.size} states but {b} has {sp.size}")
        if not (idx.is_positional or sp.is_positional) and idx.labels != sp.labels:
            raise IndexMismatch(f"{a} labels differ from {b} labels")


def product_kernel(qf: GeneratorFamily, af: GeneratorFamily, variant: Variant = Variant.DEFAULT):
    """Absolute rate products over the natural space.

    Returns ``(off, diag)`` where ``off[s, t]`` is the off-diagonal product for
    the jump ``s -> t`` (zero on the diagonal) and ``diag[s]`` is the positive
    product of the two marginal diagonals at ``s``.
    """
    check_transposed(qf, af)
    A = af.rates  # A[x, z, z'] = A^x(z'|z)
    Q = qf.rates  # Q[z, x, x'] = Q^z(x'|x)
    nx, nz = A.shape[0], A.shape[1]
    if variant in (Variant.A_PRIME, Variant.BOTH):
        a_term = np.transpose(A, (1, 0, 2))[None, :, :, :]  # A^{x'}(z'|z)
    else:
        a_term = A[:, :, None, :]
    if variant in (Variant.Q_PRIME, Variant.BOTH):
        q_term = np.transpose(Q, (1, 2, 0))[:, None, :, :]  # Q^{z'}(x'|x)
    else:
        q_term = np.transpose(Q, (1, 0, 2))[:, :, :, None]
    n = nx * nz
    kernel = np.abs(a_term * q_term).reshape(n, n)
    diag = np.diagonal(kernel).copy()
    np.fill_diagonal(kernel, 0)
    if np.any(diag == 0):
        s = int(np.flatnonzero(diag == 0)[0])
        raise ZeroDiagonal(
            f"marginal diagonal vanishes at natural state {(qf.space.labels[s // nz], af.space.labels[s % nz])}"
        )
    if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(diag))):
        raise OverflowError("rate products are not finite")
    return kernel, diag


@dataclass(frozen=True, eq=False)
class ProductMeasure:
    """Target stationary measure: ``m^z(x) nu^x(z)`` on the natural space, ``epsilon`` on each c."""

    natural: Measure
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.natural.is_positive:
            raise NonPositiveMeasure("product measure must be strictly positive on the natural space")
        object.__setattr__(self, "epsilon", DTYPE(self.epsilon))

    @property
    def weights(self) -> np.ndarray:
        return self.natural.weights

    def augmented(self, c_count: int = 1) -> np.ndarray:
        return np.concatenate([self.natural.weights, np.full(c_count, self.epsilon, dtype=DTYPE)])

    def as_measure(self, space: StateSpace) -> Measure:
        return Measure(space, self.augmented(space.size - self.natural.space.size))


def build_product_measure(qf: GeneratorFamily, af: GeneratorFamily, epsilon) -> ProductMeasure:
    check_transposed(qf, af)
    # qf.weights[z, x] = m^z(x), af.weights[x, z] = nu^x(z)
    g = qf.weights.T * af.weights
    return ProductMeasure(Measure(natural_space(qf, af), g.reshape(-1)), epsilon)


@dataclass(frozen=True, eq=False)
class TauField:
    """Per-state diagonal speed-up.

    ``in_sums`` and ``out_sums`` are the two ratio sums whose maximum is the
    minimal admissible value; they are kept so the state partition can be
    read off without recomputation.
    """

    values: np.ndarray
    mode: TauMode
    in_sums: np.ndarray | None = None
    out_sums: np.ndarray | None = None

    def __post_init__(self):
        values = as_array(self.values, ndim=1)
        if not np.all(values > 0):
            raise ValueError("tau values must be positive")
        object.__setattr__(self, "values", values)
        if self.mode is TauMode.UNIFORM and np.any(values != values[0]):
            raise ValueError("uniform tau must be constant")
        for name in ("in_sums", "out_sums"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, as_array(v, ndim=1))


def _ratio_sums(qf, af, g: ProductMeasure, variant: Variant):
    kernel, diag = product_kernel(qf, af, variant)
    w = g.weights
    if w.shape[0] != diag.shape[0]:
        raise IndexMismatch("product measure does not live on the natural space of the families")
    s_out = kernel.sum(axis=1) / diag
    s_in = (w @ kernel) / (diag * w)
    if not (np.all(np.isfinite(s_in)) and np.all(np.isfinite(s_out))):
        raise OverflowError("tau ratio sums are not finite")
    return s_in, s_out


def compute_tau_minimal(qf, af, g: ProductMeasure, variant: Variant = Variant.DEFAULT) -> TauField:
    """Smallest per-state tau closing both deficits with nonnegative c-rates.

    ``tau(s) = max(S_in(s), S_out(s))`` where ``S_in`` is the ``g``-weighted
    inflow into ``s`` and ``S_out`` the outflow rate, both divided by the
    diagonal product (and ``g(s)`` for the inflow).
    """
    s_in, s_out = _ratio_sums(qf, af, g, variant)
    return TauField(np.maximum(s_in, s_out), TauMode.MINIMAL, s_in, s_out)


def compute_tau_uniform(qf, af, g: ProductMeasure, variant: Variant = Variant.DEFAULT) -> TauField:
    s_in, s_out = _ratio_sums(qf, af, g, variant)
    value = np.maximum(s_in, s_out).max()
    return TauField(np.full(s_in.shape, value, dtype=DTYPE), TauMode.UNIFORM, s_in, s_out)


def close_natural_block(kernel, diag, weights, tau: TauField, epsilon):
    """Natural block with its diagonal, plus the rates to and from the transitional state.

    Returns ``(block, to_c, from_c)`` with ``to_c[s] = R(c|s)`` and
    ``from_c[s] = R(s|c)``; both are residuals making the row sum and the
    ``g``-weighted column sum of ``s`` vanish.
    """
    w = weights
    outflow = tau.values * diag
    block = kernel.copy()
    block[np.diag_indices_from(block)] = -outflow
    to_c = outflow - kernel.sum(axis=1)
    col_flux = outflow * w
    from_c_flux = col_flux - w @ kernel
    to_c[np.abs(to_c) <= CLAMP_RTOL * outflow] = 0
    from_c_flux[np.abs(from_c_flux) <= CLAMP_RTOL * col_flux] = 0
    if np.any(to_c < 0) or np.any(from_c_flux < 0):
        bad = np.flatnonzero((to_c < 0) | (from_c_flux < 0))
        raise NegativeRate(
            f"tau too small at {bad.size} natural state(s), first index {int(bad[0])}"
        )
    from_c = from_c_flux / DTYPE(epsilon)
    if not (np.all(np.isfinite(from_c)) and np.all(np.isfinite(block))):
        raise OverflowError("closing rates are not finite")
    return block, to_c, from_c


@dataclass(frozen=True, eq=False)
class CombinedChain:
    space: StateSpace
    R: RateMatrix
    g: ProductMeasure
    tau: TauField
    variant: Variant = Variant.DEFAULT
    qf: GeneratorFamily | None = None
    af: GeneratorFamily | None = None

    c_count = 1

    @property
    def natural_size(self) -> int:
        return self.g.natural.space.size

    @property
    def c_indices(self) -> list[int]:
        return list(range(self.natural_size, self.space.size))

    @property
    def c_of_natural(self) -> np.ndarray:
        """Index of the transitional state each natural state communicates with."""
        return np.full(self.natural_size, self.natural_size)

    @property
    def stationary(self) -> Measure:
        return self.g.as_measure(self.space)


def assemble_single(qf, af, g: ProductMeasure, tau: TauField, variant: Variant = Variant.DEFAULT) -> CombinedChain:
    """Assemble the generator on ``(X x Z) + {c}``.

    The rate back into the natural space from ``c`` closes the ``g``-weighted
    column balance and ``R(c|c)`` closes the column balance of ``c``.  The row
    sum of ``c`` then vanishes as a consequence; it is checked, not imposed.
    """
    kernel, diag = product_kernel(qf, af, variant)
    n = diag.shape[0]
    if tau.values.shape[0] != n:
        raise IndexMismatch("tau field does not match the natural space")
    block, to_c, from_c = close_natural_block(kernel, diag, g.weights, tau, g.epsilon)
    eps = g.epsilon
    R = np.zeros((n + 1, n + 1), dtype=DTYPE)
    R[:n, :n] = block
    R[:n, n] = to_c
    R[n, :n] = from_c
    R[n, n] = -(to_c @ g.weights) / eps
    out_of_c = from_c.sum()
    if abs(out_of_c + R[n, n]) > BALANCE_RTOL * max(abs(R[n, n]), out_of_c):
        raise RecursionImbalance(
            f"row of c does not close: out-rate {out_of_c} vs diagonal {R[n, n]}"
        )
    space = StateSpace(g.natural.space.labels + ("c",))
    return CombinedChain(space, RateMatrix(space, R), g, tau, variant, qf, af)


@dataclass(frozen=True)
class StateClassification:
    space: StateSpace
    labels: tuple

    def __getitem__(self, state) -> Label:
        return self.labels[self.space.index(state)]

    def counts(self) -> dict:
        return {lab: sum(1 for x in self.labels if x is lab) for lab in Label}


def classify_states(chain) -> StateClassification:
    """Partition natural states by how they communicate with their transitional state.

    Works for single- and multi-c chains built with minimal tau; a uniform tau
    does not induce the partition and raises :class:`WrongMode`.
    """
    if chain.tau.mode is not TauMode.MINIMAL:
        raise WrongMode("state partition is only defined for minimal tau")
    n = chain.natural_size
    R = chain.R.entries
    cs = chain.c_of_natural
    idx = np.arange(n)
    to_c = R[idx, cs]
    from_c = R[cs, idx]
    if np.any((to_c > 0) & (from_c > 0)):
        raise RecursionImbalance("minimal tau produced a state exchanging with c both ways")
    labels = tuple(
        Label.JUMPS_TO_C if a > 0 else Label.RECEIVES_FROM_C if b > 0 else Label.NEUTRAL
        for a, b in zip(to_c, from_c)
    )
    return StateClassification(chain.g.natural.space, labels)
