"""Finite-state generators, measures and the checks that tie them together.

All arrays are stored as ``numpy.longdouble``.  The queueing example needs
stationary weights spanning thousands of decades (``M**(-2j)`` for the idle
server), which is far outside the double-precision exponent range.

Matrix convention: ``entries[s, t]`` is the jump rate from ``s`` to ``t``
(rows are sources), so a stationary measure is a left null vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveMeasure,
    NonPositiveScale,
    NotStationary,
    NumericalFailure,
    Reducible,
)

DTYPE = np.longdouble

ROW_SUM_RTOL = 1e-9
STATIONARY_RTOL = 1e-9
NORMALIZATION_RTOL = 1e-12
SOLVE_RESIDUAL_RTOL = 1e-10


def as_array(values, ndim=None) -> np.ndarray:
    arr = np.array(values, dtype=DTYPE)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Ordered collection of unique, opaque state labels."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ValueError("a state space needs at least one state")
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be unique")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, n: int) -> "StateSpace":
        return cls(tuple(range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, StateSpace) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    @cached_property
    def _positions(self) -> dict:
        return {label: k for k, label in enumerate(self.labels)}

    def index(self, label) -> int:
        return self._positions[label]

    @property
    def is_positional(self) -> bool:
        return self.labels == tuple(range(self.size))


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Square intensity matrix over ``space``; ``entries[s, t]`` is the rate s -> t.

    Construction only checks the shape; use :func:`validate_dissipative` for
    the sign and row-sum conditions.
    """

    space: StateSpace
    entries: np.ndarray

    def __post_init__(self):
        arr = as_array(self.entries)
        n = self.space.size
        if arr.shape != (n, n):
            raise DimensionMismatch(
                f"rate matrix has shape {arr.shape}, state space has {n} states"
            )
        object.__setattr__(self, "entries", arr)

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diagonal(self.entries)

    def scaled(self, r) -> "RateMatrix":
        return RateMatrix(self.space, self.entries * DTYPE(r))


@dataclass(frozen=True, eq=False)
class Measure:
    space: StateSpace
    weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = as_array(self.weights, ndim=1)
        if w.shape[0] != self.space.size:
            raise DimensionMismatch(
                f"measure has {w.shape[0]} weights, state space has {self.space.size} states"
            )
        if not np.all(np.isfinite(w)):
            raise OverflowError("measure has non-finite weights")
        if np.any(w < 0):
            raise NonPositiveMeasure("measure weights must be nonnegative")
        if self.normalized and abs(w.sum() - 1) > NORMALIZATION_RTOL:
            raise ValueError(f"measure flagged normalized sums to {w.sum()}")
        object.__setattr__(self, "weights", w)

    @property
    def total(self):
        return self.weights.sum()

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.weights > 0))

    def normalize(self) -> "Measure":
        total = self.total
        if not total > 0:
            raise NonPositiveMeasure("cannot normalize a measure of zero mass")
        return Measure(self.space, self.weights / total, normalized=True)

    def __getitem__(self, label):
        return self.weights[self.space.index(label)]


@dataclass(frozen=True)
class Violation:
    kind: str
    index: int
    value: float
    bound: float

    def __str__(self):
        return f"{self.kind} at index {self.index}: {self.value:.6g} (bound {self.bound:.6g})"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a check; an empty ``violations`` tuple means the check passed."""

    violations: tuple = ()
    metrics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rows(self, kind: str | None = None) -> list[int]:
        return [v.index for v in self.violations if kind is None or v.kind == kind]

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations)


def validate_dissipative(m: RateMatrix, rel_tol: float = ROW_SUM_RTOL) -> ValidationReport:
    """Check signs, finiteness and zero row sums of a rate matrix.

    A row passes the row-sum test when ``|sum| <= rel_tol * max|entry|`` over
    that row.
    """
    a = m.entries
    n = m.size
    if a.shape != (n, n):
        raise DimensionMismatch(f"entries shape {a.shape} != ({n}, {n})")
    out = []
    finite = np.isfinite(a)
    for s in np.flatnonzero(~finite.all(axis=1)):
        out.append(Violation("non_finite", int(s), float("nan"), 0.0))
    off = a.copy()
    np.fill_diagonal(off, 0)
    for s, t in zip(*np.nonzero(off < 0)):
        out.append(Violation("negative_off_diagonal", int(s), float(a[s, t]), 0.0))
    diag = np.diagonal(a)
    for s in np.flatnonzero(diag > 0):
        out.append(Violation("positive_diagonal", int(s), float(diag[s]), 0.0))
    with np.errstate(invalid="ignore"):
        sums = a.sum(axis=1)
        tol = rel_tol * np.abs(a).max(axis=1)
    bad = finite.all(axis=1) & (np.abs(sums) > tol)
    for s in np.flatnonzero(bad):
        out.append(Violation("row_sum", int(s), float(sums[s]), float(tol[s])))
    worst = 0.0
    if n and finite.all():
        scale = np.where(tol > 0, tol / rel_tol, 1)
        worst = float(np.max(np.abs(sums) / scale))
    return ValidationReport(tuple(out), {"max_relative_row_sum": worst})


def verify_stationary(m: RateMatrix, mu: Measure, rel_tol: float = STATIONARY_RTOL) -> ValidationReport:
    """Check global balance ``sum_s mu(s) m[s, t] = 0`` column by column.

    Column ``t`` passes when the net flux is at most ``rel_tol`` times the
    gross flux ``sum_s |m[s, t]| mu(s)``.
    """
    if mu.space.size != m.size:
        raise DimensionMismatch(f"measure over {mu.space.size} states, matrix over {m.size}")
    if not mu.is_positive:
        raise NonPositiveMeasure("stationarity is only checked against strictly positive measures")
    w = mu.weights
    net = w @ m.entries
    gross = w @ np.abs(m.entries)
    bound = rel_tol * gross
    bad = np.abs(net) > bound
    out = tuple(
        Violation("balance", int(t), float(net[t]), float(bound[t])) for t in np.flatnonzero(bad)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(gross > 0, np.abs(net) / gross, np.abs(net))
    metrics = {
        "max_relative_residual": float(rel.max()),
        "residual_inf": float(np.abs(net).max()),
        # scale used by the global conditions: max_s sum_t |R(t|s)| g(s)
        "flux_scale": float((np.abs(m.entries).sum(axis=1) * w).max()),
    }
    return ValidationReport(out, metrics)


def solve_stationary(m: RateMatrix) -> Measure:
    """Stationary distribution of an irreducible generator by a direct solve.

    Each row is first divided by its exit rate, which turns the generator into
    ``P - I`` for the embedded jump chain.  That system is well scaled even when
    rates span hundreds of decades; its solution ``pi`` relates to the answer
    through ``mu = pi / q``.  One balance equation is replaced by the
    normalization constraint.
    """
    a = m.entries
    n = m.size
    if n == 1:
        return Measure(m.space, [1], normalized=True)
    q = -np.diagonal(a)
    scale = np.where(q > 0, q, 1)
    scaled = np.asarray(a / scale[:, None], dtype=np.float64)
    if not np.all(np.isfinite(scaled)):
        raise NumericalFailure("generator rows are not finite after scaling")
    system = scaled.T.copy()
    rank = np.linalg.matrix_rank(system)
    if rank < n - 1:
        raise Reducible(f"balance equations have a null space of dimension {n - rank}")
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    if not np.all(np.isfinite(pi)) or pi.min() < -1e-9 * np.abs(pi).max():
        raise NumericalFailure("direct solve produced an invalid probability vector")
    pi = np.clip(pi, 0, None).astype(DTYPE)
    mu = pi / scale
    mu = mu / mu.sum()
    residual = np.abs(mu @ a).max()
    if residual > SOLVE_RESIDUAL_RTOL * np.abs(a).max():
        raise NumericalFailure(f"stationary residual {float(residual):.3g} above tolerance")
    return Measure(m.space, mu, normalized=True)


def total_variation(p, q) -> float:
    """Total-variation distance between two weight vectors after normalizing each."""
    p = np.asarray(p, dtype=DTYPE)
    q = np.asarray(q, dtype=DTYPE)
    if p.shape != q.shape:
        raise DimensionMismatch(f"cannot compare measures of shapes {p.shape} and {q.shape}")
    return float(0.5 * np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass(frozen=True, eq=False)
class GeneratorFamily:
    """Generators over a common space, one per state of ``index_space``.

    Every member measure is normalized and checked against its generator at
    construction; a mismatch raises :class:`NotStationary`.
    """

    index_space: StateSpace
    members: tuple
    name: str = "family"

    def __post_init__(self):
        members = tuple((rm, mu) for rm, mu in self.members)
        if len(members) != self.index_space.size:
            raise DimensionMismatch(
                f"{len(members)} members for an index space of {self.index_space.size} states"
            )
        space = members[0][0].space
        checked = []
        for label, (rm, mu) in zip(self.index_space.labels, members):
            if rm.space != space or mu.space != space:
                raise DimensionMismatch(f"member {label!r} does not share the common state space")
            report = verify_stationary(rm, mu)
            if not report.ok:
                raise NotStationary(f"member {label!r}: {report.summary()}")
            checked.append((rm, mu if mu.normalized else mu.normalize()))
        object.__setattr__(self, "members", tuple(checked))

    @classmethod
    def from_matrices(
        cls,
        index_space: StateSpace,
        space: StateSpace,
        matrices: Iterable[Any],
        measures: Sequence[Any] | None = None,
        name: str = "family",
    ) -> "GeneratorFamily":
        """Build a family, solving for any measure given as ``None``."""
        matrices = [RateMatrix(space, a) for a in matrices]
        if measures is None:
            measures = [None] * len(matrices)
        members = []
        for rm, w in zip(matrices, measures):
            mu = solve_stationary(rm) if w is None else Measure(space, w)
            members.append((rm, mu))
        return cls(index_space, tuple(members), name)

    @property
    def space(self) -> StateSpace:
        return self.members[0][0].space

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @cached_property
    def rates(self) -> np.ndarray:
        """Stacked entries, shape ``(index_size, size, size)``."""
        arr = np.stack([rm.entries for rm, _ in self.members])
        arr.setflags(write=False)
        return arr

    @cached_property
    def weights(self) -> np.ndarray:
        """Stacked normalized measures, shape ``(index_size, size)``."""
        arr = np.stack([mu.weights for _, mu in self.members])
        arr.setflags(write=False)
        return arr


def scale_family(f: GeneratorFamily, r) -> GeneratorFamily:
    """Multiply every member generator by ``r > 0``; measures are unchanged."""
    if not r > 0:
        raise NonPositiveScale(f"scale factor must be positive, got {r}")
    members = tuple((rm.scaled(r), mu) for rm, mu in f.members)
    return GeneratorFamily(f.index_space, members, f.name)
