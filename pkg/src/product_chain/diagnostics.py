"""Numerical checks on constructed chains and on the queueing example.

Everything here evaluates the exact finite-M quantities.  Statements that
only hold "for M large enough" are reported as fractions or as trends over a
sweep rather than asserted.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DTYPE, ValidationReport, Violation
from .errors import NumericalFailure, WrongMode
from .queueing import Mode, QueueingParams, build_A_family, build_Q_family, build_queueing_instance
from .single import CLAMP_RTOL, Label, TauMode, Variant, build_product_measure, classify_states

THREADS_ENV = "PRODUCT_CHAIN_THREADS"


@dataclass(frozen=True)
class JumpCriterion:
    label: Label
    lhs: float  # g-weighted inflow / (D g)
    rhs: float  # outflow rate / D


def _compare(lhs, rhs) -> Label:
    scale = max(lhs, rhs)
    if lhs - rhs > CLAMP_RTOL * scale:
        return Label.JUMPS_TO_C
    if rhs - lhs > CLAMP_RTOL * scale:
        return Label.RECEIVES_FROM_C
    return Label.NEUTRAL


def jump_criterion(chain, state) -> JumpCriterion:
    """Evaluate the jump-to-c inequality at natural state ``state = (i, j)`` (indices).

    Computed directly from the two generator families, independently of the
    assembled matrix: the ``g``-weighted inflow into ``(i, j)`` over ``g(i, j)``
    is compared with the outflow rate, both relative to the diagonal product.
    """
    if chain.tau.mode is not TauMode.MINIMAL:
        raise WrongMode("jump criterion needs a minimal-tau chain")
    if chain.qf is None or chain.af is None:
        raise ValueError("chain does not carry its generator families")
    A, Q = chain.af.rates, chain.qf.rates  # A[x, z, z'], Q[z, x, x']
    nx, nz = A.shape[0], A.shape[1]
    i, j = state
    a_prime = chain.variant in (Variant.A_PRIME, Variant.BOTH)
    q_prime = chain.variant in (Variant.Q_PRIME, Variant.BOTH)
    g = chain.g.weights.reshape(nx, nz)

    # sources (x, z) -> (i, j)
    a_in = A[i, :, j][None, :] if a_prime else A[:, :, j]
    q_in = Q[j, :, i][:, None] if q_prime else Q[:, :, i].T
    inflow = np.abs(a_in * q_in) * g
    # (i, j) -> targets (x', z')
    a_out = A[:, j, :] if a_prime else A[i, j, :][None, :]
    q_out = Q[:, i, :].T if q_prime else Q[j, i, :][:, None]
    outflow = np.abs(a_out * q_out) * np.ones((nx, nz), dtype=DTYPE)

    d = abs(A[i, j, j] * Q[j, i, i])
    inflow[i, j] = 0
    outflow[i, j] = 0
    lhs = inflow.sum() / (d * g[i, j])
    rhs = outflow.sum() / d
    return JumpCriterion(_compare(lhs, rhs), lhs, rhs)


def verify_recurrences(p: QueueingParams, tol: float) -> ValidationReport:
    """Compare the product weights of the queueing example with their recurrences.

    Relations (deviation = exact ratio / predicted ratio - 1):

    ``j_up``    g(i, mu_{j+1}) / g(i, mu_j) vs i,  for i >= 2, j < M
    ``j_down``  g(i, mu_j) / g(i, mu_{j+1}) vs 1/i, same range
    ``i_up``    g(i+1, mu_j) / g(i, mu_j) for 2 <= i <= N-1
    ``i_down``  g(i-1, mu_j) / g(i, mu_j) for 3 <= i <= N

    The i-direction predictions are ``i**(M+2-j) / ((i+1)**(M+1-j) (i-1) mu_j)``
    and ``mu_j (i-2) i**(M+1-j) / (i-1)**(M+2-j)``.
    """
    qf, af = build_Q_family(p), build_A_family(p)
    g = build_product_measure(qf, af, 1).weights.reshape(p.N + 1, p.M + 1)
    logg = np.log(g)
    mu = p.mus
    M = p.M
    j = np.arange(M + 1, dtype=DTYPE)
    devs = {}

    rows = np.arange(2, p.N + 1)
    if rows.size:
        log_pred = np.log(rows.astype(DTYPE))[:, None]
        up = np.expm1(logg[2:, 1:] - logg[2:, :-1] - log_pred)
        down = np.expm1(logg[2:, :-1] - logg[2:, 1:] + log_pred)
        devs["j_up"] = (up, 2)
        devs["j_down"] = (down, 2)
    if p.N >= 3:
        i = np.arange(2, p.N, dtype=DTYPE)[:, None]
        pred = (M + 2 - j) * np.log(i) - (M + 1 - j) * np.log(i + 1) - np.log(i - 1) - np.log(mu)
        devs["i_up"] = (np.expm1(logg[3:, :] - logg[2:-1, :] - pred), 2)
        i = np.arange(3, p.N + 1, dtype=DTYPE)[:, None]
        pred = np.log(mu) + np.log(i - 2) + (M + 1 - j) * np.log(i) - (M + 2 - j) * np.log(i - 1)
        devs["i_down"] = (np.expm1(logg[2:-1, :] - logg[3:, :] - pred), 3)

    violations, metrics = [], {}
    for name, (dev, i0) in devs.items():
        a = np.abs(dev)
        r, c = np.unravel_index(int(np.argmax(a)), a.shape)
        metrics[name] = float(a[r, c])
        metrics[name + "_at"] = (int(r + i0), int(c))
        for r, c in zip(*np.nonzero(a > tol)):
            violations.append(Violation(name, (int(r + i0), int(c)), float(a[r, c]), tol))
    return ValidationReport(tuple(violations), metrics)


@dataclass(frozen=True)
class PairRecord:
    hi: int
    lo: int
    rate_up: float  # R(c_hi | c_lo)
    rate_down: float  # R(c_lo | c_hi)
    diag_hi: float
    diag_lo: float
    ratio: float
    ratio_scaled: float  # ratio * M**(1/9)


@dataclass(frozen=True)
class SweepPoint:
    N: int
    M: int
    epsilon: float
    pairs: tuple
    census: dict  # stratum i -> {Label: count}
    tau_min: float
    tau_max: float
    v_profile: tuple


@dataclass(frozen=True)
class SweepResult:
    N: int
    epsilon: float
    variant: Variant
    points: tuple
    pair_pass: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.pair_pass.values())

    def ratios(self, pair) -> list[float]:
        return [next(r.ratio for r in pt.pairs if (r.hi, r.lo) == pair) for pt in self.points]


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _sweep_point(N, M, epsilon, variant) -> SweepPoint:
    chain = build_queueing_instance(QueueingParams(N, M), epsilon, Mode.MULTI, variant)
    pairs = []
    for hi in range(N, 0, -1):
        lo = hi - 1
        up, down = chain.c_rate(lo, hi), chain.c_rate(hi, lo)
        d_hi, d_lo = chain.c_rate(hi, hi), chain.c_rate(lo, lo)
        denom = min(abs(d_hi), abs(d_lo))
        ratio = max(up, down) / denom if denom > 0 else DTYPE(np.inf)
        if not np.isfinite(ratio) or ratio < 0:
            raise NumericalFailure(f"ratio for pair (c_{hi}, c_{lo}) at M={M} is {float(ratio)}")
        pairs.append(
            PairRecord(hi, lo, up, down, d_hi, d_lo, ratio, ratio * DTYPE(M) ** (DTYPE(1) / 9))
        )
    labels = classify_states(chain).labels
    nz = M + 1
    census = {
        i: {lab: sum(1 for x in labels[i * nz : (i + 1) * nz] if x is lab) for lab in Label} for i in range(N + 1)
    }
    tau = chain.tau.values
    return SweepPoint(N, M, float(epsilon), tuple(pairs), census, tau.min(), tau.max(), chain.V)


def theorem_ratio_sweep(N: int, Ms, epsilon, variant: Variant = Variant.DEFAULT) -> SweepResult:
    """Inter-maintenance rate ratios of the multi-c queueing chain across ``Ms``.

    A pair passes when its ratio strictly decreases along ``Ms`` and the last
    value is at most half the first.
    """
    Ms = [int(m) for m in Ms]
    if not Ms:
        raise ValueError("need at least one M")
    if any(b <= a for a, b in zip(Ms, Ms[1:])):
        raise ValueError(f"Ms must be strictly ascending, got {Ms}")
    for M in Ms:
        QueueingParams(N, M)
    with ThreadPoolExecutor(max_workers=min(_thread_cap(), len(Ms))) as pool:
        points = list(pool.map(lambda M: _sweep_point(N, M, epsilon, variant), Ms))
    verdict = {}
    for hi in range(N, 0, -1):
        r = [next(p.ratio for p in pt.pairs if p.hi == hi) for pt in points]
        # a single point has nothing to compare against and passes
        verdict[(hi, hi - 1)] = len(r) == 1 or bool(all(b < a for a, b in zip(r, r[1:])) and r[-1] <= r[0] / 2)
    return SweepResult(N, float(epsilon), variant, tuple(points), verdict)


@dataclass(frozen=True)
class CensusRow:
    N: int
    M: int
    i: int
    j: int
    label: Label
    lhs: float
    rhs: float


@dataclass(frozen=True)
class Census:
    params: QueueingParams
    epsilon: float
    eps_prime: float
    rows: tuple
    toc_fraction: float  # over i >= 2, j <= eps_prime * M
    block_size: int
    origin_label: Label  # state (0, mu_0)
    idle_labels: tuple  # states (0, mu_j), j >= 1
    agrees_with_classification: bool

    @property
    def idle_all_toc(self) -> bool:
        return all(lab is Label.JUMPS_TO_C for lab in self.idle_labels)


def classification_census(p: QueueingParams, epsilon, eps_prime, variant: Variant = Variant.DEFAULT) -> Census:
    if not 0 <= eps_prime < 1:
        raise ValueError(f"eps_prime must lie in [0, 1), got {eps_prime}")
    chain = build_queueing_instance(p, epsilon, Mode.SINGLE, variant)
    labels = classify_states(chain).labels
    nz = p.M + 1
    rows, agree = [], True
    for s in range(chain.natural_size):
        i, j = divmod(s, nz)
        jc = jump_criterion(chain, (i, j))
        agree &= jc.label is labels[s]
        rows.append(CensusRow(p.N, p.M, i, j, jc.label, jc.lhs, jc.rhs))
    block = [r for r in rows if r.i >= 2 and r.j <= eps_prime * p.M]
    toc = sum(1 for r in block if r.label is Label.JUMPS_TO_C)
    return Census(
        p,
        float(epsilon),
        float(eps_prime),
        tuple(rows),
        toc / len(block) if block else 1.0,
        len(block),
        rows[0].label,
        tuple(r.label for r in rows[1:nz]),
        agree,
    )


def write_sweep_csv(result: SweepResult, path, fmt) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(
            ["N", "M", "epsilon", "pair_hi", "pair_lo", "rate_up", "rate_down", "diag_hi", "diag_lo", "ratio", "ratio_times_M19"]
        )
        for pt in result.points:
            for r in pt.pairs:
                out.writerow(
                    [pt.N, pt.M, fmt(pt.epsilon), r.hi, r.lo]
                    + [fmt(v) for v in (r.rate_up, r.rate_down, r.diag_hi, r.diag_lo, r.ratio, r.ratio_scaled)]
                )


def write_census_csv(rows, path, fmt) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["N", "M", "i", "j", "label", "lhs_eq19", "rhs_eq19"])
        for r in rows:
            out.writerow([r.N, r.M, r.i, r.j, r.label.value, fmt(r.lhs), fmt(r.rhs)])
