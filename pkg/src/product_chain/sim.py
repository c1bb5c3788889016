"""Exact jump simulation of a finite CTMC.

Randomness comes from numpy's Philox counter-based generator.  Replica ``r``
of seed ``s`` uses ``Philox(s).jumped(r)``, so replicas are independent
streams and any replica can be regenerated on its own.  Uniforms are drawn in
fixed-size blocks, holding-time uniforms first and successor uniforms second,
which fixes the stream layout for a given seed.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import Measure, RateMatrix, StateSpace, total_variation
from .errors import AbsorbingState, DimensionMismatch, NonFiniteRate

BURN_IN = 0.01
ALIAS_MIN_DEGREE = 9
_BLOCK = 1 << 16
_C_LABEL = re.compile(r"^c(_.*)?$")


@dataclass
class CStats:
    entries: int = 0
    departures: int = 0
    holding_time: float = 0.0
    successors: Counter = field(default_factory=Counter)
    predecessors: Counter = field(default_factory=Counter)

    @property
    def mean_holding(self) -> float:
        return self.holding_time / self.departures if self.departures else 0.0

    def merged(self, other: "CStats") -> "CStats":
        return CStats(
            self.entries + other.entries,
            self.departures + other.departures,
            self.holding_time + other.holding_time,
            self.successors + other.successors,
            self.predecessors + other.predecessors,
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accumulated statistics of one (or several merged) simulation runs.

    ``occupation`` holds total time per state after burn-in, unnormalized.
    ``jump_counts`` counts departures from each state after burn-in.
    """

    seed: int
    events: int
    occupation: Measure
    jump_counts: np.ndarray
    c_stats: dict
    burn_in: int = 0
    start: int = 0
    replicas: tuple = (0,)

    @property
    def space(self) -> StateSpace:
        return self.occupation.space

    @property
    def total_time(self) -> float:
        return float(self.occupation.total)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            (self.seed, self.events, self.burn_in, self.start, self.replicas)
            == (other.seed, other.events, other.burn_in, other.start, other.replicas)
            and self.space == other.space
            and np.array_equal(self.occupation.weights, other.occupation.weights)
            and np.array_equal(self.jump_counts, other.jump_counts)
            and self.c_stats == other.c_stats
        )

    __hash__ = None


def _rate_matrix(chain) -> RateMatrix:
    return chain if isinstance(chain, RateMatrix) else chain.R


def _c_indices(chain, space: StateSpace) -> list[int]:
    if hasattr(chain, "c_indices"):
        return list(chain.c_indices)
    return [k for k, lab in enumerate(space.labels) if isinstance(lab, str) and _C_LABEL.match(lab)]


def _default_start(chain) -> int:
    g = getattr(chain, "g", None)
    if g is None:
        return 0
    return int(np.argmax(g.weights))


def _alias_table(p: np.ndarray):
    """Vose alias table for probabilities ``p``."""
    k = p.size
    scaled = p * k
    prob = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    return prob.tolist(), alias.tolist()


class _JumpTables:
    def __init__(self, entries: np.ndarray):
        n = entries.shape[0]
        off = entries.copy()
        np.fill_diagonal(off, 0.0)
        self.exit = off.sum(axis=1)
        self.targets, self.cum, self.alias = [], [], []
        for s in range(n):
            t = np.flatnonzero(off[s] > 0)
            p = off[s, t] / self.exit[s] if t.size else t.astype(float)
            self.targets.append(t.tolist())
            if t.size >= ALIAS_MIN_DEGREE:
                self.cum.append(None)
                self.alias.append(_alias_table(p))
            else:
                c = np.cumsum(p)
                self.cum.append(c.tolist())
                self.alias.append(None)


def _stream(seed: int, replica: int) -> np.random.Generator:
    bits = np.random.Philox(seed)
    if replica:
        bits = bits.jumped(replica)
    return np.random.Generator(bits)


def simulate(chain, seed: int, events: int, burn_in: float = BURN_IN, start=None, replica: int = 0) -> Trajectory:
    """Simulate ``events`` jumps starting from ``start`` (default: argmax of g).

    The first ``floor(burn_in * events)`` jumps are excluded from the
    occupation measure, jump counts and c statistics.
    """
    if int(events) != events or events < 1:
        raise ValueError(f"events must be a positive integer, got {events}")
    if not 0 <= burn_in < 1:
        raise ValueError(f"burn_in must lie in [0, 1), got {burn_in}")
    rm = _rate_matrix(chain)
    space = rm.space
    with np.errstate(over="ignore", invalid="ignore"):
        entries = rm.entries.astype(np.float64)
    if not np.all(np.isfinite(entries)):
        raise NonFiniteRate("rates not representable in double precision; simulation needs finite float64 rates")
    tables = _JumpTables(entries)
    exit_rates = tables.exit
    s = _default_start(chain) if start is None else (space.index(start) if not isinstance(start, int) else start)
    if not 0 <= s < space.size:
        raise ValueError(f"start index {s} out of range")

    rng = _stream(seed, replica)
    seq = [s]
    targets, cum, alias = tables.targets, tables.cum, tables.alias
    u_blocks = []
    for k in range(events):
        if k % _BLOCK == 0:
            u_blocks.append(rng.random(_BLOCK))
            v_block = rng.random(_BLOCK).tolist()
        if not targets[s]:
            raise AbsorbingState(f"state {space.labels[s]!r} (index {s}) has zero exit rate")
        v = v_block[k % _BLOCK]
        c = cum[s]
        if c is None:
            prob, al = alias[s]
            x = v * len(prob)
            j = int(x)
            s = targets[s][j] if x - j < prob[j] else targets[s][al[j]]
        else:
            last = len(c) - 1
            j = 0
            while j < last and v >= c[j]:
                j += 1
            s = targets[s][j]
        seq.append(s)

    seq = np.asarray(seq, dtype=np.int64)
    src, dst = seq[:-1], seq[1:]
    u = np.maximum(np.concatenate(u_blocks)[:events], 2.0**-54)
    holds = -np.log1p(-u) / exit_rates[src]
    b = int(burn_in * events)
    src, dst, holds = src[b:], dst[b:], holds[b:]
    n = space.size
    occupation = np.bincount(src, weights=holds, minlength=n)
    jumps = np.bincount(src, minlength=n)

    c_stats = {}
    labels = space.labels
    for ci in _c_indices(chain, space):
        into, out = dst == ci, src == ci
        c_stats[labels[ci]] = CStats(
            entries=int(into.sum()),
            departures=int(out.sum()),
            holding_time=float(occupation[ci]),
            successors=Counter({labels[t]: int(m) for t, m in zip(*np.unique(dst[out], return_counts=True))}),
            predecessors=Counter({labels[t]: int(m) for t, m in zip(*np.unique(src[into], return_counts=True))}),
        )
    jumps.setflags(write=False)
    return Trajectory(int(seed), int(events), Measure(space, occupation), jumps, c_stats, b, int(seq[0]), (replica,))


def merge_trajectories(trajectories) -> Trajectory:
    """Sum accumulators of independent runs over the same space."""
    ts = list(trajectories)
    if not ts:
        raise ValueError("nothing to merge")
    space = ts[0].space
    if any(t.space != space for t in ts):
        raise DimensionMismatch("trajectories live on different spaces")
    occupation = np.sum([np.asarray(t.occupation.weights, dtype=np.float64) for t in ts], axis=0)
    jumps = np.sum([t.jump_counts for t in ts], axis=0)
    c_stats = {}
    for t in ts:
        for lab, st in t.c_stats.items():
            c_stats[lab] = c_stats[lab].merged(st) if lab in c_stats else st
    replicas = tuple(sorted(r for t in ts for r in t.replicas))
    return Trajectory(
        ts[0].seed,
        sum(t.events for t in ts),
        Measure(space, occupation),
        jumps,
        c_stats,
        sum(t.burn_in for t in ts),
        ts[0].start,
        replicas,
    )


def simulate_replicas(chain, seed: int, events: int, replicas: int, burn_in: float = BURN_IN) -> Trajectory:
    return merge_trajectories(simulate(chain, seed, events, burn_in, replica=r) for r in range(replicas))


def _target_weights(g, size: int) -> np.ndarray:
    if hasattr(g, "augmented"):
        c_count = size - g.natural.space.size
        if c_count < 0:
            raise DimensionMismatch(f"trajectory has {size} states, g covers {g.natural.space.size} natural states")
        return g.augmented(c_count)
    w = g.weights if isinstance(g, Measure) else np.asarray(g)
    return w


def compare_occupation(t: Trajectory, g) -> float:
    """Total-variation distance between the normalized occupation and ``g``."""
    w = _target_weights(g, t.space.size)
    if len(w) != t.space.size:
        raise DimensionMismatch(f"trajectory has {t.space.size} states, target has {len(w)}")
    return total_variation(t.occupation.weights, w)


def c_mass(t: Trajectory) -> float:
    """Fraction of post-burn-in time spent in c states."""
    idx = [t.space.index(lab) for lab in t.c_stats]
    w = np.asarray(t.occupation.weights, dtype=np.float64)
    return float(w[idx].sum() / w.sum())


def write_occupation_csv(t: Trajectory, g, path, fmt) -> None:
    from .io import label_token

    w = np.asarray(_target_weights(g, t.space.size), dtype=np.longdouble)
    occ = t.occupation.normalize().weights
    w = w / w.sum()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["state_label", "occupation_fraction", "g_fraction", "abs_error"])
        for lab, a, b in zip(t.space.labels, occ, w):
            out.writerow([label_token(lab), fmt(a), fmt(b), fmt(abs(a - b))])


def write_cstats_csv(t: Trajectory, path, fmt) -> None:
    from .io import label_token

    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["c_label", "entries", "mean_holding", "succ_label", "succ_count"])
        for lab in sorted(t.c_stats, key=t.space.index):
            st = t.c_stats[lab]
            succ = sorted(st.successors.items(), key=lambda kv: t.space.index(kv[0]))
            for s_lab, count in succ or [("", 0)]:
                out.writerow([label_token(lab), st.entries, fmt(st.mean_holding), label_token(s_lab), count])
