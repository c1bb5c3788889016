"""Whitespace-separated text formats for generator families and assembled chains.

Family file::

    family <name> index_size <K> state_size <S>
    member <index_label>
    <from_idx> <to_idx> <rate>        # nonzero off-diagonals; diagonal inferred
    measure <w_0> ... <w_{S-1}>       # optional, solved for when absent

A triple with ``from_idx == to_idx`` overrides the inferred diagonal.

Chain file::

    chain <name> space augmented state_size <n> natural_size <k> c_count <c> ...
    labels <label_0> ... <label_{n-1}>
    <from_idx> <to_idx> <rate>        # every nonzero entry, diagonal included
    measure <g_0> ... <g_{n-1}>
    tau <mode> <tau_0> ... <tau_{k-1}>
    v <j> <V_r> <V_c> <V_m> <direction>   # multi-c chains only

Chain diagonals are stored rather than inferred so that a damaged file is
caught by the row-sum check.  ``#`` starts a comment anywhere on a line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DTYPE, GeneratorFamily, Measure, RateMatrix, StateSpace, solve_stationary
from .errors import FormatError


def format_number(x) -> str:
    """Shortest text that round-trips the longdouble value."""
    return np.format_float_scientific(DTYPE(x), unique=True, trim="-")


def label_token(label) -> str:
    if isinstance(label, tuple):
        return ":".join(str(part) for part in label)
    return str(label)


def _lines(path):
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if tokens:
            yield lineno, tokens


def _header_fields(tokens, lineno, keyword):
    if tokens[0] != keyword or len(tokens) < 2 or len(tokens) % 2 != 0:
        raise FormatError(f"expected '{keyword} <name> key value ...'", lineno)
    meta = dict(zip(tokens[2::2], tokens[3::2]))
    return tokens[1], meta


def _int_field(meta, key, lineno):
    try:
        return int(meta[key])
    except (KeyError, ValueError):
        raise FormatError(f"header needs an integer '{key}'", lineno) from None


def _number(token, lineno):
    try:
        value = DTYPE(token)
    except ValueError:
        raise FormatError(f"not a number: {token!r}", lineno) from None
    if not np.isfinite(value):
        raise FormatError(f"non-finite number: {token!r}", lineno)
    return value


def _triple(tokens, size, lineno):
    if len(tokens) != 3:
        raise FormatError("expected '<from> <to> <rate>'", lineno)
    try:
        s, t = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise FormatError("state indices must be integers", lineno) from None
    if not (0 <= s < size and 0 <= t < size):
        raise FormatError(f"state index out of range 0..{size - 1}", lineno)
    return s, t, _number(tokens[2], lineno)


def write_family(f: GeneratorFamily, path) -> None:
    out = [f"family {f.name} index_size {f.index_space.size} state_size {f.space.size}"]
    for label, (rm, mu) in zip(f.index_space.labels, f.members):
        out.append(f"member {label_token(label)}")
        a = rm.entries
        for s, t in zip(*np.nonzero(a)):
            if s != t:
                out.append(f"{s} {t} {format_number(a[s, t])}")
        out.append("measure " + " ".join(format_number(w) for w in mu.weights))
    Path(path).write_text("\n".join(out) + "\n")


def read_family(path) -> GeneratorFamily:
    lines = iter(_lines(path))
    try:
        lineno, tokens = next(lines)
    except StopIteration:
        raise FormatError("empty family file") from None
    name, meta = _header_fields(tokens, lineno, "family")
    k = _int_field(meta, "index_size", lineno)
    size = _int_field(meta, "state_size", lineno)

    labels, matrices, measures = [], [], []
    explicit = []
    for lineno, tokens in lines:
        if tokens[0] == "member":
            if len(tokens) != 2:
                raise FormatError("expected 'member <label>'", lineno)
            labels.append(tokens[1])
            matrices.append(np.zeros((size, size), dtype=DTYPE))
            measures.append(None)
            explicit.append(set())
        elif not matrices:
            raise FormatError("rates given before the first 'member' line", lineno)
        elif tokens[0] == "measure":
            if len(tokens) != size + 1:
                raise FormatError(f"measure needs {size} weights", lineno)
            measures[-1] = [_number(tok, lineno) for tok in tokens[1:]]
        else:
            s, t, rate = _triple(tokens, size, lineno)
            matrices[-1][s, t] = rate
            if s == t:
                explicit[-1].add(s)
    if len(matrices) != k:
        raise FormatError(f"header announces {k} members, file has {len(matrices)}")
    for a, fixed in zip(matrices, explicit):
        off = a.copy()
        np.fill_diagonal(off, 0)
        for s in range(size):
            if s not in fixed:
                a[s, s] = -off[s].sum()
    space = StateSpace.of_size(size)
    return GeneratorFamily.from_matrices(StateSpace(tuple(labels)), space, matrices, measures, name=name)


def write_chain(chain, path, name: str = "chain") -> None:
    """Serialize a single- or multi-c chain."""
    a = chain.R.entries
    n = chain.space.size
    header = (
        f"chain {name} space augmented state_size {n} natural_size {chain.natural_size} "
        f"c_count {chain.c_count} epsilon {format_number(chain.g.epsilon)} "
        f"variant {chain.variant.value} tau_mode {chain.tau.mode.value}"
    )
    out = [header, "labels " + " ".join(label_token(lab) for lab in chain.space.labels)]
    for s, t in zip(*np.nonzero(a)):
        out.append(f"{s} {t} {format_number(a[s, t])}")
    out.append("measure " + " ".join(format_number(w) for w in chain.stationary.weights))
    out.append(f"tau {chain.tau.mode.value} " + " ".join(format_number(v) for v in chain.tau.values))
    for level in getattr(chain, "V", ()):
        out.append(
            f"v {level.j} {format_number(level.v_r)} {format_number(level.v_c)} "
            f"{format_number(level.v_m)} {level.direction}"
        )
    Path(path).write_text("\n".join(out) + "\n")


@dataclass
class ChainFile:
    name: str
    R: RateMatrix
    measure: Measure | None
    meta: dict
    tau: np.ndarray | None = None
    tau_mode: str | None = None
    v_profile: list = field(default_factory=list)

    @property
    def space(self) -> StateSpace:
        return self.R.space


def read_chain(path) -> ChainFile:
    lines = iter(_lines(path))
    try:
        lineno, tokens = next(lines)
    except StopIteration:
        raise FormatError("empty chain file") from None
    name, meta = _header_fields(tokens, lineno, "chain")
    n = _int_field(meta, "state_size", lineno)
    a = np.zeros((n, n), dtype=DTYPE)
    labels = tuple(range(n))
    weights = None
    tau = tau_mode = None
    v_profile = []
    for lineno, tokens in lines:
        head = tokens[0]
        if head == "labels":
            if len(tokens) != n + 1:
                raise FormatError(f"labels line needs {n} labels", lineno)
            labels = tuple(tokens[1:])
        elif head == "measure":
            if len(tokens) != n + 1:
                raise FormatError(f"measure needs {n} weights", lineno)
            weights = [_number(tok, lineno) for tok in tokens[1:]]
        elif head == "tau":
            tau_mode = tokens[1] if len(tokens) > 1 else None
            tau = np.array([_number(tok, lineno) for tok in tokens[2:]], dtype=DTYPE)
        elif head == "v":
            if len(tokens) != 6:
                raise FormatError("expected 'v <j> <V_r> <V_c> <V_m> <direction>'", lineno)
            v_profile.append((int(tokens[1]), *(_number(t, lineno) for t in tokens[2:5]), tokens[5]))
        else:
            s, t, rate = _triple(tokens, n, lineno)
            a[s, t] = rate
    space = StateSpace(labels)
    measure = Measure(space, weights) if weights is not None else None
    return ChainFile(name, RateMatrix(space, a), measure, meta, tau, tau_mode, v_profile)


def load_or_solve_measure(chain_file: ChainFile) -> Measure:
    return chain_file.measure if chain_file.measure is not None else solve_stationary(chain_file.R)


def format_csv_number(x) -> str:
    """Fixed 17-significant-digit scientific notation, independent of locale."""
    return np.format_float_scientific(DTYPE(x), precision=16, unique=False)
