"""Command-line front end.

Exit status: 0 success, 1 validation failure, 2 construction error,
3 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DTYPE,
    NORMALIZATION_RTOL,
    ROW_SUM_RTOL,
    SOLVE_RESIDUAL_RTOL,
    STATIONARY_RTOL,
    validate_dissipative,
    verify_stationary,
)
from .diagnostics import (
    CensusRow,
    classification_census,
    jump_criterion,
    theorem_ratio_sweep,
    write_census_csv,
    write_sweep_csv,
)
from .errors import ConfigError, ProductChainError
from .io import format_csv_number, read_chain, read_family, write_chain
from .multi import assemble_multi
from .queueing import Mode, QueueingParams, build_queueing_instance
from .sim import compare_occupation, simulate, write_cstats_csv, write_occupation_csv
from .single import (
    BALANCE_RTOL,
    CLAMP_RTOL,
    Variant,
    assemble_single,
    build_product_measure,
    classify_states,
    compute_tau_minimal,
)

COMMANDS = ("build", "validate", "classify", "simulate", "sweep", "census")
TOLERANCES = {
    "row_sum_rtol": ROW_SUM_RTOL,
    "stationary_rtol": STATIONARY_RTOL,
    "normalization_rtol": NORMALIZATION_RTOL,
    "solve_residual_rtol": SOLVE_RESIDUAL_RTOL,
    "clamp_rtol": CLAMP_RTOL,
    "balance_rtol": BALANCE_RTOL,
}


def _ms(text: str) -> tuple:
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


@dataclass
class RunConfig:
    command: str | None = None
    model: str = "queueing"
    N: int | None = None
    M: int | None = None
    q_path: str | None = None
    a_path: str | None = None
    chain_path: str | None = None
    epsilon: float = 0.01
    mode: str = "single"
    variant: str = "default"
    seed: int | None = None
    events: int | None = None
    Ms: tuple = ()
    eps_prime: float = 0.5
    burn_in: float = 0.01
    out_dir: str = "."

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"field '{name}': {why}")

        if self.command not in COMMANDS:
            bad("command", f"expected one of {', '.join(COMMANDS)}, got {self.command!r}")
        if self.model not in ("queueing", "files"):
            bad("model", f"expected queueing or files, got {self.model!r}")
        if self.mode not in ("single", "multi"):
            bad("mode", f"expected single or multi, got {self.mode!r}")
        if self.variant not in {v.value for v in Variant}:
            bad("variant", f"unknown variant {self.variant!r}")
        if not self.epsilon > 0:
            bad("epsilon", "must be positive")
        needs_model = self.command != "validate" or self.chain_path is None
        if self.command in ("sweep", "census") and self.model != "queueing":
            bad("model", f"{self.command} runs on the queueing model only")
        if self.command == "sweep":
            if self.N is None:
                bad("N", "required")
            if not self.Ms:
                bad("Ms", "required (comma-separated list)")
            if any(b <= a for a, b in zip(self.Ms, self.Ms[1:])):
                bad("Ms", "must be strictly ascending")
            for M in self.Ms:
                self._params(self.N, M)
        elif needs_model and self.model == "queueing":
            for name in ("N", "M"):
                if getattr(self, name) is None:
                    bad(name, "required for the queueing model")
            self._params(self.N, self.M)
        elif needs_model:
            for name in ("q_path", "a_path"):
                if getattr(self, name) is None:
                    bad(name, "required for the files model")
        if self.command == "census" and not 0 <= self.eps_prime < 1:
            bad("eps_prime", "must lie in [0, 1)")
        if self.command == "simulate":
            if self.seed is None:
                bad("seed", "simulate needs an explicit seed")
            if self.events is None or self.events < 1:
                bad("events", "simulate needs a positive event count")
            if not 0 <= self.burn_in < 1:
                bad("burn_in", "must lie in [0, 1)")

    @staticmethod
    def _params(N, M) -> QueueingParams:
        try:
            return QueueingParams(N, M)
        except ValueError as exc:
            raise ConfigError(f"field 'N'/'M': {exc}") from None


_FIELD_TYPES = {
    "N": int,
    "M": int,
    "epsilon": float,
    "seed": int,
    "events": int,
    "Ms": _ms,
    "eps_prime": float,
    "burn_in": float,
}
_FIELD_NAMES = [f.name for f in fields(RunConfig)]


def _convert(key, value, where):
    try:
        return _FIELD_TYPES.get(key, str)(value)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} for '{key}'") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "chain":
            key = "chain_path"
        if key not in _FIELD_NAMES:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        values[key] = _convert(key, value, f"line {lineno}")
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="product-chain", description="Build, check and simulate product-form combined chains.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="file with 'key = value' lines; flags override it")
    p.add_argument("--model", choices=("queueing", "files"))
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--q-path", dest="q_path")
    p.add_argument("--a-path", dest="a_path")
    p.add_argument("--chain", "--chain-path", dest="chain_path")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--mode", choices=("single", "multi"))
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--seed", type=int)
    p.add_argument("--events", type=int)
    p.add_argument("--Ms", type=_ms)
    p.add_argument("--eps-prime", dest="eps_prime", type=float)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    return p


def parse_config(argv) -> RunConfig:
    ns = vars(_parser().parse_args(argv))
    values = read_config_file(ns.pop("config")) if ns.get("config") else {}
    values.update({k: v for k, v in ns.items() if v is not None and k != "config"})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _build_chain(cfg: RunConfig):
    variant = Variant(cfg.variant)
    eps = DTYPE(str(cfg.epsilon))
    if cfg.model == "queueing":
        return build_queueing_instance(QueueingParams(cfg.N, cfg.M), eps, Mode(cfg.mode), variant)
    qf, af = read_family(cfg.q_path), read_family(cfg.a_path)
    g = build_product_measure(qf, af, eps)
    if cfg.mode == "multi":
        return assemble_multi(qf, af, g, variant)
    return assemble_single(qf, af, g, compute_tau_minimal(qf, af, g, variant), variant)


class _Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.results = {}

    def path(self, name):
        return self.out / name

    def report(self, key, value):
        self.results[key] = value
        print(f"{key}: {value}")

    def write_manifest(self):
        lines = [f"product_chain_version = {__version__}"]
        for name in _FIELD_NAMES:
            value = getattr(self.cfg, name)
            if name == "Ms":
                value = ",".join(str(m) for m in value)
            lines.append(f"config.{name} = {'' if value is None else value}")
        lines.append(f"dtype = {np.dtype(DTYPE).name}")
        for name, tol in TOLERANCES.items():
            lines.append(f"tolerance.{name} = {tol!r}")
        for key, value in self.results.items():
            lines.append(f"result.{key} = {value}")
        self.path("manifest.txt").write_text("\n".join(lines) + "\n")

    def build(self) -> int:
        chain = _build_chain(self.cfg)
        write_chain(chain, self.path("chain.txt"), name=f"{self.cfg.model}_{self.cfg.mode}")
        self.report("states", chain.space.size)
        return 0

    def validate(self) -> int:
        if self.cfg.chain_path is not None:
            cf = read_chain(self.cfg.chain_path)
            R, mu = cf.R, cf.measure
        else:
            chain = _build_chain(self.cfg)
            R, mu = chain.R, chain.stationary
        report = validate_dissipative(R)
        self.report("dissipative", "ok" if report.ok else "FAIL")
        for v in report.violations:
            print(f"  row {v.index}: {v}")
        status = 0 if report.ok else 1
        if mu is not None and report.ok:
            stat = verify_stationary(R, mu)
            self.report("stationary", "ok" if stat.ok else "FAIL")
            self.report("max_relative_residual", format_csv_number(stat.metrics["max_relative_residual"]))
            for v in stat.violations:
                print(f"  column {v.index}: {v}")
            status = status or (0 if stat.ok else 1)
        if report.violations:
            self.report("offending_rows", ",".join(str(i) for i in sorted(set(report.rows()))))
        return status

    def classify(self) -> int:
        chain = _build_chain(self.cfg)
        labels = classify_states(chain).labels
        nx, nz = chain.qf.space.size, chain.af.space.size
        rows = []
        for s in range(chain.natural_size):
            i, j = divmod(s, nz)
            jc = jump_criterion(chain, (i, j))
            if jc.label is not labels[s]:
                print(f"criterion disagrees with assembled rates at state {s}", file=sys.stderr)
                return 1
            rows.append(CensusRow(nx - 1, nz - 1, i, j, labels[s], jc.lhs, jc.rhs))
        write_census_csv(rows, self.path("census.csv"), format_csv_number)
        for lab, count in classify_states(chain).counts().items():
            self.report(f"count.{lab.value}", count)
        return 0

    def census(self) -> int:
        c = classification_census(
            QueueingParams(self.cfg.N, self.cfg.M), DTYPE(str(self.cfg.epsilon)), self.cfg.eps_prime, Variant(self.cfg.variant)
        )
        write_census_csv(c.rows, self.path("census.csv"), format_csv_number)
        self.report("block_size", c.block_size)
        self.report("toc_fraction", format_csv_number(c.toc_fraction))
        self.report("origin_label", c.origin_label.value)
        self.report("idle_toc_fraction", format_csv_number(
            sum(1 for lab in c.idle_labels if lab.value == "ToC") / len(c.idle_labels)
        ))
        return 0 if c.agrees_with_classification else 1

    def sweep(self) -> int:
        result = theorem_ratio_sweep(self.cfg.N, self.cfg.Ms, DTYPE(str(self.cfg.epsilon)), Variant(self.cfg.variant))
        write_sweep_csv(result, self.path("sweep.csv"), format_csv_number)
        for (hi, lo), ok in result.pair_pass.items():
            self.report(f"pair_c{hi}_c{lo}", "PASS" if ok else "FAIL")
        self.report("sweep", "PASS" if result.passed else "FAIL")
        return 0 if result.passed else 1

    def simulate(self) -> int:
        chain = _build_chain(self.cfg)
        t = simulate(chain, self.cfg.seed, self.cfg.events, burn_in=self.cfg.burn_in)
        write_occupation_csv(t, chain.g, self.path("occupation.csv"), format_csv_number)
        write_cstats_csv(t, self.path("cstats.csv"), format_csv_number)
        self.report("tv_distance", format_csv_number(compare_occupation(t, chain.g)))
        return 0


def run(cfg: RunConfig) -> int:
    cfg.validate()
    r = _Run(cfg)
    try:
        r.out.mkdir(parents=True, exist_ok=True)
        status = getattr(r, cfg.command)()
    except (ProductChainError, ValueError, OverflowError) as exc:
        if isinstance(exc, ConfigError):
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        r.report("error", type(exc).__name__)
        r.write_manifest()
        return 2
    r.write_manifest()
    return status


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
