"""Command-line sweep driver.

Runs the down-conversion evolution over a grid of interaction strengths and
evaluates every witness, standard-form decision and physicality check at each
hierarchy order.  Output is one row per (xi, n) with the columns in
``COLUMNS``; values are identical in the CSV and JSON renderings.

Exit codes: 0 success, 2 configuration error, 3 truncation not converged.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import criteria, stdform
from .dynamics import (
    EvolutionConfig,
    HamiltonianSpec,
    PumpTreatment,
    default_pump_dim,
    sweep_xi,
)
from .fock import ModeLayout, number
from .moments import BIPARTITIONS, MomentTable, moment_table, operator_cache

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3
DEFAULT_TRIPLET_DIM = 16
DEFAULT_CONVERGENCE_TOL = 1e-4
WITNESS_COLUMNS = ("F_1", "F_2", "F_3", "W", "W_anchor_2", "W_anchor_3")

COLUMNS = (
    "xi", "n",
    "F_1", "F_2", "F_3", "full_inseparable",
    "W", "W_anchor_2", "W_anchor_3", "genuine",
    "theorem2_1", "theorem2_2", "theorem2_3",
    "margin_1", "margin_2", "margin_3",
    "uncertainty_min_eig_1", "uncertainty_min_eig_2", "uncertainty_min_eig_3", "physical",
    "mean_N_1", "mean_N_2", "mean_N_3", "mean_N_4",
    "norm_error", "convergence_delta", "converged",
)


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{name}: {msg}" for name, msg in self.errors))


@dataclass(frozen=True)
class RunConfig:
    pump: str = "parametric"
    kappa: float = 1.0
    alpha_p: float = math.sqrt(10)
    xi_min: float = 0.0
    xi_max: float = 0.18
    steps: int = 19
    dims: tuple[int, ...] = ()
    orders: tuple[int, ...] = (1, 2, 3)
    gain: float = 1.0
    format: str = "csv"
    out: str | None = None
    check_convergence: bool = False
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL
    threads: int | None = None

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.xi_min, self.xi_max, self.steps)

    @property
    def treatment(self) -> PumpTreatment:
        return PumpTreatment(self.pump)


_FIELDS = {f for f in RunConfig.__dataclass_fields__}


def _split_ints(value) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(x) for x in value.replace(" ", "").split(",") if x)
    return tuple(int(x) for x in value)


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in {"1", "true", "yes", "on"}:
        return True
    if text in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {value!r}")


_CONVERTERS = {
    "pump": str,
    "kappa": float,
    "alpha_p": float,
    "xi_min": float,
    "xi_max": float,
    "steps": int,
    "dims": _split_ints,
    "orders": _split_ints,
    "gain": float,
    "format": str,
    "out": str,
    "check_convergence": _to_bool,
    "convergence_tol": float,
    "threads": int,
}


def validate_config(raw: Mapping[str, object]) -> RunConfig:
    """Fill defaults and check every field; all problems are reported together."""
    errors: list[tuple[str, str]] = []
    values: dict = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        if name not in _FIELDS:
            errors.append((name, "unknown setting"))
            continue
        if value is None:
            continue
        try:
            values[name] = _CONVERTERS[name](value)
        except (TypeError, ValueError) as exc:
            errors.append((name, f"cannot parse {value!r}: {exc}"))
    cfg = RunConfig(**values)

    if cfg.pump not in {t.value for t in PumpTreatment}:
        errors.append(("pump", f"must be 'quantum' or 'parametric', got {cfg.pump!r}"))
    if not cfg.kappa > 0:
        errors.append(("kappa", f"must be positive, got {cfg.kappa}"))
    if not cfg.alpha_p > 0:
        errors.append(("alpha_p", f"must be positive, got {cfg.alpha_p}"))
    if cfg.steps < 1:
        errors.append(("steps", f"must be >= 1, got {cfg.steps}"))
    if cfg.xi_min < 0 or cfg.xi_max < cfg.xi_min:
        errors.append(("xi_max", f"need 0 <= xi_min <= xi_max, got [{cfg.xi_min}, {cfg.xi_max}]"))
    if not cfg.orders:
        errors.append(("orders", "at least one order is required"))
    elif min(cfg.orders) < 1:
        errors.append(("orders", f"orders must be positive integers, got {cfg.orders}"))
    if cfg.gain == 0 or not math.isfinite(cfg.gain):
        errors.append(("gain", f"must be a finite nonzero real, got {cfg.gain}"))
    if cfg.format not in {"csv", "json"}:
        errors.append(("format", f"must be 'csv' or 'json', got {cfg.format!r}"))
    if cfg.threads is not None and cfg.threads < 1:
        errors.append(("threads", f"must be >= 1, got {cfg.threads}"))
    if not cfg.convergence_tol > 0:
        errors.append(("convergence_tol", "must be positive"))

    dims = cfg.dims or (DEFAULT_TRIPLET_DIM,) * 3
    if cfg.pump == "quantum" and len(dims) == 3:
        dims = dims + (default_pump_dim(cfg.alpha_p),)
    expected = 4 if cfg.pump == "quantum" else 3
    if len(dims) != expected:
        errors.append(("dims", f"{cfg.pump} pump needs {expected} mode dimensions, got {len(dims)}"))
    elif cfg.orders and min(cfg.orders) >= 1:
        top = max(cfg.orders)
        for i, d in enumerate(dims[:3]):
            if d - 1 <= 3 * top:
                errors.append(("dims", f"cutoff too small for order {top}: mode {i + 1} has cutoff {d - 1}, "
                                       f"need > {3 * top} (dimension >= {3 * top + 2})"))
        if any(d < 2 for d in dims):
            errors.append(("dims", "every dimension must be >= 2"))
    if errors:
        raise ConfigError(errors)
    return replace(cfg, dims=tuple(dims), orders=tuple(sorted(set(cfg.orders))))


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([("config", f"{path}:{lineno}: expected 'key = value'")])
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _theorem2(table: MomentTable, n: int, k: int) -> tuple[str, float | None]:
    try:
        sf = stdform.reduce_to_standard_form(stdform.covariance_matrix(table, n, k))
        d = stdform.theorem2_decide(sf)
    except (stdform.StandardFormError, stdform.UnphysicalCovarianceError) as exc:
        log.warning("standard form failed for n=%d k=%d: %s", n, k, exc)
        return "failed", None
    return d.decision.value, d.margin


def analyze(xi: float, table: MomentTable, cfg: RunConfig, norm_error: float, mean_pump: float | None) -> list[dict]:
    rows = []
    for n in cfg.orders:
        fs = criteria.witness_F_all(table, n, cfg.gain)
        w = criteria.witness_W(table, n, cfg.gain)
        row = {"xi": float(xi), "n": n}
        for k, r in zip(BIPARTITIONS, fs.results):
            row[f"F_{k}"] = r.value
        row["full_inseparable"] = fs.certified
        row["W"] = w.value
        row["W_anchor_2"] = w.extra["variants"][2]
        row["W_anchor_3"] = w.extra["variants"][3]
        row["genuine"] = w.violated
        physical = True
        for k in BIPARTITIONS:
            row[f"theorem2_{k}"], row[f"margin_{k}"] = _theorem2(table, n, k)
            chk = criteria.uncertainty_check(table, n, k)
            row[f"uncertainty_min_eig_{k}"] = chk.min_eigenvalue
            physical &= chk.passed
        row["physical"] = physical
        for k in BIPARTITIONS:
            row[f"mean_N_{k}"] = float(table.mean_photons[k - 1])
        row["mean_N_4"] = mean_pump
        row["norm_error"] = norm_error
        row["convergence_delta"] = None
        row["converged"] = None
        rows.append(row)
    return rows


def _simulate(cfg: RunConfig, dims: Sequence[int]) -> list[dict]:
    layout = ModeLayout(dims)
    spec = HamiltonianSpec(cfg.treatment, cfg.kappa, layout, cfg.alpha_p)
    states = sweep_xi(spec, EvolutionConfig(), cfg.grid, threads=cfg.threads)
    ops = operator_cache(layout, cfg.orders)
    pump_n = number(layout, 3) if cfg.treatment is PumpTreatment.QUANTUM else None

    def one(item):
        xi, state = item
        table = moment_table(state, cfg.orders, ops)
        mean_pump = None
        if pump_n is not None:
            mean_pump = float(np.vdot(state.data, pump_n.matrix @ state.data).real)
        return analyze(xi, table, cfg, state.norm_error(), mean_pump)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        per_point = list(pool.map(one, states))
    return [row for rows in per_point for row in rows]


@dataclass
class SweepResult:
    config: RunConfig
    rows: list[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(r["converged"] is not False for r in self.rows)


def run_sweep(cfg: RunConfig) -> SweepResult:
    log.info("sweep: %s pump, dims %s, %d points, orders %s", cfg.pump, cfg.dims, cfg.steps, cfg.orders)
    rows = _simulate(cfg, cfg.dims)
    if cfg.check_convergence:
        bigger = tuple(d + 2 for d in cfg.dims)
        log.info("convergence check with dims %s", bigger)
        ref = _simulate(cfg, bigger)
        for row, other in zip(rows, ref):
            delta = max(abs(row[c] - other[c]) for c in WITNESS_COLUMNS)
            row["convergence_delta"] = delta
            row["converged"] = delta < cfg.convergence_tol
    return SweepResult(cfg, rows)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def render(result: SweepResult, fmt: str) -> str:
    if fmt == "json":
        payload = {
            "config": {**asdict(result.config), "dims": list(result.config.dims), "orders": list(result.config.orders)},
            "columns": list(COLUMNS),
            "rows": [{c: row[c] for c in COLUMNS} for row in result.rows],
        }
        return json.dumps(payload, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in result.rows:
        writer.writerow([_csv_cell(row[c]) for c in COLUMNS])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="triphoton", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("--pump", choices=["quantum", "parametric"])
    p.add_argument("--kappa", type=float)
    p.add_argument("--alpha-p", type=float)
    p.add_argument("--xi-min", type=float)
    p.add_argument("--xi-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--dims", help="comma-separated mode dimensions, e.g. 16,16,16[,30]")
    p.add_argument("--orders", help="comma-separated hierarchy orders, e.g. 1,2,3")
    p.add_argument("--gain", type=float)
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--check-convergence", action="store_const", const=True, default=None)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in {"config", "verbose"} and v is not None}
    try:
        raw = read_config_file(args.config) if args.config else {}
        raw.update(flags)
        cfg = validate_config(raw)
    except ConfigError as exc:
        for name, msg in exc.errors:
            print(f"config error [{name}]: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.threads is None:
        cfg = replace(cfg, threads=os.cpu_count() or 1)

    result = run_sweep(cfg)
    text = render(result, cfg.format)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.check_convergence and not result.converged:
        bad = [(r["xi"], r["n"]) for r in result.rows if r["converged"] is False]
        print(f"truncation not converged at {len(bad)} (xi, n) points, first {bad[0]}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK
