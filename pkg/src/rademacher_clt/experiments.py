"""Experiment definitions shared by the command line and the test-suite."""
from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bounds import (
    DEFAULT_SAMPLES,
    FunctionalVector,
    b_terms,
    d4_surrogate,
    fit_rate,
)
from .chaos import (
    reconstruct_all,
    verify_adjoint,
    verify_ibp,
    verify_integrated_mehler,
    verify_L_equals_minus_delta_D,
    verify_poincare,
    walsh_expand,
)
from .core import RademacherSpace, random_polynomial, random_table_functional, verify_product_rule
from .cubical import CubicalLattice, VolumeVector
from .errors import ValidationError
from .graphs import DegreeVector, GraphSpec, SubgraphVector

KINDS = ("verify-calculus", "bound-subgraph", "bound-degree", "bound-cubical", "surrogate", "rates")
MODELS = ("subgraph", "degree", "voxel", "plaquette")
CSV_HEADER = ["experiment", "n", "i", "j", "term", "value", "std_error", "samples", "seed", "wall_ms"]
RESIDUAL_TOL = 1e-10


@dataclass
class ExperimentConfig:
    kind: str
    n_values: list = field(default_factory=lambda: [10])
    p: float = 0.5
    theta: float = 0.5
    dim: int = 2
    model: str = "subgraph"
    patterns: list = field(default_factory=lambda: ["edge", "triangle"])
    degrees: list = field(default_factory=lambda: [0, 1, 2])
    samples: int = DEFAULT_SAMPLES
    seed: Optional[int] = None
    backend: str = "auto"
    out: Optional[str] = None
    target: str = "oracle"
    count: int = 200

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown experiment {self.kind!r}; choose from {KINDS}")
        if self.seed is None:
            raise ValidationError("a seed is required for reproducibility")
        if not self.n_values:
            raise ValidationError("the n range is empty")
        if self.model not in MODELS:
            raise ValidationError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.backend != "exact" and self.samples < 100:
            raise ValidationError("Monte Carlo runs need at least 100 samples")

    @property
    def experiment_name(self) -> str:
        if self.kind in ("bound-cubical", "surrogate"):
            return f"{self.kind}:{self.model}"
        return self.kind


@dataclass
class ResultRow:
    experiment: str
    n: int
    i: str
    j: str
    term: str
    value: float
    std_error: float
    samples: int
    seed: int
    wall_ms: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValidationError(f"non-finite value in row {self.term}")

    def as_list(self) -> list:
        return [self.experiment, self.n, self.i, self.j, self.term, repr(float(self.value)),
                repr(float(self.std_error)), self.samples, self.seed, f"{self.wall_ms:.1f}"]


def parse_n_range(text: str) -> list[int]:
    """``"16..128"`` -> ``[16, 32, 64, 128]``; also ``"8"`` and ``"4,6,9"``."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = (int(x) for x in text.split("..", 1))
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad n range {text!r}")
        out, n = [], lo
        while n <= hi:
            out.append(n)
            n *= 2
        return out
    return [int(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# Calculus identities
# ---------------------------------------------------------------------------


def calculus_suite(n_max: int, seed: int, count: int = 200) -> dict[str, float]:
    """Worst residual per identity over ``count`` random functionals.

    Returned keys ending in ``slack`` must be nonnegative; all others below
    ``RESIDUAL_TOL``.
    """
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in ("product_rule", "adjoint", "ibp", "integrated_mehler", "L_delta_D",
                               "roundtrip", "parseval")}
    worst["poincare_slack"] = np.inf
    for _ in range(count):
        n = int(rng.integers(2, n_max + 1))
        space = RademacherSpace(rng.uniform(0.05, 0.95, n))
        F = random_table_functional(n, rng)
        G = random_table_functional(n, rng)
        P1, P2 = random_polynomial(space, rng), random_polynomial(space, rng)
        omegas = space.sample(rng, 5)
        for omega in omegas:
            k = int(rng.integers(n))
            worst["product_rule"] = max(worst["product_rule"], float(verify_product_rule(P1, P2, space, omega, k)))
        u = [random_table_functional(n, rng) for _ in range(n)]
        worst["adjoint"] = max(worst["adjoint"], verify_adjoint(F, u, space))
        worst["ibp"] = max(worst["ibp"], verify_ibp(F, G, space))
        ks = list(rng.choice(n, size=min(n, int(rng.integers(1, 3))), replace=False))
        worst["integrated_mehler"] = max(worst["integrated_mehler"], verify_integrated_mehler(F, space, ks))
        worst["L_delta_D"] = max(worst["L_delta_D"], verify_L_equals_minus_delta_D(F, space))
        worst["poincare_slack"] = min(worst["poincare_slack"], verify_poincare(F, space))
        table = F.table(space)
        dec = walsh_expand(table, space)
        worst["roundtrip"] = max(worst["roundtrip"], float(np.max(np.abs(reconstruct_all(dec) - table))))
        second = float(space.weights() @ table ** 2)
        worst["parseval"] = max(worst["parseval"], abs(second - float(dec.coefficients @ dec.coefficients)) / second)
    return worst


def calculus_ok(worst: dict[str, float]) -> bool:
    return all(v >= -1e-12 if k.endswith("slack") else v < RESIDUAL_TOL for k, v in worst.items())


# ---------------------------------------------------------------------------
# Bound experiments
# ---------------------------------------------------------------------------


def build_model(config: ExperimentConfig, n: int) -> tuple[FunctionalVector, object]:
    """Model and Gaussian target for one ``n``."""
    if config.model == "subgraph":
        m = SubgraphVector([GraphSpec.parse(t) for t in config.patterns], n, config.p)
        return m, m.target()
    if config.model == "degree":
        m = DegreeVector(n, config.theta, config.degrees)
        return m, m.target()
    m = VolumeVector(CubicalLattice(config.dim, n), config.model, config.p)
    return m, m.target(config.target if config.model == "plaquette" else "stated")


def _bound_rows(config: ExperimentConfig, n: int) -> list[ResultRow]:
    t0 = time.perf_counter()
    model, target = build_model(config, n)
    report = b_terms(model, target, backend=config.backend, samples=config.samples, seed=config.seed)
    ms = 1000.0 * (time.perf_counter() - t0)
    samples = report.meta["samples"]
    name = config.experiment_name
    rows = []
    for term in ("gap", "B1", "B2", "B3", "B4"):
        vals = report.gap if term == "gap" else report.terms[term]
        ses = report.std_errors.get(term, np.zeros_like(vals))
        for a in range(model.d):
            for b in range(model.d):
                rows.append(ResultRow(name, n, str(a), str(b), term, float(vals[a, b]), float(ses[a, b]),
                                      samples, config.seed, ms))
    rows.append(ResultRow(name, n, "", "", "total", report.total, report.total_std_error, samples, config.seed, ms))
    return rows


def _surrogate_rows(config: ExperimentConfig, n: int) -> list[ResultRow]:
    t0 = time.perf_counter()
    model, target = build_model(config, n)
    res = d4_surrogate(model.sample_values, target, samples=config.samples, seed=config.seed)
    report = b_terms(model, target, backend=config.backend, samples=config.samples, seed=config.seed)
    ms = 1000.0 * (time.perf_counter() - t0)
    name = config.experiment_name
    return [
        ResultRow(name, n, "", "", "surrogate", res.max_discrepancy, res.std_error, config.samples, config.seed, ms),
        ResultRow(name, n, "", "", "total", report.total, report.total_std_error, report.meta["samples"],
                  config.seed, ms),
    ]


def rate_rows(rows: list[ResultRow], seed: int) -> list[ResultRow]:
    """Slope, intercept and r^2 of ``log total`` against ``log n`` per experiment."""
    out = []
    by_exp: dict[str, list] = {}
    for r in rows:
        if r.term == "total":
            by_exp.setdefault(r.experiment, []).append((r.n, r.value))
    for exp_name, pts in by_exp.items():
        if len(pts) < 3:
            continue
        fit = fit_rate(sorted(pts))
        n_max = max(n for n, _ in pts)
        for term, val in (("slope", fit.slope), ("intercept", fit.intercept), ("r2", fit.r2)):
            out.append(ResultRow(exp_name, n_max, "", "", term, val, 0.0, len(pts), seed, 0.0))
    return out


def run(config: ExperimentConfig) -> list[ResultRow]:
    """Execute one experiment and write CSV/JSON if an output path is set."""
    rows: list[ResultRow] = []
    if config.kind == "verify-calculus":
        for n in config.n_values:
            t0 = time.perf_counter()
            worst = calculus_suite(n, config.seed, config.count)
            ms = 1000.0 * (time.perf_counter() - t0)
            rows += [ResultRow("verify-calculus", n, "", "", k, v, 0.0, config.count, config.seed, ms)
                     for k, v in worst.items()]
    elif config.kind in ("bound-subgraph", "bound-degree", "bound-cubical"):
        for n in config.n_values:
            rows += _bound_rows(config, n)
    elif config.kind == "surrogate":
        for n in config.n_values:
            rows += _surrogate_rows(config, n)
    else:
        if not config.out:
            raise ValidationError("rates needs --out pointing at a previous results CSV")
        prior = read_csv(config.out)
        prior = [r for r in prior if r.term not in ("slope", "intercept", "r2")]
        rows = prior + rate_rows(prior, config.seed)
    if config.out:
        write_outputs(rows, config)
    return rows


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            ResultRow(r["experiment"], int(r["n"]), r["i"], r["j"], r["term"], float(r["value"]),
                      float(r["std_error"]), int(r["samples"]), int(r["seed"]), float(r["wall_ms"]))
            for r in reader
        ]


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_outputs(rows: list[ResultRow], config: ExperimentConfig) -> None:
    path = Path(config.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.as_list())
    summary = {
        "version": version_string(),
        "config": asdict(config),
        "rows": [asdict(r) for r in rows],
    }
    path.with_suffix(".json").write_text(json.dumps(summary, indent=2, default=float))
