"""Utility metrics and the Monte-Carlo experiment runner."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import statistics
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .amplification import TabulatedBound
from .errors import DPAssortError, ParameterError, UndefinedStatisticError
from .estimators import ALGORITHMS, BudgetSpec, estimate
from .graph import Graph, exact_stats, generate_ba, load_edge_list_file
from .mechanisms import RngStream

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
TRIAL_HEADER = ["algorithm", "epsilon", "trial", "q_hat", "re", "sign_correct", "seed"]
SUMMARY_HEADER = ["algorithm", "epsilon", "mean_re", "mse", "sign_accuracy", "trials", "median_re"]


# metrics

def relative_error(estimate: float, truth: float, n: int, *, literal_min: bool = False) -> float:
    """``|estimate - truth| / max(|truth|, eta)`` with ``eta = n / 1000``.

    ``literal_min`` uses ``min(truth, eta)`` instead, which is negative for
    disassortative graphs; it exists only for comparison.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    eta = n / 1000.0
    denom = min(truth, eta) if literal_min else max(abs(truth), eta)
    return abs(estimate - truth) / denom


def empirical_mse(estimates, truth: float) -> float:
    values = np.asarray(estimates, dtype=np.float64)
    if values.size == 0:
        raise ParameterError("empirical MSE needs at least one estimate")
    return float(np.mean((values - truth) ** 2))


def sign_accuracy(estimates, truth: float) -> float:
    """Share of estimates with the sign of ``truth``; zeros count as wrong."""
    if truth == 0:
        raise UndefinedStatisticError("sign accuracy is undefined when the true value is 0")
    values = np.asarray(estimates, dtype=np.float64)
    if values.size == 0:
        raise ParameterError("sign accuracy needs at least one estimate")
    return float(np.mean(np.sign(values) == np.sign(truth)))


def ratio_moment_approx(EX: float, EY: float, VX: float, VY: float, CovXY: float) -> tuple[float, float]:
    """Second-order Taylor approximations of ``E[X/Y]`` and ``Var[X/Y]``."""
    if EY == 0:
        raise ZeroDivisionError("E[Y] must be non-zero")
    mean = EX / EY - CovXY / EY**2 + EX * VY / EY**3
    var = VX / EY**2 - 2 * EX * CovXY / EY**3 + EX**2 * VY / EY**4
    return mean, var


# experiment specification

class BAParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n: int = Field(gt=1)
    m: int = Field(ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _m_below_n(self):
        if self.m >= self.n:
            raise ValueError("m must be smaller than n")
        return self


class GraphSource(BaseModel):
    model_config = ConfigDict(extra="forbid")
    path: str | None = None
    one_indexed: bool = False
    skip_header: bool = False
    ba: BAParams | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.path is None) == (self.ba is None):
            raise ValueError("give exactly one of 'path' or 'ba'")
        return self

    def load(self) -> Graph:
        if self.ba is not None:
            return generate_ba(self.ba.n, self.ba.m, self.ba.seed)
        return load_edge_list_file(self.path, one_indexed=self.one_indexed, skip_header=self.skip_header)


class Splits(BaseModel):
    model_config = ConfigDict(extra="forbid")
    local_eps1_fraction: float = Field(0.6, gt=0, lt=1)
    shuffle_alpha: float = Field(0.4, gt=0, lt=1)
    decentral_eps1_fraction: float = Field(0.4, gt=0, lt=1)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    graph: GraphSource
    algorithms: list[Literal["local", "shuffle", "decentral"]] = Field(default_factory=lambda: list(ALGORITHMS))
    epsilons: list[float] = Field(default_factory=lambda: list(DEFAULT_EPSILONS))
    splits: Splits = Field(default_factory=Splits)
    delta: float = Field(1e-8, gt=0, lt=1)
    trials_re: int = Field(20, ge=1)
    trials_sign: int = Field(100, ge=1)
    seed: int = 0
    workers: int = Field(1, ge=1)
    common_random_numbers: bool = True
    re_literal_min: bool = False
    m_override: int | None = Field(None, ge=1)
    bound_mode: Literal["closed_form", "external_numerical"] = "closed_form"
    bound_table: str | None = None

    @field_validator("epsilons")
    @classmethod
    def _positive_epsilons(cls, v):
        if not v:
            raise ValueError("epsilon grid must not be empty")
        for e in v:
            if not e > 0:
                raise ValueError(f"epsilon values must be > 0, got {e}")
        return v

    @field_validator("algorithms")
    @classmethod
    def _some_algorithms(cls, v):
        if not v:
            raise ValueError("at least one algorithm is required")
        return list(dict.fromkeys(v))

    @model_validator(mode="after")
    def _table_for_numerical(self):
        if self.bound_mode == "external_numerical" and not self.bound_table:
            raise ValueError("bound_mode 'external_numerical' needs bound_table")
        return self

    @property
    def trials(self) -> int:
        return max(self.trials_re, self.trials_sign)

    def budgets(self, algorithm: str, epsilon: float) -> BudgetSpec:
        s = self.splits
        if algorithm == "local":
            return BudgetSpec.local(epsilon, s.local_eps1_fraction)
        if algorithm == "shuffle":
            return BudgetSpec.shuffle(epsilon, self.delta, s.shuffle_alpha)
        return BudgetSpec.decentral(epsilon, self.delta, s.decentral_eps1_fraction)


def load_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return ExperimentSpec.model_validate_json(fh.read())


# results

@dataclass
class TrialRecord:
    trial: int
    seed: int
    q_hat: float | None
    error: str | None = None


@dataclass
class CellResult:
    algorithm: str
    epsilon: float
    truth: float
    n: int
    trials_re: int
    trials_sign: int
    records: list[TrialRecord]
    re_literal_min: bool = False
    wall_time: float = 0.0

    @property
    def partial(self) -> bool:
        return any(r.error is not None for r in self.records)

    @property
    def failures(self) -> list[TrialRecord]:
        return [r for r in self.records if r.error is not None]

    def _ok(self, limit: int) -> np.ndarray:
        return np.array([r.q_hat for r in self.records[:limit] if r.q_hat is not None], dtype=np.float64)

    @property
    def q_hats(self) -> list[float]:
        """Estimates of the relative-error trials."""
        return self._ok(self.trials_re).tolist()

    def re_values(self) -> np.ndarray:
        return np.array([relative_error(q, self.truth, self.n, literal_min=self.re_literal_min)
                         for q in self._ok(self.trials_re)])

    @property
    def mean_re(self) -> float:
        re = self.re_values()
        return float(re.mean()) if re.size else math.nan

    @property
    def median_re(self) -> float:
        re = self.re_values()
        return float(statistics.median(re.tolist())) if re.size else math.nan

    @property
    def mse(self) -> float:
        q = self._ok(self.trials_re)
        return empirical_mse(q, self.truth) if q.size else math.nan

    @property
    def sign_accuracy(self) -> float:
        q = self._ok(self.trials_sign)
        if self.truth == 0 or q.size == 0:
            return math.nan
        return sign_accuracy(q, self.truth)


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    truth: float
    provenance: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not any(c.partial for c in self.cells)

    def cell(self, algorithm: str, epsilon: float) -> CellResult:
        for c in self.cells:
            if c.algorithm == algorithm and c.epsilon == epsilon:
                return c
        raise KeyError((algorithm, epsilon))

    def summary_rows(self) -> list[list]:
        return [[c.algorithm, _fmt(c.epsilon), _fmt(c.mean_re), _fmt(c.mse), _fmt(c.sign_accuracy),
                 len(c.q_hats), _fmt(c.median_re)] for c in self.cells]

    def trial_rows(self) -> list[list]:
        rows = []
        for c in self.cells:
            for r in c.records:
                if r.q_hat is None:
                    rows.append([c.algorithm, _fmt(c.epsilon), r.trial, "", "", "", r.seed])
                    continue
                re = relative_error(r.q_hat, c.truth, c.n, literal_min=c.re_literal_min)
                correct = int(c.truth != 0 and np.sign(r.q_hat) == np.sign(c.truth))
                rows.append([c.algorithm, _fmt(c.epsilon), r.trial, _fmt(r.q_hat), _fmt(re), correct, r.seed])
        return rows

    def summary_csv(self) -> str:
        return _csv_text(SUMMARY_HEADER, self.summary_rows())

    def trials_csv(self) -> str:
        return _csv_text(TRIAL_HEADER, self.trial_rows())

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance,
            "truth": self.truth,
            "complete": self.complete,
            "cells": [
                {
                    "algorithm": c.algorithm,
                    "epsilon": c.epsilon,
                    "mean_re": _json_float(c.mean_re),
                    "median_re": _json_float(c.median_re),
                    "mse": _json_float(c.mse),
                    "sign_accuracy": _json_float(c.sign_accuracy),
                    "trials_re": c.trials_re,
                    "trials_sign": c.trials_sign,
                    "wall_time": c.wall_time,
                    "q_hats": [r.q_hat for r in c.records],
                    "seeds": [r.seed for r in c.records],
                    "failures": [{"trial": r.trial, "error": r.error} for r in c.failures],
                }
                for c in self.cells
            ],
        }

    def write(self, out_dir, prefix: str = "experiment") -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trials": out / f"{prefix}_trials.csv",
            "summary": out / f"{prefix}_summary.csv",
            "json": out / f"{prefix}.json",
        }
        paths["trials"].write_text(self.trials_csv(), encoding="utf-8")
        paths["summary"].write_text(self.summary_csv(), encoding="utf-8")
        paths["json"].write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")
        return paths


def _fmt(x) -> str:
    return repr(float(x))


def _json_float(x: float):
    return None if math.isnan(x) else x


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# runner

def trial_seed(base_seed: int, algorithm: str, eps_index: int | None, trial: int) -> int:
    """Stable 63-bit seed of one trial.

    ``eps_index=None`` gives common random numbers across the epsilon grid.
    """
    h = hashlib.blake2b(digest_size=8, person=b"dpassort-trial")
    h.update(struct.pack("<q", base_seed))
    h.update(algorithm.encode())
    h.update(struct.pack("<qq", -1 if eps_index is None else eps_index, trial))
    return int.from_bytes(h.digest(), "little") >> 1


def _code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


ProgressFn = Callable[[str, float, int, int], None]


def run_experiment(spec: ExperimentSpec, graph: Graph | None = None, progress: ProgressFn | None = None) -> ExperimentResult:
    """Run every (algorithm, epsilon) cell of ``spec``.

    Trials are seeded from ``spec.seed`` alone, so the numbers do not depend
    on ``spec.workers`` or on execution order. Estimator errors are kept per
    trial and mark the cell partial.
    """
    g = graph if graph is not None else spec.graph.load()
    truth = exact_stats(g).r_u
    bound = None
    if spec.bound_mode == "external_numerical":
        bound = TabulatedBound.from_file(spec.bound_table, n=g.n, delta=spec.delta)

    cells_plan = [(a, i, eps) for a in spec.algorithms for i, eps in enumerate(spec.epsilons)]
    n_trials = spec.trials

    def run_cell(plan):
        algorithm, eps_index, eps = plan
        t0 = time.perf_counter()
        budgets = spec.budgets(algorithm, eps)
        kwargs = {"m_override": spec.m_override}
        if algorithm == "shuffle":
            kwargs.update(bound_mode=spec.bound_mode, bound=bound)
        records = []
        for t in range(n_trials):
            seed = trial_seed(spec.seed, algorithm, None if spec.common_random_numbers else eps_index, t)
            try:
                est = estimate(g, algorithm, budgets, RngStream(seed=seed, trial=t), **kwargs)
                records.append(TrialRecord(trial=t, seed=seed, q_hat=est.q_hat))
            except DPAssortError as exc:
                records.append(TrialRecord(trial=t, seed=seed, q_hat=None, error=f"{type(exc).__name__}: {exc}"))
        cell = CellResult(algorithm=algorithm, epsilon=eps, truth=truth, n=g.n,
                          trials_re=spec.trials_re, trials_sign=spec.trials_sign, records=records,
                          re_literal_min=spec.re_literal_min, wall_time=time.perf_counter() - t0)
        return cell

    t_start = time.perf_counter()
    cells: list[CellResult] = []
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        for done, cell in enumerate(pool.map(run_cell, cells_plan), start=1):
            cells.append(cell)
            logger.info("cell %s eps=%g done (%d/%d)", cell.algorithm, cell.epsilon, done, len(cells_plan))
            if progress is not None:
                progress(cell.algorithm, cell.epsilon, done, len(cells_plan))

    provenance = {
        "graph_digest": g.digest(),
        "n": g.n,
        "M": g.M,
        "r_u": truth,
        "seed": spec.seed,
        "code_version": _code_version(),
        "spec": spec.model_dump(),
        "wall_time": time.perf_counter() - t_start,
    }
    return ExperimentResult(cells=cells, truth=truth, provenance=provenance)
