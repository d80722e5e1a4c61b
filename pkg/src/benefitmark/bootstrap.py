"""Nonparametric bootstrap over subjects, re-running the whole estimation pipeline.

Each replicate draws its resample from a seed derived from the master seed
and the replicate index alone, so results do not depend on the order or
process in which replicates run.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import AnalysisConfig, TrialDataset
from .errors import BenefitmarkError, BootstrapError, ValidationError
from .metrics import FPR_GRID, roc_on_grid
from .pipeline import analyze

MAX_FAILURE_FRACTION = 0.20


def percentile_interval(values, level: float = 0.90) -> tuple[float, float]:
    """Equal-tailed empirical quantiles, linear interpolation between order statistics."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValidationError("need at least 2 values for a percentile interval")
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


def bootstrap_se(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValidationError("need at least 2 values for a standard error")
    return float(np.std(values, ddof=1))


def replicate_seed(master: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(replicate, 0))


@dataclass
class BootstrapResult:
    requested: int
    seed: int
    keys: list
    replicate_ids: list = field(default_factory=list)
    aucs: np.ndarray = None            # (replicates, settings)
    roc_grid: np.ndarray = None        # (replicates, settings, grid)
    bandwidths: np.ndarray = None      # (replicates, settings); nan for binary markers
    failures: list = field(default_factory=list)

    @property
    def replicates(self) -> int:
        return len(self.replicate_ids)

    def column(self, marker: str, approach: str, value: float) -> int:
        return self.keys.index((marker, approach, value))


def run_replicate(data: TrialDataset, config: AnalysisConfig, replicate: int, pipeline=analyze):
    """One bootstrap replicate; returns ``(aucs, roc grids, bandwidths)`` or a failure string."""
    rng = np.random.default_rng(replicate_seed(config.seed, replicate))
    index = rng.integers(0, data.n, data.n)
    t = data.treatment[index]
    if not (np.any(t == 0) and np.any(t == 1)):
        return "empty treatment arm"
    try:
        result = pipeline(data.subset(index), config, replicate)
    except BenefitmarkError as exc:
        return f"{type(exc).__name__}: {exc}"
    aucs = np.array([s.auc for s in result.settings])
    grids = np.array([roc_on_grid(s.roc) for s in result.settings])
    bws = np.array([np.nan if s.curve.bandwidth is None else s.curve.bandwidth
                    for s in result.settings])
    return aucs, grids, bws


_STATE: dict = {}


def _init_worker(data, config, pipeline):
    _STATE.update(data=data, config=config, pipeline=pipeline)


def _worker(replicate: int):
    return run_replicate(_STATE["data"], _STATE["config"], replicate, _STATE["pipeline"])


def worker_count(requested: int | None = None) -> int:
    """Worker processes to use: explicit request, else ``BENEFITMARK_THREADS`` (0 = all CPUs)."""
    if requested is None:
        try:
            requested = int(os.environ.get("BENEFITMARK_THREADS", "1"))
        except ValueError:
            raise ValidationError("BENEFITMARK_THREADS must be an integer") from None
    if requested < 0:
        raise ValidationError("worker count must be >= 0")
    return requested or (os.cpu_count() or 1)


def run_bootstrap(data: TrialDataset, config: AnalysisConfig, pipeline=analyze, *,
                  keys=None, workers: int | None = 1) -> BootstrapResult:
    """Resample subjects ``config.bootstrap_replicates`` times and rerun ``pipeline``.

    ``keys`` lists the setting keys the pipeline produces (taken from a run on
    the full data when omitted). Failed replicates are recorded; more than
    20% failures aborts.
    """
    R = config.bootstrap_replicates
    if R < 1:
        raise ValidationError("bootstrap needs at least one replicate")
    if keys is None:
        keys = [s.key for s in pipeline(data, config, 0).settings]
    ids = range(1, R + 1)
    n_workers = worker_count(workers)
    if n_workers == 1:
        outputs = [run_replicate(data, config, r, pipeline) for r in ids]
    else:
        with ProcessPoolExecutor(n_workers, initializer=_init_worker,
                                 initargs=(data, config, pipeline)) as pool:
            outputs = list(pool.map(_worker, ids, chunksize=max(1, R // (4 * n_workers))))
    res = BootstrapResult(R, config.seed, list(keys))
    good = []
    for r, out in zip(ids, outputs):
        if isinstance(out, str):
            res.failures.append((r, out))
        else:
            res.replicate_ids.append(r)
            good.append(out)
    if len(res.failures) > MAX_FAILURE_FRACTION * R:
        reasons = sorted({reason for _, reason in res.failures})
        raise BootstrapError(
            f"{len(res.failures)} of {R} bootstrap replicates failed: {'; '.join(reasons[:3])}")
    S = len(keys)
    if good:
        res.aucs = np.array([g[0] for g in good])
        res.roc_grid = np.array([g[1] for g in good])
        res.bandwidths = np.array([g[2] for g in good])
    else:
        res.aucs = np.empty((0, S))
        res.roc_grid = np.empty((0, S, len(FPR_GRID)))
        res.bandwidths = np.empty((0, S))
    return res


def pointwise_roc_band(result: BootstrapResult, marker: str, approach: str, value: float,
                       level: float = 0.90, grid=FPR_GRID):
    """Per-grid-point percentile interval of replicate TPRs: ``(grid, lower, upper)``."""
    grid = np.asarray(grid, dtype=float)
    curves = result.roc_grid[:, result.column(marker, approach, value), :]
    if curves.shape[1] != grid.size:
        raise ValidationError("replicate curves are stored on a different fpr grid")
    bounds = np.array([percentile_interval(curves[:, g], level) for g in range(grid.size)])
    return grid, bounds[:, 0], bounds[:, 1]
