"""Monte-Carlo runner: SNR sweeps, MSE / P_tf aggregation and CRLB pairing.

Every trial is an independent work unit whose random draws come from a
seed derived from ``(master seed, snr index, trial index)``, so results do
not depend on scheduling.  Within a trial all selected algorithms see the
same received vector.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import interp1d

from .crlb import CrlbReport, crlb_averaged
from .estimators import (
    ALGORITHMS,
    GridSpec,
    SearchCache,
    ZeroDenominator,
    estimate,
)
from .model import (
    ChannelProfile,
    Impairments,
    SystemConfig,
    TrainingMatrix,
    generate_channel,
    generate_training,
    synthesize,
)
from .numerics import RankDeficient

log = logging.getLogger(__name__)

CSV_COLUMNS = ("snr_db", "algo", "mse_eps", "mse_eta", "mse_theta", "mse_h", "p_tf",
               "crlb_eps_woc", "crlb_eps_wc", "crlb_eta_woc", "crlb_eta_wc",
               "crlb_h_trace", "n_ok", "n_failed")
CRLB_COLUMNS = ("snr_db", "theta", "crlb_eps_woc", "crlb_eps_wc", "crlb_eta_woc",
                "crlb_eta_wc", "crlb_h_trace")
THREADS_ENV = "MIMO_SYNC_THREADS"

# spawn keys of the plan-level streams; trial streams use (snr index, trial index)
_TRAINING_KEY = (2 ** 31,)
_CRLB_KEY = (2 ** 31 + 1,)

# estimator failures that exclude a trial instead of aborting the run
TRIAL_ERRORS = (RankDeficient, ZeroDenominator, np.linalg.LinAlgError)


def snr_to_noise_var(snr_db) -> np.ndarray | float:
    """``sigma_w^2 = 10^(-SNR/10)`` for unit-power training and channel."""
    out = 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def format_float(x: float) -> str:
    return "%.17e" % x


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {n}")
    return n


def mse(estimates, truth) -> float:
    """Mean over trials of ``||estimate - truth||^2``.

    Scalars and complex vectors are both accepted; for vectors the squared
    modulus is summed over entries.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("mse needs at least one estimate")
    truth = np.asarray(truth)
    err = [np.sum(np.abs(np.asarray(e) - truth) ** 2) for e in estimates]
    return float(np.mean(err))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce a Monte-Carlo run.

    `cfg.noise_var` is ignored; each SNR point sets its own variance.
    `training_seed` defaults to a stream derived from `seed`.  With
    `redraw_training` every trial draws its own training, and the CRLB
    columns still use the plan training.
    """

    cfg: SystemConfig
    grid: GridSpec
    imp: Impairments
    snr_db: tuple[float, ...]
    n_trials: int
    algorithms: tuple[str, ...] = ALGORITHMS
    profile: ChannelProfile | None = None
    seed: int = 0
    training_seed: int | None = None
    redraw_training: bool = False
    crlb_realizations: int = 100
    crlb_thetas: tuple[int, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "algorithms",
                           tuple(a.upper() for a in self.algorithms))
        object.__setattr__(self, "crlb_thetas", tuple(int(t) for t in self.crlb_thetas))
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if not self.snr_db:
            raise ValueError("snr list must not be empty")
        if not self.algorithms:
            raise ValueError("at least one algorithm must be selected")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.crlb_realizations < 0:
            raise ValueError("crlb_realizations must be nonnegative")
        self.imp.check(self.cfg)
        self.grid.check(self.cfg)

    def training(self) -> TrainingMatrix:
        if self.training_seed is not None:
            return generate_training(self.cfg, self.training_seed)
        return generate_training(self.cfg, np.random.SeedSequence(self.seed, spawn_key=_TRAINING_KEY))

    def trial_seeds(self, snr_index: int, trial: int):
        """Independent (channel, noise, training) streams of one trial."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(snr_index, trial))
        return ss.spawn(3)

    def crlb_seed(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=_CRLB_KEY)

    def with_overrides(self, **changes) -> "ExperimentPlan":
        return dataclasses.replace(self, **changes)


@dataclass
class ReportRow:
    snr_db: float
    algo: str
    mse_eps: float
    mse_eta: float
    mse_theta: float
    mse_h: float
    p_tf: float
    crlb_eps_woc: float
    crlb_eps_wc: float
    crlb_eta_woc: float
    crlb_eta_wc: float
    crlb_h_trace: float
    n_ok: int
    n_failed: int

    def cells(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if name == "algo":
                out.append(v)
            elif name in ("n_ok", "n_failed"):
                out.append(str(int(v)))
            else:
                out.append(format_float(float(v)))
        return out


@dataclass
class TrialReport:
    """Aggregated rows plus the per-trial records behind them."""

    rows: list[ReportRow]
    trials: list[dict] = field(default_factory=list)
    elapsed: float = 0.0

    def row(self, snr_db: float, algo: str) -> ReportRow:
        for r in self.rows:
            if r.snr_db == float(snr_db) and r.algo == algo.upper():
                return r
        raise KeyError((snr_db, algo))

    def curve(self, algo: str, column: str) -> tuple[np.ndarray, np.ndarray]:
        """``(snr_db, values)`` of one column for one algorithm."""
        rows = [r for r in self.rows if r.algo == algo.upper()]
        return (np.array([r.snr_db for r in rows]),
                np.array([getattr(r, column) for r in rows], dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def to_json(self) -> str:
        return json.dumps({"rows": [dataclasses.asdict(r) for r in self.rows],
                           "trials": self.trials, "elapsed": self.elapsed},
                          indent=1, allow_nan=True)

    @classmethod
    def read_csv(cls, path) -> "TrialReport":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
            rows = []
            for rec in reader:
                kw = {k: (v if k == "algo" else int(v) if k in ("n_ok", "n_failed") else float(v))
                      for k, v in rec.items()}
                rows.append(ReportRow(**kw))
        return cls(rows)


def _run_trial(plan, cache, training, snr_index, trial):
    """One received vector, every selected algorithm."""
    cfg = dataclasses.replace(plan.cfg, noise_var=snr_to_noise_var(plan.snr_db[snr_index]))
    ch_seed, noise_seed, tr_seed = plan.trial_seeds(snr_index, trial)
    if plan.redraw_training:
        training = generate_training(cfg, tr_seed)
        cache = SearchCache(cfg, training, plan.grid)
    ch = generate_channel(cfg, plan.profile, ch_seed)
    r = synthesize(cfg, training, plan.imp, ch, noise_seed)
    h_true = ch.stacked()
    out = {}
    for algo in plan.algorithms:
        t0 = time.perf_counter()
        try:
            res = estimate(algo, cfg, training, r, plan.grid, cache)
        except TRIAL_ERRORS as exc:
            log.warning("trial %d at %.1f dB: %s failed (%s)", trial,
                        plan.snr_db[snr_index], algo, exc)
            out[algo] = {"ok": False, "error": f"{type(exc).__name__}: {exc}",
                         "elapsed": time.perf_counter() - t0}
            continue
        out[algo] = {
            "ok": True,
            "eps": res.eps, "eta": res.eta, "theta": res.theta,
            "h_err": float(np.sum(np.abs(res.h.stacked() - h_true) ** 2)),
            "flags": list(res.flags),
            "elapsed": time.perf_counter() - t0,
        }
    return out


def _aggregate(plan: ExperimentPlan, snr_db: float, algo: str, recs, bound: CrlbReport | None):
    ok = [r for r in recs if r["ok"]]
    nan = float("nan")
    imp = plan.imp
    if ok:
        stats = (mse([r["eps"] for r in ok], imp.eps),
                 mse([r["eta"] for r in ok], imp.eta),
                 mse([r["theta"] for r in ok], imp.theta),
                 float(np.mean([r["h_err"] for r in ok])),
                 float(np.mean([abs(r["theta"] - imp.theta) >= 1 for r in ok])))
    else:
        stats = (nan,) * 5
    b = (bound.eps_woc, bound.eps_wc, bound.eta_woc, bound.eta_wc, bound.h_trace) \
        if bound is not None else (nan,) * 5
    return ReportRow(snr_db, algo, *stats, *b, len(ok), len(recs) - len(ok))


def run_experiment(plan: ExperimentPlan, threads: int | None = None,
                   progress=None) -> TrialReport:
    """Run every (SNR, trial) of `plan` and aggregate one row per (SNR, algorithm).

    Parameters
    ----------
    threads : int, optional
        Worker threads; defaults to ``MIMO_SYNC_THREADS`` (1 when unset).
        Results are identical for any thread count.
    progress : callable, optional
        Called as ``progress(done, total)`` after each trial.
    """
    t_start = time.perf_counter()
    threads = worker_count() if threads is None else int(threads)
    training = plan.training()
    cache = SearchCache(plan.cfg, training, plan.grid)
    if not plan.redraw_training:
        # fill the lazy caches before workers share them
        if {"ML", "MML"} & set(plan.algorithms):
            cache.eta_bases
        if "SML" in plan.algorithms:
            cache.theta_bases

    bounds = [None] * len(plan.snr_db)
    if plan.crlb_realizations > 0:
        bounds = crlb_averaged(plan.cfg, training, plan.imp, snr_to_noise_var(list(plan.snr_db)),
                               plan.crlb_realizations, plan.crlb_seed(), plan.profile)

    jobs = [(i, t) for i in range(len(plan.snr_db)) for t in range(plan.n_trials)]
    done = 0

    def work(job):
        return _run_trial(plan, cache, training, *job)

    results = []
    if threads == 1:
        for job in jobs:
            results.append(work(job))
            done += 1
            if progress:
                progress(done, len(jobs))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for out in pool.map(work, jobs):      # map keeps submission order
                results.append(out)
                done += 1
                if progress:
                    progress(done, len(jobs))

    rows, trials = [], []
    for i, snr in enumerate(plan.snr_db):
        block = results[i * plan.n_trials:(i + 1) * plan.n_trials]
        for algo in plan.algorithms:
            rows.append(_aggregate(plan, snr, algo, [b[algo] for b in block], bounds[i]))
        for t, b in enumerate(block):
            trials.append({"snr_db": snr, "trial": t, "results": b})
    return TrialReport(rows, trials, time.perf_counter() - t_start)


# -- CRLB sweeps -------------------------------------------------------------

@dataclass
class CrlbTable:
    """Averaged CRLBs per (theta, SNR)."""

    snr_db: tuple[float, ...]
    reports: dict          # theta -> list[CrlbReport], aligned with snr_db

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CRLB_COLUMNS)
        for theta, reps in self.reports.items():
            for snr, rep in zip(self.snr_db, reps):
                w.writerow([format_float(snr), str(theta)] +
                           [format_float(getattr(rep, f)) for f in
                            ("eps_woc", "eps_wc", "eta_woc", "eta_wc", "h_trace")])
        return buf.getvalue()


def crlb_sweep(cfg: SystemConfig, training: TrainingMatrix, imp: Impairments, snr_db,
               thetas, n_realizations: int, seed=None,
               profile: ChannelProfile | None = None) -> CrlbTable:
    """Channel-averaged CRLBs for every timing error in `thetas`.

    All timing variants share the same channel draws.
    """
    snr_db = tuple(float(s) for s in snr_db)
    if not snr_db:
        raise ValueError("snr list must not be empty")
    nv = snr_to_noise_var(list(snr_db))
    reports = {}
    for theta in thetas:
        variant = Impairments(imp.eps, imp.eta, int(theta))
        reports[int(theta)] = crlb_averaged(cfg, training, variant, nv, n_realizations,
                                            seed, profile)
    return CrlbTable(snr_db, reports)


def snr_offset(snr_db, curve, reference, at=None) -> np.ndarray:
    """Extra SNR (dB) `curve` needs to reach the values of `reference`.

    For each SNR in `at` (default: all points) the value of `curve` there is
    located on `reference` by linear interpolation of ``log10(reference)``
    against SNR (extrapolating past the ends).  A positive offset means
    `curve` is worse than `reference`.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    curve = np.asarray(curve, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if np.any(curve <= 0) or np.any(reference <= 0):
        raise ValueError("snr_offset needs positive curves")
    inv = interp1d(np.log10(reference), snr_db, fill_value="extrapolate", assume_sorted=False)
    at = snr_db if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    target = np.interp(at, snr_db, np.log10(curve))
    return at - inv(target)


@dataclass
class CouplingResult:
    table: CrlbTable
    offsets: dict


def coupling_study(cfg: SystemConfig, training: TrainingMatrix, snr_db, seed=None,
                   imp: Impairments | None = None, thetas=(0, -20),
                   n_realizations: int = 1000,
                   profile: ChannelProfile | None = None) -> CouplingResult:
    """CRLB curves with and without the channel for two timing errors.

    Reported offsets (dB of SNR):

    ``eps_channel``
        CRLB(eps_wc) vs CRLB(eps_woc), first timing error.
    ``eta_channel``
        CRLB(eta_wc) vs CRLB(eta_woc), first timing error.
    ``eps_timing``, ``eta_timing``
        woc bound at the second timing error vs the first.
    """
    if imp is None:
        imp = Impairments(0.21, 120e-6, 0)
    thetas = tuple(int(t) for t in thetas)
    if len(thetas) != 2:
        raise ValueError("coupling_study compares exactly two timing errors")
    table = crlb_sweep(cfg, training, imp, snr_db, thetas, n_realizations, seed, profile)
    base, other = table.reports[thetas[0]], table.reports[thetas[1]]

    def off(a, b, name_a, name_b):
        va = [getattr(r, name_a) for r in a]
        vb = [getattr(r, name_b) for r in b]
        if len(va) == 1:
            # bounds are proportional to 1/SNR, so one point fixes the shift
            return float(10 * np.log10(va[0] / vb[0]))
        return float(np.mean(snr_offset(table.snr_db, va, vb)))

    offsets = {
        "eps_channel": off(base, base, "eps_wc", "eps_woc"),
        "eta_channel": off(base, base, "eta_wc", "eta_woc"),
        "eps_timing": off(other, base, "eps_woc", "eps_woc"),
        "eta_timing": off(other, base, "eta_woc", "eta_woc"),
    }
    return CouplingResult(table, offsets)
