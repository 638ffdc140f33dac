"""
Monte-Carlo experiment runner.

Trials are grouped into fixed-size chunks (by trial index) whose channels are
stacked along the subcarrier axis and solved in one vectorized call. The
chunk layout depends only on the trial count, never on the number of
workers, and every trial draws its random initial precoders from its own
seeded substream, so serial and parallel runs give identical output.
"""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import linalg
from ..channel import (ChannelError, ChannelSet, KroneckerSpec, TapProfile, gen_collinear_batch,
                       gen_kronecker, gen_rayleigh, gen_selective, load_channels, normalize_batch,
                       stack_subcarriers)
from ..metrics import (MetricError, channel_distance_per_subcarrier, dof_slope,
                       effective_distance_per_subcarrier, estimate_kronecker, max_collinearity_pooled,
                       max_collinearity_per_subcarrier, snr_to_sigma2, subcarrier_sum_rates,
                       unit_diagonal)
from ..precoding import (SolverError, closed_form_ia, greedy_avoidance, iterative_ia, max_sinr,
                         random_precoders, tdma, verify_alignment)
from ..rng import TAG_SOLVER, derive_seed
from .scenario import SCHEMA_VERSION, Scenario, ScenarioError

log = logging.getLogger(__name__)

CHUNK_TRIALS = 25
FAILURE_BUDGET = 0.01

CSV_COLUMNS = ("scenario", "strategy", "snr_db", "trial", "sum_rate", "leakage_rel",
               "iterations", "c_max", "d_hf", "d_h")

_SOLVER_ERRORS = (SolverError, linalg.LinAlgError, np.linalg.LinAlgError, MetricError)


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    strategy: str
    snr_db: float
    trial: int
    sum_rate: float
    leakage_rel: float
    iterations: int
    c_max: float
    d_hf: float
    d_h: float

    def values(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows: Sequence[ResultRow], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) if hasattr(r, c) else _fmt(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


# --------------------------------------------------------------------------
# channel batches
# --------------------------------------------------------------------------

def generate_batch(s: Scenario) -> list[ChannelSet]:
    """All trial channels of a scenario, normalized over the whole batch.

    A ``sir_db`` entry in the channel description weakens every cross link
    after normalization.
    """
    ch = s.channel
    d = s.dims
    model = ch["model"]
    try:
        if model == "rayleigh":
            sets = [gen_rayleigh(d, s.seed, t) for t in range(s.trials)]
        elif model == "kronecker":
            spec = KroneckerSpec.from_coefficients(d, ch["rho_tx"], ch["rho_rx"])
            sets = [gen_kronecker(d, spec, s.seed, t) for t in range(s.trials)]
        elif model == "selective":
            if "powers" in ch:
                profile = TapProfile(tuple(ch["powers"]))
            elif "decay_db" in ch:
                profile = TapProfile.exponential(ch["taps"], ch["decay_db"])
            else:
                profile = TapProfile.uniform(ch["taps"])
            sets = [gen_selective(d, profile, s.seed, t) for t in range(s.trials)]
        elif model == "collinear":
            sets = gen_collinear_batch(d, ch["target_c"], s.seed, trials=s.trials,
                                       cross_only=ch.get("cross_only", False))
        elif model == "file":
            base = s.base_dir or Path(".")
            sets = [load_channels(base / p) for p in ch["paths"][:s.trials]]
            for i, x in enumerate(sets):
                if (x.dims.K, x.dims.M, x.dims.N_rx, x.N_sc) != (d.K, d.M, d.N_rx, d.N_sc):
                    raise ScenarioError(f"channel.paths[{i}]",
                                        f"file dims {x.dims.to_dict()} do not match scenario dims")
        else:  # pragma: no cover - the schema rejects other models
            raise ScenarioError("channel.model", f"unknown model {model!r}")
    except ChannelError as exc:
        raise ScenarioError("channel", str(exc)) from exc
    sets = normalize_batch(sets)
    if ch.get("sir_db") is not None:
        sets = [x.with_sir(ch["sir_db"]) for x in sets]
    return sets


def trial_seed(s: Scenario, trial: int) -> int:
    return derive_seed(s.seed, TAG_SOLVER, trial)


def _initial(s: Scenario, sets, trials, restart):
    per = [random_precoders(x.dims, trial_seed(s, t), restart) for x, t in zip(sets, trials)]
    return [np.concatenate([p[k] for p in per]) for k in range(s.dims.K)]


# --------------------------------------------------------------------------
# chunk evaluation
# --------------------------------------------------------------------------

@dataclass
class _ChunkResult:
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _slices(sets):
    out, start = [], 0
    for x in sets:
        out.append(slice(start, start + x.N_sc))
        start += x.N_sc
    return out


def _solve(strategy, s: Scenario, S, sets, trials, sigma2):
    o = s.solver
    if strategy == "closed_ia":
        return closed_form_ia(S, o.eig_choice, sigma2=sigma2, strict=False)
    if strategy == "iter_ia":
        F0 = [_initial(s, sets, trials, r) for r in range(o.restarts)]
        return iterative_ia(S, max_iter=o.max_iter, tol=o.tol, restarts=o.restarts, F0=F0,
                            select_sigma2=float(snr_to_sigma2(o.select_snr_db)))
    if strategy == "max_sinr":
        return max_sinr(S, sigma2, max_iter=o.max_iter, tol=o.tol, F0=_initial(s, sets, trials, 0))
    if strategy == "greedy":
        return greedy_avoidance(S, sigma2, max_iter=o.max_iter, F0=_initial(s, sets, trials, 0))
    raise ScenarioError("strategies", f"unknown strategy {strategy!r}")


def _sigma2_free(strategy, s: Scenario) -> bool:
    return strategy == "iter_ia" or (strategy == "closed_ia" and s.solver.eig_choice != "best")


def _trial_failures(strategy, sol, sl, trials) -> dict:
    out = {}
    diag = sol.diagnostics
    if strategy == "closed_ia":
        for t, part in zip(trials, sl):
            if not np.all(diag.ok[part]):
                reason = "singular cross channel" if np.any(diag.info["singular"][part]) \
                    else "defective alignment eigenproblem"
                out[t] = f"closed_ia: {reason}"
            elif not np.all(diag.info["rank_ok"][part]):
                out[t] = "closed_ia: rank condition failed"
    return out


def _eval_chunk(s: Scenario, trials: Sequence[int], sets: Sequence[ChannelSet]) -> _ChunkResult:
    res = _ChunkResult()
    S = stack_subcarriers(sets)
    sl = _slices(sets)
    # a single-user network has no pair of links to compare
    c_max = [float(np.mean(max_collinearity_per_subcarrier(x))) if x.K > 1 else 0.0 for x in sets]
    d_h = [float(np.mean(channel_distance_per_subcarrier(x))) for x in sets]

    cache = {}

    def solve(strategy, sigma2):
        key = strategy if _sigma2_free(strategy, s) else (strategy, sigma2)
        if key not in cache:
            try:
                cache[key] = _solve(strategy, s, S, sets, trials, sigma2)
            except _SOLVER_ERRORS as exc:
                cache[key] = exc
        return cache[key]

    per_strategy = {st: [] for st in s.strategies}
    for snr in s.snr.points:
        sigma2 = float(snr_to_sigma2(snr))
        for st in s.strategies:
            if st == "tdma":
                for i, (t, x) in enumerate(zip(trials, sets)):
                    rate = tdma(x, sigma2, s.solver.tdma_mode).mean_rate
                    per_strategy[st].append((snr, i, rate, 0.0, 0, d_h[i]))
                continue
            sol = solve(st, sigma2)
            if isinstance(sol, Exception):
                for t in trials:
                    res.failures.setdefault(t, f"{st}: {sol}")
                continue
            res.failures.update({t: r for t, r in _trial_failures(st, sol, sl, trials).items()
                                 if t not in res.failures})
            rates = subcarrier_sum_rates(S, sol, sigma2)
            leak = verify_alignment(S, sol).leakage_rel
            dist = effective_distance_per_subcarrier(S, sol.F)
            iters = sol.diagnostics.iterations
            for i, part in enumerate(sl):
                per_strategy[st].append((snr, i, float(np.mean(rates[part])), float(np.mean(leak[part])),
                                         int(np.max(iters[part])), float(np.mean(dist[part]))))

    for st in s.strategies:
        for snr, i, rate, leak, iters, dist in per_strategy[st]:
            t = trials[i]
            if not all(math.isfinite(v) for v in (rate, leak, dist)) or rate < 0:
                res.failures.setdefault(t, f"{st}: non-finite result")
            res.rows.append(ResultRow(s.name, st, float(snr), int(t), rate, leak, iters,
                                      c_max[i], dist, d_h[i]))
    res.rows = [r for r in res.rows if r.trial not in res.failures]
    return res


def _chunks(n: int):
    return [list(range(a, min(a + CHUNK_TRIALS, n))) for a in range(0, n, CHUNK_TRIALS)]


def _map_chunks(fn, s: Scenario, batch, workers: int, *args):
    tasks = [(s, idx, [batch[t] for t in idx], *args) for idx in _chunks(len(batch))]
    if workers <= 1 or len(tasks) == 1:
        return [fn(*task) for task in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *task) for task in tasks]
        return [f.result() for f in futures]


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class MetricsReport:
    scenario: Scenario
    rows: list
    failures: dict
    rates: dict
    dof: dict
    channel_metrics: dict
    kind: str = "run"
    table: list = field(default_factory=list)
    requested: Optional[int] = None

    @property
    def requested_trials(self) -> int:
        return self.requested if self.requested is not None else self.scenario.trials

    @property
    def failed_trials(self) -> int:
        return len(self.failures)

    @property
    def successful_trials(self) -> int:
        return self.requested_trials - self.failed_trials

    @property
    def failure_rate(self) -> float:
        return self.failed_trials / self.requested_trials

    @property
    def budget_exceeded(self) -> bool:
        return self.failure_rate > FAILURE_BUDGET

    def mean_rate(self, strategy: str, snr_db: float) -> float:
        for e in self.rates[strategy]:
            if abs(e["snr_db"] - snr_db) < 1e-9:
                return e["mean"]
        raise KeyError((strategy, snr_db))

    def trial_rates(self, strategy: str, snr_db: float) -> np.ndarray:
        """Per-trial rates in trial order (successful trials only)."""
        return np.array([r.sum_rate for r in self.rows
                         if r.strategy == strategy and abs(r.snr_db - snr_db) < 1e-9])

    def csv(self) -> str:
        if self.kind == "run":
            return rows_to_csv(self.rows)
        columns = tuple(self.table[0].keys()) if self.table else ()
        return rows_to_csv(self.table, columns)

    def summary(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "scenario": self.scenario.to_dict(),
            "requested_trials": self.requested_trials,
            "successful_trials": self.successful_trials,
            "failed_trials": self.failed_trials,
            "failures": [{"trial": t, "reason": r} for t, r in sorted(self.failures.items(), key=str)],
            "rates": self.rates,
            "dof": self.dof,
            "channel_metrics": self.channel_metrics,
        }
        if self.table:
            out["table"] = self.table
        return out


def _aggregate(rows, strategies, snr_points):
    rates = {}
    for st in strategies:
        entries = []
        for snr in snr_points:
            sel = sorted((r for r in rows if r.strategy == st and r.snr_db == float(snr)),
                         key=lambda r: r.trial)
            vals = np.array([r.sum_rate for r in sel])
            n = vals.size
            entries.append({
                "snr_db": float(snr),
                "count": n,
                "mean": float(vals.mean()) if n else None,
                "stderr": float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else None,
                "leakage_rel": float(np.mean([r.leakage_rel for r in sel])) if n else None,
                "iterations": float(np.mean([r.iterations for r in sel])) if n else None,
                "d_hf": float(np.mean([r.d_hf for r in sel])) if n else None,
            })
        rates[st] = entries
    return rates


def _dof(rates, window):
    out = {}
    for st, entries in rates.items():
        pts = [(e["snr_db"], e["mean"]) for e in entries if e["mean"] is not None]
        try:
            fit = dof_slope(pts, window)
            out[st] = fit._asdict()
        except MetricError as exc:
            out[st] = {"error": str(exc)}
    return out


def _channel_metrics(batch, rows):
    K = batch[0].K
    kron = {"rx": [], "tx": []}
    for side in ("rx", "tx"):
        for k in range(K):
            R = unit_diagonal(estimate_kronecker(batch, k, side))
            off = np.abs(R - np.diag(np.diag(R)))
            kron[side].append(float(off.max()) if R.shape[0] > 1 else 0.0)
    c_trial = {r.trial: r.c_max for r in rows}
    d_trial = {r.trial: r.d_h for r in rows}
    return {
        "c_max_pooled": max_collinearity_pooled(batch) if K > 1 else 0.0,
        "c_max_mean": float(np.mean(list(c_trial.values()))) if c_trial else None,
        "d_h_mean": float(np.mean(list(d_trial.values()))) if d_trial else None,
        "kronecker_offdiag": kron,
        "generator": {k: v for k, v in batch[0].provenance.items() if k not in ("trial",)},
    }


def run_scenario(s: Scenario, workers: int = 1, batch: Optional[list] = None) -> MetricsReport:
    """Run every strategy of ``s`` at every SNR point on every trial."""
    batch = generate_batch(s) if batch is None else batch
    parts = _map_chunks(_eval_chunk, s, batch, workers)
    rows, failures = [], {}
    for p in parts:
        rows.extend(p.rows)
        failures.update(p.failures)
    order = {st: i for i, st in enumerate(s.strategies)}
    snr_index = {float(x): i for i, x in enumerate(s.snr.points)}
    rows.sort(key=lambda r: (order[r.strategy], snr_index[r.snr_db], r.trial))
    for t, reason in sorted(failures.items()):
        log.warning("trial %d excluded: %s", t, reason)
    rates = _aggregate(rows, s.strategies, s.snr.points)
    return MetricsReport(s, rows, failures, rates, _dof(rates, s.solver.dof_window),
                         _channel_metrics(batch, rows))


# --------------------------------------------------------------------------
# Max-SINR crossover
# --------------------------------------------------------------------------

def _crossover_chunk(s: Scenario, trials, sets) -> _ChunkResult:
    res = _ChunkResult()
    S = stack_subcarriers(sets)
    sl = _slices(sets)
    F0 = _initial(s, sets, trials, 0)
    cf_fixed = None
    for snr in s.snr.points:
        sigma2 = float(snr_to_sigma2(snr))
        if cf_fixed is None or s.solver.eig_choice == "best":
            cf = closed_form_ia(S, s.solver.eig_choice, sigma2=sigma2, strict=False)
            cf_fixed = cf
        else:
            cf = cf_fixed
        res.failures.update(_trial_failures("closed_ia", cf, sl, trials))
        ia = subcarrier_sum_rates(S, cf, sigma2)
        ms = max_sinr(S, sigma2, max_iter=s.solver.max_iter, tol=s.solver.tol, F0=F0,
                      track_rate=True)
        trace = ms.diagnostics.rate_trace
        curves, targets, crossings = [], [], []
        for part in sl:
            curve = trace[:, part].mean(axis=1)
            target = float(np.mean(ia[part]))
            above = np.flatnonzero(curve > target)
            crossings.append(int(above[0]) if above.size else -1)
            curves.append(curve)
            targets.append(target)
        res.extra[float(snr)] = (crossings, curves, targets)
    return res


def _pad(curve, length):
    if curve.size >= length:
        return curve[:length]
    return np.concatenate([curve, np.full(length - curve.size, curve[-1])])


def run_crossover(s: Scenario, workers: int = 1, batch: Optional[list] = None) -> MetricsReport:
    """Iterations until Max-SINR overtakes closed-form IA, per SNR point.

    Per trial, the crossing is the first Max-SINR iteration (0 = the random
    start) whose subcarrier-averaged sum rate exceeds the closed-form IA rate
    of the same trial. Trials that never cross within ``max_iter`` are
    censored and counted at ``max_iter``. ``curve_crossing`` is the first
    iteration at which the trial-averaged Max-SINR rate exceeds the
    trial-averaged IA rate.
    """
    if not s.dims.closed_form_solvable:
        raise ScenarioError("dims", "crossover needs the 3-user 2x2 single-stream network")
    batch = generate_batch(s) if batch is None else batch
    parts = _map_chunks(_crossover_chunk, s, batch, workers)
    failures = {}
    for p in parts:
        failures.update(p.failures)
    cap = s.solver.max_iter
    table = []
    rows = []
    for snr in s.snr.points:
        snr = float(snr)
        crossings, curves, targets = [], [], []
        for p, idx in zip(parts, _chunks(len(batch))):
            c, cv, tg = p.extra[snr]
            for t, ci, cu, ta in zip(idx, c, cv, tg):
                if t in failures:
                    continue
                crossings.append(ci)
                curves.append(cu)
                targets.append(ta)
                rows.append({"snr_db": snr, "trial": t, "crossing": ci if ci >= 0 else cap,
                             "censored": int(ci < 0), "ia_rate": ta, "max_sinr_rate": float(cu[-1])})
        c = np.array(crossings)
        counted = np.where(c >= 0, c, cap)
        length = max(cu.size for cu in curves)
        mean_curve = np.mean([_pad(cu, length) for cu in curves], axis=0)
        above = np.flatnonzero(mean_curve > np.mean(targets))
        table.append({
            "snr_db": snr,
            "trials": int(c.size),
            "mean_iterations": float(counted.mean()),
            "median_iterations": float(np.median(counted)),
            "censored": int(np.sum(c < 0)),
            "curve_crossing": int(above[0]) if above.size else -1,
            "ia_rate": float(np.mean(targets)),
            "max_sinr_rate": float(mean_curve[-1]),
        })
    return MetricsReport(s, rows, failures, {}, {}, _channel_metrics(batch, []), kind="crossover",
                         table=table)


# --------------------------------------------------------------------------
# collinearity sweep
# --------------------------------------------------------------------------

def run_correlation_sweep(s: Scenario, targets: Optional[Sequence[float]] = None,
                          workers: int = 1) -> MetricsReport:
    """Closed-form IA rate against controlled cross-link collinearity.

    One batch is generated per target with the collinear channel model (the
    same seed for every target, so batches share their random draws). The
    table has one row per (target, SNR).
    """
    if not s.dims.closed_form_solvable:
        raise ScenarioError("dims", "correlation sweep needs the 3-user 2x2 single-stream network")
    targets = tuple(targets if targets is not None else s.targets)
    if not targets:
        raise ScenarioError("sweep.targets", "no collinearity targets given")
    table, failures, rows = [], {}, []
    for target in targets:
        channel = {"model": "collinear", "target_c": float(target)}
        for key in ("sir_db", "cross_only"):
            if s.channel.get(key) is not None:
                channel[key] = s.channel[key]
        st = s.replace(channel=channel, strategies=("closed_ia",))
        rep = run_scenario(st, workers=workers)
        failures.update({f"{float(target)}:{t}": r for t, r in rep.failures.items()})
        realized = rep.channel_metrics["generator"].get("realized_c")
        for e in rep.rates["closed_ia"]:
            table.append({
                "target_c": float(target),
                "realized_c": realized,
                "c_max_mean": rep.channel_metrics["c_max_mean"],
                "d_hf": e["d_hf"],
                "d_h": rep.channel_metrics["d_h_mean"],
                "snr_db": e["snr_db"],
                "ia_rate": e["mean"],
                "stderr": e["stderr"],
                "trials": e["count"],
            })
        rows.extend(rep.rows)
    # failures are keyed "target:trial"
    return MetricsReport(s, rows, failures, {}, {}, {}, kind="sweep", table=table,
                         requested=s.trials * len(targets))


def write_outputs(report: MetricsReport, out_dir, fmt: str = "csv") -> list[Path]:
    """Write ``<name>_<kind>.csv|json`` and ``<name>_summary.json`` files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = report.scenario.name
    stem = {"run": "rates", "crossover": "crossover", "sweep": "sweep"}[report.kind]
    paths = []
    if fmt == "csv":
        p = out_dir / f"{name}_{stem}.csv"
        p.write_text(report.csv())
    elif fmt == "json":
        p = out_dir / f"{name}_{stem}.json"
        data = [dict(zip(CSV_COLUMNS, r.values())) for r in report.rows] if report.kind == "run" \
            else report.table
        p.write_text(dumps_json(data))
    else:
        raise ScenarioError("--format", f"unknown format {fmt!r}")
    paths.append(p)
    summary = out_dir / f"{name}_summary.json"
    summary.write_text(dumps_json(report.summary()))
    paths.append(summary)
    return paths
