"""Invariant checks run by ``ialign validate`` on a scenario's channels."""
from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np

from .. import linalg
from ..channel import link_power_means, normalize_batch, stack_subcarriers
from ..metrics import snr_to_sigma2, subcarrier_sum_rates, user_rates
from ..precoding import tdma, verify_alignment
from .runner import _solve, generate_batch
from .scenario import Scenario

# leakage may rise by this fraction of its starting value through rounding alone
MONOTONE_SLACK = 1e-12


def rate_tolerance(sigma2: float) -> float:
    """Relative rate agreement expected from rounding alone.

    Rounding the O(1) covariance entries moves eigenvalues of size ``sigma2``
    by a relative ``~1e-16 / sigma2``, so the bound loosens at high SNR.
    """
    return max(1e-12, 1e-15 / sigma2)


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _orthonormal_error(x, scale=1.0):
    gram = linalg.ctranspose(x) @ x
    return float(np.max(linalg.fro_norm(gram - scale * np.eye(x.shape[-1]))))


def run_checks(s: Scenario, trials: int = 20) -> list[Check]:
    """Run the invariant suite on the first ``trials`` trials of ``s``."""
    small = dataclasses.replace(s, trials=min(trials, s.trials))
    batch = generate_batch(small)
    checks = []

    again = generate_batch(small)
    same = all(a.equals(b) for a, b in zip(batch, again))
    checks.append(Check("determinism", same, "regenerated batch is bit-identical" if same
                        else "regenerated batch differs"))

    raw = normalize_batch(batch) if s.channel.get("sir_db") is None else None
    if raw is not None:
        power = link_power_means(raw)
        d = s.dims
        size = np.array([[d.N_rx[k] * d.M[m] for m in range(d.K)] for k in range(d.K)])
        err = float(np.max(np.abs(power - size)))
        checks.append(Check("normalization", err <= 1e-10, f"max |mean ||H||^2 - M N| = {err:.2e}"))
        scaled = normalize_batch([x.map_links(lambda k, m, h: 7.0 * h) for x in raw])
        dev = max(float(np.max(np.abs(a.H[k][m] - b.H[k][m])))
                  for a, b in zip(raw, scaled) for k in range(d.K) for m in range(d.K))
        checks.append(Check("normalization scale invariance", dev <= 1e-12, f"max deviation {dev:.2e}"))

    S = stack_subcarriers(batch)
    trial_ids = list(range(len(batch)))
    for snr in sorted({float(s.snr.points[0]), float(s.snr.points[-1])}):
        sigma2 = float(snr_to_sigma2(snr))
        for st in s.strategies:
            tag = f"{st}@{snr:g}dB"
            if st == "tdma":
                rates = np.array([tdma(x, sigma2, s.solver.tdma_mode).mean_rate for x in batch])
                ok = bool(np.all(np.isfinite(rates)) and np.all(rates >= 0))
                checks.append(Check(f"{tag} rates finite", ok, f"min {rates.min():.4g}"))
                continue
            sol = _solve(st, s, S, batch, trial_ids, sigma2)
            scale = 1.0 if not sol.equal_norm else 1.0 / sol.Ns
            f_err = max(_orthonormal_error(f, scale) for f in sol.F)
            checks.append(Check(f"{tag} precoder norm", f_err <= 1e-10, f"max error {f_err:.2e}"))
            if sol.Ns == 1 or not sol.equal_norm:
                w_err = max(_orthonormal_error(w) for w in sol.W)
                checks.append(Check(f"{tag} receiver orthonormal", w_err <= 1e-10, f"max error {w_err:.2e}"))
            rates = subcarrier_sum_rates(S, sol, sigma2)
            checks.append(Check(f"{tag} rates finite", bool(np.all(np.isfinite(rates))),
                                f"min {rates.min():.4g}"))
            F = [f * sol.power_scale for f in sol.F]
            rotated = [F[0] * np.exp(0.7j)] + F[1:]
            base = user_rates(S, F, sigma2)
            dev = float(np.max(np.abs(user_rates(S, rotated, sigma2) - base) / np.maximum(1.0, base)))
            checks.append(Check(f"{tag} phase invariance", dev <= rate_tolerance(sigma2),
                                f"max relative rate change {dev:.2e}"))
            if st == "closed_ia":
                rep = verify_alignment(S, sol)
                ok = bool(rep.max_leakage <= 1e-18 and rep.all_rank_ok)
                checks.append(Check(f"{tag} alignment", ok,
                                    f"max leakage {rep.max_leakage:.2e}, rank ok {rep.all_rank_ok}"))
            if st == "iter_ia":
                tr = sol.diagnostics.objective_trace
                rise = np.max(np.diff(tr, axis=0) - MONOTONE_SLACK * tr[:1], initial=0.0)
                checks.append(Check(f"{tag} leakage monotone", rise <= 0.0,
                                    f"largest increase beyond slack {rise:.2e}"))
    return checks
