"""Max-SINR alternating beamforming."""
from __future__ import annotations

import numpy as np

from .. import linalg
from ..channel import ChannelSet
from .solution import Diagnostics, PrecoderSolution, SolverError, check_initial, random_precoders


def _orthonormal_factor(x):
    """Closest matrix with orthonormal columns (polar factor ``U V^*``).

    For a single column this is plain normalization; for several streams it
    keeps the span of the per-stream filters while making them orthonormal.
    """
    if x.shape[-1] == 1:
        return x / np.linalg.norm(x, axis=-2, keepdims=True)
    u, _, v = linalg.svd(x)
    return u @ linalg.ctranspose(v)


def _received_cov(H, F, k, sigma2):
    """Total received covariance at receiver k including noise."""
    n = H[k][k].shape[-2]
    acc = np.broadcast_to(sigma2 * np.eye(n, dtype=complex), H[k][k].shape[:-2] + (n, n)).copy()
    for m in range(len(H)):
        g = H[k][m] @ F[m]
        acc += g @ linalg.ctranspose(g)
    return acc


def _stream_filters(total, desired):
    """Columnwise ``(total - d_l d_l^*)^{-1} d_l``, orthonormalized.

    ``total`` is the full covariance and column ``l`` of ``desired`` the
    desired-stream direction; removing it leaves that stream's
    interference-plus-noise covariance.
    """
    cols = []
    for l in range(desired.shape[-1]):
        d = desired[..., :, l:l + 1]
        b = total - d @ linalg.ctranspose(d)
        cols.append(np.linalg.solve(b, d))
    return _orthonormal_factor(np.concatenate(cols, axis=-1))


def update_receivers(H, F, sigma2):
    return [_stream_filters(_received_cov(H, F, k, sigma2), H[k][k] @ F[k])
            for k in range(len(H))]


def update_precoders(H, W, sigma2):
    """Precoders of the reciprocal network, scaled so that F^* F has trace 1."""
    K = len(H)
    Hr = [[linalg.ctranspose(H[m][k]) for m in range(K)] for k in range(K)]
    Ns = W[0].shape[-1]
    return [f / np.sqrt(Ns) for f in update_receivers(Hr, W, sigma2)]


def sinr_objective(H, F, W, sigma2):
    """Sum signal power over sum interference-plus-noise power, per subcarrier."""
    num = 0.0
    den = 0.0
    K = len(H)
    for k in range(K):
        wh = linalg.ctranspose(W[k])
        for m in range(K):
            p = linalg.fro_norm(wh @ H[k][m] @ F[m]) ** 2
            if m == k:
                num = num + p
            else:
                den = den + p
        den = den + sigma2 * linalg.fro_norm(W[k]) ** 2
    return num / den


def user_rates_stacked(H, F, sigma2):
    """Sum rate per subcarrier for raw channel arrays (no ChannelSet wrapper)."""
    total = 0.0
    for k in range(len(H)):
        t = _received_cov(H, F, k, sigma2)
        hf = H[k][k] @ F[k]
        total = total + (linalg.logdet_hpd(t) - linalg.logdet_hpd(t - hf @ linalg.ctranspose(hf)))
    return np.maximum(total / np.log(2.0), 0.0)


def max_sinr(set_: ChannelSet, sigma2: float, max_iter: int = 5000, tol: float = 1e-8,
             seed: int = 0, F0=None, track_rate: bool = False, stop_rate=None) -> PrecoderSolution:
    """Alternate the SINR-maximizing receive and transmit filters.

    Receivers are the unit-norm MMSE directions
    ``(sigma2 I + R)^{-1} H_kk f`` for each stream (replaced by their polar
    factor when ``Ns > 1`` so the columns are orthonormal), and the precoders
    are the same construction in the reciprocal network scaled so that
    ``F^* F = I / Ns``, so the user power is 1. A subcarrier stops
    when the relative change of the sum-SINR objective drops below ``tol``.

    Parameters
    ----------
    track_rate : bool
        Record the sum rate after every iteration in ``diagnostics.rate_trace``
        (row 0 is the random start).
    stop_rate : array_like, optional
        Per-subcarrier rate thresholds. A subcarrier also stops as soon as its
        sum rate exceeds the threshold; the crossing iteration is stored in
        ``diagnostics.info["crossed_at"]`` (-1 when it never crossed). Implies
        ``track_rate``.
    """
    if not sigma2 > 0:
        raise SolverError("max_sinr needs sigma2 > 0")
    d = set_.dims
    N = d.N_sc
    Ns = d.Ns
    F = check_initial(set_, F0) if F0 is not None else random_precoders(d, seed)
    F = [f / np.sqrt(Ns) for f in F]
    if stop_rate is not None:
        stop_rate = np.broadcast_to(np.asarray(stop_rate, dtype=float), (N,))
        track_rate = True
    H = set_.H
    W = update_receivers(H, F, sigma2)
    obj = sinr_objective(H, F, W, sigma2)
    obj_trace = [obj.copy()]
    rate = user_rates_stacked(H, F, sigma2) if track_rate else None
    rate_trace = [rate.copy()] if track_rate else None
    iterations = np.zeros(N, dtype=int)
    converged = np.zeros(N, dtype=bool)
    crossed = np.full(N, -1)
    if stop_rate is not None:
        hit = rate > stop_rate
        crossed[hit] = 0
        idx = np.flatnonzero(~hit)
    else:
        idx = np.arange(N)
    Hs = [[h[idx] for h in row] for row in H]
    for _ in range(max_iter):
        if idx.size == 0:
            break
        Fs = update_precoders(Hs, [w[idx] for w in W], sigma2)
        Ws = update_receivers(Hs, Fs, sigma2)
        new = sinr_objective(Hs, Fs, Ws, sigma2)
        prev = obj[idx]
        for k in range(d.K):
            F[k][idx] = Fs[k]
            W[k][idx] = Ws[k]
        obj = obj.copy()
        obj[idx] = new
        obj_trace.append(obj)
        iterations[idx] += 1
        done = np.abs(new - prev) < tol * np.abs(prev)
        converged[idx[done]] = True
        if track_rate:
            rate = rate.copy()
            rate[idx] = user_rates_stacked(Hs, Fs, sigma2)
            rate_trace.append(rate)
            if stop_rate is not None:
                hit = rate[idx] > stop_rate[idx]
                crossed[idx[hit]] = iterations[idx[hit]]
                done = done | hit
        if np.any(done):
            idx = idx[~done]
            Hs = [[h[idx] for h in row] for row in H]
    info = {}
    if stop_rate is not None:
        info["crossed_at"] = crossed
    diag = Diagnostics(
        iterations=iterations,
        converged=converged,
        objective_trace=np.array(obj_trace),
        rate_trace=None if rate_trace is None else np.array(rate_trace),
        ok=np.ones(N, dtype=bool),
        info=info,
    )
    return PrecoderSolution("max_sinr", F, W, None, diag)

