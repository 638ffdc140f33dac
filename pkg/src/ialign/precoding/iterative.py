"""Iterative interference alignment by alternating leakage minimization."""
from __future__ import annotations

import numpy as np

from .. import linalg
from ..channel import ChannelSet
from ..metrics import snr_to_sigma2, user_rates
from .solution import (Diagnostics, PrecoderSolution, SolverError, check_initial, gather,
                       interference_cov, random_precoders, reverse_cov)

# normalized leakage below which a subcarrier counts as aligned
LEAKAGE_FLOOR = 1e-20


def _split_interference(H, F, Ns):
    """Dominant (N_k - Ns) interference directions C_k and their complement."""
    C, W = [], []
    for k in range(len(H)):
        _, vecs = linalg.eigh(interference_cov(H, F, k), check=False)
        n = vecs.shape[-1]
        C.append(vecs[..., :, :n - Ns])
        W.append(vecs[..., :, n - Ns:])
    return C, W


def _update_precoders(H, W, Ns):
    F = []
    for m in range(len(H)):
        # I - C C^* equals W W^*, so the reverse covariance of W is the cost
        _, vecs = linalg.eigh(reverse_cov(H, W, m), check=False)
        F.append(vecs[..., :, vecs.shape[-1] - Ns:])
    return F


def _leakage(H, F, W):
    """Leakage outside each C_k and total cross-link power, per subcarrier."""
    leak = 0.0
    total = 0.0
    for k in range(len(H)):
        for m in range(len(H)):
            if m != k:
                g = H[k][m] @ F[m]
                leak = leak + linalg.fro_norm(linalg.ctranspose(W[k]) @ g) ** 2
                total = total + linalg.fro_norm(g) ** 2
    return leak, total


def _run(set_: ChannelSet, F0, max_iter, tol):
    d = set_.dims
    Ns = d.Ns
    K, N = d.K, d.N_sc
    F = [f.copy() for f in F0]
    C, W = _split_interference(set_.H, F, Ns)
    leak, total = _leakage(set_.H, F, W)
    trace = [leak.copy()]
    norm_leak = leak / total
    iterations = np.zeros(N, dtype=int)
    converged = norm_leak < LEAKAGE_FLOOR
    idx = np.flatnonzero(~converged)
    Hs = gather(set_, idx)
    for _ in range(max_iter):
        if idx.size == 0:
            break
        Fs = _update_precoders(Hs, [w[idx] for w in W], Ns)
        Cs, Ws = _split_interference(Hs, Fs, Ns)
        new, tot = _leakage(Hs, Fs, Ws)
        prev = leak[idx]
        for k in range(K):
            F[k][idx] = Fs[k]
            C[k][idx] = Cs[k]
            W[k][idx] = Ws[k]
        leak = leak.copy()
        leak[idx] = new
        total[idx] = tot
        iterations[idx] += 1
        trace.append(leak.copy())
        rel = (prev - new) / np.where(prev > 0, prev, 1.0)
        done = (rel < tol) | (new / tot < LEAKAGE_FLOOR)
        converged[idx[done]] = True
        if np.any(done):
            idx = idx[~done]
            Hs = gather(set_, idx)
    return F, C, W, leak, total, iterations, converged, np.array(trace)


def iterative_ia(set_: ChannelSet, max_iter: int = 5000, tol: float = 1e-8, restarts: int = 3,
                 seed: int = 0, F0=None, select_sigma2: float | None = None) -> PrecoderSolution:
    """Alternating minimization of the interference leakage.

    Each iteration picks ``C_k`` as the ``N_k - Ns`` dominant eigenvectors of
    the received interference covariance, then ``F_m`` as the ``Ns`` least
    dominant eigenvectors of ``sum_k H_km^* (I - C_k C_k^*) H_km``. A
    subcarrier stops once the relative leakage decrease drops below ``tol``
    or its leakage falls below ``1e-20`` of the cross-link power.

    Of ``restarts`` random starts the one with the highest sum rate at
    ``select_sigma2`` (default 40 dB SNR) is kept, per subcarrier. ``F0``
    (a list of initial precoders, or a list of such lists, one per restart)
    overrides the seeded random starts.
    """
    d = set_.dims
    if any(n - d.Ns < 1 for n in d.N_rx):
        raise SolverError("iterative IA needs Ns <= N_rx_k - 1 for every user")
    if restarts < 1:
        raise SolverError("restarts must be >= 1")
    if select_sigma2 is None:
        select_sigma2 = float(snr_to_sigma2(40.0))
    if F0 is None:
        starts = [random_precoders(d, seed, r) for r in range(restarts)]
    elif isinstance(F0[0], (list, tuple)):
        starts = [check_initial(set_, f) for f in F0]
    else:
        starts = [check_initial(set_, F0)]

    runs = [_run(set_, f, max_iter, tol) for f in starts]
    rates = np.stack([user_rates(set_, r[0], select_sigma2).sum(axis=1) for r in runs])
    best = np.argmax(rates, axis=0)

    def pick(i_field, k=None):
        vals = [r[i_field] if k is None else r[i_field][k] for r in runs]
        out = vals[0].copy()
        for j in range(1, len(runs)):
            mask = best == j
            out[mask] = vals[j][mask]
        return out

    K = d.K
    F = [pick(0, k) for k in range(K)]
    C = [pick(1, k) for k in range(K)]
    W = [pick(2, k) for k in range(K)]
    leak, total = pick(3), pick(4)
    length = max(r[7].shape[0] for r in runs)
    padded = [np.concatenate([r[7], np.repeat(r[7][-1:], length - r[7].shape[0], axis=0)])
              for r in runs]
    trace = padded[0].copy()
    for j in range(1, len(runs)):
        trace[:, best == j] = padded[j][:, best == j]
    diag = Diagnostics(
        iterations=pick(5),
        converged=pick(6),
        leakage=leak / total,
        objective_trace=trace,
        ok=np.ones(d.N_sc, dtype=bool),
        info={"restart": best, "restart_rates": rates},
    )
    return PrecoderSolution("iter_ia", F, W, C, diag)
