"""Greedy interference avoidance."""
from __future__ import annotations

import numpy as np

from .. import linalg
from ..channel import ChannelSet
from .solution import (Diagnostics, PrecoderSolution, SolverError, check_initial,
                       interference_cov, random_precoders)

FIXED_POINT_TOL = 1e-8
# longest limit cycle recognized before the iteration cap
MAX_CYCLE = 8


def _best_response(H, F, k, sigma2, Ns):
    """Top ``Ns`` right singular directions of the whitened direct channel.

    These are the dominant eigenvectors of ``H_kk^* (sigma2 I + R_k)^{-1} H_kk``.
    """
    a = interference_cov(H, F, k, sigma2)
    h = H[k][k]
    g = linalg.ctranspose(h) @ np.linalg.solve(a, h)
    _, vecs = linalg.eigh(g, check=False)
    return vecs[..., :, :Ns]


def _projector(f):
    return f @ linalg.ctranspose(f)


def greedy_avoidance(set_: ChannelSet, sigma2: float, max_iter: int = 5000, seed: int = 0,
                     F0=None, tol: float = FIXED_POINT_TOL) -> PrecoderSolution:
    """Round-robin best responses until no precoder moves.

    Users are visited in index order; each one beams along the dominant
    eigenmode of its noise-plus-interference whitened direct channel with the
    other precoders held fixed. A subcarrier has converged once a full sweep
    changes no transmit projector by more than ``tol`` in Frobenius norm.
    Sweeps that never settle leave ``converged`` false. A subcarrier whose
    projectors return within ``tol`` to the state of 2 to 8 sweeps earlier is
    stuck in a limit cycle; it stops early with ``converged`` false and the
    cycle length in ``diagnostics.info["cycle"]`` (0 when no cycle was seen).

    Receivers are the unit-norm MMSE directions ``(sigma2 I + R_k)^{-1} H_kk F_k``
    (orthonormalized when ``Ns > 1``). Precoder columns have norm
    ``1/sqrt(Ns)``.
    """
    if not sigma2 > 0:
        raise SolverError("greedy_avoidance needs sigma2 > 0")
    d = set_.dims
    K, N, Ns = d.K, d.N_sc, d.Ns
    F = check_initial(set_, F0) if F0 is not None else random_precoders(d, seed)
    F = [f.copy() for f in F]
    H = set_.H
    iterations = np.zeros(N, dtype=int)
    converged = np.zeros(N, dtype=bool)
    moves = []
    cycle = np.zeros(N, dtype=int)
    history = []
    idx = np.arange(N)
    Hs = [[h[idx] for h in row] for row in H]
    for _ in range(max_iter):
        if idx.size == 0:
            break
        Fs = [f[idx] for f in F]
        change = np.zeros(idx.size)
        for k in range(K):
            new = _best_response(Hs, Fs, k, sigma2, Ns)
            change = np.maximum(change, linalg.fro_norm(_projector(new) - _projector(Fs[k])))
            Fs[k] = new
        for k in range(K):
            F[k][idx] = Fs[k]
        iterations[idx] += 1
        step = np.zeros(N)
        step[idx] = change
        moves.append(step)
        done = change < tol
        converged[idx[done]] = True
        state = np.concatenate([_projector(f).reshape(idx.size, -1) for f in Fs], axis=1)
        for lag, past in enumerate(reversed(history[:-1]), start=2):
            back = np.max(np.abs(state - past[idx]), axis=1) < tol
            hit = back & ~done & (cycle[idx] == 0)
            cycle[idx[hit]] = lag
            done = done | hit
        full = np.zeros((N, state.shape[1]), dtype=complex)
        full[idx] = state
        history = (history + [full])[-MAX_CYCLE:]
        if np.any(done):
            idx = idx[~done]
            Hs = [[h[idx] for h in row] for row in H]

    W = []
    for k in range(K):
        mmse = np.linalg.solve(interference_cov(H, F, k, sigma2), H[k][k] @ F[k])
        W.append(linalg.dominant_basis(mmse, Ns))
    diag = Diagnostics(
        iterations=iterations,
        converged=converged,
        objective_trace=np.array(moves) if moves else np.zeros((0, N)),
        ok=np.ones(N, dtype=bool),
        info={"fixed_point_tol": tol, "cycle": cycle},
    )
    return PrecoderSolution("greedy", [f / np.sqrt(Ns) for f in F], W, None, diag)
