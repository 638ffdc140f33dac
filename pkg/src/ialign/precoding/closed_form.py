"""Closed-form interference alignment for the 3-user 2x2 single-stream network."""
from __future__ import annotations

import numpy as np

from .. import linalg
from ..channel import ChannelSet
from ..metrics import user_rates
from .solution import Diagnostics, PrecoderSolution, SolverError, interference_cov

RANK_TOL = 1e-8


def _inv(a):
    """Batched inverse plus a per-matrix flag for numerical singularity."""
    s = linalg.singular_values(a)
    singular = s[..., -1] < linalg.SINGULAR_RTOL * s[..., 0]
    safe = np.where(singular[..., None, None], np.eye(a.shape[-1]), a)
    return np.linalg.inv(safe), singular


def _unit(v):
    return linalg.phase_normalize(v / linalg.fro_norm(v)[..., None, None])


def _precoders_for(H, inv32, inv23, v1):
    F1 = _unit(v1)
    F2 = _unit(inv32 @ H[2][0] @ F1)
    F3 = _unit(inv23 @ H[1][0] @ F1)
    return [F1, F2, F3]


def _receivers(H, F):
    W = []
    for k in range(3):
        _, vecs = linalg.eigh(interference_cov(H, F, k), check=False)
        # least dominant direction is orthogonal to the aligned interference
        W.append(vecs[..., :, -1:])
    return W


def closed_form_ia(set_: ChannelSet, eig_choice=0, sigma2: float | None = None,
                   strict: bool = True) -> PrecoderSolution:
    """Closed-form IA precoders and interference-free receive directions.

    ``F1`` is an eigenvector of
    ``inv(H31) H32 inv(H12) H13 inv(H23) H21`` (users numbered from 1),
    ``F2 = inv(H32) H31 F1`` and ``F3 = inv(H23) H21 F1``, each scaled to unit
    norm. ``eig_choice`` is 0 or 1 (eigenvalues ordered by decreasing
    magnitude) or ``"best"``, which keeps, per subcarrier, the eigenvector
    giving the higher sum rate at ``sigma2``.

    With ``strict=True`` a singular cross channel or a defective eigenproblem
    raises :class:`SolverError`; otherwise the affected subcarriers are
    flagged in ``diagnostics.ok``.
    """
    if not set_.dims.closed_form_solvable:
        raise SolverError("closed-form IA needs K=3, 2x2 antennas and Ns=1")
    H = set_.H
    inv31, s31 = _inv(H[2][0])
    inv32, s32 = _inv(H[2][1])
    inv12, s12 = _inv(H[0][1])
    inv23, s23 = _inv(H[1][2])
    singular = s31 | s32 | s12 | s23
    E = inv31 @ H[2][1] @ inv12 @ H[0][2] @ inv23 @ H[1][0]
    eig = linalg.eig2x2(E)
    if strict and np.any(singular):
        raise SolverError(f"singular cross channel on {int(singular.sum())} subcarrier(s)")
    if strict and np.any(eig.defective):
        raise SolverError(f"defective alignment eigenproblem on {int(eig.defective.sum())} subcarrier(s)")

    if eig_choice in (0, 1):
        index = np.full(set_.N_sc, eig_choice)
        F = _precoders_for(H, inv32, inv23, eig.vectors[..., :, eig_choice:eig_choice + 1])
    elif eig_choice == "best":
        if sigma2 is None:
            raise SolverError("eig_choice='best' needs sigma2")
        cands = [_precoders_for(H, inv32, inv23, eig.vectors[..., :, i:i + 1]) for i in (0, 1)]
        rates = np.stack([user_rates(set_, c, sigma2).sum(axis=1) for c in cands])
        index = np.argmax(rates, axis=0)  # ties go to index 0
        pick = index[:, None, None] == 1
        F = [np.where(pick, cands[1][k], cands[0][k]) for k in range(3)]
    else:
        raise SolverError(f"eig_choice must be 0, 1 or 'best', got {eig_choice!r}")

    W = _receivers(H, F)
    gains = np.stack([np.abs(linalg.ctranspose(W[k]) @ H[k][k] @ F[k])[..., 0, 0]
                      for k in range(3)])
    rank_ok = np.all(gains >= RANK_TOL, axis=0)
    ok = ~singular & ~eig.defective
    diag = Diagnostics(
        iterations=np.zeros(set_.N_sc, dtype=int),
        converged=ok.copy(),
        ok=ok,
        info={"eig_index": index, "rank_ok": rank_ok, "defective": eig.defective,
              "singular": singular, "eigenvalues": np.moveaxis(eig.values, -1, 0)},
    )
    return PrecoderSolution("closed_ia", F, W, None, diag)
