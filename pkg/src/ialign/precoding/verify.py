"""Check the alignment conditions of a precoder solution."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .. import linalg
from ..channel import ChannelSet
from .solution import PrecoderSolution

RANK_TOL = 1e-8


class AlignmentReport(NamedTuple):
    """Per-subcarrier alignment residuals.

    ``leakage_rel`` is the interference power left in the receive subspaces
    relative to the total interference power; ``rank_ok`` holds when every
    ``W_k^* H_kk F_k`` has smallest singular value at least ``1e-8``.
    """

    leakage_rel: np.ndarray
    rank_ok: np.ndarray

    @property
    def max_leakage(self) -> float:
        return float(np.max(self.leakage_rel))

    @property
    def all_rank_ok(self) -> bool:
        return bool(np.all(self.rank_ok))


def verify_alignment(set_: ChannelSet, sol: PrecoderSolution) -> AlignmentReport:
    K = set_.K
    leak = np.zeros(set_.N_sc)
    total = np.zeros(set_.N_sc)
    rank_ok = np.ones(set_.N_sc, dtype=bool)
    for k in range(K):
        wh = linalg.ctranspose(sol.W[k])
        for m in range(K):
            g = set_.H[k][m] @ sol.F[m]
            if m == k:
                s = linalg.singular_values(wh @ g)
                rank_ok &= s[..., -1] >= RANK_TOL
            else:
                leak += linalg.fro_norm(wh @ g) ** 2
                total += linalg.fro_norm(g) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(total > 0, leak / np.where(total > 0, total, 1.0), 0.0)
    return AlignmentReport(rel, rank_ok)
