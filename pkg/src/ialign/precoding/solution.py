from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import linalg
from ..channel import ChannelSet, NetworkDims
from ..rng import TAG_PRECODER, complex_normal, substream

# strategies whose precoders carry F^* F = I / Ns; the others use F^* F = I
EQUAL_NORM = frozenset({"max_sinr", "greedy"})
STRATEGIES = ("closed_ia", "iter_ia", "max_sinr", "greedy", "tdma")


class SolverError(ValueError):
    pass


def _slice_last(value, start, stop):
    if isinstance(value, np.ndarray) and value.ndim >= 1:
        return value[..., start:stop]
    return value


@dataclass
class Diagnostics:
    """Per-subcarrier solver diagnostics.

    Arrays keep the subcarrier index on their last axis; traces have shape
    ``(iterations + 1, N_sc)`` and hold the value after each iteration, with
    converged subcarriers carried forward unchanged.
    """

    iterations: np.ndarray
    converged: np.ndarray
    leakage: Optional[np.ndarray] = None
    objective_trace: Optional[np.ndarray] = None
    rate_trace: Optional[np.ndarray] = None
    ok: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def slice(self, start: int, stop: int) -> "Diagnostics":
        kw = {f.name: _slice_last(getattr(self, f.name), start, stop)
              for f in dataclasses.fields(self) if f.name != "info"}
        kw["info"] = {k: _slice_last(v, start, stop) for k, v in self.info.items()}
        return Diagnostics(**kw)


@dataclass
class PrecoderSolution:
    """Precoders ``F[k]`` (N_sc, M_k, Ns), receive bases ``W[k]`` (N_sc, N_k, Ns).

    ``C[k]`` (N_sc, N_k, N_k - Ns) holds the interference subspaces of
    iterative IA and is ``None`` otherwise.
    """

    strategy: str
    F: list
    W: list
    C: Optional[list] = None
    diagnostics: Optional[Diagnostics] = None

    @property
    def equal_norm(self) -> bool:
        return self.strategy in EQUAL_NORM

    @property
    def Ns(self) -> int:
        return self.F[0].shape[-1]

    @property
    def N_sc(self) -> int:
        return self.F[0].shape[0]

    @property
    def power_scale(self) -> float:
        """Factor taking the stored precoders to unit total power per user."""
        return 1.0 if self.equal_norm else 1.0 / np.sqrt(self.Ns)

    def split(self, sizes: Sequence[int]) -> list["PrecoderSolution"]:
        """Undo :func:`ialign.channel.stack_subcarriers` on a solution."""
        if sum(sizes) != self.N_sc:
            raise SolverError("split sizes do not add up to the subcarrier count")
        out = []
        start = 0
        for size in sizes:
            stop = start + size
            out.append(PrecoderSolution(
                self.strategy,
                [f[start:stop] for f in self.F],
                [w[start:stop] for w in self.W],
                None if self.C is None else [c[start:stop] for c in self.C],
                None if self.diagnostics is None else self.diagnostics.slice(start, stop),
            ))
            start = stop
        return out

    def with_phase(self, k: int, phase: complex) -> "PrecoderSolution":
        F = list(self.F)
        F[k] = F[k] * phase
        return dataclasses.replace(self, F=F)


def random_precoders(dims: NetworkDims, seed: int, restart: int = 0) -> list[np.ndarray]:
    """Random orthonormal-column precoders, one ``(N_sc, M_k, Ns)`` array per user."""
    out = []
    for k in range(dims.K):
        rng = substream(seed, TAG_PRECODER, restart, k)
        g = complex_normal(rng, (dims.N_sc, dims.M[k], dims.Ns))
        out.append(linalg.dominant_basis(g, dims.Ns))
    return out


def check_initial(set_: ChannelSet, F0) -> list[np.ndarray]:
    d = set_.dims
    if len(F0) != d.K:
        raise SolverError("initial precoders need one entry per user")
    F = []
    for k, f in enumerate(F0):
        f = np.asarray(f, dtype=complex)
        if f.shape != (d.N_sc, d.M[k], d.Ns):
            raise SolverError(f"initial F[{k}] has shape {f.shape}, expected {(d.N_sc, d.M[k], d.Ns)}")
        F.append(f)
    return F


def gather(set_: ChannelSet, idx: np.ndarray) -> list[list[np.ndarray]]:
    """Channel arrays restricted to the subcarriers in ``idx``."""
    return [[set_.H[k][m][idx] for m in range(set_.K)] for k in range(set_.K)]


def interference_cov(H, F, k, sigma2=0.0):
    """``sigma2 I + sum_{m != k} H[k][m] F[m] F[m]^* H[k][m]^*`` per subcarrier."""
    K = len(H)
    n = H[k][k].shape[-2]
    acc = np.zeros(H[k][k].shape[:-2] + (n, n), dtype=complex)
    for m in range(K):
        if m != k:
            g = H[k][m] @ F[m]
            acc += g @ linalg.ctranspose(g)
    if sigma2:
        acc += sigma2 * np.eye(n)
    return acc


def reverse_cov(H, W, m, sigma2=0.0):
    """``sigma2 I + sum_{k != m} H[k][m]^* W[k] W[k]^* H[k][m]`` per subcarrier."""
    K = len(H)
    n = H[m][m].shape[-1]
    acc = np.zeros(H[m][m].shape[:-2] + (n, n), dtype=complex)
    for k in range(K):
        if k != m:
            g = linalg.ctranspose(W[k]) @ H[k][m]
            acc += linalg.ctranspose(g) @ g
    if sigma2:
        acc += sigma2 * np.eye(n)
    return acc
