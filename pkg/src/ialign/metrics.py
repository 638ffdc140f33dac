"""
Rate and correlation metrics.

Most functions work per subcarrier and are vectorized over the subcarrier
axis of a :class:`~ialign.channel.ChannelSet`; the scalar entry points
(``sum_rate``, ``max_collinearity``, ...) are thin reductions of those.
"""
from __future__ import annotations

import itertools
import math
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np

from . import linalg
from .linalg import ctranspose

if TYPE_CHECKING:
    from .channel import ChannelSet
    from .precoding import PrecoderSolution

LN2 = math.log(2.0)


class MetricError(ValueError):
    pass


def snr_to_sigma2(snr_db):
    """Noise variance for a per-receive-antenna SNR, unit-power transmitters."""
    return 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)


def sigma2_to_snr(sigma2):
    return -10.0 * np.log10(np.asarray(sigma2, dtype=float))


class SnrGrid:
    """Strictly increasing grid of SNR points in dB."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise MetricError("SNR grid needs at least one point")
        if np.any(np.diff(pts) <= 0):
            raise MetricError("SNR grid must be strictly increasing")
        self.points = pts

    @classmethod
    def parse(cls, text: str) -> "SnrGrid":
        """Parse ``lo:step:hi`` (inclusive) or a comma separated list."""
        if ":" in text:
            lo, step, hi = (float(x) for x in text.split(":"))
            if step <= 0:
                raise MetricError("SNR step must be positive")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return cls(lo + step * np.arange(n))
        return cls([float(x) for x in text.split(",")])

    @property
    def sigma2(self) -> np.ndarray:
        return snr_to_sigma2(self.points)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        if not isinstance(other, SnrGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None

    def __repr__(self):
        return f"SnrGrid({self.points.tolist()})"


# --------------------------------------------------------------------------
# sum rate
# --------------------------------------------------------------------------

def _covariances(set_: "ChannelSet", F: Sequence[np.ndarray], k: int):
    """Signal and interference covariance at receiver k for every subcarrier."""
    hf = set_.H[k][k] @ F[k]
    signal = hf @ ctranspose(hf)
    interf = np.zeros_like(signal)
    for m in range(set_.K):
        if m != k:
            g = set_.H[k][m] @ F[m]
            interf += g @ ctranspose(g)
    return signal, interf


def user_rates(set_: "ChannelSet", F: Sequence[np.ndarray], sigma2: float) -> np.ndarray:
    """Per-subcarrier, per-user rates in bits/s/Hz, shape ``(N_sc, K)``.

    ``log2 |I + (sigma2 I + R_k)^{-1} H_kk F_k F_k^* H_kk^*|`` evaluated as
    ``log2 |sigma2 I + R_k + S_k| - log2 |sigma2 I + R_k|``.
    """
    if sigma2 <= 0:
        raise MetricError("sigma2 must be positive")
    out = np.empty((set_.N_sc, set_.K))
    for k in range(set_.K):
        signal, interf = _covariances(set_, F, k)
        noise = sigma2 * np.eye(set_.dims.N_rx[k])
        out[:, k] = (linalg.logdet_hpd(noise + interf + signal)
                     - linalg.logdet_hpd(noise + interf)) / LN2
    return np.maximum(out, 0.0)


def effective_precoders(sol: "PrecoderSolution") -> list[np.ndarray]:
    """Precoders scaled to unit total power per user."""
    return [f * sol.power_scale for f in sol.F]


def subcarrier_sum_rates(set_: "ChannelSet", sol: "PrecoderSolution", sigma2: float) -> np.ndarray:
    return user_rates(set_, effective_precoders(sol), sigma2).sum(axis=1)


def sum_rate(set_: "ChannelSet", sol: "PrecoderSolution", sigma2: float) -> float:
    """Network sum rate averaged over subcarriers (bits/s/Hz)."""
    return float(np.mean(subcarrier_sum_rates(set_, sol, sigma2)))


def single_user_rates(set_: "ChannelSet", sigma2: float) -> np.ndarray:
    """Open-loop rate of each user alone, uniform power over its antennas.

    Shape ``(N_sc, K)``: ``log2 |I + H_kk H_kk^* / (sigma2 M_k)|``.
    """
    if sigma2 <= 0:
        raise MetricError("sigma2 must be positive")
    out = np.empty((set_.N_sc, set_.K))
    for k in range(set_.K):
        h = set_.H[k][k]
        cov = np.eye(h.shape[-2]) + (h @ ctranspose(h)) / (sigma2 * h.shape[-1])
        out[:, k] = linalg.logdet_hpd(cov) / LN2
    return out


# --------------------------------------------------------------------------
# degrees of freedom
# --------------------------------------------------------------------------

class DofFit(NamedTuple):
    slope: float
    intercept: float
    residual: float
    window: tuple[float, float]
    points: int


def dof_slope(rates, window=(30.0, 50.0)) -> DofFit:
    """Least-squares slope of rate against ``log2(SNR)`` inside ``window``.

    ``rates`` is an iterable of ``(snr_db, mean_rate)`` pairs. ``residual`` is
    the root-mean-square fit error.
    """
    lo, hi = window
    if hi <= lo:
        raise MetricError(f"degenerate window {window}")
    pts = [(float(s), float(r)) for s, r in rates if lo - 1e-9 <= s <= hi + 1e-9]
    if len(pts) < 3:
        raise MetricError(f"need at least 3 points in window {window}, got {len(pts)}")
    snr = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    x = snr / (10.0 * math.log10(2.0))  # log2 of the linear SNR
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return DofFit(float(coef[0]), float(coef[1]), resid, (float(lo), float(hi)), len(pts))


# --------------------------------------------------------------------------
# Kronecker correlation
# --------------------------------------------------------------------------

def estimate_kronecker(batch: Sequence["ChannelSet"], user: int, side: str) -> np.ndarray:
    """Sample spatial correlation of one user's receive or transmit side.

    Every realization is first scaled to unit Frobenius norm. Receive
    correlation of user k averages ``H H^*`` over the links ``H[k][l]`` for
    all l; transmit correlation of user l averages ``H^* H`` over ``H[k][l]``
    for all k. The result has unit trace.
    """
    if not batch:
        raise MetricError("empty batch")
    if side not in ("rx", "tx"):
        raise MetricError(f"side must be 'rx' or 'tx', got {side!r}")
    acc = None
    count = 0
    for s in batch:
        links = [s.H[user][l] for l in range(s.K)] if side == "rx" else \
                [s.H[k][user] for k in range(s.K)]
        for h in links:
            hn = h / linalg.fro_norm(h)[:, None, None]
            prod = hn @ ctranspose(hn) if side == "rx" else ctranspose(hn) @ hn
            part = prod.sum(axis=0)
            acc = part if acc is None else acc + part
            count += h.shape[0]
    return acc / count


def unit_diagonal(R: np.ndarray) -> np.ndarray:
    """Rescale a Hermitian PSD matrix to unit diagonal."""
    d = np.sqrt(np.real(np.diag(R)))
    return R / np.outer(d, d)


def kronecker_coefficient(R: np.ndarray) -> float:
    """Magnitude of the off-diagonal entry after unit-diagonal rescaling (2x2)."""
    if R.shape != (2, 2):
        raise MetricError("scalar correlation coefficient is defined for 2x2 estimates")
    return float(abs(unit_diagonal(R)[0, 1]))


# --------------------------------------------------------------------------
# collinearity
# --------------------------------------------------------------------------

def collinearity(a, b) -> float:
    """``|trace(A B^*)| / (||A||_F ||B||_F)``."""
    a = linalg.as_cmatrix(a)
    b = linalg.as_cmatrix(b)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = linalg.fro_norm(a), linalg.fro_norm(b)
    if na == 0 or nb == 0:
        raise MetricError("collinearity of a zero matrix is undefined")
    return float(min(1.0, abs(np.vdot(b, a)) / (na * nb)))


def _link_pairs(K: int, cross_only: bool):
    links = [(k, m) for k in range(K) for m in range(K) if not (cross_only and k == m)]
    return links, list(itertools.combinations(range(len(links)), 2))


def _gram(sets: Sequence["ChannelSet"], links, pooled: bool):
    """Inner products between vectorized links, per subcarrier or pooled."""
    vecs = []
    for k, m in links:
        vecs.append(np.concatenate([s.H[k][m].reshape(s.N_sc, -1) for s in sets], axis=0))
    V = np.stack(vecs, axis=1)  # (N, L, d)
    G = np.einsum("nad,nbd->nab", V, np.conj(V))
    if pooled:
        G = G.sum(axis=0, keepdims=True)
    return G


def _max_from_gram(G, pairs):
    diag = np.sqrt(np.real(np.einsum("naa->na", G)))
    best = np.zeros(G.shape[0])
    for a, b in pairs:
        c = np.abs(G[:, a, b]) / (diag[:, a] * diag[:, b])
        best = np.maximum(best, c)
    return np.minimum(best, 1.0)


def max_collinearity_per_subcarrier(set_: "ChannelSet", cross_only: bool = False) -> np.ndarray:
    """Maximum collinearity between distinct links on every subcarrier.

    By default all unordered pairs of the K^2 links are compared; with
    ``cross_only`` the direct links ``H[k][k]`` are left out.
    """
    if set_.K < 2:
        raise MetricError("collinearity needs at least two users")
    _check_uniform(set_)
    links, pairs = _link_pairs(set_.K, cross_only)
    return _max_from_gram(_gram([set_], links, pooled=False), pairs)


def max_collinearity(set_: "ChannelSet", n: int = 0, cross_only: bool = False) -> float:
    return float(max_collinearity_per_subcarrier(set_, cross_only)[n])


def max_collinearity_pooled(sets: Sequence["ChannelSet"], cross_only: bool = False) -> float:
    """Maximum link collinearity with each link stacked over the whole batch.

    Each link is treated as one long matrix holding all its realizations, so
    ``trace(A B^*)`` and the norms are sums over trials and subcarriers. For a
    single realization this equals :func:`max_collinearity`.
    """
    _check_uniform(sets[0])
    links, pairs = _link_pairs(sets[0].K, cross_only)
    return float(_max_from_gram(_gram(sets, links, pooled=True), pairs)[0])


def _check_uniform(set_: "ChannelSet"):
    if len(set(set_.dims.M)) != 1 or len(set(set_.dims.N_rx)) != 1:
        raise MetricError("collinearity across links needs equal antenna counts")


# --------------------------------------------------------------------------
# subspace distances
# --------------------------------------------------------------------------

def _check_orthonormal(u, name):
    gram = ctranspose(u) @ u
    if linalg.fro_norm(gram - np.eye(u.shape[-1])) > 1e-8:
        raise MetricError(f"{name} does not have orthonormal columns")


def subspace_distance(u, v) -> float:
    """Projection F-norm distance ``||U U^* - V V^*||_F / sqrt(2)``."""
    u = linalg.as_cmatrix(u)
    v = linalg.as_cmatrix(v)
    if u.shape[0] != v.shape[0]:
        raise MetricError("bases live in different ambient spaces")
    _check_orthonormal(u, "u")
    _check_orthonormal(v, "v")
    diff = u @ ctranspose(u) - v @ ctranspose(v)
    return float(linalg.fro_norm(diff) / math.sqrt(2.0))


def column_projector(a: np.ndarray, rank: int | None = None) -> np.ndarray:
    """Orthogonal projector onto the column space of each matrix in a stack.

    The column space is the numerical range (singular values above
    ``1e-12`` of the largest) unless ``rank`` fixes its dimension.
    """
    u, s, _ = linalg.svd(a)
    if rank is None:
        keep = s > linalg.RANK_RTOL * s[..., :1]
    else:
        keep = np.zeros(s.shape, dtype=bool)
        keep[..., :rank] = True
    uk = u * keep[..., None, :]
    return uk @ ctranspose(uk)


def _avg_distance(desired, interferers, K):
    """sqrt(sum of squared distances / K), K choose K-1 == K."""
    total = 0.0
    for k, m in interferers:
        diff = desired[k] - interferers[(k, m)]
        total = total + linalg.fro_norm(diff) ** 2 / 2.0
    return np.sqrt(total / math.comb(K, K - 1))


def effective_distance_per_subcarrier(set_: "ChannelSet", F: Sequence[np.ndarray]) -> np.ndarray:
    """Average effective-channel subspace distance on every subcarrier.

    Compares the span of ``H[k][k] F[k]`` with the span of each interferer's
    ``H[k][m] F[m]`` at receiver k, over all ordered pairs ``k != m``.
    """
    K = set_.K
    desired = [column_projector(set_.H[k][k] @ F[k]) for k in range(K)]
    inter = {(k, m): column_projector(set_.H[k][m] @ F[m])
             for k in range(K) for m in range(K) if m != k}
    return _avg_distance(desired, inter, K)


def channel_distance_per_subcarrier(set_: "ChannelSet", rank: int | None = None) -> np.ndarray:
    """Average column-space distance between direct and cross channels.

    With the default numerical-rank column space every full-rank square
    channel spans the whole receive space, so the distance is 0 for square
    networks; pass ``rank`` to compare dominant subspaces instead.
    """
    K = set_.K
    desired = [column_projector(set_.H[k][k], rank) for k in range(K)]
    inter = {(k, m): column_projector(set_.H[k][m], rank)
             for k in range(K) for m in range(K) if m != k}
    return _avg_distance(desired, inter, K)


def avg_effective_distance(set_: "ChannelSet", sol: "PrecoderSolution", n: int = 0) -> float:
    return float(effective_distance_per_subcarrier(set_, sol.F)[n])


def avg_channel_distance(set_: "ChannelSet", n: int = 0, rank: int | None = None) -> float:
    return float(channel_distance_per_subcarrier(set_, rank)[n])
