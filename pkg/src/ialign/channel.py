"""
Network channel realizations.

A :class:`ChannelSet` holds the K x K per-subcarrier channel matrices of one
network realization. ``set.H[k][m]`` is an array of shape
``(N_sc, N_rx[k], M[m])``: the channel from transmitter ``m`` to receiver
``k`` on every subcarrier. Arrays are made read-only on construction.

Generators:

* :func:`gen_rayleigh` - i.i.d. CN(0, 1) entries, flat across subcarriers
* :func:`gen_kronecker` - Kronecker spatially correlated Rayleigh
* :func:`gen_selective` - tapped-delay-line channel sampled per subcarrier
* :func:`gen_collinear` / :func:`gen_collinear_batch` - controlled
  cross-link collinearity
"""
from __future__ import annotations

import dataclasses
import functools
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import linalg
from .metrics import max_collinearity_pooled
from .rng import TAG_COMMON, TAG_LINK, TAG_TAPS, complex_normal, substream


class ChannelError(ValueError):
    pass


class UnreachableTargetError(ChannelError):
    pass


@dataclass(frozen=True)
class NetworkDims:
    """Network dimensions.

    ``M[k]`` transmit antennas at transmitter k, ``N_rx[k]`` receive antennas
    at receiver k, ``Ns`` streams per user and ``N_sc`` subcarriers.
    """

    K: int
    M: tuple[int, ...]
    N_rx: tuple[int, ...]
    Ns: int = 1
    N_sc: int = 1

    def __post_init__(self):
        object.__setattr__(self, "M", tuple(int(x) for x in self.M))
        object.__setattr__(self, "N_rx", tuple(int(x) for x in self.N_rx))
        if self.K < 1:
            raise ChannelError(f"K must be >= 1, got {self.K}")
        if len(self.M) != self.K or len(self.N_rx) != self.K:
            raise ChannelError("M and N_rx need one entry per user")
        if min(self.M) < 1 or min(self.N_rx) < 1:
            raise ChannelError("antenna counts must be positive")
        if self.Ns < 1:
            raise ChannelError(f"Ns must be >= 1, got {self.Ns}")
        if self.N_sc < 1:
            raise ChannelError(f"N_sc must be >= 1, got {self.N_sc}")
        if self.Ns > min(min(m, n) for m, n in zip(self.M, self.N_rx)):
            raise ChannelError("Ns exceeds min(M_k, N_rx_k) for some user")

    @classmethod
    def uniform(cls, K: int, M: int = 2, N: int = 2, Ns: int = 1, N_sc: int = 1) -> "NetworkDims":
        return cls(K, (M,) * K, (N,) * K, Ns, N_sc)

    @property
    def closed_form_solvable(self) -> bool:
        return (self.K == 3 and self.Ns == 1
                and all(m == 2 for m in self.M) and all(n == 2 for n in self.N_rx))

    def with_subcarriers(self, N_sc: int) -> "NetworkDims":
        return dataclasses.replace(self, N_sc=N_sc)

    def to_dict(self) -> dict:
        return {"K": self.K, "M": list(self.M), "N_rx": list(self.N_rx),
                "Ns": self.Ns, "N_sc": self.N_sc}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkDims":
        return cls(int(d["K"]), tuple(d["M"]), tuple(d["N_rx"]),
                   int(d.get("Ns", 1)), int(d.get("N_sc", 1)))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ChannelSet:
    dims: NetworkDims
    H: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.dims
        if len(self.H) != d.K or any(len(row) != d.K for row in self.H):
            raise ChannelError(f"H must be indexed K x K = {d.K} x {d.K}")
        frozen = []
        for k in range(d.K):
            row = []
            for m in range(d.K):
                a = _freeze(self.H[k][m])
                expected = (d.N_sc, d.N_rx[k], d.M[m])
                if a.shape != expected:
                    raise ChannelError(f"H[{k}][{m}] has shape {a.shape}, expected {expected}")
                if not np.all(np.isfinite(a)):
                    raise ChannelError(f"H[{k}][{m}] has non-finite entries")
                row.append(a)
            frozen.append(tuple(row))
        object.__setattr__(self, "H", tuple(frozen))

    @property
    def K(self) -> int:
        return self.dims.K

    @property
    def N_sc(self) -> int:
        return self.dims.N_sc

    def link(self, k: int, m: int) -> np.ndarray:
        return self.H[k][m]

    def at(self, n: int) -> list[list[np.ndarray]]:
        """The K x K channel matrices of subcarrier ``n``."""
        return [[self.H[k][m][n] for m in range(self.K)] for k in range(self.K)]

    def map_links(self, fn) -> "ChannelSet":
        H = [[fn(k, m, self.H[k][m]) for m in range(self.K)] for k in range(self.K)]
        return ChannelSet(self.dims, H, dict(self.provenance))

    def scaled(self, gains) -> "ChannelSet":
        """Apply a per-link amplitude gain, ``gains[k][m]`` on link m -> k."""
        g = np.asarray(gains, dtype=float)
        if g.shape != (self.K, self.K):
            raise ChannelError(f"gains must be {self.K} x {self.K}")
        return self.map_links(lambda k, m, h: g[k, m] * h)

    def with_sir(self, sir_db: float) -> "ChannelSet":
        """Scale every cross link so direct/cross power ratio is ``sir_db``."""
        cross = 10.0 ** (-sir_db / 20.0)
        g = np.full((self.K, self.K), cross)
        np.fill_diagonal(g, 1.0)
        return self.scaled(g)

    def equals(self, other: "ChannelSet") -> bool:
        return (self.dims == other.dims and all(
            np.array_equal(self.H[k][m], other.H[k][m])
            for k in range(self.K) for m in range(self.K)))


def stack_subcarriers(sets: Sequence[ChannelSet]) -> ChannelSet:
    """Concatenate several sets along the subcarrier axis.

    Every solver treats subcarriers as independent problems, so stacking lets a
    batch of trials be solved in one vectorized call.
    """
    if not sets:
        raise ChannelError("nothing to stack")
    dims = sets[0].dims
    for s in sets[1:]:
        if (s.dims.M, s.dims.N_rx, s.dims.Ns) != (dims.M, dims.N_rx, dims.Ns):
            raise ChannelError("cannot stack sets with different antenna dimensions")
    total = sum(s.N_sc for s in sets)
    H = [[np.concatenate([s.H[k][m] for s in sets], axis=0) for m in range(dims.K)]
         for k in range(dims.K)]
    return ChannelSet(dims.with_subcarriers(total), H, {"stacked": len(sets)})


@dataclass(frozen=True)
class TapProfile:
    powers: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.powers)
        object.__setattr__(self, "powers", p)
        if not p:
            raise ChannelError("tap profile needs at least one tap")
        if min(p) < 0:
            raise ChannelError("tap powers must be non-negative")
        if abs(sum(p) - 1.0) > 1e-12:
            raise ChannelError(f"tap powers must sum to 1, got {sum(p)!r}")

    @property
    def L(self) -> int:
        return len(self.powers)

    @classmethod
    def uniform(cls, L: int) -> "TapProfile":
        return cls((1.0 / L,) * L)

    @classmethod
    def exponential(cls, L: int, decay_db: float) -> "TapProfile":
        """Exponentially decaying profile, ``decay_db`` dB lost per tap."""
        raw = 10.0 ** (-decay_db * np.arange(L) / 10.0)
        raw = raw / raw.sum()
        # absorb rounding in the first tap so the sum is exactly 1
        raw[0] = 1.0 - raw[1:].sum()
        return cls(tuple(raw))


def correlation_matrix(n: int, rho: complex) -> np.ndarray:
    """Unit-diagonal exponential correlation matrix ``R[i, j] = rho^(j - i)``.

    For n = 2 this is ``[[1, rho], [conj(rho), 1]]``.
    """
    R = np.eye(n, dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            R[i, j] = rho ** (j - i)
            R[j, i] = np.conj(R[i, j])
    return R


@dataclass(frozen=True, eq=False)
class KroneckerSpec:
    """Per-user transmit and receive correlation matrices (unit diagonal)."""

    R_tx: tuple
    R_rx: tuple

    def __post_init__(self):
        for name in ("R_tx", "R_rx"):
            mats = tuple(linalg.as_cmatrix(R) for R in getattr(self, name))
            for R in mats:
                if R.ndim != 2 or R.shape[0] != R.shape[1]:
                    raise ChannelError(f"{name} entries must be square")
                if linalg.fro_norm(R - R.conj().T) > 1e-10:
                    raise ChannelError(f"{name} matrices must be Hermitian")
                if np.max(np.abs(np.diag(R) - 1.0)) > 1e-10:
                    raise ChannelError(f"{name} matrices must have unit diagonal")
                values, _ = linalg.eigh(R)
                if values[-1] < -1e-10:
                    raise ChannelError(f"{name} matrices must be positive semidefinite")
            object.__setattr__(self, name, mats)

    @classmethod
    def from_coefficients(cls, dims: NetworkDims, rho_tx, rho_rx) -> "KroneckerSpec":
        """Build a spec from scalar (or per-user) correlation coefficients."""
        rt = np.broadcast_to(np.asarray(rho_tx, dtype=complex), (dims.K,))
        rr = np.broadcast_to(np.asarray(rho_rx, dtype=complex), (dims.K,))
        return cls(tuple(correlation_matrix(dims.M[k], rt[k]) for k in range(dims.K)),
                   tuple(correlation_matrix(dims.N_rx[k], rr[k]) for k in range(dims.K)))


def _validate_seed(seed: int) -> int:
    if int(seed) != seed or seed < 0:
        raise ChannelError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def gen_rayleigh(dims: NetworkDims, seed: int, trial: int = 0) -> ChannelSet:
    """Flat i.i.d. Rayleigh channels.

    Each link draws one CN(0, 1) matrix from its own substream
    ``(trial, k, m)`` which is then replicated on every subcarrier.
    """
    seed = _validate_seed(seed)
    H = []
    for k in range(dims.K):
        row = []
        for m in range(dims.K):
            rng = substream(seed, trial, TAG_LINK, k, m)
            h = complex_normal(rng, (dims.N_rx[k], dims.M[m]))
            row.append(np.broadcast_to(h, (dims.N_sc,) + h.shape))
        H.append(row)
    return ChannelSet(dims, H, {"generator": "rayleigh", "seed": seed, "trial": trial})


# internal Monte-Carlo sample size for the Kronecker estimator calibration
_CALIBRATION_SAMPLES = 40000
_CALIBRATION_SEED = 20100


@functools.lru_cache(maxsize=256)
def _calibrated_spectra(d_rx: tuple, d_tx: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues to synthesize with so the normalized estimator sees ``d``.

    The correlation estimator normalizes each realization to unit Frobenius
    norm, which shrinks the spread of the eigenvalues it reports. In the
    eigenbases of R_rx and R_tx the estimator's expectation is diagonal, with
    entries ``E[a_i x_ij b_j / sum(a x b)]`` summed over the other index, where
    ``x_ij ~ Exp(1)``. The synthesis spectra ``a`` and ``b`` are solved by a
    multiplicative fixed point on a fixed common-random-number sample.
    """
    tr = np.asarray(d_rx, dtype=float)
    tt = np.asarray(d_tx, dtype=float)
    target_r = tr / tr.sum()
    target_t = tt / tt.sum()
    rng = np.random.default_rng(_CALIBRATION_SEED)
    x = rng.exponential(size=(_CALIBRATION_SAMPLES, len(tr), len(tt)))
    a = target_r.copy()
    b = target_t.copy()
    for _ in range(500):
        w = a[None, :, None] * x * b[None, None, :]
        w /= w.sum(axis=(1, 2), keepdims=True)
        fr = w.sum(axis=2).mean(axis=0)
        ft = w.sum(axis=1).mean(axis=0)
        err = max(np.max(np.abs(fr - target_r)), np.max(np.abs(ft - target_t)))
        if err < 1e-10:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(target_r > 0, a * target_r / fr, 0.0)
            b = np.where(target_t > 0, b * target_t / ft, 0.0)
        a /= a.sum()
        b /= b.sum()
    return a * len(tr), b * len(tt)


def _sqrt_from_spectrum(vecs: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    return (vecs * np.sqrt(spectrum)[None, :]) @ vecs.conj().T


def gen_kronecker(dims: NetworkDims, spec: KroneckerSpec, seed: int, trial: int = 0,
                  calibrate: bool = True) -> ChannelSet:
    """Flat Kronecker-correlated channels ``H = A_rx^{1/2} H_w A_tx^{1/2}``.

    With ``calibrate=True`` (default) the synthesis matrices share the
    eigenvectors of the requested ``R_rx``/``R_tx`` but use eigenvalues
    corrected for the bias of :func:`ialign.metrics.estimate_kronecker`, so the
    estimator recovers the requested correlations. With ``calibrate=False``
    the requested matrices are used directly.
    """
    seed = _validate_seed(seed)
    if len(spec.R_rx) != dims.K or len(spec.R_tx) != dims.K:
        raise ChannelError("Kronecker spec needs one R_tx and one R_rx per user")
    for k in range(dims.K):
        if spec.R_rx[k].shape != (dims.N_rx[k],) * 2:
            raise ChannelError(f"R_rx[{k}] shape does not match N_rx[{k}]={dims.N_rx[k]}")
        if spec.R_tx[k].shape != (dims.M[k],) * 2:
            raise ChannelError(f"R_tx[{k}] shape does not match M[{k}]={dims.M[k]}")
    eig_rx = [linalg.eigh(R) for R in spec.R_rx]
    eig_tx = [linalg.eigh(R) for R in spec.R_tx]
    H = []
    for k in range(dims.K):
        row = []
        dr, Ur = eig_rx[k]
        dr = np.clip(dr, 0.0, None)
        for m in range(dims.K):
            dt, Ut = eig_tx[m]
            dt = np.clip(dt, 0.0, None)
            if calibrate:
                ar, at = _calibrated_spectra(tuple(np.round(dr, 14)), tuple(np.round(dt, 14)))
            else:
                ar, at = dr, dt
            rng = substream(seed, trial, TAG_LINK, k, m)
            hw = complex_normal(rng, (dims.N_rx[k], dims.M[m]))
            h = _sqrt_from_spectrum(Ur, ar) @ hw @ _sqrt_from_spectrum(Ut, at)
            row.append(np.broadcast_to(h, (dims.N_sc,) + h.shape))
        H.append(row)
    return ChannelSet(dims, H, {"generator": "kronecker", "seed": seed, "trial": trial})


def gen_selective(dims: NetworkDims, profile: TapProfile, seed: int, trial: int = 0) -> ChannelSet:
    """Frequency-selective channels from an L-tap delay line.

    Each link draws L independent tap matrices with per-entry variance
    ``powers[l]`` and samples ``H[n] = sum_l h_l exp(-2j pi n l / N_sc)``.
    """
    seed = _validate_seed(seed)
    L = profile.L
    if L > dims.N_sc:
        raise ChannelError(f"{L} taps do not fit in {dims.N_sc} subcarriers")
    n = np.arange(dims.N_sc)
    phases = np.exp(-2j * np.pi * np.outer(n, np.arange(L)) / dims.N_sc)
    amp = np.sqrt(np.asarray(profile.powers))
    H = []
    for k in range(dims.K):
        row = []
        for m in range(dims.K):
            rng = substream(seed, trial, TAG_TAPS, k, m)
            taps = complex_normal(rng, (L, dims.N_rx[k], dims.M[m])) * amp[:, None, None]
            row.append(np.einsum("nl,lij->nij", phases, taps))
        H.append(row)
    return ChannelSet(dims, H, {"generator": "selective", "seed": seed, "trial": trial,
                                "taps": list(profile.powers)})


def _blend(base: list[ChannelSet], common: list[np.ndarray], w: float) -> list[ChannelSet]:
    a, b = np.sqrt(1.0 - w), np.sqrt(w)
    return [s.map_links(lambda k, m, h, c=c: a * h + b * c) for s, c in zip(base, common)]


def gen_collinear_batch(dims: NetworkDims, target_c: float, seed: int, trials: int = 1,
                        cross_only: bool = False, tol: float = 0.05) -> list[ChannelSet]:
    """Batch of flat Rayleigh sets with controlled link collinearity.

    Every link of trial t becomes ``sqrt(1-w) G_km + sqrt(w) C_t`` where
    ``G_km`` are independent CN(0,1) matrices and ``C_t`` is one common
    CN(0,1) matrix per trial, so entry variance stays 1. The weight ``w`` is
    found by bisection so that the maximum collinearity between distinct
    links, pooled over the whole batch (all trials and subcarriers), equals
    ``target_c``. For a single realization this is exactly the per-realization
    maximum collinearity.

    ``target_c = 0`` returns unblended channels. Any other target whose
    realized value ends up further than ``tol`` away raises
    :class:`UnreachableTargetError`; with a single realization the i.i.d.
    floor is typically around 0.85 for 3-user 2x2 networks.
    """
    seed = _validate_seed(seed)
    if not 0.0 <= target_c < 1.0:
        raise ChannelError(f"target collinearity must lie in [0, 1), got {target_c}")
    if trials < 1:
        raise ChannelError("trials must be >= 1")
    if len(set(dims.M)) != 1 or len(set(dims.N_rx)) != 1:
        raise ChannelError("collinearity control needs equal antenna counts on all links")
    base = [gen_rayleigh(dims, seed, trial=t) for t in range(trials)]
    common = []
    for t in range(trials):
        rng = substream(seed, t, TAG_COMMON)
        common.append(complex_normal(rng, (dims.N_rx[0], dims.M[0]))[None])

    def realized(w):
        return max_collinearity_pooled(_blend(base, common, w), cross_only=cross_only)

    if target_c == 0.0:
        w = 0.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if realized(mid) < target_c:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12:
                break
        w = 0.5 * (lo + hi)
        got = realized(w)
        if abs(got - target_c) > tol:
            raise UnreachableTargetError(
                f"collinearity target {target_c} unreachable: realized {got:.4f} after bisection")
    out = _blend(base, common, w)
    c_real = realized(w)
    return [dataclasses.replace(s, provenance={
        "generator": "collinear", "seed": seed, "trial": t, "target_c": target_c,
        "blend_weight": w, "realized_c": c_real}) for t, s in enumerate(out)]


def gen_collinear(dims: NetworkDims, target_c: float, seed: int, **kwargs) -> ChannelSet:
    """Single-realization version of :func:`gen_collinear_batch`."""
    return gen_collinear_batch(dims, target_c, seed, trials=1, **kwargs)[0]


def link_power_means(sets: Sequence[ChannelSet]) -> np.ndarray:
    """Mean of ``||H_km||_F^2`` over all subcarriers and sets, per link."""
    K = sets[0].K
    total = np.zeros((K, K))
    count = 0
    for s in sets:
        for k, m in itertools.product(range(K), repeat=2):
            total[k, m] += np.sum(np.abs(s.H[k][m]) ** 2)
        count += s.N_sc
    return total / count


def normalize_batch(sets: Sequence[ChannelSet]) -> list[ChannelSet]:
    """Scale every link so its mean squared Frobenius norm is ``M * N_rx``.

    The mean runs over the whole batch (all sets and subcarriers), matching
    normalization over a full measurement set. Relative phases and the
    variation between realizations are kept.
    """
    sets = list(sets)
    if not sets:
        raise ChannelError("cannot normalize an empty batch")
    dims = sets[0].dims
    for s in sets:
        if s.dims.M != dims.M or s.dims.N_rx != dims.N_rx:
            raise ChannelError("batch members must share antenna dimensions")
    power = link_power_means(sets)
    if np.any(power == 0.0):
        k, m = np.argwhere(power == 0.0)[0]
        raise ChannelError(f"link {m}->{k} is identically zero")
    size = np.array([[dims.N_rx[k] * dims.M[m] for m in range(dims.K)] for k in range(dims.K)])
    scale = np.sqrt(size / power)
    out = []
    for s in sets:
        n = s.map_links(lambda k, m, h: scale[k, m] * h)
        out.append(dataclasses.replace(n, provenance={**s.provenance, "normalized": True}))
    return out


def normalize(set_: ChannelSet) -> ChannelSet:
    return normalize_batch([set_])[0]


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

MAGIC = b"IACH"
FORMAT_VERSION = 1
_PREFIX = len(MAGIC) + 1 + 4


class ChannelFileError(ChannelError):
    """Malformed channel file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ChannelShapeError(ChannelFileError):
    pass


class ChannelVersionError(ChannelFileError):
    pass


def _json_default(obj: Any):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_bytes(set_: ChannelSet) -> bytes:
    header = json.dumps({"dims": set_.dims.to_dict(), "provenance": set_.provenance},
                        sort_keys=True, default=_json_default).encode("utf-8")
    parts = [MAGIC, bytes([FORMAT_VERSION]), len(header).to_bytes(4, "little"), header]
    for k in range(set_.K):
        for m in range(set_.K):
            parts.append(np.ascontiguousarray(set_.H[k][m]).astype("<c16").tobytes())
    return b"".join(parts)


def save_channels(set_: ChannelSet, path) -> None:
    """Write ``set_`` in the binary channel format.

    Layout: 4-byte magic ``IACH``, one version byte, a little-endian uint32
    header length, a UTF-8 JSON header ``{"dims": ..., "provenance": ...}``,
    then every entry as a little-endian float64 (real, imag) pair in
    ``(k, m, n, row, col)`` order.
    """
    with open(path, "wb") as fh:
        fh.write(to_bytes(set_))


def _dims_from_header(obj: dict, offset: int) -> NetworkDims:
    try:
        return NetworkDims.from_dict(obj["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ChannelFileError(f"invalid dims in header: {exc}", offset) from exc


def from_bytes(data: bytes) -> ChannelSet:
    if data.lstrip()[:1] == b"{":
        return _from_manifest(data)
    if len(data) < _PREFIX:
        raise ChannelFileError("file too short for header", len(data))
    if data[:4] != MAGIC:
        raise ChannelFileError("bad magic", 0)
    version = data[4]
    if version != FORMAT_VERSION:
        raise ChannelVersionError(f"unsupported format version {version}", 4)
    hlen = int.from_bytes(data[5:9], "little")
    body_start = _PREFIX + hlen
    if len(data) < body_start:
        raise ChannelFileError("truncated header", len(data))
    try:
        header = json.loads(data[_PREFIX:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChannelFileError(f"header is not valid JSON: {exc}", _PREFIX) from exc
    dims = _dims_from_header(header, _PREFIX)
    per_sc = sum(dims.N_rx[k] * dims.M[m] for k in range(dims.K) for m in range(dims.K))
    body = len(data) - body_start
    expected = per_sc * dims.N_sc * 16
    if body != expected:
        if body > 0 and body % (per_sc * 16) == 0:
            raise ChannelShapeError(
                f"header declares N_sc={dims.N_sc} but body holds {body // (per_sc * 16)} subcarriers",
                body_start)
        raise ChannelFileError(
            f"body has {body} bytes, expected {expected}", body_start + min(body, expected))
    values = np.frombuffer(data, dtype="<c16", offset=body_start).astype(complex)
    H = []
    pos = 0
    for k in range(dims.K):
        row = []
        for m in range(dims.K):
            size = dims.N_sc * dims.N_rx[k] * dims.M[m]
            row.append(values[pos:pos + size].reshape(dims.N_sc, dims.N_rx[k], dims.M[m]))
            pos += size
        H.append(row)
    return ChannelSet(dims, H, header.get("provenance", {}))


def _from_manifest(data: bytes) -> ChannelSet:
    """JSON fixture variant: ``{"version": 1, "dims": {...}, "H": ...}``.

    ``H[k][m][n]`` is a list of rows whose entries are ``[re, im]`` pairs or
    plain real numbers.
    """
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChannelFileError(f"manifest is not valid JSON: {exc}", getattr(exc, "pos", 0)) from exc
    if obj.get("version") != FORMAT_VERSION:
        raise ChannelVersionError(f"unsupported manifest version {obj.get('version')!r}")
    dims = _dims_from_header(obj, 0)
    raw = obj.get("H")
    H = []
    try:
        for k in range(dims.K):
            row = []
            for m in range(dims.K):
                a = np.asarray(raw[k][m], dtype=float)
                if a.ndim == 4 and a.shape[-1] == 2:
                    a = a[..., 0] + 1j * a[..., 1]
                row.append(a)
            H.append(row)
        return ChannelSet(dims, H, obj.get("provenance", {}))
    except (IndexError, TypeError, ChannelError) as exc:
        raise ChannelShapeError(f"manifest H does not match dims: {exc}") from exc


def to_manifest(set_: ChannelSet) -> str:
    """The JSON manifest form of ``set_`` (exact: floats are written with repr)."""
    H = [[np.stack([set_.H[k][m].real, set_.H[k][m].imag], axis=-1).tolist()
          for m in range(set_.K)] for k in range(set_.K)]
    return json.dumps({"version": FORMAT_VERSION, "dims": set_.dims.to_dict(),
                       "provenance": set_.provenance, "H": H}, default=_json_default)


def load_channels(path) -> ChannelSet:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def save_batch(sets: Iterable[ChannelSet], directory, stem: str = "trial") -> list:
    """Save each set as ``<stem>_<index>.iach`` inside ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, s in enumerate(sets):
        p = directory / f"{stem}_{i:05d}.iach"
        save_channels(s, p)
        paths.append(p)
    return paths
