"""Residual clustering via screened correlations of differences.

The dissimilarity between series i and j is

    D_ij = max_{l != i,j} |S_il - S_jl| / sqrt((S_ii + S_jj - 2 S_ij) * S_ll)

where S is the uncentered residual covariance. Within a cluster the
numerator vanishes for every probe l, so D_ij concentrates near zero;
across clusters it stays bounded away from zero. A ratio rule on the
sorted dissimilarities picks the merge threshold, and single-linkage
agglomeration below that threshold recovers the groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .panel import ClusterPartition, symmetrize

DEFAULT_DELTA = 0.0
DEFAULT_CQ = 0.95


def residual_cov(residuals: np.ndarray) -> np.ndarray:
    """Uncentered second-moment matrix of the residuals, denominator T.

    Parameters
    ----------
    residuals : np.ndarray
        T x p residual matrix, T >= 2.
    """
    u = np.asarray(residuals, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"residuals must be 2-D, got {u.ndim}-D")
    if u.shape[0] < 2:
        raise ValueError(f"need at least 2 rows, got {u.shape[0]}")
    return symmetrize(u.T @ u / u.shape[0])


def _check_scod_input(s: np.ndarray, min_p: int) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if s.shape[0] < min_p:
        raise ValueError(f"need at least {min_p} series, got {s.shape[0]}")
    scale = np.abs(s).max()
    if scale > 0 and np.abs(s - s.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    return s


def scod_matrix(resid_cov: np.ndarray) -> np.ndarray:
    """Pairwise screened-correlation-of-differences matrix.

    Parameters
    ----------
    resid_cov : np.ndarray
        p x p symmetric residual covariance, p >= 3, positive
        diagonal, and positive variance of every difference
        ``u_i - u_j``.

    Returns
    -------
    np.ndarray
        p x p symmetric matrix with zero diagonal.

    Raises
    ------
    EstimationError
        If some denominator is nonpositive; the message identifies the
        offending (i, j, l) triple (0-based), which signals degenerate
        residuals such as duplicated series.
    """
    s = _check_scod_input(np.asarray(resid_cov), 3)
    p = s.shape[0]
    d = np.diag(s).copy()
    if np.any(d <= 0.0):
        l = int(np.argmin(d))
        raise EstimationError(
            f"nonpositive residual variance for series l={l} "
            f"(value {d[l]:.3g}); denominators require S_ll > 0"
        )
    vardiff = d[:, None] + d[None, :] - 2.0 * s
    off = vardiff + np.diag(np.full(p, np.inf))
    if np.any(off <= 0.0):
        i, j = map(int, np.argwhere(off <= 0.0)[0])
        l = next(k for k in range(p) if k not in (i, j))
        raise EstimationError(
            f"nonpositive denominator for triple (i={i}, j={j}, l={l}): "
            f"var(u_{i} - u_{j}) = {vardiff[i, j]:.3g} <= 0; "
            f"series {i} and {j} look numerically identical"
        )
    # scale probe columns once: scaled[i, l] = S_il / sqrt(S_ll)
    scaled = s / np.sqrt(d)[None, :]
    safe_vardiff = vardiff.copy()
    np.fill_diagonal(safe_vardiff, 1.0)
    sqrt_vardiff = np.sqrt(safe_vardiff)
    out = np.empty((p, p), dtype=np.float64)
    for i in range(p):
        r = np.abs(scaled[i][None, :] - scaled)
        r[:, i] = -np.inf
        np.fill_diagonal(r, -np.inf)
        out[i] = r.max(axis=1) / sqrt_vardiff[i]
    np.fill_diagonal(out, 0.0)
    iu, ju = np.triu_indices(p, 1)
    out[ju, iu] = out[iu, ju]
    return out


@dataclass(frozen=True)
class ThresholdSelection:
    """Outcome of the ratio rule on sorted dissimilarities.

    ``sorted_values`` holds all Q = p(p-1)/2 off-diagonal values in
    descending order; ``q_hat`` is the 1-based rank maximizing the
    successive ratio, and ``gamma = sorted_values[q_hat - 1]``.
    """

    sorted_values: np.ndarray
    q_hat: int
    gamma: float
    delta: float
    c_q: float

    def __post_init__(self) -> None:
        v = np.asarray(self.sorted_values, dtype=np.float64).copy()
        v.setflags(write=False)
        object.__setattr__(self, "sorted_values", v)


def select_threshold(
    scod: np.ndarray,
    delta: float = DEFAULT_DELTA,
    c_q: float = DEFAULT_CQ,
) -> ThresholdSelection:
    """Pick the clustering threshold by the largest successive ratio.

    The Q off-diagonal dissimilarities are sorted descending and the
    rule maximizes ``(D_(m) + d) / (D_(m+1) + d)`` over
    ``m = 1..min(ceil(c_q * Q), Q - 1)`` with ``d = max(delta, 1e-12)``;
    ties go to the smallest m. The threshold is ``gamma = D_(q_hat)``.

    Parameters
    ----------
    scod : np.ndarray
        p x p symmetric dissimilarity matrix, p >= 3.
    delta : float
        Nonnegative ratio regularizer; 0 uses the 1e-12 floor only.
    c_q : float
        Search-range fraction in (0, 1].
    """
    s = _check_scod_input(np.asarray(scod), 3)
    if not delta >= 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if not 0.0 < c_q <= 1.0:
        raise ValueError(f"c_q must be in (0, 1], got {c_q}")
    p = s.shape[0]
    iu, ju = np.triu_indices(p, 1)
    values = np.sort(s[iu, ju])[::-1]
    q_total = values.size
    d_eff = max(float(delta), 1e-12)
    m_max = min(math.ceil(c_q * q_total - 1e-9), q_total - 1)
    ratios = (values[:m_max] + d_eff) / (values[1 : m_max + 1] + d_eff)
    q_hat = int(np.argmax(ratios)) + 1
    return ThresholdSelection(
        sorted_values=values,
        q_hat=q_hat,
        gamma=float(values[q_hat - 1]),
        delta=float(delta),
        c_q=float(c_q),
    )


def cluster(scod: np.ndarray, gamma: float) -> ClusterPartition:
    """Single-linkage agglomeration below a threshold.

    Starting from singletons, repeatedly merge the pair of groups with
    the smallest minimum pairwise dissimilarity, stopping as soon as
    that minimum is >= ``gamma`` (merges use a strict ``<``). Among
    tied pairs the one with the lexicographically smallest pair of
    smallest original members merges first. The result equals the
    connected components of the graph with edges ``{D_ij < gamma}``.

    Parameters
    ----------
    scod : np.ndarray
        p x p symmetric dissimilarity matrix, p >= 2.
    gamma : float
        Strictly positive merge threshold.
    """
    s = _check_scod_input(np.asarray(scod), 2)
    if not gamma > 0.0:
        raise EstimationError(
            f"merge threshold must be > 0, got {gamma}; "
            "the dissimilarities are degenerate"
        )
    p = s.shape[0]
    work = s.astype(np.float64, copy=True)
    np.fill_diagonal(work, np.inf)
    members: list[list[int] | None] = [[i] for i in range(p)]
    remaining = p
    while remaining > 1:
        # row-major argmin over the symmetric matrix lands on the
        # lexicographically smallest (i, j) with i < j among the ties
        flat = int(np.argmin(work))
        i, j = divmod(flat, p)
        if not work[i, j] < gamma:
            break
        if i > j:
            i, j = j, i
        np.minimum(work[i], work[j], out=work[i])
        work[:, i] = work[i]
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        members[i].extend(members[j])  # type: ignore[union-attr]
        members[j] = None
        remaining -= 1
    groups = [g for g in members if g is not None]
    return ClusterPartition.from_groups(groups, p)


@dataclass(frozen=True)
class ClusteringResult:
    """Residual covariance, dissimilarities, threshold, and partition."""

    residual_cov: np.ndarray
    scod: np.ndarray
    selection: ThresholdSelection
    partition: ClusterPartition


def run_clustering_pipeline(
    residuals: np.ndarray,
    delta: float = DEFAULT_DELTA,
    c_q: float = DEFAULT_CQ,
) -> ClusteringResult:
    """Residual covariance -> dissimilarities -> threshold -> partition."""
    cov = residual_cov(residuals)
    scod = scod_matrix(cov)
    selection = select_threshold(scod, delta=delta, c_q=c_q)
    partition = cluster(scod, selection.gamma)
    return ClusteringResult(
        residual_cov=cov, scod=scod, selection=selection, partition=partition
    )


def adjusted_rand_index(a, b) -> float:
    """Chance-adjusted pair-counting agreement between two partitions.

    Accepts ``ClusterPartition`` objects or label vectors of equal
    length. Returns 1.0 whenever the adjusted denominator is zero,
    which only happens for identical trivial partitions (both
    all-singletons or both single-cluster).
    """
    la = a.labels if isinstance(a, ClusterPartition) else np.asarray(a)
    lb = b.labels if isinstance(b, ClusterPartition) else np.asarray(b)
    if la.ndim != 1 or lb.ndim != 1 or la.size != lb.size:
        raise ValueError("partitions must label the same 1-D index set")
    if la.size == 0:
        raise ValueError("partitions must be nonempty")
    n = la.size
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    na = int(ia.max()) + 1
    nb = int(ib.max()) + 1
    counts = np.bincount(ia * nb + ib, minlength=na * nb).reshape(na, nb)

    def comb2(x: int) -> int:
        return x * (x - 1) // 2

    sum_cells = sum(comb2(int(v)) for v in counts.ravel() if v > 1)
    sum_a = sum(comb2(int(v)) for v in counts.sum(axis=1))
    sum_b = sum(comb2(int(v)) for v in counts.sum(axis=0))
    pairs = comb2(n)
    # integer arithmetic throughout; a single float division at the end
    numer = 2 * (sum_cells * pairs - sum_a * sum_b)
    denom = (sum_a + sum_b) * pairs - 2 * sum_a * sum_b
    if denom == 0:
        return 1.0
    return numer / denom
