"""Covariance assembly and matrix norms.

Given factor loadings B, factor covariance S_f, a partition with
membership matrix A, cluster covariance S_z, and idiosyncratic
variances S_e = diag(v), the assembled estimates are

    Sigma_u = A S_z A' + S_e        Sigma = B S_f B' + Sigma_u

with precisions obtained from two nested Sherman-Morrison-Woodbury
steps so that only K x K and r x r systems are ever solved:

    Sigma_u^-1 = S_e^-1 - S_e^-1 A (S_z^-1 + A' S_e^-1 A)^-1 A' S_e^-1
    Sigma^-1   = Sigma_u^-1 - Sigma_u^-1 B (S_f^-1 + B' Sigma_u^-1 B)^-1 B' Sigma_u^-1
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .factors import FactorFit
from .panel import (
    ClusterPartition,
    load_matrix_csv,
    load_partition_csv,
    save_matrix_csv,
    save_partition_csv,
    symmetrize,
)

_MAX_CONDITION = 1e12
_MIN_IDIO_VAR = 1e-12
_EIG_FLOOR = 1e-10


def estimate_cluster_series(
    residuals: np.ndarray, partition: ClusterPartition
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares cluster paths and leftover idiosyncratic residuals.

    With membership matrix A, the cluster path solves
    ``z_t = (A'A)^{-1} A' u_t``, i.e. row-wise group means; the
    second output is ``e_t = u_t - A z_t``.

    Returns
    -------
    (np.ndarray, np.ndarray)
        T x K cluster paths and T x p idiosyncratic residuals.
    """
    u = np.asarray(residuals, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"residuals must be 2-D, got {u.ndim}-D")
    if u.shape[1] != partition.n_series:
        raise ValueError(
            f"residuals have {u.shape[1]} series, partition has {partition.n_series}"
        )
    z = np.empty((u.shape[0], partition.n_clusters), dtype=np.float64)
    for k, g in enumerate(partition.groups):
        z[:, k] = u[:, list(g)].mean(axis=1)
    e = u - z[:, partition.labels]
    return z, e


def cluster_cov(z_hat: np.ndarray) -> np.ndarray:
    """Uncentered second-moment matrix of the cluster paths, denominator T."""
    z = np.asarray(z_hat, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("cluster paths must be T x K with T >= 2")
    return symmetrize(z.T @ z / z.shape[0])


def idio_var(e_hat: np.ndarray) -> np.ndarray:
    """Per-series uncentered residual variances, denominator T."""
    e = np.asarray(e_hat, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 2:
        raise ValueError("idiosyncratic residuals must be T x p with T >= 2")
    return (e * e).mean(axis=0)


@dataclass(frozen=True)
class StructuredCovariance:
    """The five-component representation of an assembled covariance.

    Everything needed to rebuild the p x p matrices: loadings (p x r),
    factor covariance (r x r), the partition, cluster covariance
    (K x K), and idiosyncratic variances (length p).
    """

    loadings: np.ndarray
    factor_cov: np.ndarray
    partition: ClusterPartition
    cluster_cov: np.ndarray
    idio_var: np.ndarray
    series_names: tuple[str, ...]
    factor_names: tuple[str, ...]

    def __post_init__(self) -> None:
        b = np.asarray(self.loadings, dtype=np.float64)
        sf = np.asarray(self.factor_cov, dtype=np.float64)
        sz = np.asarray(self.cluster_cov, dtype=np.float64)
        v = np.asarray(self.idio_var, dtype=np.float64)
        p, r = b.shape
        k = self.partition.n_clusters
        if self.partition.n_series != p:
            raise ValueError("partition size does not match loadings")
        if sf.shape != (r, r) or sz.shape != (k, k) or v.shape != (p,):
            raise ValueError("component shapes are inconsistent")
        if len(self.series_names) != p or len(self.factor_names) != r:
            raise ValueError("name tuples do not match component shapes")
        for arr, name in ((b, "loadings"), (sf, "factor_cov"), (sz, "cluster_cov"), (v, "idio_var")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "loadings", _frozen(b))
        object.__setattr__(self, "factor_cov", _frozen(sf))
        object.__setattr__(self, "cluster_cov", _frozen(sz))
        object.__setattr__(self, "idio_var", _frozen(v))
        object.__setattr__(self, "series_names", tuple(self.series_names))
        object.__setattr__(self, "factor_names", tuple(self.factor_names))


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AssembledEstimate:
    """Dense covariance/precision estimates plus their structured form."""

    structured: StructuredCovariance
    sigma: np.ndarray
    sigma_u: np.ndarray
    precision: np.ndarray
    precision_u: np.ndarray


def _check_conditioning(m: np.ndarray, what: str) -> None:
    eigvals = np.linalg.eigvalsh(symmetrize(m))
    if eigvals[0] <= 0.0 or eigvals[-1] / eigvals[0] >= _MAX_CONDITION:
        cond = np.inf if eigvals[0] <= 0.0 else eigvals[-1] / eigvals[0]
        raise EstimationError(
            f"{what} is numerically singular (condition number {cond:.3g})"
        )


def assemble_from_structure(structured: StructuredCovariance) -> AssembledEstimate:
    """Rebuild dense covariance and precision matrices from components.

    Raises
    ------
    EstimationError
        If any idiosyncratic variance falls below 1e-12 (message names
        the series) or the factor/cluster covariances are numerically
        singular.
    """
    v = structured.idio_var
    if np.any(v < _MIN_IDIO_VAR):
        i = int(np.argmin(v))
        raise EstimationError(
            f"idiosyncratic variance of series {structured.series_names[i]!r} "
            f"is {v[i]:.3g} (< {_MIN_IDIO_VAR:g}); series is explained exactly "
            "by the factors and cluster paths"
        )
    sz = structured.cluster_cov
    sf = structured.factor_cov
    n_factors = sf.shape[0]
    _check_conditioning(sz, "cluster covariance")
    if n_factors > 0:
        _check_conditioning(sf, "factor covariance")
    a = structured.partition.membership.astype(np.float64)
    b = structured.loadings
    k = structured.partition.n_clusters

    sigma_u = symmetrize(a @ sz @ a.T) + np.diag(v)
    sigma = symmetrize(b @ sf @ b.T) + sigma_u

    # K-dimensional Woodbury for Sigma_u^-1
    inv_v = 1.0 / v
    w = a * inv_v[:, None]  # S_e^-1 A
    ata = np.zeros((k, k), dtype=np.float64)
    np.fill_diagonal(ata, np.array([inv_v[list(g)].sum() for g in structured.partition.groups]))
    sz_inv = np.linalg.solve(sz, np.eye(k))
    inner_u = symmetrize(sz_inv) + ata
    precision_u = np.diag(inv_v) - w @ np.linalg.solve(inner_u, w.T)
    precision_u = symmetrize(precision_u)

    # r-dimensional Woodbury for Sigma^-1
    if n_factors > 0:
        g = precision_u @ b
        sf_inv = np.linalg.solve(sf, np.eye(n_factors))
        inner = symmetrize(sf_inv) + symmetrize(b.T @ g)
        precision = symmetrize(precision_u - g @ np.linalg.solve(inner, g.T))
    else:
        precision = precision_u

    return AssembledEstimate(
        structured=structured,
        sigma=_frozen(sigma),
        sigma_u=_frozen(sigma_u),
        precision=_frozen(precision),
        precision_u=_frozen(precision_u),
    )


def assemble(fit: FactorFit, partition: ClusterPartition) -> AssembledEstimate:
    """Third estimation stage: cluster paths, components, dense matrices."""
    z_hat, e_hat = estimate_cluster_series(fit.residuals, partition)
    structured = StructuredCovariance(
        loadings=fit.loadings,
        factor_cov=fit.factor_cov,
        partition=partition,
        cluster_cov=cluster_cov(z_hat),
        idio_var=idio_var(e_hat),
        series_names=fit.series_names,
        factor_names=fit.factor_names,
    )
    return assemble_from_structure(structured)


def sample_cov(data) -> np.ndarray:
    """Centered sample covariance (1/(T-1)) of a panel or T x p array."""
    x = np.asarray(getattr(data, "values", data), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a T x p array with T >= 2")
    xc = x - x.mean(axis=0, keepdims=True)
    return symmetrize(xc.T @ xc / (x.shape[0] - 1))


def _require_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    if scale > 0 and np.abs(m - m.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    return m


def operator_norm(m: np.ndarray) -> float:
    """Largest absolute eigenvalue of a symmetric matrix."""
    m = _require_symmetric(m)
    return float(np.abs(np.linalg.eigvalsh(symmetrize(m))).max())


def max_norm(m: np.ndarray) -> float:
    """Largest absolute entry."""
    return float(np.abs(np.asarray(m, dtype=np.float64)).max())


def weighted_quadratic_norm(m: np.ndarray, ref: np.ndarray) -> float:
    """Frobenius norm of ``ref^{-1/2} m ref^{-1/2}`` scaled by ``p^{-1/2}``.

    Satisfies ``weighted_quadratic_norm(ref, ref) == 1``.

    Raises
    ------
    EstimationError
        If the reference matrix has an eigenvalue <= 1e-10.
    """
    m = _require_symmetric(m)
    ref = _require_symmetric(ref)
    if m.shape != ref.shape:
        raise ValueError("matrix and reference must have the same shape")
    eigvals, eigvecs = np.linalg.eigh(symmetrize(ref))
    if eigvals[0] <= _EIG_FLOOR:
        raise EstimationError(
            f"reference matrix is not positive definite "
            f"(min eigenvalue {eigvals[0]:.3g} <= {_EIG_FLOOR:g})"
        )
    inv_sqrt = (eigvecs / np.sqrt(eigvals)[None, :]) @ eigvecs.T
    x = inv_sqrt @ m @ inv_sqrt
    p = m.shape[0]
    return float(np.linalg.norm(x, "fro") / np.sqrt(p))


_BUNDLE_FILES = (
    "loadings.csv",
    "factor_cov.csv",
    "partition.csv",
    "cluster_cov.csv",
    "idio_var.csv",
)


def save_bundle(structured: StructuredCovariance, directory: str) -> None:
    """Write the five-component bundle into a directory.

    Matrices round-trip bitwise. Factor names are not part of the
    bundle format; reloading substitutes positional names.
    """
    os.makedirs(directory, exist_ok=True)
    save_matrix_csv(structured.loadings, os.path.join(directory, "loadings.csv"))
    save_matrix_csv(structured.factor_cov, os.path.join(directory, "factor_cov.csv"))
    save_partition_csv(
        structured.partition,
        structured.series_names,
        os.path.join(directory, "partition.csv"),
    )
    save_matrix_csv(structured.cluster_cov, os.path.join(directory, "cluster_cov.csv"))
    save_matrix_csv(structured.idio_var, os.path.join(directory, "idio_var.csv"))


def load_bundle(directory: str) -> StructuredCovariance:
    """Reload a bundle written by :func:`save_bundle`."""
    paths = {name: os.path.join(directory, name) for name in _BUNDLE_FILES}
    loadings = load_matrix_csv(paths["loadings.csv"])
    factor_cov = load_matrix_csv(paths["factor_cov.csv"])
    clu_cov = load_matrix_csv(paths["cluster_cov.csv"])
    iv = load_matrix_csv(paths["idio_var.csv"])[:, 0]
    with open(paths["partition.csv"], "r", encoding="utf-8") as fh:
        names = tuple(line.split(",", 1)[0] for line in fh.read().splitlines()[1:] if line)
    partition = load_partition_csv(paths["partition.csv"], names)
    r = loadings.shape[1]
    return StructuredCovariance(
        loadings=loadings,
        factor_cov=factor_cov,
        partition=partition,
        cluster_cov=clu_cov,
        idio_var=iv,
        series_names=names,
        factor_names=tuple(f"f{j + 1}" for j in range(r)),
    )
