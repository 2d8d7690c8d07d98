"""Principal components by power iteration with deflation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RankError(ValueError):
    pass


@dataclass(frozen=True)
class PcaResult:
    points: np.ndarray  # (n, k) projected coordinates
    components: np.ndarray  # (k, d) orthonormal principal directions
    explained_variance: np.ndarray  # (k,) eigenvalues, nonincreasing
    explained_variance_ratio: np.ndarray
    mean: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.points @ self.components + self.mean


def pca_project(
    features, k: int = 3, tol: float = 1e-9, max_iter: int = 1000, seed: int = 0
) -> PcaResult:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array")
    n, d = X.shape
    if n < k + 1:
        raise RankError(f"need at least {k + 1} samples for {k} components, got {n}")
    if k > d:
        raise RankError(f"cannot extract {k} components from {d} dimensions")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    total = float(np.trace(cov))
    if total <= 0.0:
        raise RankError("data has zero variance")

    rng = np.random.Generator(np.random.PCG64(seed))
    work = cov.copy()
    comps, values = [], []
    for _ in range(k):
        v = rng.standard_normal(d)
        v = _orthogonalize(v, comps)
        for _ in range(max_iter):
            w = _orthogonalize(work @ v, comps)
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                # remaining spectrum is numerically zero; any orthonormal
                # direction will do
                break
            w /= norm
            if w @ v < 0:
                w = -w
            done = np.linalg.norm(w - v) < tol
            v = w
            if done:
                break
        lam = float(v @ cov @ v)
        comps.append(v)
        values.append(max(lam, 0.0))
        work = work - lam * np.outer(v, v)

    components = np.vstack(comps)
    values = np.array(values)
    return PcaResult(
        points=Xc @ components.T,
        components=components,
        explained_variance=values,
        explained_variance_ratio=values / total,
        mean=mean,
    )


def _orthogonalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for _ in range(2):
        for b in basis:
            v = v - (v @ b) * b
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v
