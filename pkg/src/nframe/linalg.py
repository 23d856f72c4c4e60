"""Dense matrix primitives: singular values, stable rank, linear CKA,
Gram-preserving random isometries, and random-matrix expectations.

Frames are tall and skinny (k <= ~50 columns in ambient dimensions up to
~1.5e5), so singular values are computed from the k x k Gram matrix:
O(n k^2) and robust for this regime.
"""

import math
import warnings

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidInputError,
    ShapeError,
    UndefinedStableRankError,
)

__all__ = [
    "as_matrix",
    "singular_values",
    "spectral_norm",
    "stable_rank",
    "linear_cka",
    "SubspaceIsometry",
    "random_subspace_isometry",
    "mp_residual_coefficient",
    "mp_weight_coefficient",
    "mc_residual_stable_rank",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and coerce ``a`` to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains NaN or Inf entries")
    return m


def _gram_eigvals(a: np.ndarray) -> np.ndarray:
    """Eigenvalues (descending, clipped >= 0) of the smaller Gram matrix."""
    if a.shape[1] <= a.shape[0]:
        g = a.T @ a
    else:
        g = a @ a.T
    vals = np.linalg.eigvalsh(g)[::-1]
    return np.clip(vals, 0.0, None)


def singular_values(a) -> np.ndarray:
    """Singular values of ``a``, sorted non-increasing.

    Computed via eigendecomposition of A^T A or A A^T, whichever is smaller.
    Length equals min(rows, cols).
    """
    m = as_matrix(a)
    return np.sqrt(_gram_eigvals(m))


def spectral_norm(a) -> float:
    """Largest singular value."""
    m = as_matrix(a)
    return float(np.sqrt(_gram_eigvals(m)[0]))


def stable_rank(a) -> float:
    """||A||_F^2 / ||A||_spec^2, the noise-robust lower bound on rank.

    Always in [1, min(rows, cols)] for nonzero A; raises
    UndefinedStableRankError for the zero matrix (sigma_1 = 0).
    """
    m = as_matrix(a)
    if not np.any(m):
        raise UndefinedStableRankError("stable rank of the zero matrix is undefined")
    if m.shape[1] <= m.shape[0]:
        g = m.T @ m
    else:
        g = m @ m.T
    vals = np.linalg.eigvalsh(g)
    top = vals[-1]
    if top <= 0.0:
        raise UndefinedStableRankError("stable rank of the zero matrix is undefined")
    # trace(G) = ||A||_F^2; trace/lambda_max is guaranteed to land in [1, k]
    return float(np.trace(g) / top)


def _centered_gram(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean(axis=0)
    return xc @ xc.T


def linear_cka(x, y) -> float:
    """Linear CKA between row-matched feature matrices.

    Rows are the k frame vectors, columns are features. Columns are centered
    over the k rows; the score is ||Cov(X,Y)||_F^2 / (||Cov(X,X)||_F *
    ||Cov(Y,Y)||_F), evaluated through k x k Gram matrices so wide inputs
    never materialize a features x features covariance.
    """
    xm = as_matrix(x, "X")
    ym = as_matrix(y, "Y")
    if xm.shape[0] != ym.shape[0]:
        raise ShapeError(f"row counts differ: {xm.shape[0]} vs {ym.shape[0]}")
    if xm.shape[0] < 2:
        raise ShapeError("linear CKA needs at least 2 rows")
    kx = _centered_gram(xm)
    ky = _centered_gram(ym)
    # ||X_c^T Y_c||_F^2 = trace(Kx Ky) for symmetric Gram factors
    cross = float(np.sum(kx * ky))
    nx = float(np.sqrt(np.sum(kx * kx)))
    ny = float(np.sqrt(np.sum(ky * ky)))
    scale = np.linalg.norm(xm) * np.linalg.norm(ym)
    if nx <= 1e-24 * max(scale * scale, 1e-300) or ny <= 1e-24 * max(scale * scale, 1e-300):
        raise DegenerateInputError("constant input: centered covariance is zero")
    return cross / (nx * ny)


class SubspaceIsometry:
    """Linear map onto a random k-dimensional subspace that preserves Grams.

    ``map_frame(V)`` returns W (U^T V) where U is an orthonormal basis of
    span(V) and W a fixed seeded orthonormal basis of a random subspace, so
    (V')^T V' = V^T V up to roundoff. Rank-deficient V is handled by padding
    U with directions from the orthogonal complement; a warning is recorded.
    """

    def __init__(self, n: int, k: int, seed: int):
        if k > n:
            raise ShapeError(f"frame size k={k} exceeds ambient dimension n={n}")
        self.n = int(n)
        self.k = int(k)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        gauss = rng.standard_normal((self.n, self.k))
        self.basis, _ = np.linalg.qr(gauss)

    def map_frame(self, v) -> np.ndarray:
        vm = as_matrix(v, "V")
        if vm.shape != (self.n, self.k):
            raise ShapeError(f"expected frame of shape ({self.n}, {self.k}), got {vm.shape}")
        q, r = np.linalg.qr(vm)
        col_scale = np.linalg.norm(vm) + 1e-300
        deficient = np.abs(np.diag(r)) <= 1e-12 * col_scale
        if np.any(deficient):
            warnings.warn(
                f"rank-deficient frame ({int(deficient.sum())} dependent columns); "
                "isometry extended with orthogonal-complement directions",
                stacklevel=2,
            )
            q = self._complete_basis(vm)
        return self.basis @ (q.T @ vm)

    def _complete_basis(self, vm: np.ndarray) -> np.ndarray:
        # orthonormal basis of span(V) padded to k columns from its complement
        u, s, _ = np.linalg.svd(vm, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * (s[0] if s[0] > 0 else 1.0)))
        q = u[:, :rank]
        rng = np.random.default_rng(self.seed + 1)
        while q.shape[1] < self.k:
            cand = rng.standard_normal(self.n)
            cand -= q @ (q.T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-8:
                q = np.column_stack([q, cand / norm])
        return q

    def __call__(self, v) -> np.ndarray:
        return self.map_frame(v)


def random_subspace_isometry(n: int, k: int, seed: int) -> SubspaceIsometry:
    """Seeded Gram-preserving map of k-frames into a random k-dim subspace."""
    return SubspaceIsometry(n, k, seed)


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) < 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return _simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_step(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def mp_residual_coefficient() -> float:
    """Expected stable rank of I + W over n, for W with He-normal iid entries.

    Integrates (1+y)^2 sqrt(8-y^2) / (2 pi) over [0, 2 sqrt(2)] (the
    quarter-circle singular value density of W, shifted by the identity)
    and divides by the squared top singular value (1 + 2 sqrt(2))^2.
    Adaptive Simpson quadrature; absolute error <= 1e-6.
    """
    edge = 2.0 * math.sqrt(2.0)

    def integrand(y: float) -> float:
        return (1.0 + y) ** 2 * math.sqrt(max(8.0 - y * y, 0.0)) / (2.0 * math.pi)

    integral = _adaptive_simpson(integrand, 0.0, edge, 1e-8)
    return integral / (1.0 + edge) ** 2


def mp_weight_coefficient() -> float:
    """Same expectation for W alone: integrand y^2 sqrt(8-y^2)/(2 pi) over 8."""
    edge = 2.0 * math.sqrt(2.0)

    def integrand(y: float) -> float:
        return y * y * math.sqrt(max(8.0 - y * y, 0.0)) / (2.0 * math.pi)

    return _adaptive_simpson(integrand, 0.0, edge, 1e-8) / 8.0


def mc_residual_stable_rank(n: int, trials: int, seed: int) -> tuple[float, float]:
    """Monte Carlo means of r(I+W)/n and r(W)/n for He-normal W.

    Residual singular values are modeled as 1 + sigma_i(W), matching the toy
    residual layer I + W with identity activations. Each trial draws from a
    counter-based stream keyed by (seed, trial), so trial order and thread
    count cannot affect the result.
    """
    if n < 64:
        raise ValueError("n must be >= 64")
    if trials < 10:
        raise ValueError("trials must be >= 10")
    scale = math.sqrt(2.0 / n)
    res_acc = 0.0
    plain_acc = 0.0
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))
        w = rng.standard_normal((n, n)) * scale
        s = np.linalg.svd(w, compute_uv=False)
        shifted = 1.0 + s
        res_acc += float(np.sum(shifted**2) / shifted[0] ** 2) / n
        plain_acc += float(np.sum(s**2) / s[0] ** 2) / n
    return res_acc / trials, plain_acc / trials
