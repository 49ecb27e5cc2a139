"""Slow, independent reference computations for the test suite.

Nothing here imports the solver: the math is re-derived with different code
paths (direct search, finite differences, quadrature) so that a bug in the
fast path cannot confirm itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariance


@dataclass(frozen=True)
class OracleConfig:
    n_samples: int = 100_000
    refine_steps: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def _sharpe(mu, sigma, a):
    var = float(np.dot(a, np.dot(sigma, a)))
    if not var > 0:
        raise DegenerateVariance("direction has zero variance")
    return float(np.dot(a, mu)) / math.sqrt(var)


def two_pass_covariance(values) -> tuple:
    """Means and 1/(n-1) covariance with explicit Python loops."""
    rows = [list(map(float, r)) for r in np.asarray(values)]
    n, d = len(rows), len(rows[0])
    means = [sum(r[j] for r in rows) / n for j in range(d)]
    cov = [[0.0] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            cov[i][j] = sum(
                (r[i] - means[i]) * (r[j] - means[j]) for r in rows
            ) / (n - 1)
    return np.array(means), np.array(cov)


def _whitener(sigma):
    eigvals, eigvecs = np.linalg.eigh(sigma)
    if eigvals[0] <= 0:
        return None
    return eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T


def brute_force_max(moments, config: OracleConfig = OracleConfig()):
    """Best Sharpe over random directions, then a random-perturbation polish.

    Directions are Gaussian in whitened coordinates, hence uniform on the
    ellipsoid ``a' sigma a = 1``.  Returns ``(alpha, objective)``.
    """
    mu = np.asarray(moments.mu, dtype=float)
    sigma = np.asarray(moments.sigma, dtype=float)
    d = mu.shape[0]
    rng = np.random.default_rng(config.seed)
    W = _whitener(sigma)
    if W is None:
        W = np.eye(d)
    z = rng.standard_normal((config.n_samples, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    cand = z @ W.T
    var = np.einsum("ij,jk,ik->i", cand, sigma, cand)
    ok = var > 0
    scores = np.full(cand.shape[0], -np.inf)
    scores[ok] = (cand[ok] @ mu) / np.sqrt(var[ok])
    best_i = int(np.argmax(scores))
    best_u, best = z[best_i], float(scores[best_i])

    scale = 0.5
    for _ in range(config.refine_steps):
        trial = best_u + scale * rng.standard_normal((64, d))
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        a = trial @ W.T
        v = np.einsum("ij,jk,ik->i", a, sigma, a)
        good = v > 0
        s = np.full(a.shape[0], -np.inf)
        s[good] = (a[good] @ mu) / np.sqrt(v[good])
        j = int(np.argmax(s))
        if s[j] > best:
            best, best_u = float(s[j]), trial[j]
        else:
            scale *= 0.7
            if scale < 1e-9:
                scale = 1e-9
    alpha = W @ best_u
    alpha = alpha / math.sqrt(float(alpha @ sigma @ alpha))
    return alpha, best


def finite_diff_gradient(moments, alpha, h: float = 1e-6) -> np.ndarray:
    """Central differences of the Sharpe objective, one coordinate at a time."""
    if not h > 0:
        raise ValueError("h must be > 0")
    mu = np.asarray(moments.mu, dtype=float)
    sigma = np.asarray(moments.sigma, dtype=float)
    a = np.asarray(alpha, dtype=float)
    grad = np.empty_like(a)
    for i in range(a.shape[0]):
        up, down = a.copy(), a.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (_sharpe(mu, sigma, up) - _sharpe(mu, sigma, down)) / (2 * h)
    return grad


def constrained_max(moments, beta, n_grid: int = 20_001):
    """Best Sharpe over directions orthogonal to ``beta``.

    The orthogonal complement is spanned by an SVD basis; with 2 coefficients
    it is a line (two candidate directions), with 3 a circle searched on an
    ``n_grid`` angle grid.  Returns ``(alpha, objective)``.
    """
    mu = np.asarray(moments.mu, dtype=float)
    sigma = np.asarray(moments.sigma, dtype=float)
    beta = np.asarray(beta, dtype=float).reshape(1, -1)
    _, _, vt = np.linalg.svd(beta)
    basis = vt[1:]
    if basis.shape[0] == 1:
        cands = np.vstack([basis[0], -basis[0]])
    elif basis.shape[0] == 2:
        theta = np.linspace(0.0, 2 * np.pi, n_grid, endpoint=False)
        cands = np.cos(theta)[:, None] * basis[0] + np.sin(theta)[:, None] * basis[1]
    else:
        raise ValueError("constrained_max supports 2 or 3 coefficients")
    scores = [_sharpe(mu, sigma, c) for c in cands]
    i = int(np.argmax(scores))
    return cands[i], float(scores[i])


def dense_grid_penalized_max(moments, lam: float, n_grid: int = 2001, radius=2.0):
    """Max of ``L(a) - lam * |a|_1`` over a 2-D grid of points rescaled onto
    ``a' sigma a = 1``.  Returns ``(alpha, value)``."""
    mu = np.asarray(moments.mu, dtype=float)
    sigma = np.asarray(moments.sigma, dtype=float)
    if mu.shape[0] != 2:
        raise ValueError("dense grid oracle is two-dimensional")
    axis = np.linspace(-radius, radius, n_grid)
    a1, a2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([a1.ravel(), a2.ravel()], axis=1)
    var = np.einsum("ij,jk,ik->i", pts, sigma, pts)
    pts, var = pts[var > 0], var[var > 0]
    pts = pts / np.sqrt(var)[:, None]
    values = pts @ mu - lam * np.abs(pts).sum(axis=1)
    i = int(np.argmax(values))
    return pts[i], float(values[i])


# -- Student t tail by quadrature -------------------------------------------------


def _t_density_const(dof: float) -> float:
    return math.exp(
        math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2)
    ) / math.sqrt(dof * math.pi)


def _simpson(f, a, b, n):
    n += n % 2
    x = np.linspace(a, b, n + 1)
    y = f(x)
    h = (b - a) / n
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def student_t_sf(t: float, dof: int, method: str = "simpson") -> float:
    """Two-sided tail ``P(|T| >= |t|)`` for Student's t with ``dof`` degrees.

    ``simpson``: composite Simpson of the density on ``[0, |t|]``, halving the
    step until successive estimates agree to 1e-13.
    ``gauss``: Gauss-Legendre on the upper tail after mapping
    ``x = |t| + s / (1 - s)`` onto ``s`` in ``[0, 1)``.
    """
    if dof < 1:
        raise ValueError("dof must be >= 1")
    t = abs(float(t))
    if t == 0:
        return 1.0
    c = _t_density_const(dof)
    expo = -(dof + 1) / 2

    def density(x):
        return c * np.power(1.0 + x * x / dof, expo)

    if method == "simpson":
        n = 64
        prev = _simpson(density, 0.0, t, n)
        for _ in range(20):
            n *= 2
            cur = _simpson(density, 0.0, t, n)
            if abs(cur - prev) < 1e-13:
                break
            prev = cur
        return float(min(1.0, max(0.0, 1.0 - 2.0 * cur)))
    if method == "gauss":
        nodes, weights = np.polynomial.legendre.leggauss(64)
        edges = np.linspace(0.0, 1.0, 257)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            s = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            x = t + s / (1.0 - s)
            jac = 1.0 / (1.0 - s) ** 2
            total += 0.5 * (hi - lo) * float(np.sum(weights * density(x) * jac))
        return float(min(1.0, 2.0 * total))
    raise ValueError(f"unknown method {method!r}")


def gaussian_two_sided(t: float) -> float:
    return math.erfc(abs(t) / math.sqrt(2.0))
