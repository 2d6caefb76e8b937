"""Regularized least-squares estimation of the transition density.

For a basis ``phi`` the empirical quadratic criterion is
``J(beta) = beta' H beta / 2 - beta' h`` with

* ``H[i, j] = mean_u overlap_bar(i, j, X_u)``
* ``h[i]    = mean_u phi_i(X_u, X_u0, X_u1)``

and the ridge solution ``beta_tilde = (H + lam I)^{-1} h`` is clipped at
zero.  With Gaussian factors, ``H = pi tau^2 * G o (A'A / N)`` where
``A[u, i] = exp(-(X_u - c_i)^2 / (2 tau^2))`` and ``G`` is the child-center
Gram matrix (``o`` is the elementwise product), so assembly is a single
matrix product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import GaussianBasis

EPS_DEN = 1e-300
CHUNK = 4096


class NumericError(ArithmeticError):
    pass


class UnsupportedSlice(ValueError):
    """The renormalizing denominator vanishes at ``x``."""

    def __init__(self, x):
        super().__init__(f"estimator has no mass over parent value x={x!r}")
        self.x = x


@dataclass(frozen=True)
class EmpiricalSystem:
    H_hat: np.ndarray
    h_hat: np.ndarray
    n_samples: int


def _mirror_upper(m: np.ndarray) -> np.ndarray:
    # BLAS gemm does not promise a bitwise-symmetric A'A
    upper = np.triu(m)
    return upper + np.triu(m, 1).T


def assemble_H(b: GaussianBasis, parents) -> np.ndarray:
    x = np.asarray(parents, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("assemble_H needs at least one parent value")
    acc = np.zeros((b.d, b.d))
    for start in range(0, x.size, CHUNK):
        a = b.factors(x[start:start + CHUNK], 0)
        acc += a.T @ a
    acc /= x.size
    return _mirror_upper(np.pi * b.tau ** 2 * b.child_gram() * acc)


def assemble_h(b: GaussianBasis, triangles) -> np.ndarray:
    tri = np.asarray(triangles, dtype=np.float64).reshape(-1, 3)
    if tri.shape[0] == 0:
        raise ValueError("assemble_h needs at least one triangle")
    acc = np.zeros(b.d)
    for start in range(0, tri.shape[0], CHUNK):
        acc += b.evaluate(tri[start:start + CHUNK]).sum(axis=0)
    return acc / tri.shape[0]


def assemble(b: GaussianBasis, triangles) -> EmpiricalSystem:
    tri = np.asarray(triangles, dtype=np.float64).reshape(-1, 3)
    return EmpiricalSystem(assemble_H(b, tri[:, 0]), assemble_h(b, tri), tri.shape[0])


def ridge_residual(H, h, lam: float, beta) -> float:
    """``||(H + lam I) beta - h||_inf`` accumulated in extended precision."""
    Hl = np.asarray(H, dtype=np.longdouble)
    bl = np.asarray(beta, dtype=np.longdouble)
    r = Hl @ bl + np.longdouble(lam) * bl - np.asarray(h, dtype=np.longdouble)
    return float(np.max(np.abs(r)))


def ridge_solve(H, h, lam: float) -> np.ndarray:
    """Solve ``(H + lam I) beta = h`` by Cholesky.

    Falls back to a least-squares solve when the factorization breaks
    down and ``lam <= 1e-3``; otherwise a breakdown means ``H`` is not
    positive semidefinite and :class:`NumericError` is raised.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    H = np.asarray(H, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    A = H + lam * np.eye(H.shape[0])
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        if lam > 1e-3:
            raise NumericError(f"Cholesky failed at lambda={lam}: {exc}") from exc
        beta, *_ = linalg.lstsq(A, h, check_finite=False)
        return beta
    beta = linalg.cho_solve(factor, h, check_finite=False)
    # one refinement step with the residual taken in extended precision
    r = (A.astype(np.longdouble) @ beta.astype(np.longdouble) - h).astype(np.float64)
    return beta - linalg.cho_solve(factor, r, check_finite=False)


def clip_nonneg(beta_tilde) -> np.ndarray:
    return np.maximum(np.asarray(beta_tilde, dtype=np.float64), 0.0)


def objective(system: EmpiricalSystem, beta, lam: float = 0.0) -> float:
    """``beta' H beta / 2 - beta' h + lam beta' beta / 2``."""
    beta = np.asarray(beta, dtype=np.float64)
    return float(0.5 * beta @ system.H_hat @ beta - beta @ system.h_hat + 0.5 * lam * beta @ beta)


@dataclass(frozen=True)
class DensityFit:
    basis: GaussianBasis
    beta: np.ndarray
    lam: float
    beta_tilde: np.ndarray

    @property
    def tau(self) -> float:
        return self.basis.tau

    def eval_raw(self, points) -> np.ndarray:
        return self.basis.evaluate(points) @ self.beta

    def denominator(self, x) -> np.ndarray:
        """``2 pi tau^2 sum_j beta_j exp(-(x - c_j)^2 / (2 tau^2))``."""
        return self.basis.marginal_integrals(x) @ self.beta

    def eval_normalized(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        den = self.denominator(p[:, 0])
        bad = den <= EPS_DEN
        if np.any(bad):
            raise UnsupportedSlice(float(p[np.argmax(bad), 0]))
        return self.eval_raw(p) / den

    def slice_grid(self, x0: float, ys, zs, normalized: bool = True) -> np.ndarray:
        """Matrix ``P[k, l] = P_hat(x0, ys[k], zs[l])`` by separability."""
        w = self.beta * self.basis.factors([x0], 0)[0]
        mat = (self.basis.factors(ys, 1) * w) @ self.basis.factors(zs, 2).T
        if not normalized:
            return mat
        den = float(self.denominator([x0])[0])
        if den <= EPS_DEN:
            raise UnsupportedSlice(x0)
        return mat / den

    def squared_integral(self, x, normalized: bool = False) -> np.ndarray:
        """``int int P_hat(x, y, z)^2 dy dz`` in closed form, one value per ``x``."""
        x = np.asarray(x, dtype=np.float64).ravel()
        wa = self.basis.factors(x, 0) * self.beta
        g = np.pi * self.tau ** 2 * self.basis.child_gram()
        q = np.einsum("ki,ij,kj->k", wa, g, wa, optimize=True)
        if normalized:
            den = self.denominator(x)
            if np.any(den <= EPS_DEN):
                raise UnsupportedSlice(float(x[np.argmax(den <= EPS_DEN)]))
            q = q / den ** 2
        return q


def eval_raw(f: DensityFit, x: float, y: float, z: float) -> float:
    return float(f.eval_raw([[x, y, z]])[0])


def eval_normalized(f: DensityFit, x: float, y: float, z: float) -> float:
    return float(f.eval_normalized([[x, y, z]])[0])


def solve_fit(system: EmpiricalSystem, basis: GaussianBasis, lam: float) -> DensityFit:
    beta_tilde = ridge_solve(system.H_hat, system.h_hat, lam)
    return DensityFit(basis=basis, beta=clip_nonneg(beta_tilde), lam=float(lam), beta_tilde=beta_tilde)


def fit(triangles, basis: GaussianBasis, lam: float) -> DensityFit:
    """Assemble the empirical system on ``triangles``, ridge-solve and clip."""
    return solve_fit(assemble(basis, triangles), basis, lam)


# --- spectral diagnostics ---------------------------------------------------

def _split(m: np.ndarray, axis: int, bits: int, parts: int) -> list[np.ndarray]:
    # slices of at most `bits` significant bits relative to each row (axis=1)
    # or column (axis=0) maximum; slice products are then exact in float64
    amax = np.max(np.abs(m), axis=axis, keepdims=True)
    amax[amax == 0] = 1.0
    rest = m.copy()
    out = []
    for _ in range(parts):
        sigma = np.ldexp(0.75, np.frexp(amax)[1] + 53 - bits)
        hi = (rest + sigma) - sigma
        out.append(hi)
        rest = rest - hi
        amax = np.max(np.abs(rest), axis=axis, keepdims=True)
        amax[amax == 0] = 1.0
    out.append(rest)
    return out


def accurate_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` with absolute error far below ``eps * |a| |b|``.

    Both operands are split into short-mantissa slices whose pairwise
    products are exact in float64; only the final sum of partial products
    rounds.
    """
    inner = a.shape[1]
    bits = (53 - int(np.ceil(np.log2(max(inner, 2))))) // 2
    sa = _split(a, 1, bits, 3)
    sb = _split(b, 0, bits, 3)
    terms = [(i + j, sa[i] @ sb[j]) for i in range(len(sa)) for j in range(len(sb)) if i + j <= 4]
    out = np.zeros((a.shape[0], b.shape[1]))
    for _, t in sorted(terms, key=lambda it: -it[0]):
        out += t
    return out


def min_eigenvalue(H, refine_below: float = 1e-6) -> float:
    """Smallest eigenvalue of a symmetric matrix, refined near zero.

    A float64 eigensolver resolves eigenvalues only to about
    ``eps * ||H||``.  Eigenpairs below ``refine_below * ||H||`` are
    re-evaluated by Rayleigh-Ritz with an accurate ``H @ V`` product; the
    coupling to the remaining eigenvectors is folded in as a
    second-order lower-bound correction.
    """
    H = np.asarray(H, dtype=np.float64)
    w, V = np.linalg.eigh(H)
    scale = max(abs(w[0]), abs(w[-1]))
    small = np.flatnonzero(w < refine_below * scale)
    if small.size == 0 or scale == 0:
        return float(w[0])
    large = np.setdiff1d(np.arange(w.size), small)
    vs = V[:, small]
    hv = accurate_matmul(H, vs)
    gram = vs.T @ vs
    chol = np.linalg.cholesky(gram)
    ci = linalg.solve_triangular(chol, np.eye(small.size), lower=True)
    t = ci @ (vs.T @ hv) @ ci.T
    ws = np.linalg.eigvalsh(0.5 * (t + t.T))
    lo = float(ws[0])
    if large.size:
        coupling = np.linalg.norm(V[:, large].T @ hv, 2)
        gap = float(w[large].min() - max(ws[-1], 0.0))
        if gap > 0:
            lo -= coupling ** 2 / gap
    return lo
