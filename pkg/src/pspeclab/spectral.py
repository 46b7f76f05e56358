"""Eigendecomposition with spurious-mode filtering, fast sigma_min
sweeps with Schur reuse, pseudospectrum grids, contours and scaling fits.

sigma_min(P - z) is the reciprocal of the resolvent norm and the
computational currency of every experiment here.  One complex Schur
factorization P = Q T Q* is shared by all grid nodes; per node an
inverse iteration on the triangular factor costs O(M^2) instead of the
O(M^3) of a full SVD.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, PspecError
from .quantize import FourierGrid, HermiteBasis, OperatorMatrix

__all__ = [
    "SpectrumReport",
    "eigendecompose",
    "resolvent_norm",
    "ResolventGrid",
    "pseudospectrum_grid",
    "ScalingFit",
    "scaling_fit",
    "contour_extract",
]

EIG_SIZE_CAP = 4096
RESIDUAL_TOL = 1e-8      # relative to ||P||
TAIL_TOL = 1e-6
FLOOR_FACTOR = 1e3       # floor = FLOOR_FACTOR * eps * ||P||


# ---------------------------------------------------------------------------
# eigendecomposition with filtering

@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    tail_mass: np.ndarray
    accepted: np.ndarray
    norm: float
    residual_tol: float
    tail_tol: float

    @property
    def accepted_eigenvalues(self):
        return self.eigenvalues[self.accepted]

    def distance(self, z):
        """Distance from z to the accepted spectrum (inf when empty)."""
        acc = self.accepted_eigenvalues
        if acc.size == 0:
            return np.inf
        return float(np.abs(acc - z).min())


def _tail_mass_for_basis(basis, vectors):
    if isinstance(basis, (HermiteBasis, FourierGrid)):
        return basis.tail_mass(vectors)
    return np.zeros(vectors.shape[1])


def eigendecompose(P: OperatorMatrix, residual_tol=RESIDUAL_TOL,
                   tail_tol=TAIL_TOL) -> SpectrumReport:
    """Dense nonsymmetric eigendecomposition plus acceptance filtering.

    An eigenpair is accepted when its matrix residual ||(P-lam)v|| is
    below residual_tol * ||P|| and its basis-tail mass is below
    tail_tol.  Discretization truncation produces spurious interior
    eigenvalues for non-normal operators; the tail test is what rejects
    them.
    """
    A = P.matrix
    if A.shape[0] > EIG_SIZE_CAP:
        raise PspecError(f"matrix size {A.shape[0]} exceeds cap {EIG_SIZE_CAP}")
    lam, V = scipy.linalg.eig(A)
    norms = np.linalg.norm(V, axis=0)
    V = V / norms
    R = A @ V - V * lam
    residuals = np.linalg.norm(R, axis=0)
    opnorm = P.norm()
    tails = _tail_mass_for_basis(P.basis, V)
    accepted = (residuals <= residual_tol * max(opnorm, 1e-300)) & (tails <= tail_tol)
    order = np.argsort(lam.real, kind="stable")
    return SpectrumReport(lam[order], residuals[order], tails[order],
                          accepted[order], opnorm, residual_tol, tail_tol)


# ---------------------------------------------------------------------------
# sigma_min

def _sigma_min_svd(A):
    return float(scipy.linalg.svdvals(A)[-1])


def _seed_vector(size, seed=2024):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return v / np.linalg.norm(v)


def _sigma_min_triangular(T, z, v0, tol=1e-10, max_iter=50):
    """Inverse iteration for the smallest singular value of T - z
    (T upper triangular): power iteration on (A* A)^-1 via two
    triangular solves per step.  Deterministic given v0."""
    M = T.shape[0]
    A = T.copy()
    idx = np.arange(M)
    A[idx, idx] -= z
    (trtrs,) = scipy.linalg.get_lapack_funcs(("trtrs",), (A,))
    v = v0.copy()
    sigma_prev = None
    sigma_prev2 = None
    for _ in range(max_iter):
        w, info1 = trtrs(A, v, trans=2)      # A^H w = v
        u, info2 = trtrs(A, w, trans=0)      # A   u = w
        if info1 != 0 or info2 != 0:
            raise ConvergenceError("triangular solve failed (z on spectrum)")
        nu = np.linalg.norm(u)
        if not np.isfinite(nu) or nu == 0.0:
            raise ConvergenceError("inverse iteration blew up")
        sigma = 1.0 / np.sqrt(nu)
        if sigma_prev2 is not None:
            if (abs(sigma - sigma_prev) <= tol * sigma
                    and abs(sigma - sigma_prev2) <= tol * sigma):
                return sigma
        sigma_prev2 = sigma_prev
        sigma_prev = sigma
        v = u / nu
    raise ConvergenceError("inverse iteration did not converge")


def _sigma_min_lu(A, z, tol=1e-11, max_iter=200):
    """Inverse iteration on (A-z)^H (A-z) through one LU factorization;
    the cheap route for a single z on a large matrix."""
    M = A.shape[0]
    lu, piv = scipy.linalg.lu_factor(A - z * np.eye(M))
    v = _seed_vector(M)
    prev = None
    for _ in range(max_iter):
        x = scipy.linalg.lu_solve((lu, piv), v, trans=0)
        y = scipy.linalg.lu_solve((lu, piv), x, trans=2)
        nu = np.linalg.norm(y)
        if not np.isfinite(nu) or nu == 0.0:
            raise ConvergenceError("LU inverse iteration blew up")
        sigma = nu ** -0.5
        if prev is not None and abs(sigma - prev) <= tol * sigma:
            return float(sigma)
        prev = sigma
        v = y / nu
    raise ConvergenceError("LU inverse iteration did not converge")


def resolvent_norm(P: OperatorMatrix | np.ndarray, z: complex,
                   method: str = "auto"):
    """sigma_min(P - z I) = 1 / ||(P - z)^{-1}||.

    method "svd" is the reference path; "schur" runs the fast inverse
    iteration on a Schur factor; "lu" runs it through an LU
    factorization (cheapest for one z on a large matrix); "auto" tries
    the Schur path and falls back to the SVD on non-convergence.
    """
    A = P.matrix if isinstance(P, OperatorMatrix) else np.asarray(P)
    if method == "svd":
        return _sigma_min_svd(A - z * np.eye(A.shape[0]))
    if method == "lu":
        try:
            return _sigma_min_lu(A, z)
        except ConvergenceError:
            return _sigma_min_svd(A - z * np.eye(A.shape[0]))
    T = scipy.linalg.schur(A, output="complex")[0]
    v0 = _seed_vector(A.shape[0])
    try:
        return _sigma_min_triangular(T, z, v0)
    except ConvergenceError:
        if method == "schur":
            raise
        return _sigma_min_svd(A - z * np.eye(A.shape[0]))


# ---------------------------------------------------------------------------
# pseudospectrum grid

@dataclass
class ResolventGrid:
    re: np.ndarray              # (nre,) real axis nodes
    im: np.ndarray              # (nim,)
    sigma: np.ndarray           # (nre, nim) sigma_min values (floored)
    floored: np.ndarray         # (nre, nim) bool
    h: float
    floor: float
    timing: dict = field(default_factory=dict)

    def node_values(self):
        Z = self.re[:, None] + 1j * self.im[None, :]
        return Z


def pseudospectrum_grid(P: OperatorMatrix, rectangle, shape, threads: int = 1,
                        force_svd: bool = False) -> ResolventGrid:
    """sigma_min(P - z) over a rectangular z-grid.

    rectangle = (re_min, re_max, im_min, im_max); shape = (n_re, n_im).
    One Schur factorization is reused by every node; nodes that fail the
    inverse iteration fall back to a full SVD (count logged in timing).
    Output is deterministic and independent of the thread count.
    """
    re_min, re_max, im_min, im_max = map(float, rectangle)
    n_re, n_im = shape
    if not (re_max > re_min and im_max > im_min):
        raise ValueError("rectangle is degenerate")
    re = np.linspace(re_min, re_max, n_re)
    im = np.linspace(im_min, im_max, n_im)
    A = P.matrix
    M = A.shape[0]
    opnorm = P.norm() if isinstance(P, OperatorMatrix) else np.linalg.norm(A, 2)
    floor = FLOOR_FACTOR * np.finfo(float).eps * max(opnorm, 1e-300)
    t0 = time.perf_counter()
    fallbacks = 0
    if force_svd:
        T = A
        v0 = None
    else:
        T = scipy.linalg.schur(A, output="complex")[0]
        v0 = _seed_vector(M)
    t_factor = time.perf_counter() - t0

    def node(z):
        if force_svd:
            return _sigma_min_svd(A - z * np.eye(M)), 0
        try:
            return _sigma_min_triangular(T, z, v0), 0
        except ConvergenceError:
            return _sigma_min_svd(T - z * np.eye(M)), 1

    zs = [complex(r, i) for r in re for i in im]
    t1 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(node, zs))
    else:
        results = [node(z) for z in zs]
    t_sweep = time.perf_counter() - t1
    sigma = np.array([r[0] for r in results]).reshape(n_re, n_im)
    fallbacks = sum(r[1] for r in results)
    floored = sigma < floor
    sigma = np.where(floored, floor, sigma)
    timing = {"factorization_s": t_factor, "sweep_s": t_sweep,
              "nodes": n_re * n_im, "svd_fallbacks": fallbacks,
              "threads": threads, "force_svd": force_svd}
    return ResolventGrid(re, im, sigma, floored, P.h, floor, timing)


# ---------------------------------------------------------------------------
# scaling fits

@dataclass
class ScalingFit:
    model: str                  # "power" or "exponential"
    prefactor: float
    exponent: float             # s in C h^s, or rate c in C e^{-c/h}
    r_squared: float
    samples: list
    excluded: list              # (h, value) pairs dropped (nonpositive)
    h_range: tuple

    def predict(self, h):
        if not (self.h_range[0] <= h <= self.h_range[1]):
            raise PspecError(
                f"refusing to extrapolate outside sampled h-range {self.h_range}")
        if self.model == "power":
            return self.prefactor * h ** self.exponent
        return self.prefactor * np.exp(-self.exponent / h)


def scaling_fit(samples, model: str) -> ScalingFit:
    """Least-squares fit of (h, value) pairs to a scaling law.

    power:        value ~ C h^s        (regress log value on log h)
    exponential:  value ~ C e^{-c/h}   (regress log value on 1/h)

    Nonpositive or non-finite values are excluded and reported.
    """
    if model not in ("power", "exponential"):
        raise ValueError("model must be 'power' or 'exponential'")
    samples = [(float(h), float(v)) for h, v in samples]
    good = [(h, v) for h, v in samples if v > 0 and np.isfinite(v) and h > 0]
    excluded = [s for s in samples if s not in good]
    if len(good) < 4:
        raise PspecError(f"need >= 4 usable samples, have {len(good)}")
    hs = np.array([h for h, _ in good])
    vs = np.array([v for _, v in good])
    if hs.max() / hs.min() < 4.0:
        raise PspecError("h values must span a factor >= 4")
    y = np.log(vs)
    x = np.log(hs) if model == "power" else 1.0 / hs
    Amat = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(Amat, y, rcond=None)
    yhat = Amat @ coef
    ss_res = float(((y - yhat) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if model == "power":
        exponent = float(coef[0])
    else:
        exponent = float(-coef[0])     # value ~ C e^{-c/h}: slope = -c
    return ScalingFit(model, float(np.exp(coef[1])), exponent, r2,
                      good, excluded, (float(hs.min()), float(hs.max())))


# ---------------------------------------------------------------------------
# marching squares

@dataclass
class Polyline:
    points: np.ndarray
    closed: bool


def contour_extract(grid: ResolventGrid, levels):
    """Marching-squares isolines of sigma_min = eps, per level.

    Returns {level: [Polyline, ...]}; levels outside the field's value
    range produce empty lists.
    """
    out = {}
    for eps in levels:
        if eps <= 0:
            raise ValueError("contour levels must be positive")
        segments = _marching_squares(grid.re, grid.im, grid.sigma, float(eps))
        out[float(eps)] = _chain_segments(segments)
    return out


def _interp(p1, v1, p2, v2, level):
    t = (level - v1) / (v2 - v1)
    return (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))


def _marching_squares(xs, ys, field, level):
    segments = []
    nx, ny = field.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            v = [field[i, j], field[i + 1, j], field[i + 1, j + 1], field[i, j + 1]]
            corners = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                       (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            idx = sum((1 << k) for k in range(4) if v[k] > level)
            if idx in (0, 15):
                continue
            # edge k joins corner k and corner (k+1) % 4
            crossings = {}
            for k in range(4):
                a, b = k, (k + 1) % 4
                if (v[a] > level) != (v[b] > level):
                    crossings[k] = _interp(corners[a], v[a], corners[b], v[b], level)
            ks = sorted(crossings)
            if len(ks) == 2:
                segments.append((crossings[ks[0]], crossings[ks[1]]))
            elif len(ks) == 4:
                # saddle: disambiguate with the cell-center value
                center = sum(v) / 4.0
                if (center > level) == (v[0] > level):
                    segments.append((crossings[0], crossings[3]))
                    segments.append((crossings[1], crossings[2]))
                else:
                    segments.append((crossings[0], crossings[1]))
                    segments.append((crossings[2], crossings[3]))
    return segments


def _chain_segments(segments, digits=9):
    """Join segments into polylines by matching endpoints."""
    def key(p):
        return (round(p[0], digits), round(p[1], digits))

    adj = {}
    for a, b in segments:
        adj.setdefault(key(a), []).append((a, b))
        adj.setdefault(key(b), []).append((b, a))
    used = set()
    lines = []
    for a, b in segments:
        if (key(a), key(b)) in used or (key(b), key(a)) in used:
            continue
        chain = [a, b]
        used.add((key(a), key(b)))
        # extend forward
        for _ in range(2):
            extended = True
            while extended:
                extended = False
                tail = chain[-1]
                for (p, q) in adj.get(key(tail), []):
                    pair = (key(p), key(q))
                    if pair in used or (pair[1], pair[0]) in used:
                        continue
                    chain.append(q)
                    used.add(pair)
                    extended = True
                    break
            chain.reverse()
        closed = key(chain[0]) == key(chain[-1])
        lines.append(Polyline(np.array(chain), closed))
    return lines
