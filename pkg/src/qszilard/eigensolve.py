"""Lowest eigenpairs of the 5-point Dirichlet Laplacian on masked grids.

The operator acts on the free nodes of a boolean mask; every other node is a
homogeneous Dirichlet node (outer walls and the partition).  The solver
decomposes the problem before touching an iterative method:

* connected components of the free set are independent blocks;
* a component whose free set is a full rectangle has the closed-form
  Kronecker-sum spectrum of the discrete operator;
* a component that is mirror symmetric is split into parity sectors.

Remaining blocks are handled by spectrum slicing: shift-invert Lanczos
(ARPACK) inside energy windows, with Sylvester inertia of a symmetric
LDL^T factorisation certifying that every eigenvalue in each window was found.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .core import QSzilardError

log = logging.getLogger(__name__)

DENSE_LIMIT = 1200
WINDOW_TARGET = 60
ARPACK_TOL = 1e-12
_CACHE_SIZE = 64
_CACHE_VECTOR_BYTES = 64 * 2**20


class SolverError(QSzilardError, RuntimeError):
    """Iterative eigensolver failed; carries the diagnostics of the last attempt."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        detail = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(f"{message} ({detail})" if detail else message)


def laplacian(mask, hx, hy):
    """Negative 5-point Laplacian restricted to the True entries of ``mask``.

    Returns the CSR matrix and the flat (row-major) indices of the free nodes.
    """
    mask = np.asarray(mask, dtype=bool)
    index = -np.ones(mask.shape, dtype=np.int64)
    flat = np.flatnonzero(mask)
    index.flat[flat] = np.arange(flat.size)
    rows, cols = np.nonzero(mask)
    n = flat.size
    diag = np.full(n, 2.0 / hx**2 + 2.0 / hy**2)
    ii, jj, vv = [np.arange(n)], [np.arange(n)], [diag]
    for dr, dc, coef in ((0, 1, -1.0 / hx**2), (1, 0, -1.0 / hy**2)):
        r2, c2 = rows + dr, cols + dc
        inside = (r2 < mask.shape[0]) & (c2 < mask.shape[1])
        nb = np.full(n, -1, dtype=np.int64)
        nb[inside] = index[r2[inside], c2[inside]]
        keep = nb >= 0
        src, dst = np.arange(n)[keep], nb[keep]
        ii += [src, dst]
        jj += [dst, src]
        vv += [np.full(src.size, coef)] * 2
    A = sp.csr_matrix((np.concatenate(vv), (np.concatenate(ii), np.concatenate(jj))), shape=(n, n))
    A.sort_indices()
    return A, flat


def _shifted(A, sigma):
    return (A - sigma * sp.identity(A.shape[0], format="csr")).tocsc()


def _ldl_factor(A, sigma):
    for attempt in range(4):
        shift = sigma * (1.0 + 1e-9 * attempt)
        lu = spla.splu(_shifted(A, shift), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        d = lu.U.diagonal()
        if np.array_equal(lu.perm_r, lu.perm_c) and np.all(d != 0):
            return lu
    raise SolverError("symmetric factorisation needed off-diagonal pivoting",
                      sigma=sigma, attempts=4)


def count_below(A, sigma):
    """Number of eigenvalues of symmetric ``A`` strictly below ``sigma``."""
    return int(np.count_nonzero(_ldl_factor(A, sigma).U.diagonal() < 0))


def _start_vector(n):
    return np.random.default_rng(12345).uniform(0.5, 1.5, n)


def _dense(A, e_max, vectors):
    M = A.toarray()
    if vectors:
        w, V = sla.eigh(M, subset_by_value=(-np.inf, e_max))
        return w, V
    return sla.eigh(M, eigvals_only=True, subset_by_value=(-np.inf, e_max)), None


def ground_eigenvalue(A):
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        return float(sla.eigh(A.toarray(), eigvals_only=True, subset_by_index=(0, 0))[0])
    lu = _ldl_factor(A, 0.0)
    op = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=float)
    try:
        w = spla.eigsh(A, k=1, sigma=0.0, OPinv=op, which="LM", v0=_start_vector(n),
                       tol=ARPACK_TOL, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise SolverError("ground state did not converge", n=n, k=1) from exc
    return float(w[0])


def _sliced(A, lo, e_max, vectors):
    """All eigenpairs in ``[lo, e_max]`` by windowed shift-invert Lanczos."""
    n = A.shape[0]
    total = count_below(A, e_max)
    start = count_below(A, lo)
    if start:
        raise SolverError("eigenvalues found below the lower slicing bound",
                          lower=lo, below=start)
    if total == 0:
        return np.empty(0), (np.empty((n, 0)) if vectors else None)
    nw = max(1, math.ceil(total / WINDOW_TARGET))
    edges = list(np.linspace(lo, e_max, nw + 1))
    counts = [0] + [count_below(A, b) for b in edges[1:-1]] + [total]
    i = 0
    while i < len(edges) - 1:
        if counts[i + 1] - counts[i] > 2 * WINDOW_TARGET:
            mid = 0.5 * (edges[i] + edges[i + 1])
            edges.insert(i + 1, mid)
            counts.insert(i + 1, count_below(A, mid))
        else:
            i += 1
    ws, vs = [], []
    v0 = _start_vector(n)
    for a, b, ca, cb in zip(edges[:-1], edges[1:], counts[:-1], counts[1:]):
        c = cb - ca
        if c == 0:
            continue
        sigma = 0.5 * (a + b)
        lu = _ldl_factor(A, sigma)
        op = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=float)
        margin = max(5, c // 5)
        for attempt in range(3):
            k = min(c + margin, n - 2)
            try:
                res = spla.eigsh(A, k=k, sigma=sigma, OPinv=op, which="LM", v0=v0,
                                 tol=ARPACK_TOL, return_eigenvectors=vectors)
            except spla.ArpackNoConvergence as exc:
                if attempt == 2:
                    raise SolverError("Lanczos window did not converge", window=(a, b),
                                      k=k, n=n, attempts=attempt + 1) from exc
                margin *= 2
                continue
            w, V = (res if vectors else (res, None))
            sel = (w >= a) & (w < b)
            if np.count_nonzero(sel) == c:
                break
            margin *= 2
        else:
            raise SolverError("window eigenvalue count disagrees with inertia",
                              window=(a, b), expected=c, found=int(np.count_nonzero(sel)),
                              k=k, n=n, attempts=3)
        order = np.argsort(w[sel], kind="stable")
        ws.append(w[sel][order])
        if vectors:
            vs.append(V[:, sel][:, order])
    w = np.concatenate(ws)
    return w, (np.hstack(vs) if vectors else None)


def symmetric_eigenpairs(A, e_max, vectors=False, lo=None):
    """Eigenpairs of sparse SPD ``A`` with eigenvalue ``<= e_max``, ascending."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        return _dense(A, e_max, vectors)
    if lo is None:
        lo = 0.999 * ground_eigenvalue(A)
    return _sliced(A, lo, e_max, vectors)


# ---------------------------------------------------------------------------
# block decomposition

def rectangle_eigenpairs(p, q, hx, hy, e_max, vectors=False):
    """Closed-form spectrum of the operator on a ``q`` x ``p`` node rectangle.

    Vectors are returned in row-major node order (rows along y).
    """
    lx = 4.0 / hx**2 * np.sin(np.arange(1, p + 1) * np.pi / (2 * (p + 1)))**2
    ly = 4.0 / hy**2 * np.sin(np.arange(1, q + 1) * np.pi / (2 * (q + 1)))**2
    total = lx[:, None] + ly[None, :]
    ix, iy = np.nonzero(total <= e_max)
    w = total[ix, iy]
    order = np.lexsort((iy, ix, w))
    w, ix, iy = w[order], ix[order], iy[order]
    if not vectors:
        return w, None
    sx = np.sin(np.outer(np.arange(1, p + 1), np.arange(1, p + 1)) * np.pi / (p + 1))
    sy = np.sin(np.outer(np.arange(1, q + 1), np.arange(1, q + 1)) * np.pi / (q + 1))
    norm = 2.0 / math.sqrt((p + 1) * (q + 1))
    # V[(r, c), k] = sy[r, iy_k] * sx[c, ix_k]
    V = (sy[:, None, iy] * sx[None, :, ix]).reshape(p * q, -1) * norm
    return w, V


def symmetry_sectors(mask):
    """Orthonormal parity-sector bases for the mirror symmetries of ``mask``.

    Returns a list of sparse matrices ``Q`` (free nodes x sector dimension)
    whose ranges are mutually orthogonal and together span all free nodes.
    A single identity block is returned when the mask has no mirror symmetry.
    """
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    flat = np.flatnonzero(mask)
    n = flat.size
    index = -np.ones(mask.size, dtype=np.int64)
    index[flat] = np.arange(n)
    r, c = np.divmod(flat, W)
    gens = []
    if np.array_equal(mask, mask[:, ::-1]):
        gens.append(index[r * W + (W - 1 - c)])
    if np.array_equal(mask, mask[::-1, :]):
        gens.append(index[(H - 1 - r) * W + c])
    if not gens:
        return [sp.identity(n, format="csr")]
    # group elements as (image array, parity exponents)
    elements = [(np.arange(n), (0,) * len(gens))]
    for gi, g in enumerate(gens):
        parity = tuple(int(j == gi) for j in range(len(gens)))
        elements += [(g[img], tuple((a + b) % 2 for a, b in zip(par, parity)))
                     for img, par in elements]
    rep = np.min(np.stack([img for img, _ in elements]), axis=0)
    reps = np.unique(rep)
    bases = []
    for chi in np.ndindex(*(2,) * len(gens)):
        rows, cols, vals = [], [], []
        for img, par in elements:
            sign = -1.0 if sum(a * b for a, b in zip(chi, par)) % 2 else 1.0
            rows.append(img[reps])
            cols.append(np.arange(reps.size))
            vals.append(np.full(reps.size, sign))
        Q = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, reps.size)).tocsc()
        Q.sum_duplicates()
        Q.eliminate_zeros()
        norms = np.sqrt(np.asarray(Q.multiply(Q).sum(axis=0)).ravel())
        keep = np.flatnonzero(norms > 0)
        if keep.size:
            Q = Q[:, keep] @ sp.diags(1.0 / norms[keep])
            bases.append(Q.tocsr())
    return bases


def _matrix_key(A, tag):
    h = hashlib.sha1()
    for arr in (A.indptr, A.indices, A.data):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr((A.shape, tag)).encode())
    return h.hexdigest()


_cache: "OrderedDict[str, tuple]" = OrderedDict()


def clear_cache():
    _cache.clear()


def _cached_block(A, window, e_max, vectors):
    """Eigenpairs of one block, cut either at ground + window or at e_max."""
    A = A.tocsr()
    A.sort_indices()
    key = _matrix_key(A, ("window", window) if window is not None else ("emax", e_max))
    hit = _cache.get(key)
    if hit is not None and (hit[1] is not None or not vectors):
        _cache.move_to_end(key)
        w, V = hit
        return w, (V if vectors else None)
    if window is not None:
        ground = ground_eigenvalue(A)
        w, V = symmetric_eigenpairs(A, ground + window, vectors, lo=0.999 * ground)
    else:
        w, V = symmetric_eigenpairs(A, e_max, vectors)
    if V is None or V.nbytes <= _CACHE_VECTOR_BYTES:
        _cache[key] = (w, V)
        while len(_cache) > _CACHE_SIZE:
            _cache.popitem(last=False)
    return w, V


@dataclass
class DirichletSpectrum:
    """Eigenvalues (operator units) and optional unit-norm vectors on free nodes."""

    values: np.ndarray
    vectors: np.ndarray | None
    free: np.ndarray
    cutoff: float
    n_blocks: int


def dirichlet_spectrum(mask, hx, hy, *, e_max=None, window=None, vectors=False,
                       method="auto"):
    """Eigenpairs of the masked 5-point operator.

    Exactly one of ``e_max`` (absolute cutoff) or ``window`` (cutoff measured
    from the global ground level) must be given.  ``method="sparse"`` skips
    the closed-form rectangle and symmetry shortcuts, so every component goes
    through the iterative solver; ``method="direct"`` also skips the split
    into connected components and solves the whole operator at once.
    """
    if (e_max is None) == (window is None):
        raise ValueError("give exactly one of e_max or window")
    if method not in ("auto", "sparse", "direct"):
        raise ValueError(f"unknown method {method!r}")
    mask = np.asarray(mask, dtype=bool)
    A, free = laplacian(mask, hx, hy)
    n = free.size
    labels, _ = ndimage.label(mask)
    position = -np.ones(mask.size, dtype=np.int64)
    position[free] = np.arange(n)
    pieces = []
    if method == "direct":
        w, V = _cached_block(A, window, e_max, vectors)
        pieces.append((w, V, np.arange(n), None))
    boxes = [] if method == "direct" else ndimage.find_objects(labels)
    for lab, box in enumerate(boxes, start=1):
        sub = labels[box] == lab
        H, W = sub.shape
        glob = position[_global_flat(box, sub, mask.shape)]
        if method == "auto" and sub.all():
            if window is not None:
                ground = (4 / hx**2 * math.sin(math.pi / (2 * (W + 1)))**2
                          + 4 / hy**2 * math.sin(math.pi / (2 * (H + 1)))**2)
                cut = ground + window
            else:
                cut = e_max
            w, V = rectangle_eigenpairs(W, H, hx, hy, cut, vectors)
            pieces.append((w, V, glob, None))
            continue
        Ab = A[glob][:, glob]
        bases = symmetry_sectors(sub) if method == "auto" else [None]
        for Q in bases:
            As = Ab if Q is None else (Q.T @ Ab @ Q)
            w, V = _cached_block(As, window, e_max, vectors)
            pieces.append((w, V, glob, Q))
    if not pieces:
        raise QSzilardError("mask has no free nodes")
    if window is not None:
        cutoff = min(p[0][0] for p in pieces if p[0].size) + window
    else:
        cutoff = e_max
    values = np.concatenate([p[0] for p in pieces])
    keep = values <= cutoff
    order = np.argsort(values[keep], kind="stable")
    values = values[keep][order]
    vecs = None
    if vectors:
        cols = []
        for w, V, glob, Q in pieces:
            if V is None or not w.size:
                continue
            full = np.zeros((n, w.size))
            full[glob] = V if Q is None else (Q @ V)
            cols.append(full)
        vecs = np.hstack(cols)[:, keep][:, order]
    return DirichletSpectrum(values, vecs, free, cutoff, len(pieces))


def _global_flat(box, sub, shape):
    r, c = np.nonzero(sub)
    return np.ravel_multi_index((r + box[0].start, c + box[1].start), shape)
