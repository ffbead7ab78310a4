"""Sparse cubical tensors and the nonnegative tensor algebra used by the contagion models.

Indices are 0-based throughout the library. A k-th order, n-dimensional tensor is stored
in coordinate form: an ``(nnz, k)`` integer array of index tuples sorted lexicographically
and a matching array of nonzero weights.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "SparseCubicalTensor",
    "PerronResult",
    "PerronNotConverged",
    "Dominance",
    "tensor_vector_power",
    "matrix_tensor_product",
    "almost_symmetrize",
    "is_irreducible",
    "diagonal_dominance",
    "perron",
]


class SparseCubicalTensor:
    """Order-``k``, dimension-``n`` tensor holding only its nonzero entries.

    Duplicate index tuples are summed on construction and entries that end up exactly
    zero are dropped, so two tensors with the same entries compare equal regardless of
    how they were assembled. Instances are treated as immutable.

    Parameters
    ----------
    order : int
        Number of modes ``k >= 1``.
    dim : int
        Size ``n >= 1`` of every mode.
    indices : array_like, shape (nnz, order)
        Index tuples, 0-based.
    values : array_like, shape (nnz,)
        Weights; must be finite.
    """

    __slots__ = ("order", "dim", "indices", "values")

    def __init__(self, order: int, dim: int, indices=None, values=None):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if indices is None:
            indices = np.empty((0, order), dtype=np.int64)
            values = np.empty(0)
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, order)
        val = np.asarray(values, dtype=float).reshape(-1)
        if idx.shape[0] != val.shape[0]:
            raise ValueError("indices and values have different lengths")
        if idx.size and (idx.min() < 0 or idx.max() >= dim):
            raise ValueError(f"index out of range for dim={dim}")
        if not np.all(np.isfinite(val)):
            raise ValueError("tensor weights must be finite")
        if idx.shape[0]:
            idx, inverse = np.unique(idx, axis=0, return_inverse=True)
            val = np.bincount(inverse.reshape(-1), weights=val, minlength=idx.shape[0])
            keep = val != 0.0
            idx, val = idx[keep], val[keep]
        idx.setflags(write=False)
        val.setflags(write=False)
        self.order = int(order)
        self.dim = int(dim)
        self.indices = idx
        self.values = val

    # -- constructors -------------------------------------------------------------------

    @classmethod
    def empty(cls, order: int, dim: int) -> SparseCubicalTensor:
        return cls(order, dim)

    @classmethod
    def identity(cls, order: int, dim: int) -> SparseCubicalTensor:
        idx = np.repeat(np.arange(dim)[:, None], order, axis=1)
        return cls(order, dim, idx, np.ones(dim))

    @classmethod
    def from_dict(
        cls, order: int, dim: int, entries: Mapping[Sequence[int], float]
    ) -> SparseCubicalTensor:
        if not entries:
            return cls(order, dim)
        idx = np.array([tuple(key) for key in entries], dtype=np.int64)
        if idx.shape[1] != order:
            raise ValueError(f"every index tuple must have {order} components")
        return cls(order, dim, idx, np.fromiter(entries.values(), dtype=float))

    @classmethod
    def from_dense(cls, array) -> SparseCubicalTensor:
        arr = np.asarray(array, dtype=float)
        if arr.ndim < 1 or len(set(arr.shape)) != 1:
            raise ValueError(f"dense array must be cubical, got shape {arr.shape}")
        nz = np.nonzero(arr)
        idx = np.stack(nz, axis=1) if nz[0].size else np.empty((0, arr.ndim), dtype=np.int64)
        return cls(arr.ndim, arr.shape[0], idx, arr[nz])

    # -- basic protocol -----------------------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.nnz

    def __iter__(self) -> Iterator[tuple[tuple[int, ...], float]]:
        return self.items()

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for row, v in zip(self.indices, self.values):
            yield tuple(int(i) for i in row), float(v)

    def __getitem__(self, key: Sequence[int]) -> float:
        key = np.asarray(key, dtype=np.int64)
        hit = np.nonzero(np.all(self.indices == key, axis=1))[0]
        return float(self.values[hit[0]]) if hit.size else 0.0

    def __repr__(self) -> str:
        return f"SparseCubicalTensor(order={self.order}, dim={self.dim}, nnz={self.nnz})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseCubicalTensor):
            return NotImplemented
        return (
            self.order == other.order
            and self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]

    def allclose(self, other: SparseCubicalTensor, atol: float = 1e-12) -> bool:
        if (self.order, self.dim) != (other.order, other.dim):
            return False
        diff = self - other
        return diff.nnz == 0 or float(np.abs(diff.values).max()) <= atol

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim,) * self.order)
        if self.nnz:
            out[tuple(self.indices.T)] = self.values
        return out

    # -- arithmetic ---------------------------------------------------------------------

    def _check_same_shape(self, other: SparseCubicalTensor) -> None:
        if (self.order, self.dim) != (other.order, other.dim):
            raise ValueError(
                f"shape mismatch: [{self.order},{self.dim}] vs [{other.order},{other.dim}]"
            )

    def __add__(self, other: SparseCubicalTensor) -> SparseCubicalTensor:
        if not isinstance(other, SparseCubicalTensor):
            return NotImplemented
        self._check_same_shape(other)
        return SparseCubicalTensor(
            self.order,
            self.dim,
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.values, other.values]),
        )

    def __neg__(self) -> SparseCubicalTensor:
        return SparseCubicalTensor(self.order, self.dim, self.indices, -self.values)

    def __sub__(self, other: SparseCubicalTensor) -> SparseCubicalTensor:
        if not isinstance(other, SparseCubicalTensor):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar: float) -> SparseCubicalTensor:
        return SparseCubicalTensor(self.order, self.dim, self.indices, self.values * float(scalar))

    __rmul__ = __mul__

    def scale_rows(self, weights) -> SparseCubicalTensor:
        """Multiply every entry by ``weights[first index]``, i.e. ``diag(weights) @ self``."""
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError("row weights must be an n-vector")
        if not self.nnz:
            return self
        return SparseCubicalTensor(
            self.order, self.dim, self.indices, self.values * w[self.indices[:, 0]]
        )

    # -- structure ----------------------------------------------------------------------

    def abs_row_sums(self) -> np.ndarray:
        """Per first index ``i``: sum of ``|A[i, ...]|`` over all remaining indices."""
        if not self.nnz:
            return np.zeros(self.dim)
        return np.bincount(self.indices[:, 0], weights=np.abs(self.values), minlength=self.dim)

    def row_sums(self) -> np.ndarray:
        if not self.nnz:
            return np.zeros(self.dim)
        return np.bincount(self.indices[:, 0], weights=self.values, minlength=self.dim)

    def row_support(self) -> np.ndarray:
        """Boolean n-vector, true where some stored entry has that first index."""
        out = np.zeros(self.dim, dtype=bool)
        if self.nnz:
            out[self.indices[:, 0]] = True
        return out

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def is_almost_symmetric(self, atol: float = 0.0) -> bool:
        if self.order <= 2:
            return True
        return almost_symmetrize(self).allclose(self, atol=atol)

    # -- products -----------------------------------------------------------------------

    def _weights_after_contraction(self, x: np.ndarray, p: int) -> np.ndarray:
        return self.values * np.prod(x[self.indices[:, self.order - p :]], axis=1)

    def contract(self, x, p: int = 1) -> SparseCubicalTensor:
        """Contract the last ``p < order`` modes with ``x``; returns a sparse tensor."""
        x = _as_vector(x, self.dim)
        if not 1 <= p < self.order:
            raise ValueError(f"p must be in [1, {self.order - 1}] for a sparse result, got {p}")
        if not self.nnz:
            return SparseCubicalTensor(self.order - p, self.dim)
        return SparseCubicalTensor(
            self.order - p,
            self.dim,
            self.indices[:, : self.order - p],
            self._weights_after_contraction(x, p),
        )

    def power(self, x, p: int | None = None):
        """Dense ``A x^p``; see :func:`tensor_vector_power`."""
        return tensor_vector_power(self, x, self.order - 1 if p is None else p)

    def lift(self) -> SparseCubicalTensor:
        """Order ``k+1`` tensor with entries ``L[i, i, i2, ..., ik] = A[i, i2, ..., ik]``."""
        if not self.nnz:
            return SparseCubicalTensor(self.order + 1, self.dim)
        idx = np.concatenate([self.indices[:, :1], self.indices], axis=1)
        return SparseCubicalTensor(self.order + 1, self.dim, idx, self.values)


def _as_vector(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {x.shape}")
    return x


def tensor_vector_power(A: SparseCubicalTensor, x, p: int):
    """Contract the last ``p`` modes of ``A`` with ``x``.

    Returns a dense array of order ``k - p`` (a vector when ``p == k - 1``) or a float
    when ``p == k``. For ``p == k - 1`` component ``i`` equals
    ``sum A[i, i2, ..., ik] * x[i2] * ... * x[ik]``.
    """
    x = _as_vector(x, A.dim)
    if not 1 <= p <= A.order:
        raise ValueError(f"p must be in [1, {A.order}], got {p}")
    if p == A.order:
        if not A.nnz:
            return 0.0
        return float(np.sum(A.values * np.prod(x[A.indices], axis=1)))
    rest = A.order - p
    size = A.dim**rest
    if not A.nnz:
        return np.zeros((A.dim,) * rest)
    w = A._weights_after_contraction(x, p)
    if rest == 1:
        flat = A.indices[:, 0]
    else:
        flat = np.ravel_multi_index(tuple(A.indices[:, :rest].T), (A.dim,) * rest)
    return np.bincount(flat, weights=w, minlength=size).reshape((A.dim,) * rest)


def matrix_tensor_product(R, A: SparseCubicalTensor) -> SparseCubicalTensor:
    """``(R A)[i1, i2, ..., ik] = sum_j R[i1, j] * A[j, i2, ..., ik]``."""
    R = np.asarray(R, dtype=float)
    n = A.dim
    if R.shape != (n, n):
        raise ValueError(f"R must be {n}x{n}, got {R.shape}")
    ri, rj = np.nonzero(R)
    if not A.nnz or not ri.size:
        return SparseCubicalTensor(A.order, n)
    order = np.argsort(rj, kind="stable")
    ri, rj = ri[order], rj[order]
    counts = np.bincount(rj, minlength=n)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    first = A.indices[:, 0]
    rep = counts[first]
    entry = np.repeat(np.arange(A.nnz), rep)
    offset = np.arange(entry.size) - np.repeat(np.cumsum(rep) - rep, rep)
    new_first = ri[starts[first[entry]] + offset]

    idx = A.indices[entry].copy()
    idx[:, 0] = new_first
    vals = A.values[entry] * R[new_first, first[entry]]
    return SparseCubicalTensor(A.order, n, idx, vals)


def almost_symmetrize(A: SparseCubicalTensor) -> SparseCubicalTensor:
    """Average ``A`` over all permutations of its modes ``2..k``.

    The result is symmetric in its last ``k - 1`` modes and yields the same
    ``A x^{k-1}`` for every ``x``.
    """
    if A.order < 2:
        raise ValueError("almost symmetrization needs order >= 2")
    if A.order == 2 or not A.nnz:
        return A
    m = A.order - 1
    perms = list(itertools.permutations(range(1, A.order)))
    blocks = [A.indices[:, [0, *perm]] for perm in perms]
    vals = np.tile(A.values / math.factorial(m), len(perms))
    return SparseCubicalTensor(A.order, A.dim, np.concatenate(blocks), vals)


def is_irreducible(A: SparseCubicalTensor) -> bool:
    """Decide irreducibility of ``A`` (zero pattern only).

    ``A`` is reducible iff some nonempty proper set ``N1`` has ``A[i1, ...] == 0``
    whenever ``i1`` is in ``N1`` and all of ``i2..ik`` lie outside it. Writing
    ``N2`` for the complement, that says ``N2`` is closed under the rules
    "``{i2..ik}`` inside ``N2`` and ``A[i1, i2, ..., ik] != 0`` implies ``i1`` in ``N2``".
    Closed sets are intersection-stable, so ``A`` is irreducible iff the closure of
    every singleton is the full index set.
    """
    n = A.dim
    if n == 1:
        return True
    if not A.nnz:
        return False
    heads = A.indices[:, 0]
    tails = A.indices[:, 1:]
    # state[s, v]: v belongs to the closure of {s}
    state = np.eye(n, dtype=bool)
    while True:
        if tails.shape[1]:
            fire = np.all(state[:, tails], axis=2)
        else:
            fire = np.ones((n, heads.size), dtype=bool)
        grown = state.copy()
        rows, cols = np.nonzero(fire)
        grown[rows, heads[cols]] = True
        if np.array_equal(grown, state):
            break
        state = grown
    return bool(state.all())


class Dominance(str, Enum):
    STRICT = "strict"
    WEAK = "weak"
    NONE = "none"


def diagonal_dominance(A: SparseCubicalTensor) -> Dominance:
    diag_mask = np.all(A.indices == A.indices[:, :1], axis=1) if A.nnz else np.zeros(0, bool)
    diag = np.zeros(A.dim)
    if A.nnz:
        diag[A.indices[diag_mask, 0]] = np.abs(A.values[diag_mask])
    off = A.abs_row_sums() - diag
    if np.all(diag > off):
        return Dominance.STRICT
    if np.all(diag >= off):
        return Dominance.WEAK
    return Dominance.NONE


@dataclass(frozen=True)
class PerronResult:
    radius: float
    vector: np.ndarray
    residual: float
    iterations: int = 0


class PerronNotConverged(RuntimeError):
    def __init__(self, best: PerronResult):
        super().__init__(
            f"power iteration did not converge after {best.iterations} iterations "
            f"(radius~{best.radius:.12g}, residual={best.residual:.3g})"
        )
        self.best = best


def perron(M, tol: float = 1e-10, max_iters: int = 100_000) -> PerronResult:
    """Spectral radius and right Perron vector of a nonnegative square matrix.

    Power iteration from the all-ones vector, renormalized to unit max entry each step.
    Converged when successive radius estimates differ by less than ``tol`` and the
    residual ``max|M v - r v|`` is at most ``tol``. A matrix whose smallest
    diagonal entry is below a tenth of its largest entry may be (nearly) periodic, so it
    is iterated as ``M + c I`` with ``c`` its largest entry and ``c`` is subtracted from
    the reported radius. A reducible matrix is split
    into strongly connected blocks: the radius is the largest block radius and the
    vector is a nonnegative eigenvector taken from a dense eigensolver.

    Raises
    ------
    ValueError
        If ``M`` is not square or has a negative entry.
    PerronNotConverged
        If ``max_iters`` is exhausted; carries the best iterate.
    """
    if isinstance(M, SparseCubicalTensor):
        if M.order != 2:
            raise ValueError("perron needs a matrix (order-2 tensor)")
        M = M.to_dense()
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if np.any(M < 0):
        raise ValueError("perron requires an entrywise nonnegative matrix")
    n = M.shape[0]
    if not M.size or float(M.max()) == 0.0:
        return PerronResult(0.0, np.ones(n), 0.0, 0)
    n_comp, label = connected_components(csr_matrix(M), directed=True, connection="strong")
    if n_comp == 1:
        return _power_iteration(M, tol, max_iters)
    return _reducible_perron(M, n_comp, label, tol, max_iters)


def _reducible_perron(M: np.ndarray, n_comp: int, label: np.ndarray, tol: float, max_iters: int) -> PerronResult:
    # the spectrum of a reducible matrix is the union of its strong-component blocks
    radius, iters = 0.0, 0
    for c in range(n_comp):
        idx = np.nonzero(label == c)[0]
        block = M[np.ix_(idx, idx)]
        if idx.size == 1 or float(block.max()) == 0.0:
            r = float(block[0, 0]) if idx.size == 1 else 0.0
        else:
            res = _power_iteration(block, tol, max_iters)
            r, iters = res.radius, iters + res.iterations
        radius = max(radius, r)
    vals, vecs = np.linalg.eig(M)
    v = np.abs(vecs[:, int(np.argmin(np.abs(vals - radius)))].real)
    v = v / v.max()
    return PerronResult(radius, v, float(np.abs(M @ v - radius * v).max()), iters)


def _power_iteration(M: np.ndarray, tol: float, max_iters: int) -> PerronResult:
    n = M.shape[0]
    top = float(M.max())
    # a small diagonal leaves the iteration nearly periodic
    shift = top if float(np.diag(M).min()) < 0.1 * top else 0.0
    Ms = M + shift * np.eye(n) if shift else M

    v = np.ones(n)
    prev = np.inf
    best = PerronResult(np.nan, v, np.inf, 0)
    for it in range(1, max_iters + 1):
        w = Ms @ v
        lam = float(w.max())
        if lam <= 0.0:
            # iterate collapsed to zero: M is nilpotent on the ones direction
            return PerronResult(0.0, v, float(np.abs(M @ v).max()), it)
        v_new = w / lam
        if abs(lam - prev) < tol:
            radius = lam - shift
            residual = float(np.abs(M @ v_new - radius * v_new).max())
            best = PerronResult(max(radius, 0.0), v_new, residual, it)
            if residual <= tol:
                return best
        prev = lam
        v = v_new
    if not np.isfinite(best.residual):
        radius = prev - shift
        best = PerronResult(
            max(radius, 0.0), v, float(np.abs(M @ v - radius * v).max()), max_iters
        )
    else:
        best = PerronResult(best.radius, best.vector, best.residual, max_iters)
    raise PerronNotConverged(best)
