"""Discrete measures, transport plans, and displacement second moments.

The central quantity is the displacement second moment of a coupling: for a
transport plan ``g`` between point clouds ``S`` and ``T`` it is the d x d
positive semidefinite matrix ``sum_ij g_ij (s_i - t_j)(s_i - t_j)^T``. Robust
transport objectives are linear in this matrix, so every solver in the package
works through it rather than through pairwise cost matrices.

A :class:`FeatureGrouping` reshapes each point into a ``d1 x r`` matrix (after
a fixed permutation and zero padding) so that block-structured metrics reduce
to an ``r x r`` problem; :func:`grouped_second_moment` is the matching reduced
moment. With ``d1 = 1`` and the identity permutation the grouped moment equals
the full one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "TransportPlan",
    "FeatureGrouping",
    "make_measure",
    "independent_coupling",
    "displacement_second_moment",
    "grouped_second_moment",
]

_MARGINAL_TOL = 1e-8
_MASS_TOL = 1e-10
_WEIGHT_SUM_TOL = 1e-12


def _as_float_array(x, name, ndim):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DiscreteMeasure:
    """A weighted point cloud: ``points`` is m x d, ``weights`` sums to 1."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = _as_float_array(self.points, "points", 2)
        weights = _as_float_array(self.weights, "weights", 1)
        if points.shape[0] < 1:
            raise ValueError("a measure needs at least one support point")
        if weights.shape[0] != points.shape[0]:
            raise ValueError(
                f"weights has {weights.shape[0]} entries for {points.shape[0]} points"
            )
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1; use make_measure to normalize")
        object.__setattr__(self, "points", _freeze(points))
        object.__setattr__(self, "weights", _freeze(weights))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    """A nonnegative m x n coupling with unit total mass.

    ``row_marginal`` and ``col_marginal`` default to the matrix's own row and
    column sums, so a plan constructed from any nonnegative unit-mass matrix
    is always internally consistent. Passing explicit marginals asserts that
    the matrix actually has them (within 1e-8).
    """

    matrix: np.ndarray
    row_marginal: np.ndarray = None
    col_marginal: np.ndarray = None

    def __post_init__(self):
        matrix = _as_float_array(self.matrix, "matrix", 2)
        if np.any(matrix < 0):
            raise ValueError("transport plan entries must be nonnegative")
        total = matrix.sum()
        if abs(total - 1.0) > _MASS_TOL:
            raise ValueError(f"transport plan mass is {total!r}, expected 1")
        rows = matrix.sum(axis=1)
        cols = matrix.sum(axis=0)
        if self.row_marginal is None:
            row_marginal = rows
        else:
            row_marginal = _as_float_array(self.row_marginal, "row_marginal", 1)
            if row_marginal.shape[0] != matrix.shape[0]:
                raise ValueError("row_marginal length does not match the plan")
            if np.max(np.abs(rows - row_marginal)) > _MARGINAL_TOL:
                raise ValueError("plan row sums do not match row_marginal")
        if self.col_marginal is None:
            col_marginal = cols
        else:
            col_marginal = _as_float_array(self.col_marginal, "col_marginal", 1)
            if col_marginal.shape[0] != matrix.shape[1]:
                raise ValueError("col_marginal length does not match the plan")
            if np.max(np.abs(cols - col_marginal)) > _MARGINAL_TOL:
                raise ValueError("plan column sums do not match col_marginal")
        object.__setattr__(self, "matrix", _freeze(matrix))
        object.__setattr__(self, "row_marginal", _freeze(row_marginal))
        object.__setattr__(self, "col_marginal", _freeze(col_marginal))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class FeatureGrouping:
    """A partition of (padded) feature coordinates into r groups of size d1.

    ``permutation`` is a bijection on ``dim + pad`` indices; a feature vector
    is zero-padded, permuted, and filled column-major into a ``d1 x r``
    matrix, so group ``g`` holds permuted coordinates ``g*d1 .. (g+1)*d1 - 1``.
    ``seed`` is bookkeeping for serialization (-1 when hand-built).
    """

    dim: int
    group_count: int
    rows_per_group: int
    pad: int
    permutation: np.ndarray
    seed: int = -1

    def __post_init__(self):
        if self.dim < 1 or self.group_count < 1 or self.rows_per_group < 1:
            raise ValueError("dim, group_count and rows_per_group must be positive")
        if self.pad < 0:
            raise ValueError("pad must be nonnegative")
        if self.rows_per_group * self.group_count != self.dim + self.pad:
            raise ValueError("rows_per_group * group_count must equal dim + pad")
        if self.pad >= self.rows_per_group:
            raise ValueError(
                f"pad ({self.pad}) must be smaller than rows_per_group "
                f"({self.rows_per_group}); no group may be all padding"
            )
        perm = np.asarray(self.permutation, dtype=np.int64)
        n = self.dim + self.pad
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError(f"permutation must be a bijection on 0..{n - 1}")
        object.__setattr__(self, "permutation", _freeze(perm))

    @property
    def padded_dim(self) -> int:
        return self.dim + self.pad


def make_measure(points, weights=None) -> DiscreteMeasure:
    """Build a measure from points, normalizing ``weights`` (uniform default)."""
    points = _as_float_array(points, "points", 2)
    if weights is None:
        m = points.shape[0]
        weights = np.full(m, 1.0 / m)
    else:
        weights = _as_float_array(weights, "weights", 1)
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        weights = weights / total
    return DiscreteMeasure(points=points, weights=weights)


def independent_coupling(src: DiscreteMeasure, tgt: DiscreteMeasure) -> TransportPlan:
    """The product coupling ``w_src w_tgt^T``; its marginals are exact."""
    matrix = np.outer(src.weights, tgt.weights)
    return TransportPlan(matrix=matrix, row_marginal=src.weights, col_marginal=tgt.weights)


# ---------------------------------------------------------------------------
# Array-level kernels. These skip object validation and are shared with the
# solver loops, which call them once per iteration.
# ---------------------------------------------------------------------------


def _moment_arrays(gamma: np.ndarray, src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    # sum_ij g_ij (s_i - t_j)(s_i - t_j)^T via the marginal decomposition:
    # S^T diag(a) S + T^T diag(b) T - S^T g T - (S^T g T)^T.
    a = gamma.sum(axis=1)
    b = gamma.sum(axis=0)
    cross = src.T @ gamma @ tgt
    v = (src * a[:, None]).T @ src + (tgt * b[:, None]).T @ tgt - cross - cross.T
    return 0.5 * (v + v.T)


def _grouped_reshape(points: np.ndarray, grouping: FeatureGrouping) -> np.ndarray:
    """Permute, pad, and reshape an (n, d) array to (n, d1, r)."""
    n = points.shape[0]
    if points.shape[1] != grouping.dim:
        raise ValueError(
            f"points have dimension {points.shape[1]}, grouping expects {grouping.dim}"
        )
    if grouping.pad:
        padded = np.concatenate(
            [points, np.zeros((n, grouping.pad))], axis=1
        )
    else:
        padded = points
    permuted = padded[:, grouping.permutation]
    r, d1 = grouping.group_count, grouping.rows_per_group
    return permuted.reshape(n, r, d1).transpose(0, 2, 1)


def _grouped_moment_arrays(
    gamma: np.ndarray, src_resh: np.ndarray, tgt_resh: np.ndarray
) -> np.ndarray:
    # Same decomposition in the reshaped space: entries are r x r Gram blocks.
    a = gamma.sum(axis=1)
    b = gamma.sum(axis=0)
    t_src = np.einsum("i,iap,iaq->pq", a, src_resh, src_resh, optimize=True)
    t_tgt = np.einsum("j,jap,jaq->pq", b, tgt_resh, tgt_resh, optimize=True)
    mixed = np.tensordot(gamma, tgt_resh, axes=(1, 0))  # (m, d1, r)
    cross = np.einsum("iap,iaq->pq", src_resh, mixed, optimize=True)
    u = t_src + t_tgt - cross - cross.T
    return 0.5 * (u + u.T)


def displacement_second_moment(
    plan: TransportPlan, src: DiscreteMeasure, tgt: DiscreteMeasure
) -> np.ndarray:
    """The d x d second moment of displacements under ``plan``.

    Returns ``sum_ij plan_ij (s_i - t_j)(s_i - t_j)^T``, a symmetric positive
    semidefinite matrix that is linear in the plan.
    """
    if plan.shape != (src.size, tgt.size):
        raise ValueError(
            f"plan shape {plan.shape} does not match measures "
            f"({src.size}, {tgt.size})"
        )
    if src.dim != tgt.dim:
        raise ValueError(f"point dimensions differ: {src.dim} vs {tgt.dim}")
    return _moment_arrays(plan.matrix, src.points, tgt.points)


def grouped_second_moment(
    plan: TransportPlan,
    src: DiscreteMeasure,
    tgt: DiscreteMeasure,
    grouping: FeatureGrouping,
) -> np.ndarray:
    """The r x r second moment of reshaped displacements under ``plan``.

    For block metrics of the form ``kron(B, I_d1)`` (on permuted, padded
    coordinates) the pairing identity ``<V, kron(B, I)> = <U, B>`` holds, where
    ``U`` is this matrix, so the reduced moment carries all the information a
    grouped metric can see.
    """
    if plan.shape != (src.size, tgt.size):
        raise ValueError(
            f"plan shape {plan.shape} does not match measures "
            f"({src.size}, {tgt.size})"
        )
    if src.dim != tgt.dim:
        raise ValueError(f"point dimensions differ: {src.dim} vs {tgt.dim}")
    src_resh = _grouped_reshape(src.points, grouping)
    tgt_resh = _grouped_reshape(tgt.points, grouping)
    return _grouped_moment_arrays(plan.matrix, src_resh, tgt_resh)
