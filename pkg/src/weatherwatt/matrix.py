"""Small dense linear algebra for the normal equation.

Feature counts here are tiny (a handful of weather columns plus the bias), so
inversion is plain Gauss-Jordan elimination with partial pivoting.
"""

from __future__ import annotations

import numpy as np

from weatherwatt.errors import SingularMatrix

PIVOT_TOL = 1e-10


class Matrix:
    """Immutable row-major matrix of float64 values.

    All entries must be finite. The backing array is read-only, so a Matrix
    can be shared freely.
    """

    __slots__ = ("_a",)

    def __init__(self, data):
        a = np.array(data, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(1, -1) if a.size else a.reshape(0, 0)
        if a.ndim != 2:
            raise ValueError(f"matrix data must be 2-D, got {a.ndim}-D")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a.setflags(write=False)
        self._a = a

    @classmethod
    def column(cls, values) -> Matrix:
        return cls(np.asarray(values, dtype=np.float64).reshape(-1, 1))

    @classmethod
    def identity(cls, n: int) -> Matrix:
        return cls(np.eye(n))

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    @property
    def data(self) -> tuple[float, ...]:
        """Entries in row-major order."""
        return tuple(self._a.ravel().tolist())

    def to_numpy(self) -> np.ndarray:
        return self._a

    def tolist(self) -> list[list[float]]:
        return self._a.tolist()

    def __getitem__(self, idx):
        return self._a[idx]

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    def __hash__(self):
        return hash((self.shape, self._a.tobytes()))

    def __matmul__(self, other: Matrix) -> Matrix:
        return matmul(self, other)

    @property
    def T(self) -> Matrix:
        return transpose(self)

    def __repr__(self):
        return f"Matrix({self._a.tolist()!r})"


def transpose(a: Matrix) -> Matrix:
    return Matrix(a.to_numpy().T)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ValueError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return Matrix(a.to_numpy() @ b.to_numpy())


def invert(a: Matrix, pivot_tol: float = PIVOT_TOL) -> Matrix:
    """Inverse by Gauss-Jordan elimination on ``[a | I]`` with partial pivoting.

    Raises SingularMatrix as soon as the best available pivot in a column has
    magnitude below ``pivot_tol``.
    """
    n, m = a.shape
    if n != m:
        raise ValueError(f"cannot invert non-square {n}x{m} matrix")
    aug = np.hstack([np.array(a.to_numpy()), np.eye(n)])
    for k in range(n):
        p = k + int(np.argmax(np.abs(aug[k:, k])))
        if abs(aug[p, k]) < pivot_tol:
            raise SingularMatrix(
                f"pivot {aug[p, k]:.3g} in column {k} is below {pivot_tol:g}"
            )
        if p != k:
            aug[[k, p]] = aug[[p, k]]
        aug[k] /= aug[k, k]
        for i in range(n):
            if i != k and aug[i, k] != 0.0:
                aug[i] -= aug[i, k] * aug[k]
    return Matrix(aug[:, n:])


REFINE_MAX = 8


def normal_equation(x: Matrix, y: Matrix, refine: int = REFINE_MAX) -> tuple[Matrix, Matrix]:
    """theta = (X^T X)^-1 X^T y together with (X^T X)^-1.

    Up to ``refine`` rounds of iterative refinement add
    ``(X^T X)^-1 X^T (y - X theta)`` to theta. The correction is zero in exact
    arithmetic; in floating point it restores residual orthogonality lost to
    the squared condition number of X^T X when raw sensor columns carry large
    offsets. Rounds stop as soon as one fails to reduce max |X^T r|.
    """
    if x.rows != y.rows:
        raise ValueError(f"x has {x.rows} rows but y has {y.rows}")
    if y.cols != 1:
        raise ValueError("y must be a single column")
    if x.rows < x.cols:
        raise ValueError(f"underdetermined system: {x.rows} rows < {x.cols} columns")
    xt = transpose(x)
    xtx_inv = invert(matmul(xt, x))
    theta = matmul(xtx_inv, matmul(xt, y)).to_numpy()
    xa, ya, inv = x.to_numpy(), y.to_numpy(), xtx_inv.to_numpy()
    # keep the iterate whose residual is most nearly orthogonal to X
    resid = ya - xa @ theta
    best = float(np.max(np.abs(xa.T @ resid)))
    for _ in range(refine):
        if best == 0.0:
            break
        cand = theta + inv @ (xa.T @ resid)
        cand_resid = ya - xa @ cand
        score = float(np.max(np.abs(xa.T @ cand_resid)))
        if score >= best:
            break
        theta, resid, best = cand, cand_resid, score
    return Matrix(theta), xtx_inv


def solve_normal(x: Matrix, y: Matrix, refine: int = REFINE_MAX) -> Matrix:
    """theta = (X^T X)^-1 X^T y for a single-column ``y``."""
    return normal_equation(x, y, refine)[0]
