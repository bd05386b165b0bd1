"""Complex linear algebra primitives and deterministic random sampling.

Everything downstream (channel draws, clustering, precoding, learning)
funnels its randomness through :class:`SeededRng`, so a scenario seed fully
determines every simulated byte.  The linear solver is a plain partial-pivot
Gaussian elimination: systems here are tiny (at most a handful of cluster
beams), and an explicit pivot threshold gives a well-defined singularity
error instead of library-dependent behaviour.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "SingularMatrixError",
    "SeededRng",
    "mat_mul",
    "hermitian",
    "solve_linear",
    "sample_standard_complex_gaussian",
]

# Pivot smaller than this fraction of the largest input magnitude counts as
# singular.
PIVOT_RTOL = 1e-12


class SingularMatrixError(ValueError):
    """Elimination hit a pivot too small to trust."""


def _philox_key(seed: int, path: tuple[str, ...]) -> np.ndarray:
    """Hash (seed, label path) into a 128-bit Philox key.

    sha256 keeps the derivation platform-stable; Python's built-in hash() is
    salted per process and must not be used here.
    """
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for label in path:
        h.update(b"\x1f")
        h.update(label.encode("utf-8"))
    return np.frombuffer(h.digest()[:16], dtype=np.uint64)


class SeededRng:
    """Counter-based generator with labeled, independent sub-streams.

    Equal seed and label path give bit-identical draws; distinct label paths
    give statistically independent streams.  The convention used by the
    simulator is one sub-stream per module per purpose, derived like
    ``root.substream("channel").substream("slot2")``, so sweep legs can be
    evaluated in any order (or in parallel) without changing results.
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(_path)
        self.gen = np.random.Generator(
            np.random.Philox(key=_philox_key(self.seed, self.path))
        )

    def substream(self, label: str) -> "SeededRng":
        """Child stream for `label`, independent of this one."""
        return SeededRng(self.seed, self.path + (str(label),))

    def __repr__(self) -> str:  # pragma: no cover
        return f"SeededRng(seed={self.seed}, path={'/'.join(self.path) or '.'})"

    # Thin passthroughs so call sites read like plain numpy.
    def random(self, *args, **kwargs):
        return self.gen.random(*args, **kwargs)

    def standard_normal(self, *args, **kwargs):
        return self.gen.standard_normal(*args, **kwargs)

    def uniform(self, *args, **kwargs):
        return self.gen.uniform(*args, **kwargs)

    def integers(self, *args, **kwargs):
        return self.gen.integers(*args, **kwargs)

    def choice(self, *args, **kwargs):
        return self.gen.choice(*args, **kwargs)

    def permutation(self, *args, **kwargs):
        return self.gen.permutation(*args, **kwargs)


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"mat_mul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def hermitian(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"hermitian expects a 2-D array, got {a.ndim}-D")
    return np.conj(a).T


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a X = b by Gaussian elimination with partial pivoting.

    `b` may be a vector or a matrix of stacked right-hand sides.  Raises
    :class:`SingularMatrixError` when the best available pivot falls below
    ``PIVOT_RTOL`` times the largest magnitude of the input matrix.
    """
    a = np.array(a, dtype=complex)
    b = np.array(b, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.shape[0] != n:
        raise ValueError(f"dimension mismatch: a is {a.shape}, b is {b.shape}")

    scale = np.max(np.abs(a))
    if scale == 0.0:
        raise SingularMatrixError("coefficient matrix is zero")
    tol = PIVOT_RTOL * scale

    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(a[col:, col])))
        pivot = a[pivot_row, col]
        if abs(pivot) < tol:
            raise SingularMatrixError(
                f"pivot magnitude {abs(pivot):.3e} below {tol:.3e} at column {col}"
            )
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            b[[col, pivot_row]] = b[[pivot_row, col]]
        factors = a[col + 1 :, col] / pivot
        a[col + 1 :, col:] -= factors[:, None] * a[col, col:]
        b[col + 1 :] -= factors[:, None] * b[col]

    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x[:, 0] if squeeze else x


def sample_standard_complex_gaussian(rng: SeededRng, n: int) -> np.ndarray:
    """n i.i.d. draws of CN(0, 1): (re + j im) / sqrt(2)."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    re = rng.standard_normal(n)
    im = rng.standard_normal(n)
    return (re + 1j * im) / np.sqrt(2.0)
