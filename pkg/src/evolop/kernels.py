"""Positive-definite kernels and Gram-matrix assembly.

The kernel fixes the representation of the state implicitly: every estimator
in :mod:`evolop.estimators` only ever sees Gram matrices built here.

Conventions
-----------
gaussian    k(x, y) = exp(-||x - y||^2 / (2 l^2))
laplacian   k(x, y) = exp(-||x - y||_1 / l)
linear      k(x, y) = <x, y>
polynomial  k(x, y) = (<x, y> + c)^p
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evolop.exceptions import ConfigError

__all__ = ["KernelSpec", "kernel_eval", "gram_matrix", "as_data_matrix"]

FAMILIES = ("gaussian", "laplacian", "linear", "polynomial")

# Upper bound on the number of float64 temporaries per assembly block.
_BLOCK_ELEMENTS = 2**22


@dataclass(frozen=True)
class KernelSpec:
    family: str
    lengthscale: float | None = None
    degree: int | None = None
    offset: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family in ("gaussian", "laplacian"):
            if self.lengthscale is None or not np.isfinite(self.lengthscale) or self.lengthscale <= 0:
                raise ConfigError(f"{self.family} kernel needs lengthscale > 0, got {self.lengthscale}")
            object.__setattr__(self, "lengthscale", float(self.lengthscale))
        if self.family == "polynomial":
            degree = 2 if self.degree is None else self.degree
            offset = 0.0 if self.offset is None else self.offset
            if int(degree) != degree or degree < 1:
                raise ConfigError(f"polynomial degree must be a positive integer, got {degree}")
            if not np.isfinite(offset) or offset < 0:
                raise ConfigError(f"polynomial offset must be >= 0, got {offset}")
            object.__setattr__(self, "degree", int(degree))
            object.__setattr__(self, "offset", float(offset))

    @classmethod
    def gaussian(cls, lengthscale=1.0):
        return cls("gaussian", lengthscale=lengthscale)

    @classmethod
    def laplacian(cls, lengthscale=1.0):
        return cls("laplacian", lengthscale=lengthscale)

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def polynomial(cls, degree=2, offset=1.0):
        return cls("polynomial", degree=degree, offset=offset)

    def to_dict(self):
        out = {"family": self.family}
        if self.family in ("gaussian", "laplacian"):
            out["lengthscale"] = self.lengthscale
        elif self.family == "polynomial":
            out["degree"] = self.degree
            out["offset"] = self.offset
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "family" not in data:
            raise ConfigError(f"kernel config must be an object with a 'family' key, got {data!r}")
        unknown = set(data) - {"family", "lengthscale", "degree", "offset"}
        if unknown:
            raise ConfigError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(
            str(data["family"]).lower(),
            lengthscale=data.get("lengthscale"),
            degree=data.get("degree"),
            offset=data.get("offset"),
        )


def as_data_matrix(X, name="X"):
    """Validate and return ``X`` as a finite float64 array of shape (n, d)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ConfigError(f"{name} must be a non-empty 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains non-finite entries")
    return X


def _block(spec, Xb, Z):
    # Elementwise formulas (no BLAS) so that every entry is computed by the
    # same floating-point operations regardless of block shape.
    if spec.family == "gaussian":
        diff = Xb[:, None, :] - Z[None, :, :]
        sq = (diff * diff).sum(axis=-1)
        return np.exp(sq * (-0.5 / spec.lengthscale**2))
    if spec.family == "laplacian":
        l1 = np.abs(Xb[:, None, :] - Z[None, :, :]).sum(axis=-1)
        return np.exp(l1 * (-1.0 / spec.lengthscale))
    dot = (Xb[:, None, :] * Z[None, :, :]).sum(axis=-1)
    if spec.family == "linear":
        return dot
    return (dot + spec.offset) ** spec.degree


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ConfigError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ConfigError("kernel arguments must be finite")
    return float(_block(spec, x[None, :], y[None, :])[0, 0])


def gram_matrix(spec: KernelSpec, X, Z=None) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(X[i], Z[j])``.

    If ``Z`` is omitted, is ``X`` itself or has equal values, only the upper
    triangle is evaluated and mirrored, so the result is exactly symmetric.
    """
    X = as_data_matrix(X, "X")
    symmetric = Z is None or Z is X
    if not symmetric:
        Z = as_data_matrix(Z, "Z")
        if Z.shape[1] != X.shape[1]:
            raise ConfigError(f"dimension mismatch: X has {X.shape[1]} columns, Z has {Z.shape[1]}")
        symmetric = Z.shape == X.shape and np.array_equal(X, Z)
    else:
        Z = X
    n, d = X.shape
    m = Z.shape[0]
    K = np.empty((n, m))
    rows = max(1, _BLOCK_ELEMENTS // max(1, m * d))
    if symmetric:
        for a in range(0, n, rows):
            b = min(n, a + rows)
            blk = _block(spec, X[a:b], X[a:])
            K[a:b, a:] = blk
            K[a:, a:b] = blk.T
    else:
        for a in range(0, n, rows):
            b = min(n, a + rows)
            K[a:b] = _block(spec, X[a:b], Z)
    return K
