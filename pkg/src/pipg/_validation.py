"""Input validation helpers shared across the package."""

import numbers

import numpy as np
import scipy.sparse as sp


def check_vector(x, dim=None, name="x"):
    """Return ``x`` as a 1-D float array, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def check_matrix(a, shape=None, name="matrix"):
    """Return ``a`` as a 2-D float array or CSR matrix.

    Sparse inputs stay sparse; everything else is converted with
    ``np.asarray``.
    """
    if sp.issparse(a):
        mat = sp.csr_matrix(a, dtype=float)
    else:
        mat = np.asarray(a, dtype=float)
        if mat.ndim == 1 and shape is not None and shape[0] == 0:
            mat = mat.reshape(0, shape[1])
        if mat.ndim != 2:
            raise ValueError(f"{name} must be 2-D, got shape {mat.shape}")
    if shape is not None:
        for got, want in zip(mat.shape, shape):
            if want is not None and got != want:
                raise ValueError(f"{name} has shape {mat.shape}, expected {shape}")
    return mat


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return float(value)


def to_dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)
