import numpy as np

from gipa.exceptions import ShapeError


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else"""
    matrix = np.asarray(value, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {matrix.shape}")
    return matrix


def as_vector(value, name: str = "vector") -> np.ndarray:
    vector = np.asarray(value, dtype=np.float64)
    if vector.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {vector.shape}")
    return vector


def check_cols(matrix: np.ndarray, cols: int, name: str) -> None:
    if matrix.shape[1] != cols:
        raise ShapeError(f"{name} has {matrix.shape[1]} columns, expected {cols}")


def check_rows(matrix: np.ndarray, rows: int, name: str) -> None:
    if matrix.shape[0] != rows:
        raise ShapeError(f"{name} has {matrix.shape[0]} rows, expected {rows}")


def check_shape(matrix: np.ndarray, shape: tuple, name: str) -> None:
    if matrix.shape != tuple(shape):
        raise ShapeError(f"{name} has shape {matrix.shape}, expected {tuple(shape)}")


def check_rate(rate: float, name: str = "rate") -> float:
    """Dropout-style probability: must lie in [0, 1)"""
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"{name} must be in [0, 1), got {rate}")
    return rate


def check_index(index: int, size: int, name: str = "index") -> int:
    if not 0 <= index < size:
        raise IndexError(f"{name} {index} out of range [0, {size})")
    return int(index)


def check_divisible(width: int, heads: int) -> int:
    """Returns the per-head block width"""
    if heads < 1 or width % heads != 0:
        raise ShapeError(f"width {width} is not divisible by {heads} heads")
    return width // heads
