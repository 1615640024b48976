"""Input checks shared by the estimators."""
import numbers

import numpy as np
from sklearn.utils import check_array, check_scalar
from sklearn.utils.validation import check_non_negative


def check_intrinsic(I, n_nodes: int) -> np.ndarray:
    """Return ``I`` as a finite, non-negative float64 vector of length n_nodes."""
    I = check_array(I, ensure_2d=False, dtype=np.float64, ensure_min_samples=0,
                    input_name="intrinsic values")
    if I.ndim != 1 or I.shape[0] != n_nodes:
        raise ValueError(f"expected {n_nodes} intrinsic values, got shape {I.shape}")
    check_non_negative(I, "intrinsic values")
    return I


def check_alpha(alpha) -> float:
    return float(check_scalar(alpha, "alpha", numbers.Real, min_val=0.0, max_val=1.0,
                              include_boundaries="neither"))


def check_epsilon(epsilon) -> float:
    return float(check_scalar(epsilon, "epsilon", numbers.Real, min_val=0.0,
                              include_boundaries="neither"))


def check_workers(workers) -> int:
    if workers is None:
        return 1
    return int(check_scalar(workers, "workers", numbers.Integral, min_val=1))


def check_same_length(x, y, what="x and y"):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"{what} differ in length: {x.size} != {y.size}")
    return x, y


class LengthMismatch(ValueError):
    pass
