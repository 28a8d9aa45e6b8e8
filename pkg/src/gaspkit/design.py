"""Experimental designs: the design matrix and its per-coordinate bounds."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class DesignMatrix:
    """An n x p matrix of input locations plus per-coordinate bounds.

    Bounds default to the observed min/max of each column.  They are used
    to scale default prior constants and to flag extrapolation, so a
    design built from a known input domain should pass the domain bounds
    explicitly rather than rely on the sample range.
    """

    values: np.ndarray
    bounds: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.ndim != 2 or values.size == 0:
            raise DataError("design must be a nonempty 2-d array")
        if not np.all(np.isfinite(values)):
            raise DataError("design contains non-finite entries")
        object.__setattr__(self, "values", values)
        if self.bounds is None:
            bounds = np.column_stack([values.min(axis=0), values.max(axis=0)])
        else:
            bounds = np.asarray(self.bounds, dtype=float)
            if bounds.shape != (values.shape[1], 2):
                raise DataError(
                    f"bounds must have shape ({values.shape[1]}, 2), got {bounds.shape}"
                )
        object.__setattr__(self, "bounds", bounds)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def widths(self):
        """Per-coordinate bound widths x_max - x_min."""
        return self.bounds[:, 1] - self.bounds[:, 0]

    def contains(self, x):
        """Row-wise flag: True where a point lies inside the bounding box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return np.all((x >= lo) & (x <= hi), axis=1)
