"""Datasets and the constrained index-parameter representation.

The index vector alpha lives on the unit sphere with a positive first
element.  Internally it is handled through its free chart coordinates
``chart = alpha[1:]`` with ``alpha[0] = sqrt(1 - ||chart||^2)``, which keeps
the constraint exactly satisfied during unconstrained optimization.  The
chart cannot represent alpha[0] = 0; if the true first coefficient is 0 the
sign convention itself is ill-posed and this parametrization does not apply
(documented limitation).

All containers are frozen and hold read-only arrays; they can be shared
across threads and processes freely.
"""

from dataclasses import dataclass

import numpy as np

from plsim.exceptions import (
    ChartOutOfBall,
    ConstraintViolated,
    MissingColumn,
    NonFiniteValue,
    TooFewRows,
)

UNIT_TOL = 1e-12
CHART_CAP = 0.999  # optimizer backtracks until ||chart|| <= this


def _readonly(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Response y (n,), index covariates z (n,p), linear covariates x (n,q)."""

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    z_names: tuple = ()
    x_names: tuple = ()
    y_name: str = "y"

    def __post_init__(self):
        y = _readonly(self.y)
        z = _readonly(self.z)
        x = _readonly(np.asarray(self.x, dtype=float).reshape(len(y), -1))
        if z.ndim != 2:
            raise ValueError("z must be a 2-d array")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        if not self.z_names:
            object.__setattr__(self, "z_names", tuple(f"z{i+1}" for i in range(z.shape[1])))
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{i+1}" for i in range(x.shape[1])))
        if self.n < 1 or self.p < 1:
            raise ValueError("need n >= 1 and p >= 1")
        for arr, label in ((y, "y"), (z, "z"), (x, "x")):
            if arr.size and not np.all(np.isfinite(arr)):
                idx = np.argwhere(~np.isfinite(arr.reshape(len(y), -1)))[0]
                raise NonFiniteValue(int(idx[0]), label)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.z.shape[1]

    @property
    def q(self):
        return self.x.shape[1]

    def require_fit_size(self):
        needed = self.p + self.q + 3
        if self.n < needed:
            raise TooFewRows(self.n, needed)

    def subset(self, z_keep, x_keep):
        """Column subset (boolean masks or index arrays), names carried along."""
        z_keep = np.asarray(z_keep)
        x_keep = np.asarray(x_keep)
        zn = tuple(np.asarray(self.z_names, dtype=object)[z_keep])
        xn = tuple(np.asarray(self.x_names, dtype=object)[x_keep]) if self.q else ()
        return Dataset(self.y, self.z[:, z_keep],
                       self.x[:, x_keep] if self.q else self.x,
                       zn, xn, self.y_name)


def validate_dataset(raw_table, z_names, x_names, y_name):
    """Build a Dataset from a labeled numeric table (pandas DataFrame or
    dict of columns).  Rows containing missing values are rejected, never
    dropped; the error reports the first offending cell and the total count.
    """
    cols = {}
    names = [y_name, *z_names, *x_names]
    for name in names:
        try:
            col = raw_table[name]
        except (KeyError, IndexError, TypeError):
            raise MissingColumn(name) from None
        col = np.asarray(col)
        if col.dtype == object or col.dtype.kind in "SU":
            # attempt numeric coercion; failures become NaN and are reported
            def _tofloat(v):
                try:
                    return float(v)
                except (TypeError, ValueError):
                    return np.nan
            col = np.array([_tofloat(v) for v in col], dtype=float)
        cols[name] = np.asarray(col, dtype=float)

    n = len(cols[y_name])
    total_bad = sum(int((~np.isfinite(c)).sum()) for c in cols.values())
    if total_bad:
        for name in names:
            bad = ~np.isfinite(cols[name])
            if bad.any():
                raise NonFiniteValue(int(np.argmax(bad)), name, count=total_bad)

    p, q = len(z_names), len(x_names)
    if n < p + q + 3:
        raise TooFewRows(n, p + q + 3)

    z = np.column_stack([cols[c] for c in z_names])
    x = (np.column_stack([cols[c] for c in x_names]) if q else np.empty((n, 0)))
    return Dataset(cols[y_name], z, x, tuple(z_names), tuple(x_names), y_name)


@dataclass(frozen=True)
class IndexParam:
    """Unit-norm index vector with positive first element + chart coords."""

    alpha: np.ndarray
    chart: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _readonly(self.alpha))
        object.__setattr__(self, "chart", _readonly(self.chart))

    @property
    def p(self):
        return self.alpha.shape[0]


def chart_to_alpha(chart):
    chart = np.asarray(chart, dtype=float).reshape(-1)
    ss = float(chart @ chart)
    if ss >= 1.0:
        raise ChartOutOfBall(f"||chart|| = {np.sqrt(ss):.6g} >= 1")
    alpha = np.concatenate([[np.sqrt(1.0 - ss)], chart])
    return IndexParam(alpha, chart)


def alpha_to_chart(alpha):
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    nrm = float(np.linalg.norm(alpha))
    if abs(nrm - 1.0) > 100 * UNIT_TOL:
        raise ConstraintViolated(f"||alpha|| = {nrm:.12g} != 1")
    if alpha[0] <= 0.0:
        raise ConstraintViolated(f"alpha[0] = {alpha[0]:.6g} must be positive")
    return alpha[1:].copy()


def index_from_alpha(alpha):
    """IndexParam from a (already unit, alpha[0] > 0) coefficient vector."""
    chart = alpha_to_chart(alpha)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    return IndexParam(alpha, chart)


@dataclass(frozen=True)
class CoefParam:
    beta: np.ndarray

    def __post_init__(self):
        beta = _readonly(np.asarray(self.beta, dtype=float).reshape(-1))
        if beta.size and not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        object.__setattr__(self, "beta", beta)

    @property
    def q(self):
        return self.beta.shape[0]


@dataclass(frozen=True)
class ZetaParam:
    """Combined parameter (alpha, beta) of dimension p + q."""

    index: IndexParam
    coef: CoefParam

    @property
    def alpha(self):
        return self.index.alpha

    @property
    def beta(self):
        return self.coef.beta

    @property
    def dim(self):
        return self.index.p + self.coef.q

    def ambient(self):
        return np.concatenate([self.alpha, self.beta])


def make_zeta(alpha, beta):
    return ZetaParam(index_from_alpha(alpha), CoefParam(np.asarray(beta, dtype=float)))


def zeta_from_chart(chart, beta):
    return ZetaParam(chart_to_alpha(chart), CoefParam(np.asarray(beta, dtype=float)))
