"""The observation container and CSV ingestion."""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError

ROLES = ("u", "x", "z", "y")


def _as_matrix(a, n, what):
    if a is None:
        return np.empty((n, 0))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataValidationError(f"{what} must be a matrix")
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``(U_i, X_i, Z_i, Y_i)``.

    ``x`` holds the covariates with varying coefficients (column 0 is usually
    the constant 1 of an intercept function) and ``z`` the covariates of the
    parametric part; ``z`` may have zero columns.
    """

    u: np.ndarray
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    x_names: tuple = ()
    z_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        n = u.shape[0]
        x = _as_matrix(self.x, n, "x")
        z = _as_matrix(self.z, n, "z")
        if n < 1:
            raise DataValidationError("dataset needs at least one observation")
        for name, arr in (("x", x), ("z", z), ("y", y)):
            if arr.shape[0] != n:
                raise DataValidationError(
                    f"{name} has {arr.shape[0]} rows but u has {n}")
        if x.shape[1] < 1:
            raise DataValidationError("x needs at least one column")
        for name, arr in (("u", u), ("x", x), ("z", z), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise DataValidationError(f"{name} contains non-finite values")
        x_names = tuple(self.x_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        z_names = tuple(self.z_names) or tuple(f"z{j + 1}" for j in range(z.shape[1]))
        if len(x_names) != x.shape[1] or len(z_names) != z.shape[1]:
            raise DataValidationError("column name count does not match data")
        for arr in (u, x, z, y):
            arr.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "z_names", z_names)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @property
    def omega_lo(self) -> float:
        return float(self.u.min())

    @property
    def omega_hi(self) -> float:
        return float(self.u.max())

    @property
    def omega_length(self) -> float:
        return self.omega_hi - self.omega_lo

    def with_response(self, y) -> "Dataset":
        return Dataset(self.u, self.x, self.z, y, self.x_names, self.z_names, self.meta)

    def drop_x(self, indices) -> "Dataset":
        """Remove varying-coefficient columns (0-based).  Removing all of them
        leaves a single zero column, i.e. a model with no varying part."""
        keep = [j for j in range(self.p) if j not in set(indices)]
        if keep:
            x = self.x[:, keep]
            names = tuple(self.x_names[j] for j in keep)
        else:
            x = np.zeros((self.n, 1))
            names = ("(none)",)
        return Dataset(self.u, x, self.z, self.y, names, self.z_names,
                       {**self.meta, "no_varying": not keep})

    def select_z(self, columns) -> "Dataset":
        columns = list(columns)
        return Dataset(self.u, self.x, self.z[:, columns], self.y, self.x_names,
                       tuple(self.z_names[j] for j in columns), self.meta)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.u[rows], self.x[rows], self.z[rows], self.y[rows],
                       self.x_names, self.z_names, self.meta)

    @property
    def has_varying(self) -> bool:
        return not self.meta.get("no_varying", False)

    def tobytes(self) -> bytes:
        return b"".join(a.tobytes() for a in (self.u, self.x, self.z, self.y))


def read_role_map(path) -> dict:
    """Read a role map: an INI file whose ``[roles]`` section maps column name
    to one of ``u``, ``x``, ``z``, ``y``.  Order of ``x`` and ``z`` columns is
    the order of appearance in the CSV header."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep column-name case
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise DataValidationError(f"cannot parse role map {path}: {exc}") from None
    if not parser.has_section("roles"):
        raise DataValidationError(f"role map {path} has no [roles] section")
    return {k: v.strip().lower() for k, v in parser.items("roles")}


def validate_roles(roles: dict, header=None) -> list:
    """Collect every role-map problem instead of stopping at the first."""
    errors = []
    for col, role in roles.items():
        if role not in ROLES:
            errors.append(f"column {col!r}: unknown role {role!r}")
    for role in ("u", "y"):
        cols = [c for c, r in roles.items() if r == role]
        if len(cols) == 0:
            errors.append(f"role map assigns no {role!r} column")
        elif len(cols) > 1:
            errors.append(f"duplicate role {role!r}: columns {cols}")
    if header is not None:
        missing = [c for c in roles if c not in header]
        if missing:
            errors.append(f"role map names columns absent from the CSV: {missing}")
    return errors


def read_csv(path, roles, intercept=True) -> Dataset:
    """Load a CSV with a header row.  Columns not in ``roles`` are ignored.

    With ``intercept`` a constant column is prepended to ``x``.  Missing or
    non-numeric cells are rejected.
    """
    path = Path(path)
    if not isinstance(roles, dict):
        roles = read_role_map(roles)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"{path} is empty") from None
        rows = list(reader)
    errors = validate_roles(roles, header)
    if errors:
        raise DataValidationError("; ".join(errors))
    cols = {}
    for j, name in enumerate(header):
        if name not in roles:
            continue
        vals = []
        for i, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise DataValidationError(f"{path}:{i}: expected {len(header)} fields")
            cell = row[j].strip()
            if cell == "" or cell.lower() in ("na", "nan", "null"):
                raise DataValidationError(f"{path}:{i}: missing value in column {name!r}")
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataValidationError(
                    f"{path}:{i}: non-numeric value {cell!r} in column {name!r}") from None
        cols[name] = np.array(vals)
    x_cols = [c for c in header if roles.get(c) == "x"]
    z_cols = [c for c in header if roles.get(c) == "z"]
    u_col = next(c for c in header if roles.get(c) == "u")
    y_col = next(c for c in header if roles.get(c) == "y")
    n = len(rows)
    x = [np.ones(n)] if intercept else []
    x += [cols[c] for c in x_cols]
    if not x:
        raise DataValidationError("no varying-coefficient covariates (x) and no intercept")
    x_names = (("(intercept)",) if intercept else ()) + tuple(x_cols)
    z = np.column_stack([cols[c] for c in z_cols]) if z_cols else np.empty((n, 0))
    return Dataset(cols[u_col], np.column_stack(x), z, cols[y_col], x_names, tuple(z_cols))
