"""Piecewise-linear finite elements for -(a u')' = 1 on [x_lo, x_hi].

Boundary conditions are ``u(x_lo) = 0`` and ``a u'(x_hi) = flux_bc``. The
conductivity is piecewise constant on elements, so the stiffness matrix is
tridiagonal and is solved with the Thomas algorithm. :func:`solve_batch`
runs the same elimination over many conductivity realizations at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, ParameterError, SolverError


@dataclass(frozen=True)
class Mesh:
    m: int
    x_lo: float = 0.0
    x_hi: float = 1.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ParameterError(f"mesh needs at least one element, got m={self.m}")
        if not self.x_hi > self.x_lo:
            raise ParameterError(f"empty interval [{self.x_lo}, {self.x_hi}]")

    @property
    def h(self):
        return (self.x_hi - self.x_lo) / self.m

    @property
    def nodes(self):
        nodes = self.x_lo + np.arange(self.m + 1) * self.h
        nodes[-1] = self.x_hi
        return nodes

    @property
    def midpoints(self):
        return self.x_lo + (np.arange(self.m) + 0.5) * self.h


@dataclass(frozen=True)
class FemSolution:
    nodal_values: np.ndarray
    mesh: Mesh
    conductivity_seed: int | tuple | None = None


def element_cells(n, mesh):
    """Index of the conductivity cell holding each element midpoint."""
    if mesh.m % n and n % mesh.m:
        raise DimensionError(
            f"mesh of {mesh.m} elements is incompatible with a grid of {n} cells"
        )
    width = (mesh.x_hi - mesh.x_lo) / n
    idx = np.floor((mesh.midpoints - mesh.x_lo) / width).astype(int)
    return np.clip(idx, 0, n - 1)


def project_conductivity(field, mesh):
    """Per-element conductivity taken from the cell containing each midpoint.

    ``field`` may be a :class:`~hybriduq.grf.FieldSample` or a plain array of
    cell values; a 2D array is treated as one realization per row.
    """
    values = np.asarray(getattr(field, "values", field), dtype=float)
    if np.any(~(values > 0)):
        raise ParameterError("conductivity must be strictly positive")
    idx = element_cells(values.shape[-1], mesh)
    return values[..., idx]


def solve_batch(elem_conductivity, mesh, flux_bc=1.0):
    """Nodal solutions for a batch of element conductivities.

    ``elem_conductivity`` has shape ``(m,)`` or ``(batch, m)``; the result has
    the matching shape with ``m + 1`` nodal values in the last axis.
    """
    a = np.asarray(elem_conductivity, dtype=float)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    m = mesh.m
    if a.shape[-1] != m:
        raise DimensionError(f"expected {m} element conductivities, got {a.shape[-1]}")
    if np.any(~(a > 0)):
        raise ParameterError("conductivity must be strictly positive")

    h = mesh.h
    k = a / h
    # unknowns are nodes 1..m; node 0 carries the Dirichlet value 0
    diag = np.empty_like(k)
    diag[:, :-1] = k[:, :-1] + k[:, 1:]
    diag[:, -1] = k[:, -1]
    off = -k[:, 1:]  # coupling between unknowns i and i+1
    rhs = np.full(k.shape, h)
    rhs[:, -1] = 0.5 * h + flux_bc

    # forward sweep
    cp = np.empty_like(off)
    dp = np.empty_like(rhs)
    denom = diag[:, 0]
    if np.any(denom == 0):
        raise SolverError("zero pivot in tridiagonal solve")
    if m > 1:
        cp[:, 0] = off[:, 0] / denom
    dp[:, 0] = rhs[:, 0] / denom
    for i in range(1, m):
        denom = diag[:, i] - off[:, i - 1] * cp[:, i - 1]
        if np.any(denom == 0):
            raise SolverError(f"zero pivot in tridiagonal solve at row {i}")
        if i < m - 1:
            cp[:, i] = off[:, i] / denom
        dp[:, i] = (rhs[:, i] - off[:, i - 1] * dp[:, i - 1]) / denom

    u = np.zeros((a.shape[0], m + 1))
    u[:, m] = dp[:, m - 1]
    for i in range(m - 2, -1, -1):
        u[:, i + 1] = dp[:, i] - cp[:, i] * u[:, i + 2]

    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite nodal values")
    return u[0] if single else u


def solve(elem_conductivity, mesh, flux_bc=1.0, conductivity_seed=None):
    """Finite element solution for one conductivity realization."""
    u = solve_batch(np.asarray(elem_conductivity, dtype=float), mesh, flux_bc)
    return FemSolution(nodal_values=u, mesh=mesh, conductivity_seed=conductivity_seed)


def interpolation_weights(mesh, x):
    """Left node index and linear weight for evaluating at ``x``."""
    tol = 1e-12 * (mesh.x_hi - mesh.x_lo)
    if not (mesh.x_lo - tol <= x <= mesh.x_hi + tol):
        raise DomainError(f"x={x} outside [{mesh.x_lo}, {mesh.x_hi}]")
    nodes = mesh.nodes
    j = int(np.searchsorted(nodes, x, side="right")) - 1
    j = min(max(j, 0), mesh.m - 1)
    t = (x - nodes[j]) / mesh.h
    return j, min(max(t, 0.0), 1.0)


def evaluate_nodal(nodal_values, mesh, x):
    """Linear interpolation of nodal values (last axis) at ``x``."""
    j, t = interpolation_weights(mesh, x)
    u = np.asarray(nodal_values)
    if t == 0.0:
        return u[..., j]
    if t == 1.0:
        return u[..., j + 1]
    return (1.0 - t) * u[..., j] + t * u[..., j + 1]


def evaluate_at(solution, x):
    return float(evaluate_nodal(solution.nodal_values, solution.mesh, x))
