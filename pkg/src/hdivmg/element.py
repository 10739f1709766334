"""Raviart-Thomas RT_k and tensor Q_k bases on the unit square.

The velocity shape functions are dual to the degrees of freedom

* ``k + 1`` normal moments per face against orthonormal Legendre polynomials
  (normal taken as +x or +y, so both neighbours of a face agree), faces in
  the order left, right, bottom, top;
* ``2k(k+1)`` interior moments: ``v_x`` against ``Q_{k-1,k}`` followed by
  ``v_y`` against ``Q_{k,k-1}``.

Pressure functions are orthonormal tensor Legendre polynomials of degree
``k`` in each variable, so the reference pressure mass matrix is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre

from .mesh import LOCAL_FACES

MAX_DEGREE = 3


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


def gauss_1d(n: int) -> QuadratureRule:
    x, w = legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w)


def quadrature(n: int) -> tuple[QuadratureRule, QuadratureRule]:
    """Tensor Gauss rule on ``[0,1]^2`` with ``n`` points per direction, and the 1D face rule."""
    if n < 1:
        raise ValueError("need at least one quadrature point")
    line = gauss_1d(n)
    x, y = np.meshgrid(line.points, line.points, indexing="ij")
    wx, wy = np.meshgrid(line.weights, line.weights, indexing="ij")
    cell = QuadratureRule(np.column_stack([x.ravel(), y.ravel()]), (wx * wy).ravel())
    return cell, line


def legendre_table(n: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal shifted Legendre polynomials ``0..n`` and their derivatives at ``x``.

    Returns arrays of shape ``(n + 1, len(x))``.
    """
    x = np.asarray(x, dtype=float)
    t = 2.0 * x - 1.0
    vals = np.empty((n + 1, x.size))
    ders = np.empty((n + 1, x.size))
    for i in range(n + 1):
        c = np.zeros(i + 1)
        c[i] = np.sqrt(2 * i + 1)
        vals[i] = legendre.legval(t, c)
        ders[i] = 2.0 * legendre.legval(t, legendre.legder(c)) if i else 0.0
    return vals, ders


def face_points(local_face: int, s) -> np.ndarray:
    """Points on a reference face for face parameters ``s`` in [0, 1]."""
    axis, side = LOCAL_FACES[local_face]
    s = np.asarray(s, dtype=float)
    pts = np.empty((s.size, 2))
    pts[:, axis] = float(side)
    pts[:, 1 - axis] = s
    return pts


class ReferenceBasis:
    """Dof-dual RT_k velocity basis and orthonormal Q_k pressure basis.

    Attributes
    ----------
    degree : int
    velocity_dim, pressure_dim : int
    dof_kind : list of tuple
        ``("face", local_face, moment)`` or ``("interior", component, index)``
        for every velocity shape function.
    """

    def __init__(self, degree: int):
        if not 0 <= degree <= MAX_DEGREE:
            raise ValueError(f"unsupported degree {degree}; need 0 <= k <= {MAX_DEGREE}")
        k = degree
        self.degree = k
        self.velocity_dim = 2 * (k + 1) * (k + 2)
        self.pressure_dim = (k + 1) ** 2
        self.n_face_moments = k + 1
        self.n_interior = 2 * k * (k + 1)
        self.cell_rule, self.face_rule = quadrature(k + 2)

        # spanning set: (component, px, py) with Legendre degrees px, py
        span = [(0, i, j) for i in range(k + 2) for j in range(k + 1)]
        span += [(1, i, j) for i in range(k + 1) for j in range(k + 2)]
        self._span = np.array(span, dtype=np.int64)

        kinds = [("face", f, i) for f in range(4) for i in range(k + 1)]
        kinds += [("interior", 0, i * (k + 1) + j) for i in range(k) for j in range(k + 1)]
        kinds += [("interior", 1, i * k + j) for i in range(k + 1) for j in range(k)]
        self.dof_kind = kinds

        # rows: dofs, columns: spanning functions
        dof_matrix = self._apply_dofs_to_span().T
        self.coefficients = np.linalg.inv(dof_matrix)

    # -- spanning set evaluation ------------------------------------------
    def _span_eval(self, points):
        """Values ``(n_span, npts, 2)`` and gradients ``(n_span, npts, 2, 2)`` of the span."""
        points = np.atleast_2d(points)
        n = self.degree + 1
        lx, dx = legendre_table(n, points[:, 0])
        ly, dy = legendre_table(n, points[:, 1])
        comp, px, py = self._span.T
        vals = np.zeros((len(self._span), len(points), 2))
        grads = np.zeros((len(self._span), len(points), 2, 2))
        rows = np.arange(len(self._span))
        vals[rows, :, comp] = lx[px] * ly[py]
        grads[rows, :, comp, 0] = dx[px] * ly[py]
        grads[rows, :, comp, 1] = lx[px] * dy[py]
        return vals, grads

    def _apply_dofs_to_span(self):
        return self.apply_dofs(lambda pts: self._span_eval(pts)[0])

    def apply_dofs(self, field) -> np.ndarray:
        """Evaluate every velocity dof functional on ``field``.

        ``field(points)`` must return values of shape ``(..., npts, 2)``; the
        leading axes are carried through, and the dof axis is appended last.
        """
        k = self.degree
        s, w = self.face_rule.points, self.face_rule.weights
        leg_s, _ = legendre_table(k, s)
        out = []
        for f, (axis, _) in enumerate(LOCAL_FACES):
            vn = field(face_points(f, s))[..., axis]
            out.append(np.einsum("...q,iq,q->...i", vn, leg_s, w))
        cq, cw = self.cell_rule.points, self.cell_rule.weights
        vals = field(cq)
        lx, _ = legendre_table(k + 1, cq[:, 0])
        ly, _ = legendre_table(k + 1, cq[:, 1])
        if k > 0:
            tx = (lx[:k, None, :] * ly[None, : k + 1, :]).reshape(-1, len(cq))
            ty = (lx[: k + 1, None, :] * ly[None, :k, :]).reshape(-1, len(cq))
            out.append(np.einsum("...q,iq,q->...i", vals[..., 0], tx, cw))
            out.append(np.einsum("...q,iq,q->...i", vals[..., 1], ty, cw))
        return np.concatenate(out, axis=-1)

    # -- shape functions ----------------------------------------------------
    def values(self, points) -> np.ndarray:
        """Velocity shape function values, ``(velocity_dim, npts, 2)``."""
        vals, _ = self._span_eval(points)
        return np.einsum("sm,spa->mpa", self.coefficients, vals)

    def gradients(self, points) -> np.ndarray:
        """``grad[m, p, a, b] = d(phi_m)_a / d x_b`` at the points."""
        _, grads = self._span_eval(points)
        return np.einsum("sm,spab->mpab", self.coefficients, grads)

    def divergences(self, points) -> np.ndarray:
        g = self.gradients(points)
        return g[..., 0, 0] + g[..., 1, 1]

    def pressure_values(self, points) -> np.ndarray:
        """Pressure shape function values, ``(pressure_dim, npts)``; index ``i*(k+1)+j``."""
        points = np.atleast_2d(points)
        k = self.degree
        lx, _ = legendre_table(k, points[:, 0])
        ly, _ = legendre_table(k, points[:, 1])
        return (lx[:, None, :] * ly[None, :, :]).reshape(-1, len(points))

    def project_pressure(self, func) -> np.ndarray:
        """L2 projection coefficients of a scalar function onto Q_k (exact for polynomials)."""
        q, w = self.cell_rule.points, self.cell_rule.weights
        return np.einsum("...q,iq,q->...i", func(q), self.pressure_values(q), w)

    @cached_property
    def pressure_integrals(self) -> np.ndarray:
        """Integral of each pressure shape function over the reference cell."""
        q, w = self.cell_rule.points, self.cell_rule.weights
        return self.pressure_values(q) @ w

    # -- tabulations at quadrature points -----------------------------------
    @cached_property
    def cell_tables(self):
        q = self.cell_rule.points
        return self.values(q), self.gradients(q), self.pressure_values(q)

    @cached_property
    def face_tables(self):
        """Per local face: values ``(nb, nq, 2)`` and gradients ``(nb, nq, 2, 2)``."""
        s = self.face_rule.points
        return [(self.values(face_points(f, s)), self.gradients(face_points(f, s))) for f in range(4)]

    def face_dofs(self, local_face: int) -> np.ndarray:
        n = self.n_face_moments
        return np.arange(local_face * n, (local_face + 1) * n)

    @property
    def interior_dofs(self) -> np.ndarray:
        return np.arange(4 * self.n_face_moments, self.velocity_dim)


_CACHE: dict[int, ReferenceBasis] = {}


def reference_basis(k: int) -> ReferenceBasis:
    if k not in _CACHE:
        _CACHE[k] = ReferenceBasis(k)
    return _CACHE[k]


def piola_transform(jacobian, reference_values, reference_divergences=None):
    """Contravariant Piola map of reference values (``(..., 2)``) to a physical cell.

    Returns the physical values, and the physical divergences when reference
    divergences are given.
    """
    jacobian = np.asarray(jacobian, dtype=float)
    det = np.linalg.det(jacobian)
    if abs(det) < 1e-300:
        raise ValueError("singular Jacobian")
    vals = np.einsum("ab,...b->...a", jacobian, np.asarray(reference_values)) / det
    if reference_divergences is None:
        return vals
    return vals, np.asarray(reference_divergences) / det


def piola_scales(cell_size):
    """Diagonal Piola factors for axis-aligned cells.

    Returns ``(value_scale, grad_scale, det)`` with shapes ``(n, 2)``,
    ``(n, 2, 2)`` and ``(n,)`` such that ``v_a = value_scale[a] * vhat_a`` and
    ``d_b v_a = grad_scale[a, b] * dhat_b vhat_a``.
    """
    h = np.atleast_2d(cell_size)
    det = h[:, 0] * h[:, 1]
    value_scale = h / det[:, None]
    grad_scale = value_scale[:, :, None] / h[:, None, :]
    return value_scale, grad_scale, det
