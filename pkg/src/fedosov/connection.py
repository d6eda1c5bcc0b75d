"""Torsion-free affine connections on a chart.

Sign conventions (fixed once, validated by the commutator test suite):

    nabla_a phi_b = d_a phi_b - Gamma^c_{ab} phi_c
    nabla_a X^c   = d_a X^c   + Gamma^c_{ab} X^b
    (nabla_a nabla_b - nabla_b nabla_a) X^c = R_{ab}^c_d X^d

with the Christoffel array stored as Gamma[c, a, b] (up index first) and
Gamma^c_{ab} = Gamma^c_{ba}.  Covariant derivatives prepend the new down
index, matching the left-most nabla_a of the usual notation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import (
    DOWN,
    UP,
    Chart,
    Tensor,
    TensorError,
    antisymmetrize,
    partial_derivative,
    permute,
)
from .linalg import matrix_inverse


class ConnectionError_(Exception):
    pass


@dataclass(frozen=True)
class Connection:
    chart: Chart
    gamma: Tensor  # variance (u, d, d), components Gamma^c_{ab} at [c, a, b]

    def __post_init__(self):
        if self.gamma.variance != (UP, DOWN, DOWN):
            raise ConnectionError_("Christoffel array must have variance (u, d, d)")
        sym = self.gamma - permute(self.gamma, (0, 2, 1))
        if not sym.is_zero():
            raise ConnectionError_("connection must be torsion-free: Gamma^c_{ab} = Gamma^c_{ba}")

    @staticmethod
    def flat(chart: Chart) -> Connection:
        return Connection(chart, Tensor.zeros(chart, (UP, DOWN, DOWN)))

    def is_flat(self) -> bool:
        return self.gamma.is_zero()


def covariant_derivative(conn: Connection, t: Tensor) -> Tensor:
    """nabla T with the new down index first."""
    if t.chart != conn.chart:
        raise ConnectionError_("chart mismatch")
    d = t.chart.dim
    gamma = conn.gamma
    grad = partial_derivative(t)
    if conn.is_flat() or t.rank == 0:
        return grad

    def comp(idx):
        a, rest = idx[0], idx[1:]
        total = grad[idx]
        for slot, v in enumerate(t.variance):
            full = list(rest)
            if v == DOWN:
                b = rest[slot]
                for e in range(d):
                    full[slot] = e
                    total = total - gamma[e, a, b] * t[tuple(full)]
            else:
                c = rest[slot]
                for e in range(d):
                    full[slot] = e
                    total = total + gamma[c, a, e] * t[tuple(full)]
        return total

    return Tensor.build(t.chart, (DOWN,) + t.variance, comp)


def projective_shift(conn: Connection, nu: Tensor) -> Connection:
    """Gamma^c_{ab} + nu_a delta_b^c + nu_b delta_a^c."""
    if nu.variance != (DOWN,):
        raise ConnectionError_("projective shift needs a 1-form")
    zero = conn.chart.zero_expr()

    def comp(idx):
        c, a, b = idx
        total = conn.gamma[idx]
        if b == c:
            total = total + nu[a]
        if a == c:
            total = total + nu[b]
        return total

    return Connection(conn.chart, Tensor.build(conn.chart, (UP, DOWN, DOWN), comp))


def levi_civita(g: Tensor) -> Connection:
    """Unique torsion-free connection preserving the symmetric metric g."""
    if g.variance != (DOWN, DOWN):
        raise ConnectionError_("metric must be rank 2 fully lowered")
    if not (g - permute(g, (1, 0))).is_zero():
        raise ConnectionError_("metric must be symmetric")
    chart = g.chart
    d = chart.dim
    g_inv = matrix_inverse(g.as_matrix())
    dg = partial_derivative(g)  # dg[e, a, b] = d_e g_ab
    half = chart.const("1/2")

    def comp(idx):
        c, a, b = idx
        total = chart.zero_expr()
        for e in range(d):
            total = total + g_inv[c][e] * (dg[a, e, b] + dg[b, e, a] - dg[e, a, b])
        return total * half

    return Connection(chart, Tensor.build(chart, (UP, DOWN, DOWN), comp))


@dataclass(frozen=True)
class Curvature:
    """R_{ab}{}^c{}_d of a torsion-free connection, variance (d, d, u, d)."""

    tensor: Tensor

    def __post_init__(self):
        if self.tensor.variance != (DOWN, DOWN, UP, DOWN):
            raise ConnectionError_("curvature must have variance (d, d, u, d)")

    def __getitem__(self, idx):
        return self.tensor[idx]

    @property
    def chart(self) -> Chart:
        return self.tensor.chart


def riemann(conn: Connection) -> Curvature:
    """R_{ab}^c_d = d_a G^c_{bd} - d_b G^c_{ad} + G^c_{ae} G^e_{bd} - G^c_{be} G^e_{ad}."""
    chart = conn.chart
    d = chart.dim
    gamma = conn.gamma
    dgamma = partial_derivative(gamma)  # [a, c, b, d]

    def comp(idx):
        a, b, c, dd = idx
        total = dgamma[a, c, b, dd] - dgamma[b, c, a, dd]
        for e in range(d):
            total = total + gamma[c, a, e] * gamma[e, b, dd] - gamma[c, b, e] * gamma[e, a, dd]
        return total

    return Curvature(Tensor.build(chart, (DOWN, DOWN, UP, DOWN), comp))


def curvature_commutator_residual(conn: Connection, x: Tensor) -> Tensor:
    """(nabla_a nabla_b - nabla_b nabla_a) X^c - R_{ab}^c_d X^d, identically zero."""
    r = riemann(conn)
    first = covariant_derivative(conn, x)
    second = covariant_derivative(conn, first)  # [a, b, c]
    comm = second - permute(second, (1, 0, 2))
    d = conn.chart.dim

    def rhs(idx):
        a, b, c = idx
        total = conn.chart.zero_expr()
        for e in range(d):
            total = total + r[a, b, c, e] * x[e]
        return total

    return comm - Tensor.build(conn.chart, (DOWN, DOWN, UP), rhs)


def first_bianchi_residual(r: Curvature) -> Tensor:
    """R_{[ab}{}^c{}_{d]} for a torsion-free connection's curvature."""
    return antisymmetrize(r.tensor, (0, 1, 3))


def bianchi_check(conn: Connection, r: Curvature) -> bool:
    """First and second Bianchi identities, exact."""
    if not first_bianchi_residual(r).is_zero():
        return False
    nabla_r = covariant_derivative(conn, r.tensor)  # [e, a, b, c, d]
    return antisymmetrize(nabla_r, (0, 1, 2)).is_zero()
