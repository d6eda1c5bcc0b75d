"""Conformally symplectic and conformally Fedosov structures.

A structure is a representative pair (J, nabla) on a chart: a skew
non-degenerate 2-form and a torsion-free connection, together with the two
1-forms alpha and beta determined by

    nabla_[a J_bc] = 2 alpha_[a J_bc]      (conformally symplectic condition)
    nabla_[a alpha_b] = 0                  (closure of the Lee form)
    nabla_(a J_b)c = beta_(a J_b)c         (projective compatibility)

The master equation nabla_a J_bc = 2 J_{a[b} alpha_{c]} singles out a unique
connection in the projective class (beta = -alpha); most downstream
machinery assumes it.  A Fedosov gauge is a representative with alpha = 0,
i.e. nabla J = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .connection import Connection, covariant_derivative, projective_shift
from .expr import RationalExpr, expr_str, poly_sqrt
from .linalg import InconsistentSystemError, solve_unique
from .tensor import (
    DOWN,
    UP,
    Chart,
    Tensor,
    antisymmetrize,
    inverse_two_form,
    permute,
    raise_index,
    symmetrize,
    tensor_product,
)


class StructureError(Exception):
    """A candidate pair (J, nabla) fails one of the defining equations."""

    def __init__(self, equation: str, witness_index=None, witness=None, coords=None):
        self.equation = equation
        self.witness_index = witness_index
        self.witness = witness
        msg = f"not a conformally Fedosov pair: {equation} fails"
        if witness_index is not None and witness is not None and coords is not None:
            msg += f"; first nonzero residual at {witness_index}: {expr_str(witness, coords)}"
        super().__init__(msg)


@dataclass(frozen=True)
class GaugeTransform:
    """Simultaneous rescaling data.

    Stores W = Omega^2 as the primary rational object together with
    Upsilon_a = (1/2) (d_a W)/W; Omega itself may be irrational (only even
    powers of Omega appear in any identity this package evaluates, except
    for odd-weight density transports, which require `omega`).
    """

    chart: Chart
    omega_squared: RationalExpr
    upsilon: Tensor
    omega: RationalExpr | None = None

    @staticmethod
    def from_omega_squared(chart: Chart, w: RationalExpr) -> GaugeTransform:
        if w.is_zero:
            raise ValueError("Omega^2 must be nonzero")
        half = chart.const(Fraction(1, 2))
        ups = Tensor.build(chart, (DOWN,), lambda i: half * w.derivative(i[0]) / w)
        num = poly_sqrt(w.num)
        den = poly_sqrt(w.den)
        omega = RationalExpr(num, den) if num is not None and den is not None else None
        return GaugeTransform(chart, w, ups, omega)

    @staticmethod
    def from_omega(chart: Chart, omega: RationalExpr) -> GaugeTransform:
        if omega.is_zero:
            raise ValueError("Omega must be nonzero")
        w = omega * omega
        half = chart.const(Fraction(1, 2))
        ups = Tensor.build(chart, (DOWN,), lambda i: half * w.derivative(i[0]) / w)
        return GaugeTransform(chart, w, ups, omega)

    def inverse(self) -> GaugeTransform:
        one = self.chart.one_expr()
        inv_omega = None if self.omega is None else one / self.omega
        return GaugeTransform(self.chart, one / self.omega_squared, self.upsilon.scale(Fraction(-1)), inv_omega)

    def identity_check(self) -> bool:
        return self.upsilon.is_zero()


@dataclass(frozen=True)
class FedosovStructure:
    """Validated representative pair with its derived 1-forms."""

    chart: Chart
    j: Tensor
    j_inv: Tensor
    conn: Connection
    alpha: Tensor
    beta: Tensor

    @property
    def n(self) -> int:
        return self.chart.n

    def nabla_j(self) -> Tensor:
        return covariant_derivative(self.conn, self.j)

    def satisfies_master(self) -> bool:
        return master_equation_residual(self.j, self.conn, self.alpha).is_zero()

    def is_fedosov_gauge(self) -> bool:
        return self.alpha.is_zero() and self.nabla_j().is_zero()

    def alpha_up(self) -> Tensor:
        return raise_index(self.alpha, 0, self.j_inv)


def lee_and_beta(j: Tensor, conn: Connection) -> tuple[Tensor, Tensor]:
    """Candidate (alpha, beta) from the trace identities.

    With J_{ac} J^{bc} = delta_a^b one gets, assuming the defining
    equations hold,

        3 J^{bc} nabla_[a J_bc] = 4(n-1) alpha_a
        2 J^{bc} nabla_(a J_b)c = (2n+1) beta_a

    valid in every dimension 2n >= 4.  (The first constant is rederived
    from the stated conventions and pinned against an independent linear
    solve in the test suite.)  The caller is expected to validate the
    candidates via check_structure.
    """
    chart = j.chart
    n = chart.n
    d = chart.dim
    j_inv = inverse_two_form(j)
    nj = covariant_derivative(conn, j)  # [a, b, c]

    def alpha_comp(idx):
        (a,) = idx
        total = chart.zero_expr()
        for b in range(d):
            for c in range(d):
                if not j_inv[b, c].is_zero:
                    total = total + j_inv[b, c] * (nj[a, b, c] + nj[b, c, a] + nj[c, a, b])
        return total.scale(Fraction(1, 4 * (n - 1)))

    def beta_comp(idx):
        (a,) = idx
        total = chart.zero_expr()
        for b in range(d):
            for c in range(d):
                if not j_inv[b, c].is_zero:
                    total = total + j_inv[b, c] * (nj[a, b, c] + nj[b, a, c])
        return total.scale(Fraction(1, 2 * n + 1))

    alpha = Tensor.build(chart, (DOWN,), alpha_comp)
    beta = Tensor.build(chart, (DOWN,), beta_comp)
    return alpha, beta


def lee_form_linear_solve(j: Tensor, conn: Connection) -> Tensor:
    """Extract alpha by solving nabla_[a J_bc] = 2 alpha_[a J_bc] directly.

    Independent of the trace-formula route; raises if the system is
    inconsistent (the pair is not conformally symplectic) or degenerate.
    """
    chart = j.chart
    d = chart.dim
    nj = covariant_derivative(conn, j)
    lhs = antisymmetrize(nj, (0, 1, 2))
    rows = []
    rhs = []
    third = Fraction(1, 3)
    for a in range(d):
        for b in range(a + 1, d):
            for c in range(b + 1, d):
                # 2 alpha_[a J_bc] = (2/3)(alpha_a J_bc - alpha_b J_ac + alpha_c J_ab)
                row = [chart.zero_expr() for _ in range(d)]
                row[a] = row[a] + j[b, c].scale(2 * third)
                row[b] = row[b] - j[a, c].scale(2 * third)
                row[c] = row[c] + j[a, b].scale(2 * third)
                rows.append(row)
                rhs.append(lhs[a, b, c])
    try:
        sol = solve_unique(rows, rhs)
    except InconsistentSystemError as exc:
        raise StructureError("nabla_[a J_bc] = 2 alpha_[a J_bc]") from exc
    return Tensor(chart, (DOWN,), sol)


def first_equation_residual(j: Tensor, conn: Connection, alpha: Tensor) -> Tensor:
    nj = covariant_derivative(conn, j)
    return antisymmetrize(nj, (0, 1, 2)) - antisymmetrize(tensor_product(alpha, j), (0, 1, 2)).scale(2)


def second_equation_residual(j: Tensor, conn: Connection, beta: Tensor) -> Tensor:
    nj = covariant_derivative(conn, j)
    return symmetrize(nj, (0, 1)) - symmetrize(tensor_product(beta, j), (0, 1))


def closure_residual(conn: Connection, alpha: Tensor) -> Tensor:
    return antisymmetrize(covariant_derivative(conn, alpha), (0, 1))


def master_equation_residual(j: Tensor, conn: Connection, alpha: Tensor) -> Tensor:
    """nabla_a J_bc - (J_ab alpha_c - J_ac alpha_b)."""
    nj = covariant_derivative(conn, j)

    def rhs(idx):
        a, b, c = idx
        return j[a, b] * alpha[c] - j[a, c] * alpha[b]

    return nj - Tensor.build(j.chart, (DOWN, DOWN, DOWN), rhs)


def new_master_equation_residual(s: FedosovStructure) -> Tensor:
    """nabla_a J^{bc} - (alpha^b delta_a^c - alpha^c delta_a^b)."""
    nj_up = covariant_derivative(s.conn, s.j_inv)  # [a, b, c]
    alpha_up = s.alpha_up()

    def rhs(idx):
        a, b, c = idx
        total = s.chart.zero_expr()
        if c == a:
            total = total + alpha_up[b]
        if b == a:
            total = total - alpha_up[c]
        return total

    return nj_up - Tensor.build(s.chart, (DOWN, UP, UP), rhs)


def nabla_j_reconstruction_residual(s: FedosovStructure) -> Tensor:
    """nabla_a J_bc minus its reconstruction from (alpha, beta)."""
    aj = tensor_product(s.alpha, s.j)
    bj = tensor_product(s.beta, s.j)
    term1 = antisymmetrize(aj, (0, 1, 2)).scale(2)
    sym_ab = symmetrize(bj, (0, 1))  # beta_(a J_b)c at slots (a, b, c)
    term2 = sym_ab.scale(Fraction(2, 3))
    term3 = permute(sym_ab, (0, 2, 1)).scale(Fraction(2, 3))  # beta_(a J_c)b
    return s.nabla_j() - (term1 + term2 - term3)


def check_structure(j: Tensor, conn: Connection) -> FedosovStructure:
    """Validate the defining equations exactly and assemble the structure."""
    chart = j.chart
    if j.variance != (DOWN, DOWN):
        raise StructureError("J must be a fully lowered 2-form")
    if not (j + permute(j, (1, 0))).is_zero():
        nz = (j + permute(j, (1, 0))).first_nonzero()
        raise StructureError("J skew-symmetry", nz[0], nz[1], chart.coords)
    j_inv = inverse_two_form(j)
    alpha, beta = lee_and_beta(j, conn)

    res = first_equation_residual(j, conn, alpha)
    if not res.is_zero():
        nz = res.first_nonzero()
        raise StructureError("nabla_[a J_bc] = 2 alpha_[a J_bc]", nz[0], nz[1], chart.coords)
    res = closure_residual(conn, alpha)
    if not res.is_zero():
        nz = res.first_nonzero()
        raise StructureError("nabla_[a alpha_b] = 0", nz[0], nz[1], chart.coords)
    res = second_equation_residual(j, conn, beta)
    if not res.is_zero():
        nz = res.first_nonzero()
        raise StructureError("nabla_(a J_b)c = beta_(a J_b)c", nz[0], nz[1], chart.coords)
    return FedosovStructure(chart, j, j_inv, conn, alpha, beta)


def normalize_to_master(s: FedosovStructure) -> FedosovStructure:
    """Projective shift by nu = (alpha + beta)/3, forcing beta = -alpha."""
    nu = (s.alpha + s.beta).scale(Fraction(1, 3))
    if nu.is_zero():
        return s
    conn = projective_shift(s.conn, nu)
    out = FedosovStructure(s.chart, s.j, s.j_inv, conn, s.alpha, s.alpha.scale(Fraction(-1)))
    res = master_equation_residual(out.j, out.conn, out.alpha)
    if not res.is_zero():
        raise StructureError("master equation after normalization (internal error)")
    res = new_master_equation_residual(out)
    if not res.is_zero():
        raise StructureError("inverse master equation after normalization (internal error)")
    return out


def rescale(s: FedosovStructure, g: GaugeTransform) -> FedosovStructure:
    """Simultaneous replacement J -> Omega^2 J, nabla -> nabla + Upsilon-shift."""
    w = g.omega_squared
    j_hat = s.j.scale(w)
    j_inv_hat = s.j_inv.scale(s.chart.one_expr() / w)
    conn_hat = projective_shift(s.conn, g.upsilon)
    alpha_hat = s.alpha + g.upsilon
    # conformal change contributes +2 Upsilon, the projective shift -3 Upsilon
    beta_hat = s.beta - g.upsilon
    return FedosovStructure(s.chart, j_hat, j_inv_hat, conn_hat, alpha_hat, beta_hat)


def to_fedosov_gauge(s: FedosovStructure, omega_squared: RationalExpr) -> FedosovStructure:
    """Rescale by a user-supplied Omega^2 with dlog(Omega) = -alpha; nabla J = 0 after."""
    g = GaugeTransform.from_omega_squared(s.chart, omega_squared)
    if not (g.upsilon + s.alpha).is_zero():
        raise StructureError("alpha not exact with this potential: (1/2) dW/W != -alpha")
    out = rescale(s, g)
    if not out.nabla_j().is_zero():
        raise StructureError("nabla J = 0 in Fedosov gauge (internal error)")
    return out


def projective_invariance_report(j: Tensor, conn: Connection, nu: Tensor) -> dict[str, bool]:
    """Check Lemma-one style invariance of the beta equation under a shift."""
    chart = j.chart
    _, beta = lee_and_beta(j, conn)
    shifted = projective_shift(conn, nu)
    _, beta_hat = lee_and_beta(j, shifted)
    results = {}
    results["beta_hat = beta - 3 nu"] = (beta_hat - (beta - nu.scale(3))).is_zero()
    results["second equation after shift"] = second_equation_residual(j, shifted, beta_hat).is_zero()
    nj = covariant_derivative(conn, j)
    nj_hat = covariant_derivative(shifted, j)
    lemma = symmetrize(nj_hat, (0, 1)) - (
        symmetrize(nj, (0, 1)) - symmetrize(tensor_product(nu, j), (0, 1)).scale(3)
    )
    results["lemma: sym nabla-hat J = sym nabla J - 3 nu_(a J_b)c"] = lemma.is_zero()
    return results


def conformal_invariance_report(s: FedosovStructure, g: GaugeTransform) -> dict[str, bool]:
    """beta -> beta + 2 Upsilon under a pure conformal change of J."""
    j_hat = s.j.scale(g.omega_squared)
    _, beta_hat = lee_and_beta(j_hat, s.conn)
    results = {}
    results["beta_hat = beta + 2 Upsilon"] = (beta_hat - (s.beta + g.upsilon.scale(2))).is_zero()
    results["second equation after rescale"] = second_equation_residual(j_hat, s.conn, beta_hat).is_zero()
    return results
