"""The tractor bundle of a conformally Fedosov structure.

Sections are weighted triples (sigma, mu_b, rho) of weights (+1, +1, -1),
represented by their component functions in a chosen gauge.  Changing the
gauge applies the splitting change

    sigma -> sigma
    mu_b  -> mu_b + Upsilon_b sigma
    rho   -> rho - Upsilon^b mu_b + Upsilon^b alpha_b sigma

together with the weight factors Omega^w on the component functions; the
two transports are kept separate (`splitting_change` is the pure mix,
`gauge_transport_*` the full function-level map).  Only even powers of
Omega appear in endomorphism transport and in every identity this module
checks; materializing an odd power requires the gauge to carry an exact
square root of Omega^2 and raises otherwise.

The tractor connection, its curvature (computed both by a coupled
commutator and by assembling the displayed V/Y/Phi/S blocks), the
invariant pairing, and the parallel endomorphism Theta arising when the
trace-free curvature part vanishes all live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .connection import covariant_derivative
from .curvature import CurvatureDecomposition, DecompositionError
from .expr import RationalExpr
from .structure import FedosovStructure, GaugeTransform
from .tensor import DOWN, UP, Tensor, permute, raise_index, lower_index


class TractorError(Exception):
    pass


class OddWeightError(TractorError):
    """Materializing an odd power of Omega was requested without an exact root."""


@dataclass(frozen=True)
class TractorSection:
    """Weighted triple; mu is a 1-form tensor."""

    sigma: RationalExpr
    mu: Tensor
    rho: RationalExpr

    def __post_init__(self):
        if self.mu.variance != (DOWN,):
            raise TractorError("mu slot must be a 1-form")

    @property
    def chart(self):
        return self.mu.chart

    def __add__(self, other: TractorSection) -> TractorSection:
        return TractorSection(self.sigma + other.sigma, self.mu + other.mu, self.rho + other.rho)

    def __sub__(self, other: TractorSection) -> TractorSection:
        return TractorSection(self.sigma - other.sigma, self.mu - other.mu, self.rho - other.rho)

    def scale(self, c) -> TractorSection:
        if isinstance(c, RationalExpr):
            return TractorSection(self.sigma * c, self.mu.scale(c), self.rho * c)
        return TractorSection(self.sigma.scale(c), self.mu.scale(c), self.rho.scale(c))

    def is_zero(self) -> bool:
        return self.sigma.is_zero and self.mu.is_zero() and self.rho.is_zero


@dataclass(frozen=True)
class TractorOneForm:
    """Lambda^1-valued triple: sigma[a], mu[a, b] (b = tractor slot), rho[a]."""

    sigma: Tensor
    mu: Tensor
    rho: Tensor

    def __sub__(self, other: TractorOneForm) -> TractorOneForm:
        return TractorOneForm(self.sigma - other.sigma, self.mu - other.mu, self.rho - other.rho)

    def __add__(self, other: TractorOneForm) -> TractorOneForm:
        return TractorOneForm(self.sigma + other.sigma, self.mu + other.mu, self.rho + other.rho)

    def scale(self, c) -> TractorOneForm:
        return TractorOneForm(self.sigma.scale(c), self.mu.scale(c), self.rho.scale(c))

    def is_zero(self) -> bool:
        return self.sigma.is_zero() and self.mu.is_zero() and self.rho.is_zero()


@dataclass(frozen=True)
class TractorTwoForm:
    """Second-derivative container: sigma[a,b], mu[a,b,c], rho[a,b]."""

    sigma: Tensor
    mu: Tensor
    rho: Tensor

    def __sub__(self, other: TractorTwoForm) -> TractorTwoForm:
        return TractorTwoForm(self.sigma - other.sigma, self.mu - other.mu, self.rho - other.rho)

    def is_zero(self) -> bool:
        return self.sigma.is_zero() and self.mu.is_zero() and self.rho.is_zero()


def basis_sections(chart) -> list[TractorSection]:
    """The 2n+2 constant sections spanning the tractor bundle fiberwise."""
    zero1 = Tensor.zeros(chart, (DOWN,))
    one, zero = chart.one_expr(), chart.zero_expr()
    out = [TractorSection(one, zero1, zero)]
    for b in range(chart.dim):
        mu = Tensor.build(chart, (DOWN,), lambda i, b=b: one if i[0] == b else zero)
        out.append(TractorSection(zero, mu, zero))
    out.append(TractorSection(zero, zero1, one))
    return out


# ---------------------------------------------------------------------------
# Pairing and splitting change
# ---------------------------------------------------------------------------


def pairing(t1: TractorSection, t2: TractorSection, s: FedosovStructure) -> RationalExpr:
    """<t, t~> = sigma rho~ - J^{bc} mu_b mu~_c - rho sigma~ (weight 0)."""
    total = t1.sigma * t2.rho - t1.rho * t2.sigma
    d = s.chart.dim
    for b in range(d):
        for c in range(d):
            coeff = s.j_inv[b, c]
            if not coeff.is_zero:
                total = total - coeff * t1.mu[b] * t2.mu[c]
    return total


def pairing_oneform_left(f: TractorOneForm, t: TractorSection, s: FedosovStructure) -> Tensor:
    d = s.chart.dim

    def comp(idx):
        (a,) = idx
        total = f.sigma[a] * t.rho - f.rho[a] * t.sigma
        for b in range(d):
            for c in range(d):
                coeff = s.j_inv[b, c]
                if not coeff.is_zero:
                    total = total - coeff * f.mu[a, b] * t.mu[c]
        return total

    return Tensor.build(s.chart, (DOWN,), comp)


def pairing_oneform_right(t: TractorSection, f: TractorOneForm, s: FedosovStructure) -> Tensor:
    d = s.chart.dim

    def comp(idx):
        (a,) = idx
        total = t.sigma * f.rho[a] - t.rho * f.sigma[a]
        for b in range(d):
            for c in range(d):
                coeff = s.j_inv[b, c]
                if not coeff.is_zero:
                    total = total - coeff * t.mu[b] * f.mu[a, c]
        return total

    return Tensor.build(s.chart, (DOWN,), comp)


def _upsilon_up(s: FedosovStructure, g: GaugeTransform) -> Tensor:
    return raise_index(g.upsilon, 0, s.j_inv)


def splitting_change(t: TractorSection, g: GaugeTransform, s: FedosovStructure) -> TractorSection:
    """Pure splitting mix (no weight factors); s is the source-gauge structure."""
    ups = g.upsilon
    ups_up = _upsilon_up(s, g)
    sigma = t.sigma
    mu = Tensor.build(s.chart, (DOWN,), lambda i: t.mu[i] + ups[i] * sigma)
    rho = t.rho
    for b in range(s.chart.dim):
        rho = rho - ups_up[b] * t.mu[b] + ups_up[b] * s.alpha[b] * sigma
    return TractorSection(sigma, mu, rho)


def density_rescale(value, weight: int, g: GaugeTransform):
    """Multiply a scalar or tensor by Omega^weight, exactly.

    Even weights use the stored Omega^2; odd weights require the gauge to
    carry an exact rational Omega and raise OddWeightError otherwise.
    """
    if weight == 0:
        return value
    if weight % 2 == 0:
        factor = _power(g.omega_squared, weight // 2)
    else:
        if g.omega is None:
            raise OddWeightError(
                "odd density weight requires an exact square root of Omega^2"
            )
        factor = _power(g.omega, weight)
    if isinstance(value, Tensor):
        return value.scale(factor)
    return value * factor


def _power(e: RationalExpr, k: int) -> RationalExpr:
    if k >= 0:
        return RationalExpr(e.num**k, e.den**k)
    return RationalExpr(e.den ** (-k), e.num ** (-k))


def gauge_transport_section(t: TractorSection, g: GaugeTransform, s: FedosovStructure) -> TractorSection:
    """Full function-level transport: splitting mix plus Omega^w factors."""
    mixed = splitting_change(t, g, s)
    return TractorSection(
        density_rescale(mixed.sigma, 1, g),
        density_rescale(mixed.mu, 1, g),
        density_rescale(mixed.rho, -1, g),
    )


def gauge_transport_oneform(f: TractorOneForm, g: GaugeTransform, s: FedosovStructure) -> TractorOneForm:
    """Transport of a Lambda^1-valued section (the form index has weight 0)."""
    ups = g.upsilon
    ups_up = _upsilon_up(s, g)
    d = s.chart.dim
    sigma = f.sigma
    mu = Tensor.build(s.chart, (DOWN, DOWN), lambda i: f.mu[i] + ups[i[1]] * f.sigma[i[0]])

    def rho_comp(idx):
        (a,) = idx
        total = f.rho[a]
        for b in range(d):
            total = total - ups_up[b] * f.mu[a, b] + ups_up[b] * s.alpha[b] * f.sigma[a]
        return total

    rho = Tensor.build(s.chart, (DOWN,), rho_comp)
    return TractorOneForm(
        density_rescale(sigma, 1, g),
        density_rescale(mu, 1, g),
        density_rescale(rho, -1, g),
    )


# ---------------------------------------------------------------------------
# The proto and tractor connections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ConnectionCoefficients:
    """Shared shape of the proto and full tractor connections.

    row2: nabla_a mu_b - J_ab rho + (mu_coeff)_ab sigma - J_ab alpha^c mu_c
    row3: nabla_a rho + (mu_coeff)_ab mu^b + (sigma_coeff)_a sigma
    """

    s: FedosovStructure
    mu_coeff: Tensor      # [a, b]
    sigma_coeff: Tensor   # [a]

    def alpha_up(self) -> Tensor:
        return self.s.alpha_up()


def _proto_coefficients(s: FedosovStructure, p: Tensor) -> _ConnectionCoefficients:
    t = _t_form(s, p)
    return _ConnectionCoefficients(s, p, t.scale(Fraction(-1)))


def _t_form(s: FedosovStructure, p: Tensor) -> Tensor:
    alpha_up = s.alpha_up()
    nalpha = covariant_derivative(s.conn, s.alpha)
    d = s.chart.dim

    def comp(idx):
        (a,) = idx
        total = s.chart.zero_expr()
        for b in range(d):
            total = total + alpha_up[b] * (p[a, b].scale(2) + nalpha[a, b])
        return total

    return Tensor.build(s.chart, (DOWN,), comp)


def _div_phi(s: FedosovStructure, phi: Tensor) -> Tensor:
    """nabla^b Phi_ab = J^{bc} nabla_c Phi_ab."""
    nphi = covariant_derivative(s.conn, phi)
    d = s.chart.dim

    def comp(idx):
        (a,) = idx
        total = s.chart.zero_expr()
        for b in range(d):
            for c in range(d):
                coeff = s.j_inv[b, c]
                if not coeff.is_zero:
                    total = total + coeff * nphi[c, a, b]
        return total

    return Tensor.build(s.chart, (DOWN,), comp)


def _tractor_coefficients(s: FedosovStructure, decomp: CurvatureDecomposition) -> _ConnectionCoefficients:
    n = s.n
    p_eff = decomp.p - decomp.phi.scale(Fraction(3, 2 * n - 1))
    div_phi = _div_phi(s, decomp.phi)
    t = _t_form(s, decomp.p)
    alpha_up = s.alpha_up()
    d = s.chart.dim
    k = Fraction(10 * n + 7, (2 * n + 1) * (2 * n - 1))

    def sigma_comp(idx):
        (a,) = idx
        total = div_phi[a].scale(Fraction(-1, 2 * n + 1)) - t[a]
        for b in range(d):
            total = total + (alpha_up[b] * decomp.phi[a, b]).scale(k)
        return total

    return _ConnectionCoefficients(s, p_eff, Tensor.build(s.chart, (DOWN,), sigma_comp))


def _apply_coefficients(co: _ConnectionCoefficients, t: TractorSection) -> TractorOneForm:
    s = co.s
    d = s.chart.dim
    alpha_up = co.alpha_up()
    dsigma = Tensor.build(s.chart, (DOWN,), lambda i: t.sigma.derivative(i[0]))
    nmu = covariant_derivative(s.conn, t.mu)
    drho = Tensor.build(s.chart, (DOWN,), lambda i: t.rho.derivative(i[0]))

    alpha_mu = s.chart.zero_expr()
    for c in range(d):
        alpha_mu = alpha_mu + alpha_up[c] * t.mu[c]

    mu_up = raise_index(t.mu, 0, s.j_inv)

    row1 = Tensor.build(s.chart, (DOWN,), lambda i: dsigma[i] - t.mu[i[0]])

    def row2(idx):
        a, b = idx
        return nmu[a, b] - s.j[a, b] * t.rho + co.mu_coeff[a, b] * t.sigma - s.j[a, b] * alpha_mu

    def row3(idx):
        (a,) = idx
        total = drho[a] + co.sigma_coeff[a] * t.sigma
        for b in range(d):
            total = total + co.mu_coeff[a, b] * mu_up[b]
        return total

    return TractorOneForm(
        row1,
        Tensor.build(s.chart, (DOWN, DOWN), row2),
        Tensor.build(s.chart, (DOWN,), row3),
    )


def _apply_coefficients_oneform(co: _ConnectionCoefficients, f: TractorOneForm) -> TractorTwoForm:
    """Second derivative: couple the affine connection to the form slot."""
    s = co.s
    d = s.chart.dim
    alpha_up = co.alpha_up()
    nsigma = covariant_derivative(s.conn, f.sigma)   # [a, b]
    nmu = covariant_derivative(s.conn, f.mu)         # [a, b, c]
    nrho = covariant_derivative(s.conn, f.rho)       # [a, b]
    mu_up = raise_index(f.mu, 1, s.j_inv)            # [b, ^e]

    def row1(idx):
        a, b = idx
        return nsigma[a, b] - f.mu[b, a]

    def row2(idx):
        a, b, c = idx
        total = nmu[a, b, c] - s.j[a, c] * f.rho[b] + co.mu_coeff[a, c] * f.sigma[b]
        am = s.chart.zero_expr()
        for e in range(d):
            am = am + alpha_up[e] * f.mu[b, e]
        return total - s.j[a, c] * am

    def row3(idx):
        a, b = idx
        total = nrho[a, b] + co.sigma_coeff[a] * f.sigma[b]
        for e in range(d):
            total = total + co.mu_coeff[a, e] * mu_up[b, e]
        return total

    return TractorTwoForm(
        Tensor.build(s.chart, (DOWN, DOWN), row1),
        Tensor.build(s.chart, (DOWN, DOWN, DOWN), row2),
        Tensor.build(s.chart, (DOWN, DOWN), row3),
    )


def proto_connection(s: FedosovStructure, p: Tensor, t: TractorSection) -> TractorOneForm:
    """The preliminary connection D_a built from P alone."""
    return _apply_coefficients(_proto_coefficients(s, p), t)


def tractor_connection(s: FedosovStructure, decomp: CurvatureDecomposition, t: TractorSection) -> TractorOneForm:
    """The canonical tractor connection (proto plus invariant Phi terms)."""
    return _apply_coefficients(_tractor_coefficients(s, decomp), t)


def invariant_hom_first(s: FedosovStructure, decomp: CurvatureDecomposition, t: TractorSection) -> TractorOneForm:
    """(0; Phi_ab sigma; Phi_ab mu^b + 2 (nabla^b Phi_ab) sigma)."""
    d = s.chart.dim
    mu_up = raise_index(t.mu, 0, s.j_inv)
    div_phi = _div_phi(s, decomp.phi)
    mu = Tensor.build(s.chart, (DOWN, DOWN), lambda i: decomp.phi[i] * t.sigma)

    def rho_comp(idx):
        (a,) = idx
        total = (div_phi[a] * t.sigma).scale(2)
        for b in range(d):
            total = total + decomp.phi[a, b] * mu_up[b]
        return total

    return TractorOneForm(
        Tensor.zeros(s.chart, (DOWN,)), mu, Tensor.build(s.chart, (DOWN,), rho_comp)
    )


def invariant_hom_second(s: FedosovStructure, decomp: CurvatureDecomposition, t: TractorSection) -> TractorOneForm:
    """(0; 0; (nabla^b Phi_ab + alpha^b Phi_ab) sigma)."""
    d = s.chart.dim
    div_phi = _div_phi(s, decomp.phi)
    alpha_up = s.alpha_up()

    def rho_comp(idx):
        (a,) = idx
        total = div_phi[a]
        for b in range(d):
            total = total + alpha_up[b] * decomp.phi[a, b]
        return total * t.sigma

    return TractorOneForm(
        Tensor.zeros(s.chart, (DOWN,)),
        Tensor.zeros(s.chart, (DOWN, DOWN)),
        Tensor.build(s.chart, (DOWN,), rho_comp),
    )


# ---------------------------------------------------------------------------
# Tractor curvature, two routes
# ---------------------------------------------------------------------------


def tractor_curvature_commutator(
    s: FedosovStructure, decomp: CurvatureDecomposition, t: TractorSection
) -> TractorTwoForm:
    """(nabla_a nabla_b - nabla_b nabla_a) t with the coupled connection."""
    co = _tractor_coefficients(s, decomp)
    first = _apply_coefficients(co, t)
    second = _apply_coefficients_oneform(co, first)
    return TractorTwoForm(
        second.sigma - permute(second.sigma, (1, 0)),
        second.mu - permute(second.mu, (1, 0, 2)),
        second.rho - permute(second.rho, (1, 0)),
    )


def x_scalar(s: FedosovStructure, decomp: CurvatureDecomposition) -> RationalExpr:
    """X = (1/2n) (Phi_de Phi^{de} + nabla^c S_c) in Fedosov gauge."""
    if decomp.s is None:
        raise DecompositionError("X needs a Fedosov-gauge decomposition")
    d = s.chart.dim
    phi_up = raise_index(raise_index(decomp.phi, 0, s.j_inv), 1, s.j_inv)
    total = s.chart.zero_expr()
    for i in range(d):
        for j in range(d):
            total = total + decomp.phi[i, j] * phi_up[i, j]
    ns = covariant_derivative(s.conn, decomp.s)
    for c in range(d):
        for e in range(d):
            coeff = s.j_inv[c, e]
            if not coeff.is_zero:
                total = total + coeff * ns[e, c]
    return total.scale(Fraction(1, 2 * s.n))


def _div_y(s: FedosovStructure, y: Tensor) -> Tensor:
    """nabla^c Y_abc = J^{cd} nabla_d Y_abc."""
    ny = covariant_derivative(s.conn, y)  # [d, a, b, c]
    dd = s.chart.dim

    def comp(idx):
        a, b = idx
        total = s.chart.zero_expr()
        for c in range(dd):
            for d_ in range(dd):
                coeff = s.j_inv[c, d_]
                if not coeff.is_zero:
                    total = total + coeff * ny[d_, a, b, c]
        return total

    return Tensor.build(s.chart, (DOWN, DOWN), comp)


def vy_curvature_block(
    s: FedosovStructure, decomp: CurvatureDecomposition, t: TractorSection
) -> TractorTwoForm:
    """The trace-free part of the tractor curvature: the V/Y bracket alone."""
    if decomp.y is None or decomp.s is None:
        raise DecompositionError("V/Y block requires Fedosov gauge")
    d = s.chart.dim
    mu_up = raise_index(t.mu, 0, s.j_inv)
    phi_up = raise_index(raise_index(decomp.phi, 0, s.j_inv), 1, s.j_inv)
    div_y = _div_y(s, decomp.y)

    def mu_comp(idx):
        a, b, c = idx
        total = decomp.y[a, b, c] * t.sigma
        for e in range(d):
            total = total + decomp.v[a, b, c, e] * mu_up[e]
        return total

    def rho_comp(idx):
        a, b = idx
        total = s.chart.zero_expr()
        for c in range(d):
            total = total + decomp.y[a, b, c] * mu_up[c]
        v_phi = s.chart.zero_expr()
        for c in range(d):
            for e in range(d):
                v_phi = v_phi + decomp.v[a, b, c, e] * phi_up[c, e]
        return total - (div_y[a, b] - v_phi).scale(Fraction(1, 2 * s.n)) * t.sigma

    return TractorTwoForm(
        Tensor.zeros(s.chart, (DOWN, DOWN)),
        Tensor.build(s.chart, (DOWN, DOWN, DOWN), mu_comp),
        Tensor.build(s.chart, (DOWN, DOWN), rho_comp),
    )


def tractor_curvature_assembled(
    s: FedosovStructure, decomp: CurvatureDecomposition, t: TractorSection
) -> TractorTwoForm:
    """Curvature from the displayed V/Y block minus 2 J_ab (rho; ...; ...)."""
    if decomp.y is None or decomp.s is None:
        raise DecompositionError("assembled tractor curvature requires Fedosov gauge")
    d = s.chart.dim
    mu_up = raise_index(t.mu, 0, s.j_inv)
    phi_up = raise_index(raise_index(decomp.phi, 0, s.j_inv), 1, s.j_inv)
    x = x_scalar(s, decomp)
    div_y = _div_y(s, decomp.y)

    sigma = Tensor.build(s.chart, (DOWN, DOWN), lambda i: (s.j[i] * t.rho).scale(-2))

    def mu_comp(idx):
        a, b, c = idx
        total = decomp.y[a, b, c] * t.sigma
        for e in range(d):
            total = total + decomp.v[a, b, c, e] * mu_up[e]
        bracket = decomp.s[c] * t.sigma
        for e in range(d):
            bracket = bracket - decomp.phi[c, e] * mu_up[e]
        return total - (s.j[a, b] * bracket).scale(2)

    def rho_comp(idx):
        a, b = idx
        total = s.chart.zero_expr()
        for c in range(d):
            total = total + decomp.y[a, b, c] * mu_up[c]
        v_phi = s.chart.zero_expr()
        for c in range(d):
            for e in range(d):
                v_phi = v_phi + decomp.v[a, b, c, e] * phi_up[c, e]
        total = total - (div_y[a, b] - v_phi).scale(Fraction(1, 2 * s.n)) * t.sigma
        bracket = -x * t.sigma
        for c in range(d):
            bracket = bracket + decomp.s[c] * mu_up[c]
        return total - (s.j[a, b] * bracket).scale(2)

    return TractorTwoForm(
        sigma,
        Tensor.build(s.chart, (DOWN, DOWN, DOWN), mu_comp),
        Tensor.build(s.chart, (DOWN, DOWN), rho_comp),
    )


# ---------------------------------------------------------------------------
# Theta: endomorphism and bilinear form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TractorEndo:
    """Block endomorphism of the tractor bundle in a fixed gauge."""

    chart: object
    e11: RationalExpr
    e12: Tensor  # (u,)
    e13: RationalExpr
    e21: Tensor  # (d,)
    e22: Tensor  # (d, u)
    e23: Tensor  # (d,)
    e31: RationalExpr
    e32: Tensor  # (u,)
    e33: RationalExpr

    def apply(self, t: TractorSection) -> TractorSection:
        d = self.chart.dim
        sig = self.e11 * t.sigma + self.e13 * t.rho
        rho = self.e31 * t.sigma + self.e33 * t.rho
        for c in range(d):
            sig = sig + self.e12[c] * t.mu[c]
            rho = rho + self.e32[c] * t.mu[c]

        def mu_comp(idx):
            (b,) = idx
            total = self.e21[b] * t.sigma + self.e23[b] * t.rho
            for c in range(d):
                total = total + self.e22[b, c] * t.mu[c]
            return total

        return TractorSection(sig, Tensor.build(self.chart, (DOWN,), mu_comp), rho)

    def compose(self, other: TractorEndo) -> TractorEndo:
        a, b = self, other
        ch = self.chart
        d = ch.dim

        def dot_ur(x_up: Tensor, y_dn: Tensor) -> RationalExpr:
            total = ch.zero_expr()
            for c in range(d):
                total = total + x_up[c] * y_dn[c]
            return total

        e11 = a.e11 * b.e11 + dot_ur(a.e12, b.e21) + a.e13 * b.e31
        e13 = a.e11 * b.e13 + dot_ur(a.e12, b.e23) + a.e13 * b.e33
        e31 = a.e31 * b.e11 + dot_ur(a.e32, b.e21) + a.e33 * b.e31
        e33 = a.e31 * b.e13 + dot_ur(a.e32, b.e23) + a.e33 * b.e33

        def row_up(scalar_l, vec_l_up, scalar_r):
            # scalar_l * b.e12 + vec_l_up . b.e22 + scalar_r * b.e32
            def comp(idx):
                (c,) = idx
                total = scalar_l * b.e12[c] + scalar_r * b.e32[c]
                for e in range(d):
                    total = total + vec_l_up[e] * b.e22[e, c]
                return total

            return Tensor.build(ch, (UP,), comp)

        e12 = row_up(a.e11, a.e12, a.e13)
        e32 = row_up(a.e31, a.e32, a.e33)

        def e21_comp(idx):
            (r,) = idx
            total = a.e21[r] * b.e11 + a.e23[r] * b.e31
            for e in range(d):
                total = total + a.e22[r, e] * b.e21[e]
            return total

        def e23_comp(idx):
            (r,) = idx
            total = a.e21[r] * b.e13 + a.e23[r] * b.e33
            for e in range(d):
                total = total + a.e22[r, e] * b.e23[e]
            return total

        def e22_comp(idx):
            r, c = idx
            total = a.e21[r] * b.e12[c] + a.e23[r] * b.e32[c]
            for e in range(d):
                total = total + a.e22[r, e] * b.e22[e, c]
            return total

        return TractorEndo(
            ch,
            e11,
            e12,
            e13,
            Tensor.build(ch, (DOWN,), e21_comp),
            Tensor.build(ch, (DOWN, UP), e22_comp),
            Tensor.build(ch, (DOWN,), e23_comp),
            e31,
            e32,
            e33,
        )

    def __sub__(self, other: TractorEndo) -> TractorEndo:
        return TractorEndo(
            self.chart,
            self.e11 - other.e11,
            self.e12 - other.e12,
            self.e13 - other.e13,
            self.e21 - other.e21,
            self.e22 - other.e22,
            self.e23 - other.e23,
            self.e31 - other.e31,
            self.e32 - other.e32,
            self.e33 - other.e33,
        )

    def scale(self, c) -> TractorEndo:
        if not isinstance(c, RationalExpr):
            c = self.chart.const(c)
        return TractorEndo(
            self.chart,
            self.e11 * c,
            self.e12.scale(c),
            self.e13 * c,
            self.e21.scale(c),
            self.e22.scale(c),
            self.e23.scale(c),
            self.e31 * c,
            self.e32.scale(c),
            self.e33 * c,
        )

    def is_zero(self) -> bool:
        return (
            self.e11.is_zero and self.e12.is_zero() and self.e13.is_zero
            and self.e21.is_zero() and self.e22.is_zero() and self.e23.is_zero()
            and self.e31.is_zero and self.e32.is_zero() and self.e33.is_zero
        )


def endo_identity(chart) -> TractorEndo:
    one, zero = chart.one_expr(), chart.zero_expr()
    return TractorEndo(
        chart,
        one,
        Tensor.zeros(chart, (UP,)),
        zero,
        Tensor.zeros(chart, (DOWN,)),
        Tensor.delta(chart),
        Tensor.zeros(chart, (DOWN,)),
        zero,
        Tensor.zeros(chart, (UP,)),
        one,
    )


def _mix_endo(s: FedosovStructure, g: GaugeTransform, invert: bool) -> TractorEndo:
    """The splitting change (or its inverse) as a block map in the source gauge."""
    ch = s.chart
    one, zero = ch.one_expr(), ch.zero_expr()
    ups = g.upsilon
    ups_up = _upsilon_up(s, g)
    u0 = zero
    for b in range(ch.dim):
        u0 = u0 + ups_up[b] * s.alpha[b]
    sgn = Fraction(-1) if invert else Fraction(1)
    return TractorEndo(
        ch,
        one,
        Tensor.zeros(ch, (UP,)),
        zero,
        ups.scale(sgn),
        Tensor.delta(ch),
        Tensor.zeros(ch, (DOWN,)),
        u0.scale(sgn),
        ups_up.scale(-sgn),
        one,
    )


_WEIGHTS = (1, 1, -1)


def endo_gauge_transport(endo: TractorEndo, s: FedosovStructure, g: GaugeTransform) -> TractorEndo:
    """Conjugate an endomorphism into the rescaled gauge (even weights only).

    Block (I, J) picks up Omega^{w_I - w_J}; every difference of tractor
    weights is even, so the result is rational in Omega^2.
    """
    mix = _mix_endo(s, g, invert=False)
    mix_inv = _mix_endo(s, g, invert=True)
    m = mix.compose(endo).compose(mix_inv)
    w = g.omega_squared
    one = s.chart.one_expr()

    def factor(wi, wj):
        k = (wi - wj) // 2
        if k == 0:
            return one
        return _power(w, k)

    return TractorEndo(
        s.chart,
        m.e11 * factor(1, 1),
        m.e12.scale(factor(1, 1)),
        m.e13 * factor(1, -1),
        m.e21.scale(factor(1, 1)),
        m.e22.scale(factor(1, 1)),
        m.e23.scale(factor(1, -1)),
        m.e31 * factor(-1, 1),
        m.e32.scale(factor(-1, 1)),
        m.e33 * factor(-1, -1),
    )


@dataclass(frozen=True)
class Theta:
    """Fedosov-gauge data (Phi, S, X) of the parallel endomorphism."""

    phi: Tensor
    s_form: Tensor
    x: RationalExpr

    def endo(self, s: FedosovStructure) -> TractorEndo:
        """Theta(sigma, mu, rho) = (-rho; Phi_bc mu^c - S_b sigma; X sigma - S_c mu^c).

        As a block acting on mu_e the middle entry is Phi_bc J^{ce}, which is
        minus the raised Phi_b{}^e (skew raising does not commute with
        contraction order).
        """
        ch = s.chart
        one = ch.one_expr()
        phi_block = raise_index(self.phi, 1, s.j_inv).scale(Fraction(-1))
        s_up = raise_index(self.s_form, 0, s.j_inv)
        return TractorEndo(
            ch,
            ch.zero_expr(),
            Tensor.zeros(ch, (UP,)),
            -one,
            self.s_form.scale(Fraction(-1)),
            phi_block,
            Tensor.zeros(ch, (DOWN,)),
            self.x,
            s_up,
            ch.zero_expr(),
        )


@dataclass(frozen=True)
class ThetaMatrix:
    """Theta as a symmetric 3x3 block array of a section of (x)^2 T."""

    q11: RationalExpr
    q12: Tensor  # (d,)
    q13: RationalExpr
    q21: Tensor  # (d,)
    q22: Tensor  # (d, d)
    q23: Tensor  # (d,)
    q31: RationalExpr
    q32: Tensor  # (d,)
    q33: RationalExpr

    def is_symmetric(self) -> bool:
        return (
            (self.q12 - self.q21).is_zero()
            and (self.q13 - self.q31).is_zero
            and (self.q22 - permute(self.q22, (1, 0))).is_zero()
            and (self.q23 - self.q32).is_zero()
        )

    def sample_matrix(self, point) -> list[list[Fraction]]:
        d = self.q12.chart.dim
        size = d + 2
        rows = [[Fraction(0)] * size for _ in range(size)]
        rows[0][0] = self.q11.eval(point)
        rows[0][size - 1] = self.q13.eval(point)
        rows[size - 1][0] = self.q31.eval(point)
        rows[size - 1][size - 1] = self.q33.eval(point)
        for b in range(d):
            rows[0][1 + b] = self.q12[b].eval(point)
            rows[1 + b][0] = self.q21[b].eval(point)
            rows[size - 1][1 + b] = self.q32[b].eval(point)
            rows[1 + b][size - 1] = self.q23[b].eval(point)
            for c in range(d):
                rows[1 + b][1 + c] = self.q22[b, c].eval(point)
        return rows

    def rank_at_generic_point(self) -> int:
        from .linalg import rank_fraction_matrix
        from .expr import PoleError

        for pt in _generic_points(self.q12.chart.dim):
            try:
                return rank_fraction_matrix(self.sample_matrix(pt))
            except PoleError:
                continue
        raise TractorError("no pole-free sample point found")


def _generic_points(dim: int):
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    for shift in range(6):
        yield tuple(Fraction(1, primes[(i + shift) % len(primes)]) for i in range(dim))
        yield tuple(Fraction(primes[(i + shift + 1) % len(primes)], primes[(i + shift) % len(primes)] + 1) for i in range(dim))


def theta_matrix_from_endo(endo: TractorEndo, s: FedosovStructure) -> ThetaMatrix:
    """Identify an endomorphism with a section of (x)^2 T via the pairing.

    The convention is fixed by requiring the Fedosov-gauge template
    [[-1, 0, 0], [0, -Phi_bc, S_b], [0, S_c, -X]].
    """
    low12 = lower_index(endo.e12, 0, s.j)
    low32 = lower_index(endo.e32, 0, s.j)
    low22 = lower_index(endo.e22, 1, s.j)
    return ThetaMatrix(
        q11=endo.e13,
        q12=low12,
        q13=-endo.e11,
        q21=endo.e23,
        q22=low22,
        q23=endo.e21.scale(Fraction(-1)),
        q31=endo.e33,
        q32=low32,
        q33=-endo.e31,
    )


# ---------------------------------------------------------------------------
# Einstein condition, parallel Theta, mobility system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EinsteinResult:
    is_einstein: bool
    theta: Theta | None


def einstein_check(s: FedosovStructure, decomp: CurvatureDecomposition) -> EinsteinResult:
    """Curvature collapses to 2 J_ab Theta iff the V part vanishes."""
    if decomp.y is None or decomp.s is None:
        raise DecompositionError("einstein check requires a Fedosov-gauge decomposition")
    if not decomp.v.is_zero():
        return EinsteinResult(False, None)
    if not decomp.y.is_zero():
        raise DecompositionError("V = 0 but Y != 0 violates the contracted Bianchi identity")
    theta = Theta(decomp.phi, decomp.s, x_scalar(s, decomp))
    return EinsteinResult(True, theta)


def grad_theta_report(s: FedosovStructure, decomp: CurvatureDecomposition) -> dict[str, bool]:
    """Blockwise nabla Theta = 0 plus the mobility/prolongation equations."""
    res = einstein_check(s, decomp)
    if not res.is_einstein:
        raise DecompositionError("grad-Theta suite requires V = 0")
    theta = res.theta
    d = s.chart.dim
    nphi = covariant_derivative(s.conn, theta.phi)

    def grad_phi(idx):
        a, b, c = idx
        return nphi[a, b, c] + s.j[a, b] * theta.s_form[c] + s.j[a, c] * theta.s_form[b]

    grad_phi_res = Tensor.build(s.chart, (DOWN,) * 3, grad_phi)

    phi_up = raise_index(raise_index(theta.phi, 0, s.j_inv), 1, s.j_inv)
    s_up = raise_index(theta.s_form, 0, s.j_inv)
    nphi_up = covariant_derivative(s.conn, phi_up)

    def mobility(idx):
        a, b, c = idx
        total = nphi_up[a, b, c]
        if a == b:
            total = total + s_up[c]
        if a == c:
            total = total + s_up[b]
        return total

    mobility_res = Tensor.build(s.chart, (DOWN, UP, UP), mobility)

    ns_up = covariant_derivative(s.conn, s_up)

    def prolong2(idx):
        a, b = idx
        total = ns_up[a, b]
        if a == b:
            total = total + theta.x
        for c in range(d):
            total = total - theta.phi[a, c] * phi_up[b, c]
        return total

    prolong2_res = Tensor.build(s.chart, (DOWN, UP), prolong2)

    def prolong3(idx):
        (a,) = idx
        total = theta.x.derivative(a)
        for b in range(d):
            total = total - (theta.phi[a, b] * s_up[b]).scale(2)
        return total

    prolong3_res = Tensor.build(s.chart, (DOWN,), prolong3)

    endo = theta.endo(s)
    co = _tractor_coefficients(s, decomp)
    parallel = True
    for t in basis_sections(s.chart):
        lhs = _apply_coefficients(co, endo.apply(t))
        rhs_first = _apply_coefficients(co, t)
        rhs = TractorOneForm(
            Tensor.build(s.chart, (DOWN,), lambda i: _endo_row1(endo, rhs_first, i[0])),
            Tensor.build(s.chart, (DOWN, DOWN), lambda i: _endo_row2(endo, rhs_first, i)),
            Tensor.build(s.chart, (DOWN,), lambda i: _endo_row3(endo, rhs_first, i[0])),
        )
        if not (lhs - rhs).is_zero():
            parallel = False
            break

    return {
        "nabla_a Phi_bc + J_ab S_c + J_ac S_b = 0": grad_phi_res.is_zero(),
        "mobility (nabla_a Phi^bc)_o = 0": mobility_res.is_zero(),
        "nabla_a S^b + delta_a^b X - Phi_ac Phi^bc = 0": prolong2_res.is_zero(),
        "nabla_a X - 2 Phi_ab S^b = 0": prolong3_res.is_zero(),
        "nabla Theta = 0 (operator, basis sections)": parallel,
    }


def _endo_row1(endo: TractorEndo, f: TractorOneForm, a: int) -> RationalExpr:
    d = endo.chart.dim
    total = endo.e11 * f.sigma[a] + endo.e13 * f.rho[a]
    for c in range(d):
        total = total + endo.e12[c] * f.mu[a, c]
    return total


def _endo_row2(endo: TractorEndo, f: TractorOneForm, idx) -> RationalExpr:
    a, b = idx
    d = endo.chart.dim
    total = endo.e21[b] * f.sigma[a] + endo.e23[b] * f.rho[a]
    for c in range(d):
        total = total + endo.e22[b, c] * f.mu[a, c]
    return total


def _endo_row3(endo: TractorEndo, f: TractorOneForm, a: int) -> RationalExpr:
    d = endo.chart.dim
    total = endo.e31 * f.sigma[a] + endo.e33 * f.rho[a]
    for c in range(d):
        total = total + endo.e32[c] * f.mu[a, c]
    return total


def fabulous_identity_residual(s: FedosovStructure, decomp: CurvatureDecomposition) -> Tensor:
    """div Y minus (V.Phi + 2J(Phi.Phi + div S) + 2n(dS + 2 Phi Phi)) in Fedosov gauge."""
    if decomp.y is None or decomp.s is None:
        raise DecompositionError("identity requires a Fedosov-gauge decomposition")
    d = s.chart.dim
    div_y = _div_y(s, decomp.y)
    phi_up = raise_index(raise_index(decomp.phi, 0, s.j_inv), 1, s.j_inv)
    phi_mixed = raise_index(decomp.phi, 1, s.j_inv)  # Phi_a{}^c
    ns = covariant_derivative(s.conn, decomp.s)

    phi_sq = s.chart.zero_expr()
    for i in range(d):
        for j in range(d):
            phi_sq = phi_sq + decomp.phi[i, j] * phi_up[i, j]
    div_s = s.chart.zero_expr()
    for c in range(d):
        for e in range(d):
            coeff = s.j_inv[c, e]
            if not coeff.is_zero:
                div_s = div_s + coeff * ns[e, c]

    def rhs(idx):
        a, b = idx
        total = s.chart.zero_expr()
        for c in range(d):
            for e in range(d):
                total = total + decomp.v[a, b, c, e] * phi_up[c, e]
        total = total + (s.j[a, b] * (phi_sq + div_s)).scale(2)
        anti = ns[a, b] - ns[b, a]
        for c in range(d):
            anti = anti + (phi_mixed[a, c] * decomp.phi[b, c]).scale(2)
        return total + anti.scale(2 * s.n)

    return div_y - Tensor.build(s.chart, (DOWN, DOWN), rhs)


def metricity_residual(
    s: FedosovStructure,
    t1: TractorSection,
    t2: TractorSection,
    connection_apply,
) -> Tensor:
    """d_a <t1, t2> - <D_a t1, t2> - <t1, D_a t2>."""
    inner = pairing(t1, t2, s)
    d_inner = Tensor.build(s.chart, (DOWN,), lambda i: inner.derivative(i[0]))
    f1 = connection_apply(t1)
    f2 = connection_apply(t2)
    return d_inner - pairing_oneform_left(f1, t2, s) - pairing_oneform_right(t1, f2, s)
