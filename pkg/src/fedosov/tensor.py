"""Dense coordinate tensors with variance bookkeeping.

All indexed objects live on a chart: an ordered list of coordinate names on
an even-dimensional domain.  Components are exact rational expressions and
are stored densely (dim^rank entries), which is comfortably small for the
chart dimensions this package targets (2n <= 8).

Conventions pinned here and relied on throughout:

  * raising uses the inverse 2-form with  phi^a = J^{ab} phi_b,
  * lowering uses                         psi_b = psi^a J_{ab},
  * the inverse satisfies                 J_{ac} J^{bc} = delta_a^b,
  * the exterior derivative is (d w)_{a0..ap} = (p+1) d_[a0 w_{a1..ap]}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .expr import RationalExpr, parse_expr, expr_str
from .linalg import matrix_inverse

UP = "u"
DOWN = "d"


class TensorError(Exception):
    pass


@dataclass(frozen=True)
class Chart:
    """An even-dimensional coordinate domain, dim = 2n >= 4."""

    coords: tuple[str, ...]

    def __post_init__(self):
        if len(self.coords) < 4 or len(self.coords) % 2:
            raise TensorError("chart dimension must be an even integer 2n >= 4")
        if len(set(self.coords)) != len(self.coords):
            raise TensorError("duplicate coordinate names")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def n(self) -> int:
        return self.dim // 2

    def indices(self, rank: int):
        return itertools.product(range(self.dim), repeat=rank)

    def zero_expr(self) -> RationalExpr:
        return RationalExpr.zero(self.dim)

    def one_expr(self) -> RationalExpr:
        return RationalExpr.one(self.dim)

    def const(self, value) -> RationalExpr:
        return RationalExpr.const(self.dim, value)

    def coord(self, i: int) -> RationalExpr:
        return RationalExpr.coordinate(self.dim, i)

    def parse(self, text: str) -> RationalExpr:
        return parse_expr(text, self.coords)

    def d(self, e: RationalExpr, i: int) -> RationalExpr:
        return e.derivative(i)


def std_chart(dim: int) -> Chart:
    return Chart(tuple(f"x{i+1}" for i in range(dim)))


class Tensor:
    """Dense tensor of rational expressions with per-slot variance."""

    __slots__ = ("chart", "variance", "comps")

    def __init__(self, chart: Chart, variance: tuple[str, ...], comps: list[RationalExpr]):
        if len(comps) != chart.dim ** len(variance):
            raise TensorError("component count does not match dim^rank")
        if any(v not in (UP, DOWN) for v in variance):
            raise TensorError("variance entries must be 'u' or 'd'")
        self.chart = chart
        self.variance = tuple(variance)
        self.comps = comps

    # -- construction --------------------------------------------------------

    @staticmethod
    def build(chart: Chart, variance, fn) -> Tensor:
        variance = tuple(variance)
        comps = [fn(idx) for idx in chart.indices(len(variance))]
        return Tensor(chart, variance, comps)

    @staticmethod
    def zeros(chart: Chart, variance) -> Tensor:
        variance = tuple(variance)
        z = chart.zero_expr()
        return Tensor(chart, variance, [z] * (chart.dim ** len(variance)))

    @staticmethod
    def scalar(chart: Chart, value: RationalExpr) -> Tensor:
        return Tensor(chart, (), [value])

    @staticmethod
    def from_matrix(chart: Chart, variance, rows) -> Tensor:
        comps = [entry for row in rows for entry in row]
        return Tensor(chart, tuple(variance), comps)

    @staticmethod
    def delta(chart: Chart) -> Tensor:
        """Kronecker delta with index layout delta_a{}^b."""
        one, zero = chart.one_expr(), chart.zero_expr()
        return Tensor.build(chart, (DOWN, UP), lambda i: one if i[0] == i[1] else zero)

    # -- indexing ------------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.variance)

    def _flat(self, idx: tuple[int, ...]) -> int:
        flat = 0
        for i in idx:
            flat = flat * self.chart.dim + i
        return flat

    def __getitem__(self, idx) -> RationalExpr:
        if isinstance(idx, int):
            idx = (idx,)
        return self.comps[self._flat(idx)]

    def as_matrix(self) -> list[list[RationalExpr]]:
        if self.rank != 2:
            raise TensorError("as_matrix requires rank 2")
        d = self.chart.dim
        return [[self[i, j] for j in range(d)] for i in range(d)]

    # -- algebra -------------------------------------------------------------

    def _check_same_shape(self, other: Tensor):
        if self.chart != other.chart:
            raise TensorError("chart mismatch")
        if self.variance != other.variance:
            raise TensorError(f"variance mismatch: {self.variance} vs {other.variance}")

    def __add__(self, other: Tensor) -> Tensor:
        self._check_same_shape(other)
        return Tensor(self.chart, self.variance, [a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other: Tensor) -> Tensor:
        self._check_same_shape(other)
        return Tensor(self.chart, self.variance, [a - b for a, b in zip(self.comps, other.comps)])

    def __neg__(self) -> Tensor:
        return Tensor(self.chart, self.variance, [-a for a in self.comps])

    def scale(self, c) -> Tensor:
        if isinstance(c, RationalExpr):
            return Tensor(self.chart, self.variance, [a * c for a in self.comps])
        return Tensor(self.chart, self.variance, [a.scale(c) for a in self.comps])

    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.comps)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.chart == other.chart
            and self.variance == other.variance
            and self.comps == other.comps
        )

    def __hash__(self):
        raise TypeError("tensors are unhashable")

    def first_nonzero(self) -> tuple[tuple[int, ...], RationalExpr] | None:
        for idx in self.chart.indices(self.rank):
            c = self[idx]
            if not c.is_zero:
                return idx, c
        return None

    def __repr__(self) -> str:
        nz = self.first_nonzero()
        head = "0" if nz is None else f"[{nz[0]}]={expr_str(nz[1], self.chart.coords)}"
        return f"Tensor(variance={''.join(self.variance)}, {head}, ...)"


def tensor_product(a: Tensor, b: Tensor) -> Tensor:
    if a.chart != b.chart:
        raise TensorError("chart mismatch")
    ra = a.rank
    return Tensor.build(
        a.chart, a.variance + b.variance, lambda idx: a[idx[:ra]] * b[idx[ra:]]
    )


def permute(t: Tensor, order) -> Tensor:
    """Reorder slots: result[i_0..] = t[i_order[0], i_order[1], ...]."""
    order = tuple(order)
    if sorted(order) != list(range(t.rank)):
        raise TensorError("invalid permutation")
    variance = tuple(t.variance[p] for p in order)
    inverse = [0] * t.rank
    for new_pos, old_pos in enumerate(order):
        inverse[old_pos] = new_pos
    return Tensor.build(t.chart, variance, lambda idx: t[tuple(idx[inverse[k]] for k in range(t.rank))])


def _perm_sign(perm: tuple[int, ...]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _avg_over_perms(t: Tensor, positions: tuple[int, ...], signed: bool) -> Tensor:
    if len(set(t.variance[p] for p in positions)) > 1:
        raise TensorError("mixed variance at the chosen positions")
    perms = list(itertools.permutations(range(len(positions))))
    weight = Fraction(1, len(perms))

    def comp(idx):
        total = t.chart.zero_expr()
        for perm in perms:
            new = list(idx)
            for k, p in enumerate(positions):
                new[p] = idx[positions[perm[k]]]
            term = t[tuple(new)]
            if signed and _perm_sign(perm) < 0:
                total = total - term
            else:
                total = total + term
        return total.scale(weight)

    return Tensor.build(t.chart, t.variance, comp)


def symmetrize(t: Tensor, positions) -> Tensor:
    """Average over all permutations of the chosen slots."""
    return _avg_over_perms(t, tuple(positions), signed=False)


def antisymmetrize(t: Tensor, positions) -> Tensor:
    """Signed average over all permutations of the chosen slots."""
    return _avg_over_perms(t, tuple(positions), signed=True)


def contract(t: Tensor, pos1: int, pos2: int) -> Tensor:
    """Sum the diagonal of one up and one down slot."""
    if t.variance[pos1] == t.variance[pos2]:
        raise TensorError("contraction requires one up and one down index")
    keep = [k for k in range(t.rank) if k not in (pos1, pos2)]
    variance = tuple(t.variance[k] for k in keep)
    d = t.chart.dim

    def comp(idx):
        total = t.chart.zero_expr()
        full = [0] * t.rank
        for k, pos in enumerate(keep):
            full[pos] = idx[k]
        for e in range(d):
            full[pos1] = e
            full[pos2] = e
            total = total + t[tuple(full)]
        return total

    return Tensor.build(t.chart, variance, comp)


def raise_index(t: Tensor, pos: int, j_inv: Tensor) -> Tensor:
    """phi^a = J^{ab} phi_b applied at slot `pos`."""
    if t.rank == 0:
        raise TensorError("cannot raise an index on a scalar")
    if t.variance[pos] != DOWN:
        raise TensorError("raise needs a down index")
    d = t.chart.dim
    variance = tuple(UP if k == pos else v for k, v in enumerate(t.variance))

    def comp(idx):
        total = t.chart.zero_expr()
        full = list(idx)
        for b in range(d):
            full[pos] = b
            total = total + j_inv[idx[pos], b] * t[tuple(full)]
        return total

    return Tensor.build(t.chart, variance, comp)


def lower_index(t: Tensor, pos: int, j: Tensor) -> Tensor:
    """psi_b = psi^a J_{ab} applied at slot `pos`."""
    if t.rank == 0:
        raise TensorError("cannot lower an index on a scalar")
    if t.variance[pos] != UP:
        raise TensorError("lower needs an up index")
    d = t.chart.dim
    variance = tuple(DOWN if k == pos else v for k, v in enumerate(t.variance))

    def comp(idx):
        total = t.chart.zero_expr()
        full = list(idx)
        for a in range(d):
            full[pos] = a
            total = total + t[tuple(full)] * j[a, idx[pos]]
        return total

    return Tensor.build(t.chart, variance, comp)


def inverse_two_form(j: Tensor) -> Tensor:
    """Inverse 2-form J^{ab} with the convention J_{ac} J^{bc} = delta_a^b."""
    if j.variance != (DOWN, DOWN):
        raise TensorError("inverse_two_form expects a rank-2 fully lowered tensor")
    if not (j + permute(j, (1, 0))).is_zero():
        raise TensorError("2-form must be antisymmetric")
    # J_ac J^bc = delta  <=>  J^{ab} = -(J^{-1})_{ab} for skew J
    inv = matrix_inverse(j.as_matrix())
    d = j.chart.dim
    return Tensor.build(j.chart, (UP, UP), lambda i: -inv[i[0]][i[1]])


def is_antisymmetric(t: Tensor) -> bool:
    for p in range(t.rank - 1):
        swapped = list(range(t.rank))
        swapped[p], swapped[p + 1] = swapped[p + 1], swapped[p]
        if not (t + permute(t, tuple(swapped))).is_zero():
            return False
    return True


def partial_derivative(t: Tensor) -> Tensor:
    """Plain coordinate derivative; new down slot comes first."""

    def comp(idx):
        return t[idx[1:]].derivative(idx[0])

    return Tensor.build(t.chart, (DOWN,) + t.variance, comp)


def exterior_derivative(w: Tensor) -> Tensor:
    """(d w)_{a0..ap} = (p+1) * antisymmetrized coordinate derivative."""
    if any(v != DOWN for v in w.variance):
        raise TensorError("exterior derivative expects a fully lowered form")
    if w.rank >= 2 and not is_antisymmetric(w):
        raise TensorError("exterior derivative expects an antisymmetric form")
    grad = partial_derivative(w)
    alt = antisymmetrize(grad, tuple(range(w.rank + 1)))
    return alt.scale(w.rank + 1)


def wedge(a: Tensor, b: Tensor) -> Tensor:
    """Wedge product normalized so that (a ^ b) = ((p+q)!/(p!q!)) Alt(a (x) b)."""
    from math import factorial

    p, q = a.rank, b.rank
    prod = tensor_product(a, b)
    alt = antisymmetrize(prod, tuple(range(p + q)))
    return alt.scale(Fraction(factorial(p + q), factorial(p) * factorial(q)))


def darboux_form(chart: Chart) -> Tensor:
    """Standard constant symplectic form dx1^dx2 + dx3^dx4 + ..."""
    one, zero = chart.one_expr(), chart.zero_expr()

    def comp(idx):
        a, b = idx
        if a % 2 == 0 and b == a + 1:
            return one
        if b % 2 == 0 and a == b + 1:
            return -one
        return zero

    return Tensor.build(chart, (DOWN, DOWN), comp)


def norm_squared(chart: Chart) -> RationalExpr:
    """The polynomial |x|^2 = x1^2 + ... + x_{2n}^2."""
    total = chart.zero_expr()
    for i in range(chart.dim):
        c = chart.coord(i)
        total = total + c * c
    return total
