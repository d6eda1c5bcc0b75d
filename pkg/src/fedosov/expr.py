"""Exact multivariate rational-function arithmetic.

Scalars everywhere in this package are elements of Q(x1, ..., xk): ratios of
multivariate polynomials with arbitrary-precision rational coefficients.  No
floating point is used anywhere; equality of expressions is decided exactly
(``is_zero``), which is what makes the identity checking in the geometry
modules trustworthy.

A polynomial is a dict mapping exponent tuples to Fraction coefficients:

    x1^2*x2 + 3  ->  {(2, 1): Fraction(1), (0, 0): Fraction(3)}

Zero-coefficient terms are never stored; the zero polynomial has no terms.
A rational expression is a reduced pair num/den: the multivariate GCD of
num and den is 1, den has integer coprime coefficients, and den's leading
coefficient in graded-lex order is positive.  With that normalization two
equal rational functions are structurally identical.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd as int_gcd

Exponent = tuple[int, ...]

_ZERO = Fraction(0)
_ONE = Fraction(1)


class ExprError(Exception):
    """Base class for errors raised by the expression layer."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownCoordinateError(ExprError):
    pass


class DivisionByZeroError(ExprError):
    pass


class PoleError(ExprError):
    """Denominator vanishes at the requested evaluation point."""


_KEY_CACHE: dict[Exponent, tuple[int, Exponent]] = {}


def grlex_key(exp: Exponent) -> tuple[int, Exponent]:
    """Sort key for graded lexicographic order by coordinate index."""
    key = _KEY_CACHE.get(exp)
    if key is None:
        key = (sum(exp), exp)
        if len(_KEY_CACHE) < 200000:
            _KEY_CACHE[exp] = key
    return key


def _norm_coeff(c):
    """Store integral coefficients as plain ints (much faster arithmetic)."""
    if type(c) is Fraction and c.denominator == 1:
        return c.numerator
    return c


class Poly:
    """Immutable sparse polynomial with exact rational coefficients.

    Coefficients are ints or Fractions; integral values are kept as ints.
    """

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, nvars: int, terms: dict[Exponent, Fraction]):
        self.nvars = nvars
        if any(type(c) is Fraction for c in terms.values()):
            terms = {e: _norm_coeff(c) for e, c in terms.items()}
        self.terms = terms
        self._hash: int | None = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(nvars: int) -> Poly:
        return Poly(nvars, {})

    @staticmethod
    def const(nvars: int, value) -> Poly:
        c = Fraction(value)
        if c == 0:
            return Poly(nvars, {})
        return Poly(nvars, {(0,) * nvars: c})

    @staticmethod
    def variable(nvars: int, idx: int) -> Poly:
        if not 0 <= idx < nvars:
            raise UnknownCoordinateError(f"variable index {idx} out of range for {nvars} coordinates")
        exp = [0] * nvars
        exp[idx] = 1
        return Poly(nvars, {tuple(exp): _ONE})

    @staticmethod
    def from_terms(nvars: int, items) -> Poly:
        terms: dict[Exponent, Fraction] = {}
        for exp, coeff in items:
            c = terms.get(exp, _ZERO) + Fraction(coeff)
            if c == 0:
                terms.pop(exp, None)
            else:
                terms[exp] = c
        return Poly(nvars, terms)

    # -- basic queries ------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def is_const(self) -> bool:
        return all(sum(e) == 0 for e in self.terms)

    def const_value(self) -> Fraction:
        if self.is_zero:
            return _ZERO
        [(exp, c)] = self.terms.items()
        if sum(exp) != 0:
            raise ExprError("polynomial is not constant")
        return c

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, var: int) -> int:
        return max((e[var] for e in self.terms), default=0)

    def leading(self) -> tuple[Exponent, Fraction]:
        exp = max(self.terms, key=grlex_key)
        return exp, self.terms[exp]

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Poly({poly_str(self, tuple(f'x{i+1}' for i in range(self.nvars)))})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: Poly) -> Poly:
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        terms = dict(self.terms)
        for exp, c in other.terms.items():
            s = terms.get(exp, _ZERO) + c
            if s == 0:
                del terms[exp]
            else:
                terms[exp] = s
        return Poly(self.nvars, terms)

    def __neg__(self) -> Poly:
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: Poly) -> Poly:
        return self + (-other)

    def __mul__(self, other: Poly) -> Poly:
        if self.is_zero or other.is_zero:
            return Poly.zero(self.nvars)
        a, b = self.terms, other.terms
        if len(a) > len(b):
            a, b = b, a
        terms: dict[Exponent, Fraction] = {}
        for e1, c1 in a.items():
            for e2, c2 in b.items():
                exp = tuple(x + y for x, y in zip(e1, e2))
                s = terms.get(exp, _ZERO) + c1 * c2
                if s == 0:
                    terms.pop(exp, None)
                else:
                    terms[exp] = s
        return Poly(self.nvars, terms)

    def scale(self, c) -> Poly:
        c = Fraction(c)
        if c == 0:
            return Poly.zero(self.nvars)
        return Poly(self.nvars, {e: k * c for e, k in self.terms.items()})

    def __pow__(self, n: int) -> Poly:
        if n < 0:
            raise ExprError("negative polynomial power")
        result = Poly.const(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def derivative(self, var: int) -> Poly:
        terms: dict[Exponent, Fraction] = {}
        for exp, c in self.terms.items():
            k = exp[var]
            if k == 0:
                continue
            new = list(exp)
            new[var] = k - 1
            terms[tuple(new)] = c * k
        return Poly(self.nvars, terms)

    def eval(self, point: tuple[Fraction, ...]) -> Fraction:
        total = _ZERO
        for exp, c in self.terms.items():
            v = c
            for x, e in zip(point, exp):
                if e:
                    v *= x**e
            total += v
        return total


# ---------------------------------------------------------------------------
# Polynomial GCD machinery
# ---------------------------------------------------------------------------


def _int_content_and_sign(p: Poly) -> Fraction:
    """Scalar c with p = c * pp, pp integer-coprime with positive leading coeff."""
    num = 0
    den = 1
    for c in p.terms.values():
        num = int_gcd(num, c.numerator)
        den = den * c.denominator // int_gcd(den, c.denominator)
    cont = Fraction(num, den)
    if p.leading()[1] < 0:
        cont = -cont
    return cont


def make_primitive(p: Poly) -> tuple[Fraction, Poly]:
    """Split p as cont * pp with pp integer-primitive, positive leading coeff."""
    if p.is_zero:
        return _ONE, p
    cont = _int_content_and_sign(p)
    return cont, p.scale(1 / cont)


def _common_monomial(p: Poly) -> Exponent:
    mins = None
    for exp in p.terms:
        if mins is None:
            mins = list(exp)
        else:
            mins = [min(a, b) for a, b in zip(mins, exp)]
        if not any(mins):
            break
    return tuple(mins) if mins else (0,) * p.nvars


def _shift_monomial(p: Poly, shift: Exponent, sign: int) -> Poly:
    if not any(shift):
        return p
    terms = {}
    for exp, c in p.terms.items():
        terms[tuple(e + sign * s for e, s in zip(exp, shift))] = c
    return Poly(p.nvars, terms)


def try_exact_div(p: Poly, d: Poly) -> Poly | None:
    """Return p/d if d divides p exactly, else None."""
    if d.is_zero:
        raise DivisionByZeroError("exact division by zero polynomial")
    if p.is_zero:
        return p
    if d.is_const():
        return p.scale(Fraction(1) / d.const_value())
    if p.total_degree() < d.total_degree():
        return None
    d_exp, d_coeff = d.leading()
    p_exp, _ = p.leading()
    if any(a < b for a, b in zip(p_exp, d_exp)):
        return None
    d_items = [(e, c) for e, c in d.terms.items() if e != d_exp]
    quotient: dict[Exponent, Fraction] = {}
    rem = dict(p.terms)
    while rem:
        r_exp = max(rem, key=grlex_key)
        q_exp = tuple(a - b for a, b in zip(r_exp, d_exp))
        if any(e < 0 for e in q_exp):
            return None
        q_coeff = _norm_coeff(Fraction(rem.pop(r_exp)) / d_coeff)
        quotient[q_exp] = q_coeff
        for e, c in d_items:
            tgt = tuple(a + b for a, b in zip(q_exp, e))
            s = rem.get(tgt, 0) - q_coeff * c
            if s:
                rem[tgt] = s
            else:
                rem.pop(tgt, None)
    return Poly(p.nvars, quotient)


def _vars_present(p: Poly) -> list[int]:
    present = set()
    for exp in p.terms:
        for i, e in enumerate(exp):
            if e:
                present.add(i)
    return sorted(present)


def _univar_gcd(p: Poly, q: Poly, var: int) -> Poly:
    """Euclid for polynomials involving only `var`."""
    a, b = p, q
    while not b.is_zero:
        # monic reduction keeps coefficient growth down
        _, b = make_primitive(b)
        r = a
        b_deg = b.degree_in(var)
        b_exp, b_lc = b.leading()
        while not r.is_zero and r.degree_in(var) >= b_deg:
            r_exp, r_lc = r.leading()
            shift = tuple(x - y for x, y in zip(r_exp, b_exp))
            r = r - b.scale(Fraction(r_lc) / b_lc) * Poly(p.nvars, {shift: _ONE})
        a, b = b, r
    _, pp = make_primitive(a)
    return pp


def _eval_all_but(p: Poly, var: int, values: dict[int, Fraction]) -> Poly:
    """Substitute rational values for every variable except `var`."""
    terms: dict[Exponent, Fraction] = {}
    for exp, c in p.terms.items():
        v = c
        for i, e in enumerate(exp):
            if i == var or e == 0:
                continue
            v *= values[i] ** e
        if v == 0:
            continue
        new = tuple(e if i == var else 0 for i, e in enumerate(exp))
        s = terms.get(new, _ZERO) + v
        if s == 0:
            terms.pop(new, None)
        else:
            terms[new] = s
    return Poly(p.nvars, terms)


_EVAL_SEEDS = (3, 5, 17)


def _proves_trivial_in_var(p: Poly, q: Poly, var: int) -> bool:
    """True if an evaluation image certifies deg_var gcd(p, q) == 0.

    Valid whenever the leading coefficient of p in `var` survives the
    substitution: g | p forces lc_var(g) | lc_var(p), so the image of any
    common divisor keeps its var-degree at such a point.
    """
    others = [i for i in _vars_present(p) + _vars_present(q) if i != var]
    lead_p = _leading_coeff_in(p, var)
    for k, seed in enumerate(_EVAL_SEEDS):
        values = {i: seed + 2 * i + k for i in set(others)}
        if _eval_all_but(lead_p, var, values).is_zero:
            continue
        img_p = _eval_all_but(p, var, values)
        img_q = _eval_all_but(q, var, values)
        if img_q.is_zero:
            continue
        g = _univar_gcd(img_p, img_q, var)
        if g.total_degree() == 0:
            return True
    return False


def _leading_coeff_in(p: Poly, var: int) -> Poly:
    d = p.degree_in(var)
    terms = {}
    for exp, c in p.terms.items():
        if exp[var] == d:
            new = list(exp)
            new[var] = 0
            terms[tuple(new)] = c
    return Poly(p.nvars, terms)


def _coeffs_in(p: Poly, var: int) -> dict[int, Poly]:
    coeffs: dict[int, dict[Exponent, Fraction]] = {}
    for exp, c in p.terms.items():
        new = list(exp)
        k = new[var]
        new[var] = 0
        coeffs.setdefault(k, {})[tuple(new)] = c
    return {k: Poly(p.nvars, t) for k, t in coeffs.items()}


def _from_coeffs(nvars: int, var: int, coeffs: dict[int, Poly]) -> Poly:
    terms: dict[Exponent, Fraction] = {}
    for k, poly in coeffs.items():
        for exp, c in poly.terms.items():
            new = list(exp)
            new[var] = k
            terms[tuple(new)] = c
    return Poly(nvars, terms)


def _pseudo_rem(p: Poly, q: Poly, var: int) -> Poly:
    """Pseudo-remainder of p by q viewed in (coefficient ring)[var]."""
    dq = q.degree_in(var)
    lc_q = _leading_coeff_in(q, var)
    rem = p
    while not rem.is_zero and rem.degree_in(var) >= dq:
        d = rem.degree_in(var)
        lc_r = _leading_coeff_in(rem, var)
        shift = [0] * p.nvars
        shift[var] = d - dq
        rem = rem * lc_q - q * lc_r * Poly(p.nvars, {tuple(shift): _ONE})
        if not rem.is_zero and rem.degree_in(var) >= d and d >= dq:
            # degree must drop each round; guards against bad inputs
            raise ExprError("pseudo-division failed to reduce degree")
    return rem


def _content_in(p: Poly, var: int) -> Poly:
    coeffs = list(_coeffs_in(p, var).values())
    g = coeffs[0]
    for c in coeffs[1:]:
        g = poly_gcd(g, c)
        if g.is_const():
            break
    return g


@lru_cache(maxsize=4096)
def _poly_gcd_cached(p: Poly, q: Poly) -> Poly:
    # fast paths: equality, constants, exact division either way
    if p == q:
        return p
    if p.is_const() or q.is_const():
        return Poly.const(p.nvars, 1)
    if try_exact_div(p, q) is not None:
        return q
    if try_exact_div(q, p) is not None:
        return p

    pvars = set(_vars_present(p))
    qvars = set(_vars_present(q))
    shared = sorted(pvars & qvars)
    if not shared:
        return Poly.const(p.nvars, 1)

    # certified coprimality via univariate evaluation images
    nontrivial = [v for v in shared if not _proves_trivial_in_var(p, q, v)]
    if not nontrivial:
        return Poly.const(p.nvars, 1)

    if pvars == qvars and len(pvars) == 1:
        return _univar_gcd(p, q, next(iter(pvars)))

    # primitive PRS in the top shared variable:
    # gcd(p, q) = gcd(cont_p, cont_q) * pp(last nonzero PRS element)
    var = nontrivial[-1]
    cont_p = _content_in(p, var)
    cont_q = _content_in(q, var)
    cont_g = poly_gcd(cont_p, cont_q)
    a = try_exact_div(p, cont_p)
    b = try_exact_div(q, cont_q)
    if a.degree_in(var) < b.degree_in(var):
        a, b = b, a
    while not b.is_zero:
        r = _pseudo_rem(a, b, var)
        if not r.is_zero:
            r = try_exact_div(r, _content_in(r, var))
            _, r = make_primitive(r)
        a, b = b, r
    g = cont_g * a if a.degree_in(var) > 0 else cont_g
    _, g = make_primitive(g)
    if try_exact_div(p, g) is None or try_exact_div(q, g) is None:
        raise ExprError("internal error: polynomial gcd verification failed")
    return g


# ---------------------------------------------------------------------------
# Denominator atom registry
#
# Denominators arising in geometric computations are overwhelmingly products
# of powers of a handful of polynomials (|x|^2, 1 + |x|^2, rescaling
# functions ...).  Every denominator that passes through rational-expression
# normalization is registered in a pairwise-coprime basis of "atoms"; the
# common-factor part of a gcd is then found by cheap trial division instead
# of a multivariate polynomial remainder sequence, which only runs for the
# (rare) leftover pairs.
# ---------------------------------------------------------------------------

_ATOMS: dict[int, list[Poly]] = {}


def reset_atom_registry():
    _ATOMS.clear()


def _strip(cand: Poly) -> Poly:
    _, c = make_primitive(cand)
    mono = _common_monomial(c)
    if any(mono):
        c = _shift_monomial(c, mono, -1)
        _, c = make_primitive(c)
    return c


def _atoms_add(cand: Poly):
    c = _strip(cand)
    if c.is_const():
        return
    # split off repeated factors first: gcd(c, dc/dv) is nontrivial for
    # non-square-free c, and splitting strictly lowers total degree
    for v in _vars_present(c):
        dc = c.derivative(v)
        if dc.is_zero:
            continue
        g = _gcd_core(c, make_primitive(dc)[1])
        if not g.is_const():
            rest = c
            while (q := try_exact_div(rest, g)) is not None:
                rest = q
            _atoms_add(g)
            _atoms_add(rest)
            return
    atoms = _ATOMS.setdefault(c.nvars, [])
    for i, a in enumerate(atoms):
        if a == c:
            return
        g = _gcd_core(c, a)
        if g.is_const():
            continue
        # overlap found: refine the basis around g
        atoms.pop(i)
        rest_a = a
        while (q := try_exact_div(rest_a, g)) is not None:
            rest_a = q
        rest_c = c
        while (q := try_exact_div(rest_c, g)) is not None:
            rest_c = q
        _atoms_add(g)
        _atoms_add(rest_a)
        _atoms_add(rest_c)
        return
    atoms.append(c)


def register_denominator(den: Poly):
    """Fold a denominator's non-monomial part into the atom basis."""
    c = _strip(den)
    if c.is_const():
        return
    for a in _ATOMS.get(c.nvars, []):
        while (q := try_exact_div(c, a)) is not None:
            c = q
        if c.is_const():
            return
    _, c = make_primitive(c)
    if not c.is_const():
        _atoms_add(c)


def _atom_common_part(p: Poly, q: Poly) -> tuple[Poly, Poly, Poly]:
    """Split off the registered common factor: returns (common, p', q')."""
    common = Poly.const(p.nvars, 1)
    if p.is_const() or q.is_const():
        return common, p, q
    for a in _ATOMS.get(p.nvars, []):
        while True:
            pa = try_exact_div(p, a)
            if pa is None:
                break
            qa = try_exact_div(q, a)
            if qa is None:
                break
            p, q, common = pa, qa, common * a
        if p.is_const() or q.is_const():
            break
    return common, p, q


# -- factored denominators ---------------------------------------------------
#
# Denominators of normalized rational expressions are always products of
# atom powers (times a positive integer handled on the numerator side).
# They are kept factored through arithmetic: multiplicity bookkeeping
# replaces polynomial gcds, and the expanded polynomials are shared via the
# power/product caches below.

_ATOM_POWERS: dict[tuple[Poly, int], Poly] = {}
_DEN_FACTORS: dict[Poly, dict[Poly, int]] = {}

# Integer-point evaluation gives a certain rejection for trial division:
# for integer-primitive p, d one has d | p in Q[x] iff d | p in Z[x]
# (Gauss), and then d(pt) | p(pt) over the integers.
_EVAL_PRIMES = (3, 5, 7, 11, 13, 17, 19, 23)
_ATOM_EVALS: dict[Poly, int] = {}


def _fixed_int_eval(p: Poly) -> int:
    total = 0
    for exp, c in p.terms.items():
        v = c
        for i, e in enumerate(exp):
            if e:
                v *= _EVAL_PRIMES[i % len(_EVAL_PRIMES)] ** e
        total += v
    return total


def _atom_eval(a: Poly) -> int:
    got = _ATOM_EVALS.get(a)
    if got is None:
        got = _fixed_int_eval(a)
        _ATOM_EVALS[a] = got
    return got


class _DivProbe:
    """Certain-rejection probe for repeated trial divisions of one dividend."""

    __slots__ = ("value", "valid")

    def __init__(self, p: Poly):
        cont, pp = make_primitive(p)
        self.value = _fixed_int_eval(pp)
        self.valid = True

    def may_divide(self, atom: Poly) -> bool:
        a_val = _atom_eval(atom)
        if a_val == 0 or a_val in (1, -1):
            return True
        return self.value % a_val == 0


def _atom_power(a: Poly, k: int) -> Poly:
    got = _ATOM_POWERS.get((a, k))
    if got is None:
        got = a**k
        _ATOM_POWERS[(a, k)] = got
    return got


def _build_den(nvars: int, factors: dict[Poly, int]) -> Poly:
    den = Poly.const(nvars, 1)
    for a, k in sorted(factors.items(), key=lambda item: grlex_key(item[0].leading()[0])):
        if k:
            den = den * _atom_power(a, k)
    _DEN_FACTORS[den] = {a: k for a, k in factors.items() if k}
    return den


def _factor_den(den: Poly) -> tuple[Fraction, dict[Poly, int]]:
    """Factor a denominator over the atom basis; returns (constant, factors).

    den == constant * prod(atom^mult); the constant carries sign/content.
    """
    cached = _DEN_FACTORS.get(den)
    if cached is not None:
        return _ONE, dict(cached)
    cont, c = make_primitive(den)
    mono = _common_monomial(c)
    mono_factors: dict[Poly, int] = {}
    if any(mono):
        c = _shift_monomial(c, mono, -1)
        for i, e in enumerate(mono):
            if e:
                mono_factors[Poly.variable(den.nvars, i)] = e
    for _ in range(64):
        factors: dict[Poly, int] = dict(mono_factors)
        rest = c
        for a in _ATOMS.get(den.nvars, []):
            k = 0
            while (q := try_exact_div(rest, a)) is not None:
                rest = q
                k += 1
            if k:
                factors[a] = k
            if rest.is_const():
                break
        if rest.is_const():
            cv = rest.const_value()
            if cv != 1:
                cont = cont * cv
            if cont == 1:
                _DEN_FACTORS[den] = dict(factors)
            return cont, factors
        _atoms_add(rest)
    raise ExprError("internal error: denominator factorization did not stabilize")


def _divide_out_atoms(num: Poly, factors: dict[Poly, int]) -> tuple[Poly, dict[Poly, int]]:
    """Cancel common atom powers between a numerator and factored denominator."""
    if not factors or num.is_const():
        return num, dict(factors)
    reduced = dict(factors)
    probe = _DivProbe(num)
    for a, k in factors.items():
        if not probe.may_divide(a):
            continue
        cancelled = 0
        while cancelled < k and (q := try_exact_div(num, a)) is not None:
            num = q
            cancelled += 1
        if cancelled:
            reduced[a] = k - cancelled
            probe = _DivProbe(num)
    return num, {a: k for a, k in reduced.items() if k}


def poly_gcd(p: Poly, q: Poly) -> Poly:
    """GCD in Q[x1..xk], normalized integer-primitive with positive lead."""
    if p.is_zero and q.is_zero:
        return Poly.const(p.nvars, 1)
    if p.is_zero:
        return make_primitive(q)[1]
    if q.is_zero:
        return make_primitive(p)[1]
    mono_p = _common_monomial(p)
    mono_q = _common_monomial(q)
    mono = tuple(min(a, b) for a, b in zip(mono_p, mono_q))
    p1 = _shift_monomial(p, mono_p, -1)
    q1 = _shift_monomial(q, mono_q, -1)
    _, p1 = make_primitive(p1)
    _, q1 = make_primitive(q1)
    common, p1, q1 = _atom_common_part(p1, q1)
    if not p1.is_const() and not q1.is_const():
        if grlex_key(p1.leading()[0]) < grlex_key(q1.leading()[0]):
            p1, q1 = q1, p1
        rest = _poly_gcd_cached(p1, q1)
        if not rest.is_const():
            # remember the factor so the next encounter is a trial division
            _atoms_add(rest)
            common = common * rest
    _, common = make_primitive(common)
    return _shift_monomial(common, mono, +1)


def _gcd_core(p: Poly, q: Poly) -> Poly:
    """Full gcd of monomial-free primitive polynomials (no registry)."""
    if grlex_key(p.leading()[0]) < grlex_key(q.leading()[0]):
        p, q = q, p
    return _poly_gcd_cached(p, q)


def poly_sqrt(p: Poly) -> Poly | None:
    """Exact square root of a polynomial, or None if p is not a square."""
    if p.is_zero:
        return p
    lead_exp, lead_c = p.leading()
    if any(e % 2 for e in lead_exp):
        return None
    num = _isqrt_exact(lead_c.numerator)
    den = _isqrt_exact(lead_c.denominator)
    if num is None or den is None:
        return None
    root = Poly(p.nvars, {tuple(e // 2 for e in lead_exp): Fraction(num, den)})
    rem = p - root * root
    while not rem.is_zero:
        r_exp, r_c = rem.leading()
        l_exp, l_c = root.leading()
        t_exp = tuple(a - b for a, b in zip(r_exp, l_exp))
        if any(e < 0 for e in t_exp):
            return None
        term = Poly(p.nvars, {t_exp: Fraction(r_c) / (2 * l_c)})
        if grlex_key(term.leading()[0]) >= grlex_key(l_exp):
            return None
        root = root + term
        rem = p - root * root
    return root


def _isqrt_exact(n: int) -> int | None:
    if n < 0:
        return None
    r = int(n**0.5)
    for cand in (r - 1, r, r + 1, r + 2):
        if cand >= 0 and cand * cand == n:
            return cand
    return None


# ---------------------------------------------------------------------------
# Rational expressions
# ---------------------------------------------------------------------------


class RationalExpr:
    """Reduced ratio of two polynomials over the same coordinate list."""

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num: Poly, den: Poly, *, reduced: bool = False):
        if den.is_zero:
            raise DivisionByZeroError("zero denominator")
        if not reduced:
            num, den = _reduce(num, den)
        self.num = num
        self.den = den
        self._hash: int | None = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_poly(p: Poly) -> RationalExpr:
        return RationalExpr(p, Poly.const(p.nvars, 1), reduced=True)

    @staticmethod
    def const(nvars: int, value) -> RationalExpr:
        c = Fraction(value)
        return RationalExpr(Poly.const(nvars, c.numerator), Poly.const(nvars, c.denominator), reduced=True)

    @staticmethod
    def zero(nvars: int) -> RationalExpr:
        return RationalExpr.from_poly(Poly.zero(nvars))

    @staticmethod
    def one(nvars: int) -> RationalExpr:
        return RationalExpr.from_poly(Poly.const(nvars, 1))

    @staticmethod
    def coordinate(nvars: int, idx: int) -> RationalExpr:
        return RationalExpr.from_poly(Poly.variable(nvars, idx))

    # -- queries -------------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self.num.nvars

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def is_const(self) -> bool:
        return self.num.is_const() and self.den.is_const()

    def const_value(self) -> Fraction:
        return self.num.const_value() / self.den.const_value()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RationalExpr)
            and self.num == other.num
            and self.den == other.den
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    def __repr__(self) -> str:
        names = tuple(f"x{i+1}" for i in range(self.nvars))
        return f"RationalExpr({expr_str(self, names)})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: RationalExpr) -> RationalExpr:
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.den == other.den:
            num = self.num + other.num
            if num.is_zero:
                return RationalExpr.zero(self.nvars)
            ca, fa = _factor_den(self.den)
            return _from_factored(num.scale(1 / ca), fa)
        ca, fa = _factor_den(self.den)
        cb, fb = _factor_den(other.den)
        fa_only = {a: k - fb.get(a, 0) for a, k in fa.items() if k > fb.get(a, 0)}
        fb_only = {a: k - fa.get(a, 0) for a, k in fb.items() if k > fa.get(a, 0)}
        num = self.num.scale(1 / ca) * _build_den(self.nvars, fb_only) + other.num.scale(
            1 / cb
        ) * _build_den(self.nvars, fa_only)
        lcm = dict(fa)
        for a, k in fb.items():
            if lcm.get(a, 0) < k:
                lcm[a] = k
        return _from_factored(num, lcm)

    def __neg__(self) -> RationalExpr:
        return RationalExpr(-self.num, self.den, reduced=True)

    def __sub__(self, other: RationalExpr) -> RationalExpr:
        return self + (-other)

    def __mul__(self, other: RationalExpr) -> RationalExpr:
        if self.is_zero or other.is_zero:
            return RationalExpr.zero(self.nvars)
        ca, fa = _factor_den(self.den)
        cb, fb = _factor_den(other.den)
        # cross-cancel each numerator against the other factored denominator
        num1, fb = _divide_out_atoms(self.num, fb)
        num2, fa = _divide_out_atoms(other.num, fa)
        factors = dict(fa)
        for a, k in fb.items():
            factors[a] = factors.get(a, 0) + k
        return _from_factored((num1 * num2).scale(1 / (ca * cb)), factors)

    def __truediv__(self, other: RationalExpr) -> RationalExpr:
        if other.is_zero:
            raise DivisionByZeroError("division by identically-zero expression")
        return self * RationalExpr(other.den, other.num)

    def scale(self, c) -> RationalExpr:
        return self * RationalExpr.const(self.nvars, c)

    def derivative(self, var: int) -> RationalExpr:
        if not 0 <= var < self.nvars:
            raise UnknownCoordinateError(f"no coordinate with index {var}")
        n, d = self.num, self.den
        dn, dd = n.derivative(var), d.derivative(var)
        if d.is_const():
            return RationalExpr(dn.scale(1 / d.const_value()), Poly.const(self.nvars, 1), reduced=True)
        cont, factors = _factor_den(d)
        num = dn * d - n * dd
        if num.is_zero:
            return RationalExpr.zero(self.nvars)
        doubled = {a: 2 * k for a, k in factors.items()}
        return _from_factored(num.scale(1 / cont**2), doubled)

    def eval(self, point) -> Fraction:
        pt = tuple(Fraction(x) for x in point)
        if len(pt) != self.nvars:
            raise ExprError(f"point has {len(pt)} coordinates, expected {self.nvars}")
        den = self.den.eval(pt)
        if den == 0:
            raise PoleError("denominator vanishes at the sample point")
        return self.num.eval(pt) / den


def _scale_canonical(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    cont = _int_content_and_sign(den)
    if cont != 1:
        den = den.scale(1 / cont)
        num = num.scale(1 / cont)
    return num, den


def _from_factored(num: Poly, factors: dict[Poly, int]) -> RationalExpr:
    """Normalize num over a factored denominator (atoms, multiplicities)."""
    nvars = num.nvars
    if num.is_zero:
        return RationalExpr.zero(nvars)
    num, factors = _divide_out_atoms(num, factors)
    if not factors:
        return RationalExpr(num, Poly.const(nvars, 1), reduced=True)
    den = _build_den(nvars, factors)
    # remaining common factors can only be proper divisors of composite
    # atoms; poly_gcd certifies coprimality cheaply or refines the basis
    g = poly_gcd(num, den)
    if not g.is_const():
        num = try_exact_div(num, g)
        den = try_exact_div(den, g)
        num, den = _scale_canonical(num, den)
        if not den.is_const():
            register_denominator(den)
    return RationalExpr(num, den, reduced=True)


def _reduce(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    if num.is_zero:
        return num, Poly.const(num.nvars, 1)
    if den.is_const():
        c = den.const_value()
        return num.scale(1 / c), Poly.const(num.nvars, 1)
    register_denominator(den)
    cont, factors = _factor_den(den)
    out = _from_factored(num.scale(1 / cont), factors)
    return out.num, out.den


def is_zero(e: RationalExpr) -> bool:
    """Exact zero test: true iff the reduced numerator has no terms."""
    return e.is_zero


def equal_cross_mul(a: RationalExpr, b: RationalExpr) -> bool:
    """Equality via cross multiplication, independent of GCD reduction."""
    return (a.num * b.den - b.num * a.den).is_zero


def differentiate(e: RationalExpr, coords: tuple[str, ...], coord: str) -> RationalExpr:
    """Exact partial derivative with respect to a named coordinate."""
    try:
        idx = coords.index(coord)
    except ValueError:
        raise UnknownCoordinateError(f"unknown coordinate {coord!r}") from None
    return e.derivative(idx)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_OPS = "+-*/^()"


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _TOKEN_OPS:
            tokens.append(("op", ch, i))
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            if j < len(text) and text[j] == ".":
                raise ParseError("decimal literals are not supported; use fractions like 1/4", j)
            tokens.append(("int", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, coords: tuple[str, ...]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.coords = coords
        self.nvars = len(coords)

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, val, at = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", at)
        return self.advance()

    def parse(self) -> RationalExpr:
        e = self.expr()
        kind, val, at = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", at)
        return e

    def expr(self) -> RationalExpr:
        kind, val, _ = self.peek()
        negate = False
        while kind == "op" and val in "+-":
            self.advance()
            if val == "-":
                negate = not negate
            kind, val, _ = self.peek()
        e = self.term()
        if negate:
            e = -e
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                e = e + rhs if val == "+" else e - rhs
            else:
                return e

    def term(self) -> RationalExpr:
        e = self.factor()
        while True:
            kind, val, at = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                if val == "*":
                    e = e * rhs
                else:
                    if rhs.is_zero:
                        raise ParseError("literal division by the zero polynomial", at)
                    e = e / rhs
            else:
                return e

    def factor(self) -> RationalExpr:
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.advance()
            inner = self.factor()
            return -inner if val == "-" else inner
        e = self.atom()
        kind, val, at = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            kind, val, at = self.peek()
            if kind != "int":
                raise ParseError("exponent must be a non-negative integer literal", at)
            self.advance()
            return _pow_expr(e, int(val))
        return e

    def atom(self) -> RationalExpr:
        kind, val, at = self.advance()
        if kind == "int":
            return RationalExpr.const(self.nvars, int(val))
        if kind == "name":
            try:
                idx = self.coords.index(val)
            except ValueError:
                raise ParseError(f"unknown identifier {val!r}", at) from None
            return RationalExpr.coordinate(self.nvars, idx)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected token {val!r}" if val else "unexpected end of input", at)


def _pow_expr(e: RationalExpr, n: int) -> RationalExpr:
    if n == 0:
        return RationalExpr.one(e.nvars)
    if e.den.is_const():
        c = e.den.const_value()
        return RationalExpr((e.num**n).scale(Fraction(1) / c**n), Poly.const(e.nvars, 1), reduced=True)
    cont, factors = _factor_den(e.den)
    powered = {a: k * n for a, k in factors.items()}
    return _from_factored((e.num**n).scale(Fraction(1) / cont**n), powered)


def parse_expr(text: str, coords) -> RationalExpr:
    """Parse an expression over the named coordinates.

    Grammar: integer literals, coordinate names, ``+ - * /``, ``^`` with a
    non-negative integer exponent, and parentheses, with the usual
    precedence.  Rational constants are written as divisions, e.g. ``3/4``.
    """
    return _Parser(text, tuple(coords)).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _monomial_str(exp: Exponent, names: tuple[str, ...]) -> str:
    parts = []
    for name, e in zip(names, exp):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts)


def _coeff_str(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def poly_str(p: Poly, names: tuple[str, ...]) -> str:
    if p.is_zero:
        return "0"
    pieces = []
    for exp in sorted(p.terms, key=grlex_key, reverse=True):
        c = p.terms[exp]
        mono = _monomial_str(exp, names)
        mag = abs(c)
        if not mono:
            body = _coeff_str(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{_coeff_str(mag)}*{mono}"
        if not pieces:
            pieces.append(body if c > 0 else f"-{body}")
        else:
            pieces.append(f"+ {body}" if c > 0 else f"- {body}")
    return " ".join(pieces)


def expr_str(e: RationalExpr, names) -> str:
    """Canonical printer; output reparses to the same expression."""
    names = tuple(names)
    num = poly_str(e.num, names)
    if e.den.is_const() and e.den.const_value() == 1:
        return num
    den = poly_str(e.den, names)
    if len(e.num.terms) > 1:
        num = f"({num})"
    return f"{num}/({den})"
