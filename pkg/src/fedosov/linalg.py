"""Exact Gaussian elimination over the rational-function field.

Used for inverting 2-forms and metrics symbolically, solving the small
linear systems that extract 1-forms from tensor equations, and computing
ranks of evaluated matrices over Q.
"""

from __future__ import annotations

from fractions import Fraction

from .expr import RationalExpr


class SingularMatrixError(Exception):
    pass


class InconsistentSystemError(Exception):
    pass


def matrix_inverse(rows: list[list[RationalExpr]]) -> list[list[RationalExpr]]:
    """Invert a square matrix of rational expressions."""
    n = len(rows)
    nvars = rows[0][0].nvars
    zero = RationalExpr.zero(nvars)
    one = RationalExpr.one(nvars)
    aug = [list(row) + [one if i == j else zero for j in range(n)] for i, row in enumerate(rows)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if not aug[r][col].is_zero), None)
        if pivot is None:
            raise SingularMatrixError("matrix is singular over the function field")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = one / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r == col or aug[r][col].is_zero:
                continue
            f = aug[r][col]
            aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def solve_unique(rows: list[list[RationalExpr]], rhs: list[RationalExpr]) -> list[RationalExpr]:
    """Solve A x = b for a (possibly overdetermined) system with unique solution."""
    m, n = len(rows), len(rows[0])
    nvars = rhs[0].nvars
    aug = [list(row) + [b] for row, b in zip(rows, rhs)]
    pivots: list[int] = []
    row = 0
    for col in range(n):
        pivot = next((r for r in range(row, m) if not aug[r][col].is_zero), None)
        if pivot is None:
            continue
        aug[row], aug[pivot] = aug[pivot], aug[row]
        inv = RationalExpr.one(nvars) / aug[row][col]
        aug[row] = [x * inv for x in aug[row]]
        for r in range(m):
            if r == row or aug[r][col].is_zero:
                continue
            f = aug[r][col]
            aug[r] = [a - f * b for a, b in zip(aug[r], aug[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    for r in range(row, m):
        if not aug[r][n].is_zero:
            raise InconsistentSystemError("linear system has no solution")
    if len(pivots) < n:
        raise InconsistentSystemError("linear system is underdetermined")
    sol = [RationalExpr.zero(nvars)] * n
    for r, col in enumerate(pivots):
        sol[col] = aug[r][n]
    return sol


def rank_fraction_matrix(rows: list[list[Fraction]]) -> int:
    """Rank of a matrix of exact rationals."""
    mat = [list(r) for r in rows]
    m = len(mat)
    n = len(mat[0]) if m else 0
    rank = 0
    row = 0
    for col in range(n):
        pivot = next((r for r in range(row, m) if mat[r][col] != 0), None)
        if pivot is None:
            continue
        mat[row], mat[pivot] = mat[pivot], mat[row]
        inv = 1 / mat[row][col]
        mat[row] = [x * inv for x in mat[row]]
        for r in range(m):
            if r != row and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[row])]
        rank += 1
        row += 1
        if row == m:
            break
    return rank


def nullspace_fraction_matrix(rows: list[list[Fraction]]) -> list[list[Fraction]]:
    """Basis of the nullspace of an exact rational matrix."""
    mat = [list(r) for r in rows]
    m = len(mat)
    n = len(mat[0]) if m else 0
    pivots: list[int] = []
    row = 0
    for col in range(n):
        pivot = next((r for r in range(row, m) if mat[r][col] != 0), None)
        if pivot is None:
            continue
        mat[row], mat[pivot] = mat[pivot], mat[row]
        inv = 1 / mat[row][col]
        mat[row] = [x * inv for x in mat[row]]
        for r in range(m):
            if r != row and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * n
        vec[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            vec[pc] = -mat[r][fc]
        basis.append(vec)
    return basis
