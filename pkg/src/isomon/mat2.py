"""Exact 2x2 matrices over any field-like scalar (Fraction, Dual, float).

The whole rank-2 isomonodromy calculus lives in 2x2 blocks, so a tiny
dedicated type beats a general matrix library: no dtype coercion, exact
arithmetic whenever the entries are exact, and dual numbers pass through
untouched.
"""

from __future__ import annotations

from .exact import PoleError, _is_zero_val


class Mat2:
    __slots__ = ("x11", "x12", "x21", "x22")

    def __init__(self, x11, x12, x21, x22):
        self.x11 = x11
        self.x12 = x12
        self.x21 = x21
        self.x22 = x22

    def __repr__(self):
        return f"Mat2[[{self.x11}, {self.x12}], [{self.x21}, {self.x22}]]"

    def __eq__(self, other):
        if not isinstance(other, Mat2):
            return NotImplemented
        return (self.x11 == other.x11 and self.x12 == other.x12
                and self.x21 == other.x21 and self.x22 == other.x22)

    def __hash__(self):
        return hash((self.x11, self.x12, self.x21, self.x22))

    def __add__(self, other):
        return Mat2(self.x11 + other.x11, self.x12 + other.x12,
                    self.x21 + other.x21, self.x22 + other.x22)

    def __sub__(self, other):
        return Mat2(self.x11 - other.x11, self.x12 - other.x12,
                    self.x21 - other.x21, self.x22 - other.x22)

    def __neg__(self):
        return Mat2(-self.x11, -self.x12, -self.x21, -self.x22)

    def __matmul__(self, other):
        return Mat2(self.x11 * other.x11 + self.x12 * other.x21,
                    self.x11 * other.x12 + self.x12 * other.x22,
                    self.x21 * other.x11 + self.x22 * other.x21,
                    self.x21 * other.x12 + self.x22 * other.x22)

    def __mul__(self, scalar):
        return Mat2(self.x11 * scalar, self.x12 * scalar,
                    self.x21 * scalar, self.x22 * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if _is_zero_val(scalar):
            raise PoleError("matrix division by exact zero")
        return Mat2(self.x11 / scalar, self.x12 / scalar,
                    self.x21 / scalar, self.x22 / scalar)

    def trace(self):
        return self.x11 + self.x22

    def det(self):
        return self.x11 * self.x22 - self.x12 * self.x21

    def inv(self) -> "Mat2":
        d = self.det()
        if _is_zero_val(d):
            raise PoleError("inverting a singular 2x2 matrix")
        return Mat2(self.x22 / d, -self.x12 / d, -self.x21 / d, self.x11 / d)

    def entries(self) -> tuple:
        return (self.x11, self.x12, self.x21, self.x22)

    def map(self, f) -> "Mat2":
        return Mat2(f(self.x11), f(self.x12), f(self.x21), f(self.x22))


def outer(col: tuple, row: tuple) -> Mat2:
    """Rank-1 matrix col . row for 2-vectors."""
    return Mat2(col[0] * row[0], col[0] * row[1],
                col[1] * row[0], col[1] * row[1])


def diag(u, v) -> Mat2:
    return Mat2(u, 0 * u, 0 * v, v)


def commutator(a: Mat2, b: Mat2) -> Mat2:
    return a @ b - b @ a


def tr_prod(a: Mat2, b: Mat2):
    """trace(a @ b) without forming the product."""
    return (a.x11 * b.x11 + a.x12 * b.x21
            + a.x21 * b.x12 + a.x22 * b.x22)


I2 = Mat2(1, 0, 0, 1)
E1 = Mat2(1, 0, 0, 0)      # diag(1, 0)
E2 = Mat2(0, 0, 0, 1)      # diag(0, 1)
W = Mat2(0, 1, 1, 0)       # antidiagonal involution
