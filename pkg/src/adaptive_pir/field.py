"""Prime-field arithmetic, polynomials and dense linear algebra over GF(q).

Scalars are :class:`FieldElement` values; bulk work goes through the
``PrimeField`` array helpers, which operate on int64 numpy arrays holding
reduced residues and dispatch to :mod:`adaptive_pir._kernels`.

Polynomials are coefficient sequences with the constant term first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import (
    DivisionByZero,
    DuplicateAbscissa,
    ModulusMismatch,
    SingularMatrix,
)


def is_prime(n: int) -> bool:
    """Deterministic primality by 6k +/- 1 trial division."""
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0 or n % 3 == 0:
        return False
    f = 5
    while f * f <= n:
        if n % f == 0 or n % (f + 2) == 0:
            return False
        f += 6
    return True


def inverse(a: int, q: int) -> int:
    """Multiplicative inverse of ``a`` modulo ``q`` by extended Euclid."""
    r0, r1 = q, a % q
    s0, s1 = 0, 1
    while r1:
        quo = r0 // r1
        r0, r1 = r1, r0 - quo * r1
        s0, s1 = s1, s0 - quo * s1
    if r0 != 1:
        raise DivisionByZero(f"{a} has no inverse modulo {q}")
    return s0 % q


class PrimeField:
    """GF(q) for a prime ``q`` no larger than ``2**31 - 1``."""

    __slots__ = ("q",)

    def __init__(self, q: int):
        q = int(q)
        if q > _kernels.MAX_MODULUS:
            raise ValueError(f"modulus {q} exceeds {_kernels.MAX_MODULUS}")
        if not is_prime(q):
            raise ValueError(f"modulus {q} is not prime")
        object.__setattr__(self, "q", q)

    def __setattr__(self, name, value):
        raise AttributeError("PrimeField is immutable")

    def __reduce__(self):
        return (PrimeField, (self.q,))

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.q == self.q

    def __hash__(self):
        return hash(("PrimeField", self.q))

    def __repr__(self):
        return f"GF({self.q})"

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(int(value) % self.q, self)

    def elements(self, values: Iterable[int]) -> list[FieldElement]:
        return [self(v) for v in values]

    # scalar helpers on plain ints
    def inv(self, a: int) -> int:
        if a % self.q == 0:
            raise DivisionByZero("inverse of zero")
        return inverse(a, self.q)

    def div(self, a: int, b: int) -> int:
        return a * self.inv(b) % self.q

    # array helpers
    def asarray(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.int64) % self.q

    def random(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.int64)

    def inv_array(self, a) -> np.ndarray:
        a = self.asarray(a)
        if np.any(a == 0):
            raise DivisionByZero("inverse of zero")
        return _kernels.inv_mod(a, self.q)

    def matmul(self, A, B) -> np.ndarray:
        return _kernels.matmul_mod(self.asarray(A), self.asarray(B), self.q)

    def solve(self, A, B) -> np.ndarray:
        """Solve A X = B for square A; B may be a vector or a matrix."""
        A = self.asarray(A)
        B = self.asarray(B)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        vector = B.ndim == 1
        X, ok = _kernels.solve_mod(A, B[:, None] if vector else B, self.q)
        if not ok:
            raise SingularMatrix(f"singular {A.shape[0]}x{A.shape[0]} system")
        return X[:, 0] if vector else X

    def inverse_matrix(self, A) -> np.ndarray:
        A = self.asarray(A)
        return self.solve(A, np.eye(A.shape[0], dtype=np.int64))

    def einsum(self, subscripts: str, a, b) -> np.ndarray:
        """``np.einsum`` of two reduced operands, reduced mod q.

        Exact as long as each output entry sums fewer than 2**15 products.
        """
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if self.q < 2**23:
            return np.einsum(subscripts, a, b) % self.q
        hi, lo = a >> 16, a & 0xFFFF
        part = np.einsum(subscripts, hi, b) % self.q
        return ((part << 16) + np.einsum(subscripts, lo, b)) % self.q

    def rank(self, A) -> int:
        return int(_kernels.rank_mod(self.asarray(A), self.q))

    def nonsingular(self, A) -> bool:
        A = self.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        return self.rank(A) == A.shape[0]

    def poly_eval(self, coeffs, xs) -> np.ndarray:
        return _kernels.poly_eval_mod(self.asarray(coeffs), self.asarray(xs), self.q)

    def lagrange_weights(self, nodes, targets) -> np.ndarray:
        """Matrix W with W[t, j] equal to the j-th Lagrange basis polynomial
        on ``nodes`` evaluated at ``targets[t]``."""
        W, ok = _kernels.lagrange_weights_mod(self.asarray(nodes), self.asarray(targets), self.q)
        if not ok:
            raise DuplicateAbscissa("interpolation nodes are not distinct")
        return W


def smallest_prime_at_least(n: int) -> PrimeField:
    if n < 2:
        raise ValueError("n must be at least 2")
    while not is_prime(n):
        n += 1
    return PrimeField(n)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: PrimeField

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise ValueError(f"{self.value} is not reduced modulo {self.field.q}")

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise ModulusMismatch(f"{self.field} vs {other.field}")
            return other.value
        if isinstance(other, (int, np.integer)):
            return int(other) % self.field.q
        return NotImplemented

    def __add__(self, other):
        b = self._coerce(other)
        return NotImplemented if b is NotImplemented else self.field(self.value + b)

    def __sub__(self, other):
        b = self._coerce(other)
        return NotImplemented if b is NotImplemented else self.field(self.value - b)

    def __mul__(self, other):
        b = self._coerce(other)
        return NotImplemented if b is NotImplemented else self.field(self.value * b)

    def __truediv__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        if b == 0:
            raise DivisionByZero("division by zero in " + repr(self.field))
        return self.field(self.value * inverse(b, self.field.q))

    def __radd__(self, other):
        return self + other

    def __rmul__(self, other):
        return self * other

    def __rsub__(self, other):
        return self.field(other) - self

    def __rtruediv__(self, other):
        return self.field(other) / self

    def __neg__(self):
        return self.field(-self.value)

    def __pow__(self, e: int):
        if e < 0:
            return self.field(1) / self.field(pow(self.value, -e, self.field.q))
        return self.field(pow(self.value, e, self.field.q))

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field == other.field and self.value == other.value
        if isinstance(other, (int, np.integer)):
            return self.value == int(other) % self.field.q
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.q))

    def __int__(self):
        return self.value

    def inverse(self) -> FieldElement:
        return self.field(1) / self

    def __repr__(self):
        return f"{self.value} (mod {self.field.q})"


def field_arith(a: FieldElement, b: FieldElement, op: str) -> FieldElement:
    """Apply ``op`` in {"add", "sub", "mul", "div"} to two elements."""
    if a.field != b.field:
        raise ModulusMismatch(f"{a.field} vs {b.field}")
    ops = {
        "add": FieldElement.__add__,
        "sub": FieldElement.__sub__,
        "mul": FieldElement.__mul__,
        "div": FieldElement.__truediv__,
    }
    if op not in ops:
        raise ValueError(f"unknown operation {op!r}")
    return ops[op](a, b)


@dataclass(frozen=True)
class FieldMatrix:
    """A dense matrix over one field, stored row-major and read-only."""

    field: PrimeField
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.int64)
        if arr.ndim != 2 or 0 in arr.shape:
            raise ValueError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
        arr %= self.field.q
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_elements(cls, rows: Sequence[Sequence[FieldElement]]) -> FieldMatrix:
        fields = {e.field for row in rows for e in row}
        if len(fields) != 1:
            raise ModulusMismatch("matrix entries must share one modulus")
        return cls(fields.pop(), [[e.value for e in row] for row in rows])

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def entries(self) -> tuple[FieldElement, ...]:
        return tuple(self.field(v) for v in self.data.ravel())

    def __getitem__(self, ij) -> FieldElement:
        return self.field(self.data[ij])

    def __eq__(self, other):
        return (
            isinstance(other, FieldMatrix)
            and self.field == other.field
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.field, self.data.tobytes(), self.data.shape))

    def tolist(self) -> list[list[int]]:
        return self.data.tolist()


def _common_field(elements: Iterable[FieldElement]) -> PrimeField:
    fields = {e.field for e in elements}
    if len(fields) > 1:
        raise ModulusMismatch("elements come from different fields")
    if not fields:
        raise ValueError("no elements given")
    return fields.pop()


def poly_eval(coeffs: Sequence[FieldElement], x: FieldElement) -> FieldElement:
    """Horner evaluation; ``coeffs`` are constant term first."""
    if len(coeffs) == 0:
        raise ValueError("empty coefficient sequence")
    F = _common_field(list(coeffs) + [x])
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x.value + c.value) % F.q
    return F(acc)


def lagrange_interpolate(points: Sequence[tuple[FieldElement, FieldElement]]) -> list[FieldElement]:
    """Coefficients (constant first, length ``len(points)``) of the unique
    polynomial of degree below ``len(points)`` through ``points``."""
    if len(points) == 0:
        raise ValueError("need at least one point")
    F = _common_field([e for pt in points for e in pt])
    q = F.q
    xs = [x.value for x, _ in points]
    ys = [y.value for _, y in points]
    if len(set(xs)) != len(xs):
        raise DuplicateAbscissa("interpolation abscissas are not distinct")
    n = len(xs)
    # master polynomial prod (x - x_j), constant first
    master = [1]
    for xj in xs:
        nxt = [0] * (len(master) + 1)
        for d, c in enumerate(master):
            nxt[d + 1] = (nxt[d + 1] + c) % q
            nxt[d] = (nxt[d] - xj * c) % q
        master = nxt
    coeffs = [0] * n
    for j in range(n):
        # synthetic division of master by (x - x_j)
        quo = [0] * n
        carry = 0
        for d in range(n, 0, -1):
            carry = (master[d] + carry * xs[j]) % q if d < n else master[d]
            quo[d - 1] = carry
        den = 1
        for l in range(n):
            if l != j:
                den = den * (xs[j] - xs[l]) % q
        scale = ys[j] * inverse(den, q) % q
        for d in range(n):
            coeffs[d] = (coeffs[d] + scale * quo[d]) % q
    return [F(c) for c in coeffs]


def solve_linear(A: FieldMatrix, b: Sequence[FieldElement]) -> list[FieldElement]:
    if A.rows != A.cols:
        raise ValueError("solve_linear needs a square matrix")
    if len(b) != A.rows:
        raise ValueError("right-hand side length does not match the matrix")
    if _common_field(b) != A.field:
        raise ModulusMismatch("matrix and vector use different fields")
    x = A.field.solve(A.data, [e.value for e in b])
    return [A.field(v) for v in x]


def is_nonsingular(A: FieldMatrix) -> bool:
    if A.rows != A.cols:
        raise ValueError("is_nonsingular needs a square matrix")
    return A.field.nonsingular(A.data)
