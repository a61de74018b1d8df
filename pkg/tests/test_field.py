import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptive_pir import _kernels
from adaptive_pir.errors import DivisionByZero, DuplicateAbscissa, ModulusMismatch, SingularMatrix
from adaptive_pir.field import (
    FieldElement,
    FieldMatrix,
    PrimeField,
    field_arith,
    inverse,
    is_nonsingular,
    is_prime,
    lagrange_interpolate,
    poly_eval,
    smallest_prime_at_least,
    solve_linear,
)

GF11 = PrimeField(11)
PRIMES = [2, 3, 11, 13, 101, 65537, 2**31 - 1]


def det_cofactor(A, q):
    A = [list(r) for r in A]
    if len(A) == 1:
        return A[0][0] % q
    total = 0
    for j in range(len(A)):
        minor = [row[:j] + row[j + 1:] for row in A[1:]]
        total += (-1) ** j * A[0][j] * det_cofactor(minor, q)
    return total % q


def test_smallest_prime_examples():
    assert smallest_prime_at_least(11).q == 11
    assert smallest_prime_at_least(2).q == 2
    assert smallest_prime_at_least(9).q == 11
    with pytest.raises(ValueError):
        smallest_prime_at_least(1)


def test_is_prime_matches_sieve():
    limit = 2000
    sieve = np.ones(limit, dtype=bool)
    sieve[:2] = False
    for i in range(2, int(limit**0.5) + 1):
        sieve[i * i::i] = False
    assert [n for n in range(limit) if is_prime(n)] == np.flatnonzero(sieve).tolist()


def test_field_rejects_composite_and_huge():
    with pytest.raises(ValueError):
        PrimeField(12)
    with pytest.raises(ValueError):
        PrimeField(2**61 - 1)


def test_field_arith_examples():
    assert field_arith(GF11(7), GF11(8), "mul") == GF11(1)
    for a in range(11):
        assert field_arith(GF11(a), GF11(1), "mul") == GF11(a)
    assert field_arith(GF11(0), GF11(5), "div") == GF11(0)
    assert field_arith(GF11(3), GF11(9), "add") == GF11(1)
    assert field_arith(GF11(3), GF11(9), "sub") == GF11(5)


def test_field_arith_errors():
    with pytest.raises(DivisionByZero):
        field_arith(GF11(3), GF11(0), "div")
    with pytest.raises(ModulusMismatch):
        field_arith(GF11(3), PrimeField(13)(3), "add")
    with pytest.raises(ValueError):
        field_arith(GF11(3), GF11(3), "pow")
    with pytest.raises(ValueError):
        FieldElement(11, GF11)


def test_element_operators():
    a, b = GF11(4), GF11(9)
    assert a + b == GF11(2) and a - b == GF11(6) and a * b == GF11(3)
    assert a / b * b == a
    assert -a == GF11(7) and a**0 == GF11(1) and a**-1 == a.inverse()
    assert 2 * a == GF11(8) and a + 10 == GF11(3) and 1 / a == a.inverse()
    assert int(a) == 4


@pytest.mark.parametrize("q", PRIMES)
def test_inverse_property_bulk(q):
    # 10^4 samples per field through the array path, checked by plain Python ints
    F = PrimeField(q)
    rng = np.random.default_rng(q)
    a = F.random(rng, 10_000)
    b = rng.integers(1, q, size=10_000, dtype=np.int64)
    binv = F.inv_array(b)
    for x, y, yi in zip(a.tolist()[:500], b.tolist()[:500], binv.tolist()[:500]):
        assert x * y % q * yi % q == x
    assert np.all((b.astype(object) * binv.astype(object)) % q == 1)


@given(st.sampled_from(PRIMES), st.integers(min_value=0), st.integers(min_value=1))
def test_inverse_property(q, a, b):
    a, b = a % q, b % q
    if b == 0:
        b = 1
    F = PrimeField(q)
    assert (F(a) * F(b)) * F(b).inverse() == F(a)
    assert b * inverse(b, q) % q == 1


def test_poly_eval_examples():
    for x in range(11):
        assert poly_eval([GF11(3)], GF11(x)) == GF11(3)
    assert poly_eval(GF11.elements([1, 1]), GF11(2)) == GF11(3)
    assert poly_eval(GF11.elements([0, 0, 1]), GF11(4)) == GF11(5)
    with pytest.raises(ValueError):
        poly_eval([], GF11(1))


def test_interpolate_examples():
    assert lagrange_interpolate([(GF11(0), GF11(5))]) == [GF11(5)]
    coeffs = lagrange_interpolate([(GF11(i), GF11(i)) for i in range(3)])
    assert [int(c) for c in coeffs] == [0, 1, 0]
    with pytest.raises(DuplicateAbscissa):
        lagrange_interpolate([(GF11(1), GF11(2)), (GF11(1), GF11(3))])


@given(st.sampled_from([11, 13, 101, 65537]), st.data())
def test_interpolate_round_trip(q, data):
    F = PrimeField(q)
    n = data.draw(st.integers(1, min(q, 12)))
    deg = data.draw(st.integers(0, n - 1))
    coeffs = F.elements(data.draw(st.lists(st.integers(0, q - 1), min_size=deg + 1, max_size=deg + 1)))
    xs = data.draw(st.lists(st.integers(0, q - 1), min_size=n, max_size=n, unique=True))
    points = [(F(x), poly_eval(coeffs, F(x))) for x in xs]
    got = lagrange_interpolate(points)
    assert got[: deg + 1] == coeffs and all(c == F(0) for c in got[deg + 1:])


def test_solve_examples():
    I = FieldMatrix(GF11, np.eye(3, dtype=np.int64))
    b = GF11.elements([4, 0, 7])
    assert solve_linear(I, b) == b
    A = FieldMatrix(GF11, [[1, 1], [1, 2]])
    assert solve_linear(A, GF11.elements([3, 5])) == GF11.elements([1, 2])
    with pytest.raises(SingularMatrix):
        solve_linear(FieldMatrix(GF11, [[1, 2], [2, 4]]), GF11.elements([1, 1]))
    with pytest.raises(ValueError):
        solve_linear(FieldMatrix(GF11, [[1, 2, 3]]), GF11.elements([1]))


@given(st.sampled_from([11, 101, 65537, 2**31 - 1]), st.integers(1, 12), st.integers(0, 2**32))
def test_solve_property(q, n, seed):
    F = PrimeField(q)
    rng = np.random.default_rng(seed)
    A = F.random(rng, (n, n))
    if not F.nonsingular(A):
        return
    x = F.random(rng, n)
    b = F.matmul(A, x)
    assert np.array_equal(F.solve(A, b), x)
    got = solve_linear(FieldMatrix(F, A), F.elements(b.tolist()))
    assert [int(v) for v in got] == x.tolist()


def test_nonsingular_examples():
    assert is_nonsingular(FieldMatrix(GF11, np.eye(4, dtype=np.int64)))
    assert not is_nonsingular(FieldMatrix(GF11, [[1, 2, 3], [0, 0, 0], [4, 5, 6]]))
    V = [[pow(x, j, 11) for j in range(3)] for x in (2, 5, 9)]
    assert is_nonsingular(FieldMatrix(GF11, V))


@pytest.mark.parametrize("q", [2, 3, 11])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_nonsingular_matches_cofactor(q, n):
    F = PrimeField(q)
    rng = np.random.default_rng(100 * q + n)
    if q ** (n * n) <= 5000:
        mats = (np.array(m).reshape(n, n) for m in itertools.product(range(q), repeat=n * n))
    else:
        mats = (F.random(rng, (n, n)) for _ in range(3000))
    for A in mats:
        assert is_nonsingular(FieldMatrix(F, A)) == (det_cofactor(A.tolist(), q) != 0)


def test_field_matrix_value_semantics():
    A = FieldMatrix(GF11, [[1, 12], [3, 4]])
    assert A.tolist() == [[1, 1], [3, 4]]
    assert A.rows == 2 and A.cols == 2 and A[0, 1] == GF11(1)
    assert A == FieldMatrix.from_elements([GF11.elements([1, 1]), GF11.elements([3, 4])])
    with pytest.raises(ValueError):
        A.data[0, 0] = 5


def test_einsum_large_modulus_exact():
    F = PrimeField(2**31 - 1)
    rng = np.random.default_rng(5)
    a = F.random(rng, (7, 30))
    b = F.random(rng, (30, 4))
    ref = (a.astype(object) @ b.astype(object)) % F.q
    assert np.array_equal(F.einsum("ij,jk->ik", a, b), ref.astype(np.int64))
    assert np.array_equal(F.matmul(a, b), ref.astype(np.int64))


def test_lagrange_weights_and_duplicates():
    nodes = [1, 4, 6]
    W = GF11.lagrange_weights(nodes, nodes + [0])
    assert np.array_equal(W[:3], np.eye(3, dtype=np.int64))
    assert W[3].sum() % 11 == 1
    with pytest.raises(DuplicateAbscissa):
        GF11.lagrange_weights([1, 1], [0])


@pytest.mark.skipif(_kernels.numba is None, reason="numba not installed")
@pytest.mark.parametrize("q", [11, 65537, 2**31 - 1])
def test_backends_agree(q):
    npk, nbk = _kernels.IMPLEMENTATIONS["numpy"], _kernels.IMPLEMENTATIONS["numba"]
    rng = np.random.default_rng(q)
    F = PrimeField(q)
    a = rng.integers(1, q, 200, dtype=np.int64)
    assert np.array_equal(npk["inv"](a, q), nbk["inv"](a, q))
    A, B = F.random(rng, (9, 9)), F.random(rng, (9, 3))
    assert np.array_equal(npk["matmul"](A, B, q), nbk["matmul"](A, B, q))
    Xn, okn = npk["solve"](A, B, q)
    Xb, okb = nbk["solve"](A, B, q)
    assert okn == okb and (not okn or np.array_equal(Xn, Xb))
    S = A.copy()
    S[3] = S[1] * 2 % q
    assert npk["rank"](S, q) == nbk["rank"](S, q) == npk["rank"](A, q) - 1
    assert npk["solve"](S, B, q)[1] is False or not npk["solve"](S, B, q)[1]
    c, xs = F.random(rng, 6), F.random(rng, 20)
    assert np.array_equal(npk["poly_eval"](c, xs, q), nbk["poly_eval"](c, xs, q))
    nodes = np.arange(7, dtype=np.int64)
    tg = np.arange(7, 12, dtype=np.int64)
    Wn, _ = npk["lagrange_weights"](nodes, tg, q)
    Wb, _ = nbk["lagrange_weights"](nodes, tg, q)
    assert np.array_equal(Wn, Wb)


@pytest.mark.parametrize("backend", sorted(_kernels.IMPLEMENTATIONS))
@pytest.mark.parametrize("q", [2, 65537, 2**31 - 1])
def test_matmul_long_inner_no_overflow(backend, q):
    matmul = _kernels.IMPLEMENTATIONS[backend]["matmul"]
    A = np.full((3, 257), q - 1, dtype=np.int64)
    B = np.full((257, 2), q - 1, dtype=np.int64)
    want = 257 * (q - 1) * (q - 1) % q
    assert (matmul(A, B, q) == want).all()


@pytest.mark.parametrize("backend", sorted(_kernels.IMPLEMENTATIONS))
@pytest.mark.parametrize("q", [11, 2**31 - 1])
def test_matmul_vector_shape(backend, q):
    matmul = _kernels.IMPLEMENTATIONS[backend]["matmul"]
    rng = np.random.default_rng(3)
    A = rng.integers(0, q, (4, 5), dtype=np.int64)
    x = rng.integers(0, q, 5, dtype=np.int64)
    got = matmul(A, x, q)
    want = [sum(int(a) * int(b) for a, b in zip(row, x)) % q for row in A]
    assert got.shape == (4,)
    assert got.tolist() == want
