from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptive_pir.errors import InsufficientResponses, PoleHit
from adaptive_pir.field import PrimeField, lagrange_interpolate, poly_eval
from adaptive_pir.framework import (
    CSABasis,
    FrameworkKind,
    LagrangeBasis,
    PartialFileRequest,
    certify_framework,
    decode_partial,
    framework_answer,
    framework_encode,
    framework_query,
    make_basis,
    nonempty_subsets,
    query_basis_eval,
    storage_basis_eval,
)
from adaptive_pir.params import EncodingParameters, SystemParams, select_parameters

P8 = SystemParams(8, 2, 2, 2, 2)
KINDS = [FrameworkKind.LAGRANGE, FrameworkKind.CSA]
SMALL = [(4, 1, 1, 1), (5, 2, 1, 1), (6, 1, 2, 2), (7, 2, 1, 2), (8, 2, 2, 2), (9, 2, 2, 2), (9, 4, 1, 1)]


def run_framework(basis, R, rng, M=2):
    p, F = basis.params, basis.field
    files = F.random(rng, (M, p.lam, p.K))
    theta = int(rng.integers(M))
    stored = framework_encode(basis, files, F.random(rng, (M, p.lam, p.X)))
    Q = framework_query(basis, R, theta, F.random(rng, (M, len(R), p.K, p.T)))
    return files, theta, framework_answer(stored, Q, R, basis.q)


def test_storage_basis_examples():
    lag, csa = make_basis("lagrange", P8), make_basis("csa", P8)
    F, betas = lag.field, lag.betas
    for i in range(P8.lam):
        for k in range(P8.K + P8.X):
            for k2 in range(P8.K + P8.X):
                assert storage_basis_eval(lag, i, k, F(int(betas[i, k2]))) == F(int(k == k2))
        for x in range(11):
            assert sum(storage_basis_eval(lag, i, k, x).value for k in range(4)) % 11 == 1
            assert storage_basis_eval(csa, i, P8.K, x) == F(1)
    with pytest.raises(PoleHit):
        storage_basis_eval(csa, 0, 0, int(betas[0, 0]))


def test_query_basis_examples():
    lag, csa = make_basis("lagrange", P8), make_basis("csa", P8)
    F = lag.field
    for R in nonempty_subsets(P8.lam):
        for i in R:
            for k in range(P8.K):
                for j in R:
                    b = int(lag.betas[j, k])
                    assert query_basis_eval(lag, R, i, k, P8.T, b) == F(int(j == i))
                for t in range(P8.T):
                    for t2 in range(P8.T):
                        assert query_basis_eval(lag, R, i, k, t, t2) == F(int(t == t2))
                    for k2 in range(P8.K):
                        assert query_basis_eval(csa, R, i, k, t, int(csa.betas[i, k2])) == F(0)
    with pytest.raises(ValueError):
        query_basis_eval(lag, (0, 1), 2, 0, 0, 3)


def interp(F, xs, ys):
    return lagrange_interpolate([(F(x), F(y)) for x, y in zip(xs, ys)])


def poly_mul(F, a, b):
    out = [F(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] = out[i + j] + x * y
    return out


@pytest.mark.parametrize("dims", [(8, 2, 2, 2), (6, 1, 2, 2), (7, 2, 1, 2)])
def test_lagrange_answer_identity(dims):
    # rebuild every storage and query polynomial by interpolation and multiply symbolically
    p = SystemParams(*dims, M=2)
    basis = LagrangeBasis(p)
    F, q = basis.field, basis.q
    rng = np.random.default_rng(sum(dims))
    for R in nonempty_subsets(p.lam):
        files = F.random(rng, (p.M, p.lam, p.K))
        snoise = F.random(rng, (p.M, p.lam, p.X))
        qnoise = F.random(rng, (p.M, len(R), p.K, p.T))
        theta = 1
        stored = framework_encode(basis, files, snoise)
        answers = framework_answer(stored, framework_query(basis, R, theta, qnoise), R, q)
        for k in range(p.K):
            total = [F(0)]
            for m in range(p.M):
                for s, i in enumerate(R):
                    f = interp(F, basis.betas[i].tolist(), list(files[m, i]) + list(snoise[m, i]))
                    xs = [int(basis.betas[j, k]) for j in R] + basis.alphas[: p.T].tolist()
                    ys = [int(m == theta and j == i) for j in R] + qnoise[m, s, k].tolist()
                    prod = poly_mul(F, f, interp(F, xs, ys))
                    width = max(len(total), len(prod))
                    total = [a + b for a, b in zip(total + [F(0)] * (width - len(total)),
                                                   prod + [F(0)] * (width - len(prod)))]
            assert all(c == F(0) for c in total[p.K + p.X + p.T - 1 + len(R):])
            for n in range(p.N):
                assert poly_eval(total, F(n)).value == answers[n, k]


@pytest.mark.parametrize("dims", SMALL)
def test_csa_system_matrix_is_cauchy_vandermonde(dims):
    p = SystemParams(*dims)
    basis = CSABasis(p)
    q = basis.q
    for R in nonempty_subsets(p.lam):
        need = basis.needed_responses(len(R), 0)
        for servers in combinations(range(p.N), need):
            for k in range(p.K):
                ref = [[pow((n - int(basis.betas[i, k])) % q, q - 2, q) for i in R]
                       + [pow(n, e, q) for e in range(p.K + p.X + p.T - 1)] for n in servers]
                C = basis.system_matrix(servers, R, k)
                assert C.tolist() == ref
                assert basis.field.nonsingular(C)


@pytest.mark.parametrize("kind", KINDS)
def test_decode_zero_file(kind):
    basis = make_basis(kind, P8)
    F = basis.field
    req = PartialFileRequest(0, (0, 2))
    files = np.zeros((1, 3, 2), dtype=np.int64)
    rng = np.random.default_rng(1)
    stored = framework_encode(basis, files, F.random(rng, (1, 3, 2)))
    ans = framework_answer(stored, framework_query(basis, req.R, 0, F.random(rng, (1, 2, 2, 2))), req.R, F.q)
    out = decode_partial(basis, req, {n: ans[n] for n in range(8)})
    assert out.tolist() == [[0, 0], [0, 0]]


@pytest.mark.parametrize("kind", KINDS)
def test_decode_with_known_row(kind):
    basis = make_basis(kind, P8)
    rng = np.random.default_rng(2)
    R = (0, 2)
    files, theta, ans = run_framework(basis, R, rng)
    need = P8.N - (P8.lam - len(R) + 1)
    assert need == basis.needed_responses(2, 1)
    servers = sorted(rng.choice(8, need, replace=False).tolist())
    out = decode_partial(basis, PartialFileRequest(theta, R), {n: ans[n] for n in servers},
                         {2: files[theta, 2].tolist()})
    assert out.tolist() == files[theta][list(R)].tolist()


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dims", SMALL)
def test_threshold_sharpness(kind, dims):
    p = SystemParams(*dims)
    basis = make_basis(kind, p)
    rng = np.random.default_rng(3)
    for R in nonempty_subsets(p.lam):
        files, theta, ans = run_framework(basis, R, rng)
        for d in range(len(R)):
            known = {i: files[theta, i].tolist() for i in R[:d]}
            need = basis.needed_responses(len(R), d)
            assert need == p.N - (p.lam - len(R) + d)
            with pytest.raises(InsufficientResponses):
                decode_partial(basis, PartialFileRequest(theta, R), {n: ans[n] for n in range(need - 1)}, known)
            got = decode_partial(basis, PartialFileRequest(theta, R),
                                 {n: ans[n] for n in range(p.N - need, p.N)}, known)
            assert got.tolist() == files[theta][list(R)].tolist()


@given(st.sampled_from(SMALL), st.integers(0, 2**32), st.data())
def test_interchangeable(dims, seed, data):
    p = SystemParams(*dims, M=2)
    R = tuple(sorted(data.draw(st.sets(st.integers(0, p.lam - 1), min_size=1))))
    results = []
    for kind in KINDS:
        basis = make_basis(kind, p)
        files, theta, ans = run_framework(basis, R, np.random.default_rng(seed))
        results.append(decode_partial(basis, PartialFileRequest(theta, R), {n: ans[n] for n in range(p.N)}).tolist())
    assert results[0] == results[1] == files[theta][list(R)].tolist()


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dims", [(4, 1, 1, 1), (6, 1, 2, 2), (7, 3, 1, 1), (6, 2, 0, 1)])
def test_certify_small(kind, dims):
    cert = certify_framework(make_basis(kind, SystemParams(*dims)), 2)
    assert cert.ok, cert.witnesses
    assert cert.checked["F0"] > 0 and cert.checked["F2"] > 0


@pytest.mark.parametrize("kind", KINDS)
def test_certify_catches_bad_points(kind):
    enc = select_parameters(P8, 11)
    betas = [list(r) for r in enc.betas]
    betas[0][0] = enc.alphas[3]
    bad = EncodingParameters(enc.field, enc.alphas, tuple(tuple(r) for r in betas))
    try:
        cert = certify_framework(make_basis(kind, P8, bad), 1)
    except PoleHit:
        return
    assert not cert.ok and cert.witnesses


def test_certificate_json():
    cert = certify_framework(make_basis("lagrange", SystemParams(4, 1, 1, 1)), 1)
    assert '"ok": true' in cert.to_json()


def test_partial_request_sorted():
    req = PartialFileRequest(1, (2, 0))
    assert req.R == (0, 2) and req.r == 2


def test_field_override():
    basis = make_basis("csa", P8, select_parameters(P8, PrimeField(13)))
    assert basis.q == 13
    assert certify_framework(basis, 1).ok
