"""Hot loops over GF(q) on int64 arrays.

Every kernel has a numba implementation and a pure numpy one with identical
results. The numba path is used when numba imports and the environment
variable ``ADAPTIVE_PIR_NUMBA`` is not set to ``0``/``false``/``off``.

All kernels assume ``2 <= q <= MAX_MODULUS`` so that the product of two
reduced residues fits in a signed 64-bit integer.
"""

import os

import numpy as np

MAX_MODULUS = 2**31 - 1

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _numba_requested():
    flag = os.environ.get("ADAPTIVE_PIR_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------- numpy path


def np_inv(a, q):
    """Elementwise inverse by extended Euclid. Zero maps to zero."""
    a = np.asarray(a, dtype=np.int64) % q
    r0 = np.full_like(a, q)
    r1 = a.copy()
    s0 = np.zeros_like(a)
    s1 = np.ones_like(a)
    while np.any(r1 != 0):
        live = r1 != 0
        quo = np.where(live, r0 // np.where(live, r1, 1), 0)
        r0, r1 = np.where(live, r1, r0), np.where(live, r0 - quo * r1, r1)
        s0, s1 = np.where(live, s1, s0), np.where(live, s0 - quo * s1, s1)
    return np.where(a == 0, 0, s0 % q)


def np_matmul(A, B, q):
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    inner = A.shape[-1]
    step = max(1, (2**63 - 1 - q) // ((q - 1) ** 2))
    if inner <= step:
        return (A @ B) % q
    out = (A[..., :step] @ B[:step]) % q
    for lo in range(step, inner, step):
        out = (out + A[..., lo:lo + step] @ B[lo:lo + step]) % q
    return out


def np_solve(A, B, q):
    """Gauss-Jordan on [A | B]. Returns (X, ok); ok is False when A is singular."""
    n = A.shape[0]
    M = np.concatenate([A, B], axis=1).astype(np.int64) % q
    for col in range(n):
        nz = np.flatnonzero(M[col:, col])
        if nz.size == 0:
            return np.zeros_like(B, dtype=np.int64), False
        piv = col + nz[0]
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
        M[col] = M[col] * np_inv(M[col, col], q) % q
        f = M[:, col].copy()
        f[col] = 0
        M = (M - f[:, None] * M[col][None, :]) % q
    return M[:, n:].copy(), True


def np_rank(A, q):
    M = np.asarray(A, dtype=np.int64) % q
    rows, cols = M.shape
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        nz = np.flatnonzero(M[rank:, col])
        if nz.size == 0:
            continue
        piv = rank + nz[0]
        if piv != rank:
            M[[rank, piv]] = M[[piv, rank]]
        M[rank] = M[rank] * np_inv(M[rank, col], q) % q
        f = M[rank + 1:, col].copy()
        M[rank + 1:] = (M[rank + 1:] - f[:, None] * M[rank][None, :]) % q
        rank += 1
    return rank


def np_poly_eval(coeffs, xs, q):
    """Horner over every x in ``xs``; coefficients constant term first."""
    xs = np.asarray(xs, dtype=np.int64) % q
    acc = np.zeros_like(xs)
    for c in np.asarray(coeffs, dtype=np.int64)[::-1]:
        acc = (acc * xs + c) % q
    return acc


def np_lagrange_weights(nodes, targets, q):
    """W[t, j] = L_j(targets[t]) for the Lagrange basis on ``nodes``.

    Returns (W, ok); ok is False when two nodes coincide.
    """
    nodes = np.asarray(nodes, dtype=np.int64) % q
    targets = np.asarray(targets, dtype=np.int64) % q
    n = nodes.size
    diff = (nodes[:, None] - nodes[None, :]) % q
    np.fill_diagonal(diff, 1)
    den = np.ones(n, dtype=np.int64)
    for col in range(n):
        den = den * diff[:, col] % q
    if np.any(den == 0):
        return np.zeros((targets.size, n), dtype=np.int64), False
    tdiff = (targets[:, None] - nodes[None, :]) % q
    num = np.ones((targets.size, n), dtype=np.int64)
    eye = np.eye(n, dtype=bool)
    for l in range(n):
        factor = np.where(eye[l][None, :], 1, tdiff[:, l][:, None])
        num = num * factor % q
    return num * np_inv(den, q)[None, :] % q, True


# ---------------------------------------------------------------- numba path

if numba is not None:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _nb_inv_scalar(a, q):
        r0, r1 = q, a % q
        s0, s1 = 0, 1
        while r1 != 0:
            quo = r0 // r1
            r0, r1 = r1, r0 - quo * r1
            s0, s1 = s1, s0 - quo * s1
        if r0 != 1:
            return 0
        return s0 % q

    @_jit
    def nb_inv(a, q):
        flat = a.ravel()
        out = np.empty_like(flat)
        for idx in range(flat.size):
            out[idx] = _nb_inv_scalar(flat[idx], q)
        return out.reshape(a.shape)

    @_jit
    def _nb_matmul2(A, B, q):
        # products are summed unreduced for as long as the int64 sum cannot overflow
        n, inner = A.shape
        m = B.shape[1]
        step = max(1, (2**63 - 1 - q) // ((q - 1) * (q - 1)))
        out = np.zeros((n, m), dtype=np.int64)
        acc = np.zeros(m, dtype=np.int64)
        for i in range(n):
            acc[:] = 0
            pending = 0
            for l in range(inner):
                a = A[i, l]
                if a == 0:
                    continue
                for j in range(m):
                    acc[j] += a * B[l, j]
                pending += 1
                if pending == step:
                    for j in range(m):
                        acc[j] %= q
                    pending = 0
            for j in range(m):
                out[i, j] = acc[j] % q
        return out

    def nb_matmul(A, B, q):
        A = np.ascontiguousarray(A, dtype=np.int64)
        B = np.ascontiguousarray(B, dtype=np.int64)
        squeeze = B.ndim == 1
        if squeeze:
            B = B[:, None]
        lead = A.shape[:-1]
        out = _nb_matmul2(A.reshape(-1, A.shape[-1]) % q, B % q, q)
        out = out.reshape(lead + (B.shape[1],))
        return out[..., 0] if squeeze else out

    @_jit
    def nb_solve(A, B, q):
        n = A.shape[0]
        m = B.shape[1]
        M = np.empty((n, n + m), dtype=np.int64)
        for i in range(n):
            for j in range(n):
                M[i, j] = A[i, j] % q
            for j in range(m):
                M[i, n + j] = B[i, j] % q
        for col in range(n):
            piv = -1
            for r in range(col, n):
                if M[r, col] != 0:
                    piv = r
                    break
            if piv < 0:
                return np.zeros((n, m), dtype=np.int64), False
            if piv != col:
                for j in range(n + m):
                    tmp = M[col, j]
                    M[col, j] = M[piv, j]
                    M[piv, j] = tmp
            inv = _nb_inv_scalar(M[col, col], q)
            for j in range(n + m):
                M[col, j] = M[col, j] * inv % q
            for r in range(n):
                f = M[r, col]
                if r == col or f == 0:
                    continue
                for j in range(n + m):
                    M[r, j] = (M[r, j] - f * M[col, j]) % q
        return M[:, n:].copy(), True

    @_jit
    def nb_rank(A, q):
        rows, cols = A.shape
        M = np.empty((rows, cols), dtype=np.int64)
        for i in range(rows):
            for j in range(cols):
                M[i, j] = A[i, j] % q
        rank = 0
        for col in range(cols):
            if rank == rows:
                break
            piv = -1
            for r in range(rank, rows):
                if M[r, col] != 0:
                    piv = r
                    break
            if piv < 0:
                continue
            if piv != rank:
                for j in range(cols):
                    tmp = M[rank, j]
                    M[rank, j] = M[piv, j]
                    M[piv, j] = tmp
            inv = _nb_inv_scalar(M[rank, col], q)
            for j in range(cols):
                M[rank, j] = M[rank, j] * inv % q
            for r in range(rank + 1, rows):
                f = M[r, col]
                if f == 0:
                    continue
                for j in range(cols):
                    M[r, j] = (M[r, j] - f * M[rank, j]) % q
            rank += 1
        return rank

    @_jit
    def _nb_poly_eval_flat(coeffs, xs, q):
        # coefficient-major so the inner loop streams over contiguous points
        x = xs % q
        acc = np.zeros_like(xs)
        for c in range(coeffs.size - 1, -1, -1):
            cc = coeffs[c]
            for idx in range(xs.size):
                acc[idx] = (acc[idx] * x[idx] + cc) % q
        return acc

    def nb_poly_eval(coeffs, xs, q):
        xs = np.asarray(xs, dtype=np.int64)
        coeffs = np.ascontiguousarray(coeffs, dtype=np.int64) % q
        flat = np.ascontiguousarray(xs).ravel()
        return _nb_poly_eval_flat(coeffs, flat, q).reshape(xs.shape)

    @_jit
    def _nb_lagrange_weights(nodes, targets, q):
        n = nodes.size
        W = np.zeros((targets.size, n), dtype=np.int64)
        inv_den = np.empty(n, dtype=np.int64)
        for j in range(n):
            den = 1
            for l in range(n):
                if l != j:
                    den = den * ((nodes[j] - nodes[l]) % q) % q
            if den == 0:
                return W, False
            inv_den[j] = _nb_inv_scalar(den, q)
        for t in range(targets.size):
            for j in range(n):
                num = 1
                for l in range(n):
                    if l != j:
                        num = num * ((targets[t] - nodes[l]) % q) % q
                W[t, j] = num * inv_den[j] % q
        return W, True

    def nb_lagrange_weights(nodes, targets, q):
        nodes = np.ascontiguousarray(nodes, dtype=np.int64) % q
        targets = np.ascontiguousarray(targets, dtype=np.int64) % q
        return _nb_lagrange_weights(nodes, targets, q)

    def _nb_solve_wrapped(A, B, q):
        A = np.ascontiguousarray(A, dtype=np.int64)
        B = np.ascontiguousarray(B, dtype=np.int64)
        return nb_solve(A, B, q)

    def _nb_rank_wrapped(A, q):
        return nb_rank(np.ascontiguousarray(A, dtype=np.int64), q)

    def _nb_inv_wrapped(a, q):
        a = np.asarray(a, dtype=np.int64)
        return nb_inv(np.ascontiguousarray(a).reshape(a.shape), q)


IMPLEMENTATIONS = {
    "numpy": {
        "inv": np_inv,
        "matmul": np_matmul,
        "solve": np_solve,
        "rank": np_rank,
        "poly_eval": np_poly_eval,
        "lagrange_weights": np_lagrange_weights,
    }
}
if numba is not None:
    IMPLEMENTATIONS["numba"] = {
        "inv": _nb_inv_wrapped,
        "matmul": nb_matmul,
        "solve": _nb_solve_wrapped,
        "rank": _nb_rank_wrapped,
        "poly_eval": nb_poly_eval,
        "lagrange_weights": nb_lagrange_weights,
    }

BACKEND = "numba" if numba is not None and _numba_requested() else "numpy"

_active = IMPLEMENTATIONS[BACKEND]
inv_mod = _active["inv"]
matmul_mod = _active["matmul"]
solve_mod = _active["solve"]
rank_mod = _active["rank"]
poly_eval_mod = _active["poly_eval"]
lagrange_weights_mod = _active["lagrange_weights"]
