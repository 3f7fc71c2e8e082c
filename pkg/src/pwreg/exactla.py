"""Small exact linear algebra over Q (lists of mpq), plus an exact simplex LP."""
from gmpy2 import mpq

from .polyalg import Q


def rref(rows):
    """Reduced row echelon form; returns (rows, pivot_columns)."""
    M = [[Q(v) for v in r] for r in rows]
    if not M:
        return M, []
    ncols = len(M[0])
    pivots = []
    r = 0
    for c in range(ncols):
        pr = next((i for i in range(r, len(M)) if M[i][c]), None)
        if pr is None:
            continue
        M[r], M[pr] = M[pr], M[r]
        inv = 1 / M[r][c]
        M[r] = [v * inv for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c]:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == len(M):
            break
    return M[:r], pivots


def rank(rows):
    return len(rref(rows)[1]) if rows else 0


def nullspace(rows, ncols):
    """Basis of {x : rows @ x = 0} as a list of vectors."""
    if not rows:
        return [[mpq(1) if i == j else mpq(0) for i in range(ncols)] for j in range(ncols)]
    R, piv = rref(rows)
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        v = [mpq(0)] * ncols
        v[f] = mpq(1)
        for i, p in enumerate(piv):
            v[p] = -R[i][f]
        basis.append(v)
    return basis


def inverse(M):
    n = len(M)
    aug = [list(map(Q, row)) + [mpq(1) if i == j else mpq(0) for j in range(n)] for i, row in enumerate(M)]
    R, piv = rref(aug)
    if piv[:n] != list(range(n)) or len(R) < n:
        raise ZeroDivisionError("singular matrix")
    return [row[n:] for row in R]


def matmul(A, B):
    return [[sum((a * b for a, b in zip(row, col)), mpq(0)) for col in zip(*B)] for row in A]


def transpose(A):
    return [list(r) for r in zip(*A)]


def lp_max(c, A_eq, b_eq):
    """max c.x s.t. A_eq x = b_eq, x >= 0, in exact arithmetic (Bland's rule).

    Returns (value, x) or None when infeasible.  Unbounded problems raise.
    """
    m = len(A_eq)
    n = len(c)
    A = [[Q(v) for v in row] for row in A_eq]
    b = [Q(v) for v in b_eq]
    for i in range(m):
        if b[i] < 0:
            A[i] = [-v for v in A[i]]
            b[i] = -b[i]
    # tableau with artificials n..n+m-1
    T = [A[i] + [mpq(1) if j == i else mpq(0) for j in range(m)] + [b[i]] for i in range(m)]
    basis = [n + i for i in range(m)]

    def pivot(r, col):
        inv = 1 / T[r][col]
        T[r] = [v * inv for v in T[r]]
        for i in range(m):
            if i != r and T[i][col]:
                f = T[i][col]
                T[i] = [a - f * bb for a, bb in zip(T[i], T[r])]
        basis[r] = col

    def run(cost, allowed):
        # maximize cost . x over current tableau
        while True:
            reduced = []
            for j in allowed:
                cj = cost[j] - sum((cost[basis[i]] * T[i][j] for i in range(m)), mpq(0))
                reduced.append((j, cj))
            enter = next((j for j, cj in reduced if cj > 0), None)
            if enter is None:
                return
            ratios = [(T[i][-1] / T[i][enter], basis[i], i) for i in range(m) if T[i][enter] > 0]
            if not ratios:
                raise ValueError("unbounded LP")
            best = min(r[0] for r in ratios)
            _, _, row = min((r for r in ratios if r[0] == best), key=lambda r: r[1])
            pivot(row, enter)

    total = n + m
    phase1 = [mpq(0)] * n + [mpq(-1)] * m
    run(phase1, list(range(total)))
    if sum((T[i][-1] for i in range(m) if basis[i] >= n), mpq(0)) > 0:
        return None
    # drive remaining artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            col = next((j for j in range(n) if T[i][j]), None)
            if col is not None:
                pivot(i, col)
    cost = [Q(v) for v in c] + [mpq(0)] * m
    run(cost, list(range(n)))
    x = [mpq(0)] * n
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i][-1]
    return sum((Q(ci) * xi for ci, xi in zip(c, x)), mpq(0)), x
