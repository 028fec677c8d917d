"""Exact reference computations in rational arithmetic.

Written directly from subject paths with explicit sums and matrix products,
sharing no code with the package. Float inputs are converted exactly with
``Fraction(float)``.
"""

from fractions import Fraction

UNKNOWN = 0


def _fr(x):
    return Fraction(x)


def state_before(rec, u):
    """State a subject is at risk in just before ``u``, or None."""
    u = _fr(u)
    if u <= _fr(rec.entry_time):
        return None
    cur = rec.entry_state
    nxt = None
    for t, a, b in rec.transitions:
        if _fr(t) < u:
            cur = b
        else:
            nxt = _fr(t)
            break
    if cur == UNKNOWN:
        return None
    if nxt is not None:
        return cur
    if rec.censor_time is not None and u <= _fr(rec.censor_time):
        return cur
    return None


def event_times(records):
    return sorted({_fr(t) for r in records for t, _, _ in r.transitions})


def counts(records, q, u):
    """``dN[h][j]`` (known targets only) and ``Y[h]`` at time ``u``."""
    u = _fr(u)
    dN = [[0] * (q + 1) for _ in range(q + 1)]
    Y = [0] * (q + 1)
    for r in records:
        st = state_before(r, u)
        if st is not None:
            Y[st] += 1
        for t, a, b in r.transitions:
            if _fr(t) == u and b != UNKNOWN:
                dN[a][b] += 1
    return dN, Y


def increment(records, q, u):
    """Nelson-Aalen increment matrix (1-based, index 0 unused)."""
    dN, Y = counts(records, q, u)
    dA = [[Fraction(0)] * (q + 1) for _ in range(q + 1)]
    for h in range(1, q + 1):
        for j in range(1, q + 1):
            if j != h and dN[h][j]:
                dA[h][j] = Fraction(dN[h][j], Y[h])
        dA[h][h] = -sum(dA[h][j] for j in range(1, q + 1) if j != h)
    return dA


def eye(q):
    return [[Fraction(int(i == j)) for j in range(q + 1)] for i in range(q + 1)]


def matmul(X, Y):
    n = len(X)
    return [[sum(X[i][k] * Y[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def transition_matrix(records, q, s, t, strict_right=False):
    """``prod_{u in (s, t]} (I + dA(u))``; with ``strict_right`` over ``(s, t)``."""
    s, t = _fr(s), _fr(t)
    P = eye(q)
    for u in event_times(records):
        if u > s and (u < t if strict_right else u <= t):
            D = increment(records, q, u)
            P = matmul(P, [[eye(q)[i][j] + D[i][j] for j in range(q + 1)] for i in range(q + 1)])
    return P


def residual(records, q, i, u):
    """``dM_i[l][m](u)`` for subject ``i`` with the diagonal convention."""
    rec = records[i]
    dA = increment(records, q, u)
    st = state_before(rec, u)
    dM = [[Fraction(0)] * (q + 1) for _ in range(q + 1)]
    for l in range(1, q + 1):
        for m in range(1, q + 1):
            if m == l:
                continue
            jump = sum(1 for t, a, b in rec.transitions if _fr(t) == _fr(u) and a == l and b == m)
            dM[l][m] = jump - (dA[l][m] if st == l else 0)
        dM[l][l] = -sum(dM[l][m] for m in range(1, q + 1) if m != l)
    return dM


def influence(records, q, h, j, s, t):
    """Explicit double sum for ``gamma_i(s, t)`` of every subject."""
    n = len(records)
    out = []
    for i in range(n):
        g = Fraction(0)
        for u in event_times(records):
            if not (_fr(s) < u <= _fr(t)):
                continue
            left = transition_matrix(records, q, s, u, strict_right=True)
            right = transition_matrix(records, q, u, t)
            _, Y = counts(records, q, u)
            dM = residual(records, q, i, u)
            for l in range(1, q + 1):
                if Y[l] == 0:
                    continue
                ybar = Fraction(Y[l], n)
                for m in range(1, q + 1):
                    g += left[h][l] * dM[l][m] * right[m][j] / ybar
        out.append(g)
    return out

