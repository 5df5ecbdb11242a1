"""Certified entropy computation.

Entropy of an essential presentation is log of the spectral radius of its
adjacency matrix (natural log throughout; comparisons are base independent).
Bounds come from exact rational Collatz-Wielandt quotients, so every interval
returned here is a mathematical certificate, not a float estimate.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple

from mpmath import iv

from .errors import Budget, BudgetExceeded, DEFAULT_BUDGET, EmptyShiftError
from .shifts import Presentation, strongly_connected_components


class Interval(NamedTuple):
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def intersect(self, other: "Interval") -> "Interval":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            raise ValueError("empty intersection of certified intervals")
        return Interval(lo, hi)

    def strictly_below(self, other: "Interval") -> bool:
        return self.hi < other.lo

    def overlaps(self, other: "Interval") -> bool:
        return not (self.hi < other.lo or other.hi < self.lo)


def _float_down(x: Fraction) -> float:
    f = float(x)
    return f if Fraction(f) <= x else math.nextafter(f, -math.inf)


def _float_up(x: Fraction) -> float:
    f = float(x)
    return f if Fraction(f) >= x else math.nextafter(f, math.inf)


def log_interval(lo: Fraction, hi: Fraction) -> Interval:
    """Outward-rounded [log lo, log hi] for positive rationals lo <= hi."""
    if lo <= 0:
        raise ValueError("log of a nonpositive bound")
    iv.prec = 113
    box = iv.mpf([_float_down(lo), _float_up(hi)])
    out = iv.log(box)
    a = float(out.a)
    b = float(out.b)
    # conversion to float rounds to nearest; push outward when it moved
    if iv.mpf(a) > out.a:
        a = math.nextafter(a, -math.inf)
    if iv.mpf(b) < out.b:
        b = math.nextafter(b, math.inf)
    return Interval(a, b)


def adjacency(p: Presentation):
    """Integer adjacency matrix (edge multiplicities) with vertex order."""
    order = list(p.vertices)
    index = {v: i for i, v in enumerate(order)}
    n = len(order)
    mat = [[0] * n for _ in range(n)]
    for s, t, _ in p.edges:
        mat[index[s]][index[t]] += 1
    return mat, order


def _cw_bounds(block, rel_target: Fraction, budget: Budget):
    """Certified bounds on the Perron root of an irreducible 0-1+ matrix.

    Works on B = block + I (primitive on a strongly connected block) and
    subtracts 1.  Collatz-Wielandt: for any positive x and any power k,
    min_i (B^k x)_i/x_i <= rho(B)^k <= max_i (B^k x)_i/x_i.  A float power
    iteration supplies a good x, the exact arithmetic stays in integers,
    and raising k tightens the relative width like 1/k, so only the k-th
    root at the end needs directed rounding.
    """
    from sympy import integer_nthroot

    n = len(block)
    B = [[block[i][j] + (1 if i == j else 0) for j in range(n)] for i in range(n)]
    rows = [[(j, bij) for j, bij in enumerate(row) if bij] for row in B]
    # float phase: approximate Perron vector, normalized each step
    v = [1.0] * n
    for _ in range(max(80, 3 * n)):
        w = [sum(bij * v[j] for j, bij in rows[i]) for i in range(n)]
        top = max(w)
        w = [wi / top for wi in w]
        if max(abs(w[i] - v[i]) for i in range(n)) < 1e-14:
            v = w
            break
        v = w
    x = [max(1, round(vi * 2 ** 48)) for vi in v]
    scale = 10 ** 30

    k = 8
    for _ in range(40):
        y = x
        for _ in range(k):
            y = [sum(bij * y[j] for j, bij in rows[i]) for i in range(n)]
        lo_k = min(Fraction(y[i], x[i]) for i in range(n))
        hi_k = max(Fraction(y[i], x[i]) for i in range(n))
        # certified k-th roots: floor / ceil at fixed denominator
        lo_int = (lo_k.numerator * scale ** k) // lo_k.denominator
        lo = Fraction(integer_nthroot(lo_int, k)[0], scale)
        hi_int = -((-hi_k.numerator * scale ** k) // hi_k.denominator)
        root, exact = integer_nthroot(hi_int, k)
        hi = Fraction(root if exact else root + 1, scale)
        if hi - lo <= rel_target * hi:
            return lo - 1, hi - 1
        # the exact iterate is a far better Perron vector: recycle it
        top = max(y)
        x = [max(1, (yi * 2 ** 48) // top) for yi in y]
        k = min(2 * k, 4096)
    raise BudgetExceeded("Perron root refinement did not converge")


def _graph_period(block):
    """(gcd of cycle lengths, BFS levels) of a strongly connected graph."""
    import math as _m
    n = len(block)
    level = [None] * n
    level[0] = 0
    queue = [0]
    for u in queue:
        for v in range(n):
            if block[u][v] and level[v] is None:
                level[v] = level[u] + 1
                queue.append(v)
    g = 0
    for u in range(n):
        for v in range(n):
            if block[u][v]:
                g = _m.gcd(g, level[u] + 1 - level[v])
    return max(g, 1), level


def _deflated_bounds(block, per, level, rel_target: Fraction, budget: Budget):
    """Perron bounds for a periodic block via its return matrix.

    When every cycle length is a multiple of per, powers A^per act on each
    cyclic class separately with common spectral radius rho(A)^per, so
    bounding the return matrix on one class and taking a certified per-th
    root avoids the slow mixing of the periodic graph itself.
    """
    from sympy import integer_nthroot

    n = len(block)
    cls = [i for i in range(n) if level[i] % per == 0]
    if len(cls) * per * n > 10 ** 7:
        return None
    rows = [[(j, bij) for j, bij in enumerate(row) if bij] for row in block]
    ret = []
    for c in cls:
        v = [0] * n
        v[c] = 1
        for _ in range(per):
            v = [sum(bij * v[j] for j, bij in rows[i]) for i in range(n)]
        ret.append([v[c2] for c2 in cls])
    if len(cls) == 1:
        lo_r = hi_r = Fraction(ret[0][0])
    else:
        lo_r, hi_r = _cw_bounds(ret, rel_target, budget)
    scale = 10 ** 24
    lo_int = (lo_r.numerator * scale ** per) // lo_r.denominator
    lo = Fraction(integer_nthroot(lo_int, per)[0], scale)
    hi_int = -((-hi_r.numerator * scale ** per) // hi_r.denominator)
    root, exact = integer_nthroot(hi_int, per)
    hi = Fraction(root if exact else root + 1, scale)
    return lo, hi


def spectral_radius_bounds(p: Presentation, rel_width: Fraction = Fraction(1, 10 ** 12),
                           *, budget: Budget = None) -> tuple:
    """Exact rational (lo, hi) with lo <= rho(adjacency(p)) <= hi.

    The spectral radius of a block-triangular matrix is the maximum over its
    diagonal blocks, so each strongly connected component is bounded on its
    own and the maxima are taken.
    """
    budget = budget or DEFAULT_BUDGET
    if p.is_empty:
        raise EmptyShiftError("spectral radius of an empty presentation")
    mat, order = adjacency(p)
    index = {v: i for i, v in enumerate(order)}
    best_lo, best_hi = Fraction(0), Fraction(0)
    for comp in strongly_connected_components(p.vertices, p.edges):
        idx = [index[v] for v in comp]
        block = [[mat[i][j] for j in idx] for i in idx]
        if len(idx) == 1 and block[0][0] == 0:
            continue
        per, level = _graph_period(block)
        # big-int growth in the return matrix stays modest only when the
        # entries fit well under float range
        deg = max(sum(row) for row in block)
        digits = per * math.log10(max(deg, 2))
        got = None
        if per > 1 and digits < 250:
            got = _deflated_bounds(block, per, level, rel_width, budget)
        lo, hi = got if got is not None else _cw_bounds(block, rel_width, budget)
        if lo > best_lo:
            best_lo = lo
        if hi > best_hi:
            best_hi = hi
    return best_lo, best_hi


def entropy(p: Presentation, precision: float = 1e-9, *,
            budget: Budget = None) -> Interval:
    """Certified interval of width <= precision containing h(p) in nats.

    Sofic (non-faithful) presentations are determinized first so that path
    growth equals block growth.  Refinement is monotone: tighter precision
    yields a subinterval of the looser answer.
    """
    budget = budget or DEFAULT_BUDGET
    if p.is_empty:
        raise EmptyShiftError("entropy of an empty shift")
    if not p.sft:
        p = p.determinize(budget=budget)
    best = None
    rel = Fraction(1, 10 ** 4)
    for _ in range(12):
        lo, hi = spectral_radius_bounds(p, rel, budget=budget)
        if hi < 1:
            # no cycles beyond trivial: essential graphs always have rho >= 1
            lo = max(lo, Fraction(1))
            hi = max(hi, Fraction(1))
        lo = max(lo, Fraction(1))
        hi = max(hi, lo)
        cur = log_interval(lo, hi)
        best = cur if best is None else best.intersect(cur)
        if best.width <= precision:
            return best
        rel = rel / 10 ** 4
    raise BudgetExceeded(f"entropy interval did not reach width {precision}")


def entropy_estimate(p: Presentation, *, budget: Budget = None) -> float:
    """Fast uncertified float estimate of h(p) in nats.

    Plain power iteration; use it to screen candidates before paying for a
    certified interval, never as a proof.
    """
    budget = budget or DEFAULT_BUDGET
    if p.is_empty:
        raise EmptyShiftError("entropy of an empty shift")
    if not p.sft:
        p = p.determinize(budget=budget)
    mat, order = adjacency(p)
    index = {v: i for i, v in enumerate(order)}
    best = 1.0
    for comp in strongly_connected_components(p.vertices, p.edges):
        idx = [index[v] for v in comp]
        block = [[mat[i][j] for j in idx] for i in idx]
        n = len(idx)
        if n == 1 and block[0][0] == 0:
            continue
        rows = [[(j, bij + (1 if i == j else 0))
                 for j, bij in enumerate(block[i]) if bij or i == j]
                for i in range(n)]
        v = [1.0] * n
        est = 1.0
        for _ in range(max(300, 4 * n)):
            w = [sum(bij * v[j] for j, bij in rows[i]) for i in range(n)]
            top = max(w)
            est = top
            w = [wi / top for wi in w]
            if max(abs(w[i] - v[i]) for i in range(n)) < 1e-13:
                v = w
                break
            v = w
        # ratio bracket of the final iterate pins rho(B) tighter than top
        w = [sum(bij * v[j] for j, bij in rows[i]) for i in range(n)]
        ratios = [w[i] / v[i] for i in range(n) if v[i] > 1e-300]
        est = (min(ratios) * max(ratios)) ** 0.5
        if est > best:
            best = est
    return math.log(best - 1) if best > 1 else 0.0


def _perron_root_exact(p: Presentation):
    """The spectral radius as an exact sympy number (rational or CRootOf)."""
    import sympy

    mat, _ = adjacency(p)
    M = sympy.Matrix(mat)
    poly = M.charpoly()
    roots = sympy.real_roots(poly.as_expr())
    if not roots:
        return sympy.Integer(0)
    return roots[-1]


def entropy_compare(p: Presentation, q: Presentation, *,
                    budget: Budget = None) -> str:
    """Exact comparison of h(p) vs h(q): 'less', 'equal', 'greater', 'unknown'.

    Adaptive interval refinement first; on persistent overlap, exact algebraic
    comparison of the Perron roots decides ties.
    """
    budget = budget or DEFAULT_BUDGET
    pd = p if p.sft else p.determinize(budget=budget)
    qd = q if q.sft else q.determinize(budget=budget)
    for precision in (1e-4, 1e-8, 1e-12):
        ip = entropy(pd, precision, budget=budget)
        iq = entropy(qd, precision, budget=budget)
        if ip.strictly_below(iq):
            return "less"
        if iq.strictly_below(ip):
            return "greater"
    try:
        rp = _perron_root_exact(pd)
        rq = _perron_root_exact(qd)
        if rp == rq:
            return "equal"
        return "less" if rp < rq else "greater"
    except Exception:
        return "unknown"
