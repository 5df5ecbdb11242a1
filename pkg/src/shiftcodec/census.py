"""Periodic point counting, the liftable-orbit invariant, and the
embeddability decision procedure.

Conventions: q_n counts points of least period exactly n, p_n counts points
of period n (so p_n = sum of q_d over divisors d of n).  The channel
invariant r_n counts points of least period n in the image shift that admit
a preimage point of the same least period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    Budget,
    BudgetExceeded,
    DEFAULT_BUDGET,
    EmptyShiftError,
    NotSFTError,
    ShiftCodecError,
    UsageError,
)
from .shifts import (
    Presentation,
    Word,
    language_equal,
    structure,
    word,
    word_str,
)


# ---------------------------------------------------------------- necklaces


def _least_rotation(w: Word) -> Word:
    """Booth's algorithm: lexicographically least rotation."""
    n = len(w)
    if n == 0:
        return w
    s = w + w
    f = [-1] * (2 * n)
    k = 0
    for j in range(1, 2 * n):
        sj = s[j]
        i = f[j - k - 1]
        while i != -1 and sj != s[k + i + 1]:
            if sj < s[k + i + 1]:
                k = j - i - 1
            i = f[i]
        if sj != s[k + i + 1]:
            if sj < s[k]:
                k = j
            f[j - k] = -1
        else:
            f[j - k] = i + 1
    return s[k:k + n]


def least_period(w: Word) -> int:
    """Least p with the cyclic rotation by p fixing w (always divides |w|)."""
    w = word(w)
    n = len(w)
    for p in range(1, n + 1):
        if n % p:
            continue
        if all(w[i] == w[i % p] for i in range(n)):
            return p
    return n


class CyclicWord:
    """A word up to rotation: a periodic orbit's repeating block."""

    __slots__ = ("canonical", "least_period")

    def __init__(self, w):
        w = word(w)
        if not w:
            raise UsageError("empty cyclic word")
        self.canonical = _least_rotation(w)
        self.least_period = least_period(self.canonical)

    def __len__(self):
        return len(self.canonical)

    def __eq__(self, other):
        return isinstance(other, CyclicWord) and self.canonical == other.canonical

    def __hash__(self):
        return hash(self.canonical)

    def __lt__(self, other):
        return (len(self.canonical), self.canonical) < (
            len(other.canonical), other.canonical)

    def __repr__(self):
        return f"CyclicWord({word_str(self.canonical)})"

    def rotations(self):
        c = self.canonical
        return [c[i:] + c[:i] for i in range(len(c))]


def necklace_representatives(alphabet, n, budget: Budget):
    """Canonical rotations of all length-n words, one per necklace."""
    alphabet = sorted(alphabet)
    budget.charge_words(len(alphabet) ** n, "necklace enumeration")
    seen = set()
    stack = [()]
    out = []
    while stack:
        w = stack.pop()
        if len(w) == n:
            c = _least_rotation(w)
            if c not in seen:
                seen.add(c)
                out.append(c)
            continue
        for a in reversed(alphabet):
            stack.append(w + (a,))
    return sorted(out)


# ------------------------------------------------------------------ census


@dataclass
class PeriodicCensus:
    shift_id: str
    n_max: int
    p: dict
    q: dict

    def rows(self):
        return [{"n": n, "p_n": self.p[n], "q_n": self.q[n]}
                for n in range(1, self.n_max + 1)]

    def to_doc(self):
        return {"shift": self.shift_id, "rows": self.rows()}


def _mobius_invert(p_table: dict) -> dict:
    import sympy

    q = {}
    for n in p_table:
        q[n] = int(sum(sympy.mobius(n // d) * p_table[d]
                       for d in sympy.divisors(n)))
    return q


def count_periodic_sft(p: Presentation, n_max: int, *,
                       budget: Budget = None) -> PeriodicCensus:
    """Exact p_n = trace(A^n) for a faithful presentation, q_n by inversion."""
    if not p.sft:
        raise NotSFTError("point counting by traces needs a faithful presentation")
    from .entropy import adjacency

    mat, _ = adjacency(p)
    n = len(mat)
    cur = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    traces = {}
    for k in range(1, n_max + 1):
        cur = [[sum(cur[i][m] * mat[m][j] for m in range(n)) for j in range(n)]
               for i in range(n)]
        traces[k] = sum(cur[i][i] for i in range(n))
    q = _mobius_invert(traces)
    for k, v in q.items():
        if v < 0:
            raise ShiftCodecError(f"negative least-period count at n={k}")
    return PeriodicCensus(repr(p), n_max, traces, q)


def _accepts_necklace(p: Presentation, w: Word) -> bool:
    """Does the bi-infinite repetition of w lie in the presented shift?

    Compose the per-symbol transition relations once around the necklace and
    look for a cycle in the resulting relation.
    """
    rel = {v: {v} for v in p.vertices}
    for a in w:
        step = {}
        for v, targets in rel.items():
            nxt = set()
            for u in targets:
                for l, t in p.out_edges(u):
                    if l == a:
                        nxt.add(t)
            if nxt:
                step[v] = nxt
        rel = {v: ts for v, ts in step.items()}
        if not rel:
            return False
    # cycle in the relation digraph
    color = {}
    for root in rel:
        if root in color:
            continue
        stack = [(root, iter(sorted(rel.get(root, ()), key=repr)))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            advanced = False
            for t in it:
                if t not in rel:
                    continue
                c = color.get(t)
                if c == 1:
                    return True
                if c is None:
                    color[t] = 1
                    stack.append((t, iter(sorted(rel.get(t, ()), key=repr))))
                    advanced = True
                    break
            if not advanced:
                color[v] = 2
                stack.pop()
    return False


def count_periodic_sofic(p: Presentation, n_max: int, *,
                         budget: Budget = None) -> PeriodicCensus:
    """q_n by necklace acceptance; works on any essential presentation."""
    budget = budget or DEFAULT_BUDGET
    q = {}
    for n in range(1, n_max + 1):
        count = 0
        for w in necklace_representatives(p.alphabet, n, budget):
            if least_period(w) != n:
                continue
            if _accepts_necklace(p, w):
                count += n
        q[n] = count
    pn = {n: sum(q[d] for d in range(1, n + 1) if n % d == 0)
          for n in range(1, n_max + 1)}
    return PeriodicCensus(repr(p), n_max, pn, q)


# ------------------------------------------------------------- liftability


@dataclass
class LiftableCensus:
    channel_id: str
    n_max: int
    r: dict
    witnesses: dict
    method: str = "enumeration"

    def rows(self):
        return [{"n": n, "r_n": self.r[n]} for n in range(1, self.n_max + 1)]

    def to_doc(self):
        return {"channel": self.channel_id, "method": self.method,
                "rows": self.rows()}


def _cycle_label_necklaces(p: Presentation, n: int, budget: Budget):
    """Canonical label words of all closed n-paths of a faithful presentation.

    Faithfulness makes cycle -> cyclic label word injective up to rotation,
    so the set of canonicals enumerates periodic orbits of period n.
    """
    reach = [{v: {v} for v in p.vertices}]
    for _ in range(n):
        prev = reach[-1]
        nxt = {}
        for v in p.vertices:
            acc = set()
            for l, t in p.out_edges(v):
                acc |= prev[t]
            nxt[v] = acc
        reach.append(nxt)
    found = set()
    visited = 0
    for start in p.vertices:
        stack = [(start, ())]
        while stack:
            v, acc = stack.pop()
            visited += 1
            budget.charge_words(visited, "cycle enumeration")
            k = len(acc)
            if k == n:
                if v == start:
                    found.add(_least_rotation(acc))
                continue
            rem = n - k - 1
            for l, t in p.out_edges(v):
                if start in reach[rem][t]:
                    stack.append((t, acc + (l,)))
    return found


def _full_shift_symbols(p: Presentation):
    """If p presents a full shift on its labels, return the symbols; else
    None.  Any presentation qualifies, not just the one-vertex rose."""
    labels = sorted({l for _, _, l in p.edges})
    if len(p.vertices) == 1:
        return labels if len(labels) == len(p.edges) else None
    try:
        if language_equal(p, Presentation.full_shift(labels)):
            return labels
    except (BudgetExceeded, EmptyShiftError):
        return None
    return None


def count_liftable(x: Presentation, pi, n_max: int, *, budget: Budget = None,
                   with_witnesses: bool = True,
                   allow_section: bool = True) -> LiftableCensus:
    """r_n: points of least period n in the image admitting an equal-period lift.

    When x is a full shift and the channel is symbolwise, every image necklace
    lifts letter by letter through any section of the symbol map, so r_n equals
    q_n of the image full shift; that closed form is used when allowed.
    """
    from .codes import BlockMap, recode_one_block

    budget = budget or DEFAULT_BUDGET
    if not x.sft:
        raise NotSFTError("liftable census needs a faithful SFT presentation")
    xk, pi1, _, _ = recode_one_block(x, pi, budget=budget)
    cid = f"{pi.name or 'pi'} on {x!r}"

    syms = _full_shift_symbols(xk) if allow_section else None
    if syms is not None:
        img = sorted({pi1.lookup((s,)) for s in syms})
        section = {}
        for s in syms:
            section.setdefault(pi1.lookup((s,)), s)
        ptab = {n: len(img) ** n for n in range(1, n_max + 1)}
        q = _mobius_invert(ptab)
        witnesses = {}
        if with_witnesses:
            for n in range(1, min(n_max, 8) + 1):
                pairs = []
                for w in necklace_representatives(img, n, budget):
                    if least_period(w) != n:
                        continue
                    lift = tuple(section[a] for a in w)
                    pairs.append((CyclicWord(w), CyclicWord(lift)))
                witnesses[n] = pairs
        return LiftableCensus(cid, n_max, q, witnesses, method="section")

    r = {}
    witnesses = {}
    for n in range(1, n_max + 1):
        per_image = {}
        for lab in _cycle_label_necklaces(xk, n, budget):
            if least_period(lab) != n:
                continue
            img_word = pi1.apply_cyclic(lab)
            if least_period(_least_rotation(img_word)) != n:
                continue
            key = _least_rotation(img_word)
            per_image.setdefault(key, lab)
        r[n] = n * len(per_image)
        if with_witnesses:
            witnesses[n] = sorted(
                (CyclicWord(k), CyclicWord(v)) for k, v in per_image.items())
    return LiftableCensus(cid, n_max, r, witnesses, method="enumeration")


def growth_check(x: Presentation, pi, n_max: int, *,
                 budget: Budget = None) -> list:
    """Diagnostic table of (n, (1/n) log r_n); trends toward h(image)."""
    census = count_liftable(x, pi, n_max, budget=budget, with_witnesses=False)
    out = []
    for n in range(1, n_max + 1):
        rn = census.r[n]
        out.append((n, math.log(rn) / n if rn > 0 else float("-inf")))
    return out


# ---------------------------------------------------------------- decision


@dataclass
class DecisionReport:
    verdict: str
    entropy_check: dict
    threshold: int | None
    table: list
    mode: str
    certificate: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_doc(self):
        ent = dict(self.entropy_check)
        for key in ("h_z", "h_y"):
            if key in ent and ent[key] is not None:
                ent[key] = [ent[key].lo, ent[key].hi]
        return {
            "verdict": self.verdict,
            "mode": self.mode,
            "entropy_check": ent,
            "threshold": self.threshold,
            "table": [{"n": n, "q_z": qz, "r_pi": rp} for (n, qz, rp) in self.table],
            "certificate": {k: str(v) for k, v in self.certificate.items()},
            "notes": list(self.notes),
        }


def _log_up(x: Fraction) -> float:
    from .entropy import log_interval

    return log_interval(x, x).hi


def _log_down(x: Fraction) -> float:
    from .entropy import log_interval

    return log_interval(x, x).lo


def decide_embeddable(x: Presentation, pi, z: Presentation,
                      mode: str = "certified", *, budget: Budget = None,
                      practical_n: int = 10) -> DecisionReport:
    """Decide whether z admits an embedding into x injective after the channel.

    Certified mode bounds q_n(z) above by |V_z| rho_z^n and r_n below by
    (c/n) exp(n h(image)) past an explicit threshold, then compares exact
    counts up to that threshold.  The lower bound carries an extra 1/n orbit
    multiplicity slack on top of the block-counting argument; the certificate
    records that.  Practical mode only reports the finite table.
    """
    from .codes import image, recode_one_block
    from .entropy import entropy, entropy_compare

    budget = budget or DEFAULT_BUDGET
    notes = []
    if not x.sft:
        raise NotSFTError("channel domain must be a faithful SFT presentation")
    stx = structure(x, budget=budget)
    if not stx["mixing"]:
        raise UsageError("channel domain must be mixing")
    if not z.sft:
        raise UsageError(
            "z must be a faithful SFT presentation; recode it first")

    xk, pi1, _, _ = recode_one_block(x, pi, budget=budget)
    y = image(x, pi, budget=budget)
    yd = y if y.sft else y.determinize(budget=budget)

    cmp = entropy_compare(z, yd, budget=budget)
    hz = entropy(z, 1e-9, budget=budget)
    hy = entropy(yd, 1e-9, budget=budget)
    entropy_check = {"comparison": cmp, "h_z": hz, "h_y": hy}

    if cmp == "equal":
        return DecisionReport(
            "NotApplicable", entropy_check, None, [], mode,
            {"reason": "entropy hypothesis h(z) < h(image) fails with equality"},
            notes)
    if cmp == "greater":
        return DecisionReport(
            "NotEmbeddable", entropy_check, None, [], mode,
            {"reason": "h(z) > h(image): no injective sliding composition exists"},
            notes)
    if cmp == "unknown":
        return DecisionReport(
            "Unknown", entropy_check, None, [], mode,
            {"reason": "entropy comparison could not be certified"}, notes)

    if mode == "certified":
        try:
            return _decide_certified(x, xk, pi1, yd, z, entropy_check,
                                     notes, budget)
        except BudgetExceeded as exc:
            notes.append(f"certified mode exceeded budget ({exc}); "
                         "downgraded to practical mode")
            mode = "practical"

    table, violation = _qr_table(z, xk, pi1, practical_n, budget)
    if violation is not None:
        return DecisionReport(
            "NotEmbeddable", entropy_check, None, table, "practical",
            {"violating_n": violation}, notes)
    margin = _crossover_margin(table)
    notes.append(f"practical table passes up to n={practical_n}; "
                 f"margin window {margin}")
    return DecisionReport("Unknown", entropy_check, None, table, "practical",
                          {"empirical_only": True}, notes)


def _qr_table(z, xk, pi1, n_max, budget):
    """Compare q_n(z) against r_n, stopping at the first violation so a
    failure at small n never pays for the full liftable census.  The census
    is recomputed on a doubling prefix; total work stays within twice the
    final call."""
    qz = count_periodic_sft(z, n_max, budget=budget)
    table = []
    n_done = 0
    k = min(4, n_max)
    while n_done < n_max:
        census = count_liftable(xk, pi1, k, budget=budget, with_witnesses=False)
        for n in range(n_done + 1, k + 1):
            rn = census.r[n]
            table.append((n, qz.q[n], rn))
            if qz.q[n] > rn:
                return table, n
        n_done = k
        k = min(n_max, 2 * k)
    return table, None


def _crossover_margin(table):
    ok_from = None
    for n, q, rn in table:
        if rn >= q and ok_from is None:
            ok_from = n
        if rn < q:
            ok_from = None
    return (ok_from, table[-1][0]) if ok_from is not None else None


def _decide_certified(x, xk, pi1, yd, z, entropy_check, notes, budget):
    from .combinatorics import overlap_constants
    from .entropy import spectral_radius_bounds

    rel = Fraction(1, 10 ** 12)
    rhoZ_lo, rhoZ_hi = spectral_radius_bounds(z, rel, budget=budget)
    rhoY_lo, rhoY_hi = spectral_radius_bounds(yd, rel, budget=budget)
    rhoX_lo, rhoX_hi = spectral_radius_bounds(xk, rel, budget=budget)

    # delta = h(Y) - h(Z) > 0, certified via outward logs
    delta = _log_down(rhoY_lo) - _log_up(rhoZ_hi)
    tries = 0
    while delta <= 0:
        rel /= 10 ** 6
        tries += 1
        if tries > 4:
            raise BudgetExceeded("could not separate entropies rigorously")
        rhoZ_lo, rhoZ_hi = spectral_radius_bounds(z, rel, budget=budget)
        rhoY_lo, rhoY_hi = spectral_radius_bounds(yd, rel, budget=budget)
        delta = _log_down(rhoY_lo) - _log_up(rhoZ_hi)

    g = structure(xk, budget=budget)["gap"]
    c_lo = Fraction(1, 2) / (rhoX_hi ** g)

    consts = overlap_constants(yd, Fraction(1, 3), budget=budget)
    # (1 - exp(-b(n-g))) >= 1/2 iff (n-g)*margin - log C2 >= log 2
    n_half = math.ceil((_log_up(consts["C2"]) + math.log(2)) / consts["margin"])
    n0_growth = max(consts["N"] + g, g + n_half, 3 * g + 1)

    # least n1 with log(k)/k <= delta/2 for all k >= n1; log(k)/k peaks at k=3
    # over the integers and decreases afterwards
    half = delta / 2
    if math.log(3) / 3 <= half:
        n1 = 1
    else:
        n1 = 4
        while math.log(n1) / n1 > half:
            n1 += 1
            if n1 > 10 ** 7:
                raise BudgetExceeded("threshold search for log-slack diverged")
    vz = len(z.vertices)
    n2 = max(1, math.ceil(2 * (_log_up(Fraction(vz)) - _log_down(c_lo)) / delta))
    n_star = max(n0_growth, n1, n2)

    table, violation = _qr_table(z, xk, pi1, n_star, budget)
    certificate = {
        "c_lower": c_lo,
        "gap": g,
        "rho_z_upper": rhoZ_hi,
        "rho_y_lower": rhoY_lo,
        "delta_log": delta,
        "n0_growth": n0_growth,
        "overlap_constants": {k: str(v) for k, v in consts.items()},
        "orbit_slack": "lower bound divided by n for orbit multiplicity",
    }
    if violation is not None:
        return DecisionReport("NotEmbeddable", entropy_check, n_star, table,
                              "certified", {**certificate,
                                            "violating_n": violation}, notes)
    return DecisionReport("Embeddable", entropy_check, n_star, table,
                          "certified", certificate, notes)
