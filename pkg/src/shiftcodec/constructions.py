"""Constructions feeding the embedding pipeline.

Each routine here builds an explicit presentation and then verifies the
properties its callers rely on (containment, structure, entropy, counting)
before returning.  Verification failure raises; nothing is returned on
trust.
"""

from dataclasses import dataclass, field
import math

from .errors import (Budget, DEFAULT_BUDGET, BudgetExceeded, ConstructionError,
                     EmptyShiftError, NoExcludablePoint, NoSynchronizingWord,
                     NotSFTError, ParameterSearchExhausted, StampInvalid,
                     UsageError)
from .shifts import (Presentation, Word, as_sft, from_forbidden, language_equal,
                     language_subset, word, word_str)
from .entropy import entropy, entropy_compare, entropy_estimate
from .census import (CyclicWord, _accepts_necklace, count_liftable,
                     count_periodic_sft, count_periodic_sofic, decide_embeddable,
                     least_period, necklace_representatives)
from .codes import BlockMap, image, preimage_sft
from .combinatorics import (Stamp, find_stamp, max_overlap, syndetic_subshift,
                            verify_stamp)


# ----------------------------------------------------------- blanks shifts


@dataclass
class BlanksSpec:
    """Bookkeeping data for a blanks shift over a base alphabet.

    Points interleave segments with separator runs of exactly ell copies of
    the reserved blank symbol.  A segment is either a data block from M
    (length between 1 and 2N) or a stretch of a periodic orbit from Q
    (least period between 1 and 2N-1); finite periodic stretches must span
    at least 2N+1 symbols, one-sided rays are unconstrained.
    """

    base_id: str
    alphabet: tuple
    M: frozenset
    Q: frozenset
    N: int
    blank: str
    ell: int

    def __post_init__(self):
        self.alphabet = tuple(sorted(set(self.alphabet)))
        self.M = frozenset(word(m) for m in self.M)
        self.Q = frozenset(q if isinstance(q, CyclicWord) else CyclicWord(q)
                           for q in self.Q)

    def validate(self) -> "BlanksSpec":
        if self.blank in self.alphabet:
            raise UsageError("blank symbol must not belong to the base alphabet")
        if self.ell < 1:
            raise UsageError("separator length must be at least 1")
        if self.N < 1:
            raise UsageError("length scale N must be at least 1")
        for m in self.M:
            if not 1 <= len(m) <= 2 * self.N:
                raise UsageError(
                    f"data block {word_str(m)} has length outside [1, {2 * self.N}]")
            for a in m:
                if a not in self.alphabet:
                    raise UsageError(f"data block symbol {a!r} outside the alphabet")
        for q in self.Q:
            if not 1 <= q.least_period <= 2 * self.N - 1:
                raise UsageError(
                    f"orbit {q!r} has least period outside [1, {2 * self.N - 1}]")
            for a in q.canonical:
                if a not in self.alphabet:
                    raise UsageError(f"orbit symbol {a!r} outside the alphabet")
        return self


def blanks_shift(spec: BlanksSpec, *, budget: Budget = None) -> Presentation:
    """Graph presentation of the blanks shift described by spec.

    Vertices track position inside a data block, phase and elapsed length
    inside a periodic stretch, or how many blanks of the current separator
    run were already emitted.  Finite periodic stretches climb a counting
    runway of 2N+1 steps before reaching the free cycle, which is what
    forces their minimum span; one-sided rays live on the free cycle.
    """
    spec.validate()
    if not spec.M and not spec.Q:
        raise EmptyShiftError("blanks shift with no data blocks and no orbits")
    blank = spec.blank
    edges = set()
    start = ("blank", spec.ell)
    end = ("blank", 0)
    for j in range(spec.ell):
        edges.add((("blank", j), ("blank", j + 1), blank))
    for m in sorted(spec.M):
        if len(m) == 1:
            edges.add((start, end, m[0]))
            continue
        edges.add((start, ("data", m, 1), m[0]))
        for i in range(1, len(m) - 1):
            edges.add((("data", m, i), ("data", m, i + 1), m[i]))
        edges.add((("data", m, len(m) - 1), end, m[-1]))
    for q in sorted(spec.Q):
        c = q.canonical
        p = len(c)
        for i in range(p):
            nxt = (i + 1) % p
            edges.add((("cycle", c, i), ("cycle", c, nxt), c[i]))
            # exiting the cycle emits the first separator blank
            edges.add((("cycle", c, i), ("blank", 1), blank))
            for j in range(1, 2 * spec.N + 2):
                src = start if j == 1 else ("run", c, i, j)
                dst = (("cycle", c, nxt) if j == 2 * spec.N + 1
                       else ("run", c, nxt, j + 1))
                edges.add((src, dst, c[i]))
    return Presentation(sorted(edges, key=repr),
                        alphabet=spec.alphabet + (blank,))


def _cyclic_subword(chunk: Word, c: Word) -> bool:
    p = len(c)
    ext = c * (len(chunk) // p + 2)
    return any(ext[s:s + len(chunk)] == chunk for s in range(p))


def _full_segment(spec: BlanksSpec, d: Word) -> bool:
    if d in spec.M:
        return True
    if len(d) >= 2 * spec.N + 1:
        return any(_cyclic_subword(d, q.canonical) for q in spec.Q)
    return False


def _segment_suffix(spec: BlanksSpec, d: Word) -> bool:
    if any(len(m) >= len(d) and m[len(m) - len(d):] == d for m in spec.M):
        return True
    return any(_cyclic_subword(d, q.canonical) for q in spec.Q)


def _segment_prefix(spec: BlanksSpec, d: Word) -> bool:
    if any(m[:len(d)] == d for m in spec.M):
        return True
    return any(_cyclic_subword(d, q.canonical) for q in spec.Q)


def _segment_infix(spec: BlanksSpec, d: Word) -> bool:
    for m in spec.M:
        if len(d) <= len(m):
            if any(m[s:s + len(d)] == d for s in range(len(m) - len(d) + 1)):
                return True
    return any(_cyclic_subword(d, q.canonical) for q in spec.Q)


def blanks_parse(spec: BlanksSpec, w) -> bool:
    """Reference acceptor: can this word occur in a point of the blanks
    shift?  Splits on maximal blank runs; interior runs must have length
    exactly ell, boundary runs at most ell, and every chunk must match the
    segment inventory with word-boundary chunks treated as one-sided."""
    w = word(w)
    blank = spec.blank
    if any(a != blank and a not in spec.alphabet for a in w):
        return False
    if not spec.M and not spec.Q:
        return False
    if not w:
        return True
    n = len(w)
    segs = []
    i = 0
    while i < n:
        j = i
        isblank = w[i] == blank
        while j < n and (w[j] == blank) == isblank:
            j += 1
        segs.append((isblank, i, j))
        i = j
    for isblank, a, b in segs:
        if not isblank:
            continue
        if a > 0 and b < n:
            if b - a != spec.ell:
                return False
        elif b - a > spec.ell:
            return False
    for isblank, a, b in segs:
        if isblank:
            continue
        chunk = w[a:b]
        left_closed = a > 0
        right_closed = b < n
        if left_closed and right_closed:
            ok = _full_segment(spec, chunk)
        elif right_closed:
            ok = _segment_suffix(spec, chunk)
        elif left_closed:
            ok = _segment_prefix(spec, chunk)
        else:
            ok = _segment_infix(spec, chunk)
        if not ok:
            return False
    return True


# ------------------------------------------------------------ gap splicing


def _orbit_period(w: Word) -> int:
    # least period of the bi-infinite repetition of w; always divides len(w)
    return CyclicWord(w).least_period


def _gap_context(x: Presentation, v0: Presentation, stamp: Stamp, *,
                 budget: Budget) -> dict:
    """Shared validation and junction precomputation for gap splicing."""
    if not x.sft:
        raise NotSFTError("ambient shift needs a faithful presentation")
    if not language_equal(x.markov_blocks(2, budget=budget), x, budget=budget):
        raise UsageError("ambient SFT must be 1-step; recode first")
    st = x.structure(budget=budget)
    if not st["mixing"]:
        raise UsageError("ambient SFT must be mixing")
    k = stamp.context_k
    if st["gap"] > k:
        raise UsageError(f"stamp context {k} is below the mixing gap {st['gap']}")
    if v0.is_empty:
        raise EmptyShiftError("inner shift is empty")
    if not language_subset(v0, x, budget=budget):
        raise UsageError("inner shift must be contained in the ambient SFT")
    mu = stamp.word
    if not verify_stamp(x, v0, k, mu, budget=budget):
        raise StampInvalid("stamp fails re-verification against this pair")
    adj = x.language_blocks(2, budget=budget)
    contexts = sorted(x.language_blocks(k, budget=budget)) if k else [()]
    junctions = []
    for gp in contexts:
        for gm in contexts:
            jw = gp + mu + gm
            if x.membership(jw):
                junctions.append(jw)
    if not junctions:
        raise ConstructionError("no legal junction word")
    return {"adj": adj, "junctions": junctions, "k": k, "mu": mu,
            "ell": len(mu) + 2 * k, "structure": st}


def _ambient_alphabet(v0: Presentation, ctx: dict) -> tuple:
    # junction words may use symbols absent from v0
    syms = set()
    for jw in ctx["junctions"]:
        syms.update(jw)
    for (_, _, lab) in v0.edges:
        syms.add(lab)
    return tuple(sorted(syms))


def _gap_graph(ctx: dict, v0: Presentation, n: int) -> Presentation:
    adj = ctx["adj"]
    junctions = ctx["junctions"]
    ell = ctx["ell"]
    edges = set()
    # v-states (vertex, incoming label, capped run length)
    for (s, t, lab) in v0.edges:
        for lab2, t2 in v0.out_edges(t):
            for j in range(1, n + 1):
                edges.add((("v", t, lab, j), ("v", t2, lab2, min(j + 1, n)), lab2))
    for (s, t, lab) in v0.edges:
        for jw in junctions:
            if (lab, jw[0]) in adj:
                edges.add((("v", t, lab, n), ("j", jw, 1), jw[0]))
    for jw in junctions:
        for i in range(1, ell):
            edges.add((("j", jw, i), ("j", jw, i + 1), jw[i]))
        for (s, t, lab) in v0.edges:
            if (jw[-1], lab) in adj:
                edges.add((("j", jw, ell), ("v", t, lab, 1), lab))
    return Presentation(sorted(edges, key=repr),
                        alphabet=_ambient_alphabet(v0, ctx))


def gap_sft(x: Presentation, v0: Presentation, stamp: Stamp, n: int, *,
            budget: Budget = None, with_certificate: bool = False):
    """Mixing SFT strictly between v0 and x made of long v0 blocks spliced
    with stamped junctions.

    Points consist of v0-blocks of length at least n separated by junction
    words g+ mu g- with free length-k contexts, every transition legal in
    x.  Mixing is certified by exhibiting two junction cycles whose orbit
    periods are coprime: one around a block of length n, one of length n+1.
    """
    budget = budget or DEFAULT_BUDGET
    ctx = _gap_context(x, v0, stamp, budget=budget)
    mu = ctx["mu"]
    if n < len(mu):
        raise UsageError(f"block length {n} is below the stamp length {len(mu)}")
    pres = _gap_graph(ctx, v0, n)
    if not language_subset(v0, pres, budget=budget):
        raise ConstructionError("spliced shift lost part of the inner language")
    if not language_subset(pres, x, budget=budget):
        raise ConstructionError("spliced shift escapes the ambient SFT")
    if not pres.sft:
        # the raw splice reads blocks nondeterministically after a junction;
        # the follower set presentation is synchronized, hence faithful
        pres = pres.determinize(budget=budget)
        if not pres.sft:
            raise ConstructionError("spliced language did not verify as finite type")
    st = pres.structure(budget=budget)
    if not st["mixing"]:
        raise ConstructionError("splicing produced a non-mixing graph")
    if not with_certificate:
        return pres
    cert = {"junction_length": ctx["ell"], "block_min": n,
            "gap": st["gap"], "contexts": ctx["k"]}
    found = []
    for L in (n, n + 1):
        hit = None
        for u in sorted(v0.language_blocks(L, budget=budget)):
            for jw in ctx["junctions"]:
                if (u[-1], jw[0]) in ctx["adj"] and (jw[-1], u[0]) in ctx["adj"]:
                    neck = u + jw
                    if _accepts_necklace(pres, neck):
                        hit = (neck, _orbit_period(neck))
                        break
            if hit:
                break
        if hit is None:
            raise ConstructionError(f"no junction cycle through a block of length {L}")
        found.append(hit)
    (na, pa), (nb, pb) = found
    if math.gcd(pa, pb) != 1:
        raise ConstructionError("junction cycle periods are not coprime")
    cert["orbit_a"] = word_str(na)
    cert["period_a"] = pa
    cert["orbit_b"] = word_str(nb)
    cert["period_b"] = pb
    try:
        _, m0 = as_sft(v0, max_memory=6, budget=budget)
        cert["memory_bound"] = n + ctx["ell"] + m0
    except (NotSFTError, BudgetExceeded):
        cert["memory_bound"] = None
    return pres, cert


def gap_sft_entropy_bound(x: Presentation, v0: Presentation, stamp: Stamp,
                          epsilon: float, *, budget: Budget = None,
                          with_report: bool = False):
    """Smallest verified block length n with h(spliced) < h(v0) + epsilon.

    Subadditivity of log block counts yields an a priori cap; the answer
    is found by certified entropy checks scanning up from the stamp
    length, so it never exceeds the cap.  The spliced shift shrinks as n
    grows, which makes the scan's first hit minimal.
    """
    budget = budget or DEFAULT_BUDGET
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    ctx = _gap_context(x, v0, stamp, budget=budget)
    mu, k = ctx["mu"], ctx["k"]
    h0 = entropy(v0, budget=budget)
    cap_m = 512
    table = v0.count_blocks_table(cap_m, budget=budget)
    m_anchor = None
    for m in range(1, cap_m + 1):
        if table[m] == 0:
            raise EmptyShiftError("inner shift has no words of length %d" % m)
        if math.log(table[m]) / m < h0.lo + epsilon / 8:
            m_anchor = m
            break
    if m_anchor is None:
        raise BudgetExceeded("no subadditivity anchor below length 512")
    A = max(math.log(max(table[r], 1)) for r in range(m_anchor))
    A = max(A, 1e-9)
    n0 = max(m_anchor, math.ceil(8 * A / epsilon), len(mu), 1)
    log_bk = math.log(max(x.count_blocks(k, budget=budget), 1)) if k else 0.0
    log_bn0 = math.log(max(v0.count_blocks(min(n0, cap_m), budget=budget), 1))
    n_proof = max(2 * n0 + 1, len(mu))
    while max(math.log(n_proof), 2 * log_bk, log_bn0) / n_proof >= epsilon / 4:
        n_proof += 1

    checks = []

    def passes(n: int) -> bool:
        v1 = _gap_graph(ctx, v0, n)
        h1 = entropy(v1, budget=budget)
        checks.append({"n": n, "h_hi": h1.hi, "target": h0.lo + epsilon})
        return h1.hi < h0.lo + epsilon

    best = None
    lo_fail = len(mu) - 1
    n = len(mu)
    while n <= n_proof:
        if passes(n):
            best = n
            break
        lo_fail = n
        n = n + 1 if n < len(mu) + 6 else min(max(n + 1, (n * 3) // 2), n_proof)
    if best is None:
        raise ConstructionError("entropy bound not reached at the a priori cap")
    # shrink back to the first passing length inside the last jump
    while best - lo_fail > 1:
        mid = (best + lo_fail) // 2
        if passes(mid):
            best = mid
        else:
            lo_fail = mid
    report = {"anchor_m": m_anchor, "n0": n0, "proof_n": n_proof,
              "entropy_inner": (h0.lo, h0.hi), "checks": checks}
    return (best, report) if with_report else best


# ----------------------------------------------- inner SFT approximation


def _synchronizing_word(d: Presentation, budget: Budget):
    """Shortest-ish word collapsing the determinized state set to a point."""
    from collections import deque

    full = frozenset(d.vertices)
    if len(full) == 1:
        return (), next(iter(full))
    seen = {full: ()}
    queue = deque([full])
    while queue:
        cur = queue.popleft()
        for a in sorted(d.alphabet):
            nxt = frozenset(t for v in cur for (l, t) in d.out_edges(v) if l == a)
            if not nxt or nxt in seen:
                continue
            w = seen[cur] + (a,)
            if len(nxt) == 1:
                return w, next(iter(nxt))
            seen[nxt] = w
            budget.charge_states(1, "synchronizing word search")
            queue.append(nxt)
    raise NoSynchronizingWord("subset tracking never reached a singleton")


def _follow(d: Presentation, state, w: Word):
    for a in w:
        nxt = None
        for l, t in d.out_edges(state):
            if l == a:
                nxt = t
                break
        if nxt is None:
            return None
        state = nxt
    return state


def _stamp_extension(d: Presentation, sync, hy, epsilon: float,
                     budget: Budget):
    """Extend the synchronizing word into a loop stamp.

    The stamp must have self-overlaps of at most half its length, and the
    data language that avoids its long prefix and suffix must keep enough
    entropy: both are checked, the latter by a certified entropy interval,
    and the stamp grows until they hold.
    """
    w, sw = sync
    frontier = [(w, sw)]
    seen_patterns = {}
    for _ in range(4 * len(w) + 40):
        # certified entropy per candidate is the costly part, so only the
        # first few low-overlap words of each length are examined
        probes = 0
        for u, s in frontier:
            m = len(u)
            if m < 2 or max_overlap(u) > m // 2 or probes >= 3:
                continue
            probes += 1
            t0 = (m + 1) // 2
            patterns = tuple(sorted({u[:t0], u[m - t0:]}))
            if patterns not in seen_patterns:
                try:
                    avoid = d.intersect(
                        _avoid_presentation(patterns, d.alphabet),
                        budget=budget)
                    # gate clearance is eps/2, so a loose certificate is fine
                    if entropy_estimate(avoid, budget=budget) <= hy.hi - epsilon / 2:
                        seen_patterns[patterns] = None
                    else:
                        seen_patterns[patterns] = entropy(avoid, 1e-4, budget=budget)
                except EmptyShiftError:
                    seen_patterns[patterns] = None
            ha = seen_patterns[patterns]
            if ha is not None and ha.lo > hy.hi - epsilon / 2:
                return u, s, list(patterns), ha
        nxt = []
        for u, s in frontier:
            for l, t in sorted(d.out_edges(s)):
                nxt.append((u + (l,), t))
        if not nxt:
            break
        nxt.sort(key=lambda it: it[0])
        frontier = nxt[:64]
    raise ConstructionError("no workable extension of the synchronizing word")


def _avoid_presentation(patterns, alphabet):
    """Full shift minus the given patterns, on the subword tracking
    automaton; state count is linear in total pattern length."""
    ac0, delta = _ac_automaton(patterns, alphabet)
    edges = [(s, t, a) for (s, a), t in delta.items() if t is not None]
    return Presentation(sorted(edges), alphabet=alphabet)


def _ac_automaton(patterns, alphabet):
    """Subword tracking automaton; transitions hitting a full pattern map
    to None (dead).  States are pattern prefixes, numbered from 0 = empty."""
    pats = {word(p) for p in patterns}
    index = {(): 0}
    states = [()]
    for p in sorted(pats):
        for i in range(1, len(p) + 1):
            pre = p[:i]
            if pre not in index:
                index[pre] = len(states)
                states.append(pre)
    maxlen = max(len(p) for p in pats)

    def target(pre, a):
        w = pre + (a,)
        for p in pats:
            if len(w) >= len(p) and w[len(w) - len(p):] == p:
                return None
        for L in range(min(len(w), maxlen), -1, -1):
            suf = w[len(w) - L:]
            if suf in index:
                return index[suf]
        return 0

    delta = {}
    for pre, si in index.items():
        for a in alphabet:
            delta[(si, a)] = target(pre, a)
    return 0, delta


def _mu_readable(d: Presentation, mu: Word):
    return {v for v in d.vertices if _follow(d, v, mu) is not None}


def _rose_graph(d: Presentation, mu: Word, s_mu, ac0, delta, readable, L: int):
    """Loop shift: the stamp mu followed by L data symbols that avoid mu's
    long prefix and suffix; returns None when no loop closes."""
    m = len(mu)
    edges = set()
    for i in range(m - 1):
        edges.add((("m", i), ("m", i + 1), mu[i]))
    start = ("d", 0, s_mu, ac0)
    edges.add((("m", m - 1), start, mu[m - 1]))
    frontier = {start}
    closed = False
    for i in range(L):
        last = i == L - 1
        nxt = set()
        for st in frontier:
            _, _, ds, ast = st
            for a, t in sorted(d.out_edges(ds)):
                a2 = delta.get((ast, a))
                if a2 is None:
                    continue
                if last:
                    if t in readable:
                        edges.add((st, ("m", 0), a))
                        closed = True
                else:
                    dst = ("d", i + 1, t, a2)
                    edges.add((st, dst, a))
                    nxt.add(dst)
        frontier = nxt
        if not frontier and not last:
            return None
    if not closed:
        return None
    try:
        return Presentation(sorted(edges, key=repr), alphabet=d.alphabet)
    except EmptyShiftError:
        return None


def inner_sft_approximation(y: Presentation, epsilon: float, *,
                            budget: Budget = None) -> Presentation:
    """An irreducible SFT inside an irreducible sofic shift, with entropy
    within epsilon of the ambient's.

    Shifts of finite type are returned unchanged.  Otherwise the output is
    a rose of marked loops: a low self-overlap synchronizing block mu
    followed by data stretches that avoid mu's long prefix and suffix.
    Occurrences of mu then locate the loop boundaries unambiguously, so
    the parsing is unique and the loop shift is conjugate to a full shift
    on the loop inventory, hence SFT.
    """
    budget = budget or DEFAULT_BUDGET
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    st = y.structure(budget=budget)
    if not st["irreducible"]:
        raise UsageError("ambient shift must be irreducible")
    hy = entropy(y, budget=budget)
    if hy.hi <= 0:
        raise UsageError("ambient shift must have positive entropy")
    try:
        as_sft(y, max_memory=8, budget=budget)
        return y
    except NotSFTError:
        pass
    d = y if y.sft else y.determinize(budget=budget)
    sync = _synchronizing_word(d, budget)
    mu, s_mu, patterns, h_avoid = _stamp_extension(d, sync, hy, epsilon, budget)
    m = len(mu)
    ac0, delta = _ac_automaton(patterns, d.alphabet)
    readable = _mu_readable(d, mu)
    target = hy.hi - epsilon
    # loop long enough that the stamp's zero-rate share is affordable
    L = max(m, 4, math.ceil(m * h_avoid.lo / max(epsilon / 2, 1e-6)))
    for _ in range(24):
        rose = _rose_graph(d, mu, s_mu, ac0, delta, readable, L)
        if rose is not None:
            # certified intervals are costly on large roses: screen first
            if entropy_estimate(rose, budget=budget) <= target:
                L = max(L + 1, (L * 3) // 2)
                continue
            hr = entropy(rose, budget=budget)
            if hr.lo > target:
                if not language_subset(rose, y, budget=budget):
                    raise ConstructionError("rose escaped the ambient language")
                if not rose.structure(budget=budget)["irreducible"]:
                    raise ConstructionError("rose is not irreducible")
                return rose
            L = max(L + 1, (L * 3) // 2)
        else:
            L += 1
    raise ConstructionError("loop length search exhausted below the entropy target")


# ------------------------------------------------------- mixing enlargement


def enlarge_mixing(x: Presentation, pi: BlockMap, w0: Presentation, *,
                   budget: Budget = None, with_certificate: bool = False):
    """Mixing SFT inside x whose image contains w0 yet misses part of the
    channel image.

    A short periodic point of the image avoided by w0 is phase-anchored so
    that a forbidden prefix leads each period; preimage blocks of w0 at
    least as long as that anchored pattern are then spliced with stamped
    junctions.  Every long window of the result contains a long w0-image
    block, so a fixed window of the excluded orbit can never occur: that
    membership check is the properness certificate.
    """
    budget = budget or DEFAULT_BUDGET
    if pi.memory != 0 or pi.anticipation != 0:
        raise UsageError("channel map must be 1-block")
    if w0.is_empty:
        raise EmptyShiftError("image carve-out is empty")
    y = image(x, pi, budget=budget)
    if not language_subset(w0, y, budget=budget):
        raise UsageError("carve-out must sit inside the channel image")
    if language_equal(w0, y, budget=budget):
        raise UsageError("carve-out must be a proper subshift of the image")
    v0 = preimage_sft(x, pi, w0, budget=budget)
    g = x.structure(budget=budget)["gap"]
    if g is None:
        raise UsageError("domain SFT must be mixing")

    excl = None
    for p in range(max(g, 1), max(g, 1) + 8):
        budget.charge_words(len(y.alphabet) ** p, "excluded orbit search")
        for c in necklace_representatives(y.alphabet, p, budget):
            if least_period(c) != p:
                continue
            if _accepts_necklace(y, c) and not _accepts_necklace(w0, c):
                excl = (p, c)
                break
        if excl:
            break
    if excl is None:
        raise NoExcludablePoint("all short periodic orbits of the image lie in the carve-out")
    p, c = excl

    w0d = w0 if w0.sft else w0.determinize(budget=budget)
    anchor = None
    rots = [c[i:] + c[:i] for i in range(p)]
    for kk in range(1, p * (len(w0d.vertices) + 2) + 1):
        for r in rots:
            pref = (r * (kk // p + 1))[:kk]
            if not w0.membership(pref):
                anchor = (kk, r)
                break
        if anchor:
            break
    if anchor is None:
        raise ConstructionError("no forbidden prefix found for the excluded orbit")
    kprime, rot = anchor
    ell_y = p + kprime
    ray = rot * (2 * ell_y // p + 2)
    for j in range(p):
        if w0.membership(ray[j:j + ell_y]):
            raise ConstructionError("an anchored window of the excluded orbit "
                                    "slipped back into the carve-out")

    stamp = find_stamp(x, v0, g, max(16, 2 * ell_y + 2 * g + 8), budget=budget)
    nblk = max(ell_y, len(stamp.word))
    v1, cert_gap = gap_sft(x, v0, stamp, nblk, budget=budget,
                           with_certificate=True)
    w1 = image(v1, pi, budget=budget)
    if not language_subset(w0, w1, budget=budget):
        raise ConstructionError("enlarged image lost part of the carve-out")
    ell_j = len(stamp.word) + 2 * g
    l_win = 2 * ell_j + 2 * ell_y
    window = (rot * (l_win // p + 2))[:l_win]
    if not y.membership(window):
        raise ConstructionError("excluded orbit window left the image language")
    if w1.membership(window):
        raise ConstructionError("excluded orbit window appears in the enlarged image")
    if not with_certificate:
        return v1
    cert = {"excluded_orbit": word_str(rot), "orbit_period": p,
            "forbidden_prefix": kprime, "window_length": l_win,
            "witness_window": word_str(window), "block_min": nblk,
            "stamp": word_str(stamp.word), "gap_certificate": cert_gap}
    return v1, cert


def embed_into_mixing(z: Presentation, epsilon: float, *,
                      budget: Budget = None):
    """A mixing SFT containing z with entropy overshoot below epsilon,
    together with the inclusion map.

    Block approximation gets within epsilon/2; when the approximation is
    not everything, splicing over the full shift with an entropy-
    calibrated block length removes the rest of the overshoot.
    """
    budget = budget or DEFAULT_BUDGET
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    if z.is_empty:
        raise EmptyShiftError("nothing to embed")
    hz = entropy(z, budget=budget)
    full = Presentation.full_shift(z.alphabet)
    iota = BlockMap.identity(z.alphabet)
    zm = None
    for n in range(1, 33):
        cand = z.markov_blocks(n, budget=budget)
        if entropy(cand, budget=budget).hi < hz.lo + epsilon / 2:
            zm = cand
            break
    if zm is None:
        raise BudgetExceeded("block approximation stuck above epsilon/2 for n <= 32")
    if language_equal(zm, full, budget=budget):
        v = full
    else:
        stamp = find_stamp(full, zm, 0, max(8, 2 * n + 6), budget=budget)
        nblk = gap_sft_entropy_bound(full, zm, stamp, epsilon / 2, budget=budget)
        v = gap_sft(full, zm, stamp, nblk, budget=budget)
    if not language_subset(z, v, budget=budget):
        raise ConstructionError("approximation lost the original language")
    hv = entropy(v, budget=budget)
    if not hv.hi < hz.lo + epsilon:
        raise ConstructionError("entropy overshoot exceeds epsilon")
    return v, iota


# ----------------------------------------------------- liftability helpers


def _relabel(v: Presentation, pi: BlockMap) -> Presentation:
    """Push the presentation through a 1-block channel edgewise."""
    edges = [(s, t, pi.lookup((l,))) for (s, t, l) in v.edges]
    return Presentation(edges, alphabet=pi.target_alphabet)


def _closed_word_necklaces(relab: Presentation, n: int, budget: Budget):
    """Least rotations of the length-n label words of closed n-paths.

    Depth first over label words, carrying the start-to-end reachability
    relation of the current prefix; dead relations prune whole subtrees,
    so the walk is output sensitive in readable words, not in paths.
    """
    from .census import _least_rotation
    adj = {}
    for (s, t, l) in relab.edges:
        adj.setdefault(l, {}).setdefault(s, set()).add(t)
    ident = {v: {v} for v in relab.vertices}
    out = set()
    visited = 0
    stack = [((), ident)]
    while stack:
        w, rel = stack.pop()
        visited += 1
        budget.charge_words(visited, "closed word enumeration")
        if len(w) == n:
            if any(s in ts for s, ts in rel.items()):
                out.add(_least_rotation(w))
            continue
        for a, table in adj.items():
            nxt = {}
            for s, ts in rel.items():
                acc = set()
                for t1 in ts:
                    acc |= table.get(t1, frozenset())
                if acc:
                    nxt[s] = acc
            if nxt:
                stack.append((w + (a,), nxt))
    return out


def _liftable_count_n(relab: Presentation, n: int, budget: Budget,
                      faithful: bool = False):
    """Count and list image orbits of least period n with an equal-period
    lift.

    Any cyclic path of length n reading the image labels has a period
    dividing n, and its image forces a multiple of n, so acceptance is
    exactly equal-period liftability.  When the source presentation is
    faithful, the lift's vertex path closes after n steps, so closed-path
    words suffice and every image necklace need not be tested.
    """
    cnt = 0
    wits = []
    if faithful:
        for c in sorted(_closed_word_necklaces(relab, n, budget)):
            if least_period(c) != n:
                continue
            cnt += n
            wits.append(CyclicWord(c))
        return cnt, wits
    for c in necklace_representatives(relab.alphabet, n, budget):
        if least_period(c) != n:
            continue
        if _accepts_necklace(relab, c):
            cnt += n
            wits.append(CyclicWord(c))
    return cnt, wits


def _liftable_restricted(v: Presentation, pi: BlockMap, n_max: int, *,
                         budget: Budget):
    relab = _relabel(v, pi)
    r, wit = {}, {}
    for n in range(1, n_max + 1):
        r[n], wit[n] = _liftable_count_n(relab, n, budget, faithful=v.sft)
    return r, wit


def _adjoin_orbits(base: Presentation, orbits) -> Presentation:
    edges = [(("base", s), ("base", t), l) for (s, t, l) in base.edges]
    for cw in sorted(set(orbits)):
        c = cw.canonical
        for i, a in enumerate(c):
            edges.append((("orb", c, i), ("orb", c, (i + 1) % len(c)), a))
    return Presentation(edges, alphabet=base.alphabet)


# ------------------------------------------------------------ quantitative


@dataclass
class QuantSummary:
    """Carved channel: domain restriction V, image carve-out W, the period
    up to which liftability is preserved, and the verified count table."""

    V: Presentation
    W: Presentation
    N1: int
    epsilon: float
    table: list
    transcript: dict = field(default_factory=dict, repr=False)

    def rows(self):
        return list(self.table)

    def to_doc(self):
        return {"N1": self.N1, "epsilon": self.epsilon, "rows": self.rows(),
                "properness": self.transcript.get("properness"),
                "entropy_W": self.transcript.get("entropy_W"),
                "entropy_Y": self.transcript.get("entropy_Y")}


def _syndetic_carve(y: Presentation, hy, epsilon: float, budget: Budget):
    theta = None
    for length in (1, 2):
        for cand in sorted(y.language_blocks(length, budget=budget)):
            try:
                y.intersect(from_forbidden(y.alphabet, [cand], budget=budget),
                            budget=budget)
            except EmptyShiftError:
                continue
            theta = cand
            break
        if theta:
            break
    if theta is None:
        raise ConstructionError("no avoidable word to carve with")
    g = y.structure(budget=budget)["gap"] or 0
    proof_window = math.ceil(4 * (2 * g + 1) * max(hy.hi, 1e-9) / (epsilon / 2))
    for nw in range(max(2, len(theta) + 1), 65):
        s = syndetic_subshift(y, theta, nw, budget=budget)
        if entropy(s, budget=budget).lo > hy.hi - epsilon / 2:
            return s, {"kind": "syndetic", "theta": word_str(theta),
                       "window": nw, "proof_window": proof_window}
    raise ConstructionError("syndetic window search exhausted")


def quant_summary(x: Presentation, pi: BlockMap, epsilon: float,
                  n0: int = 4, *, budget: Budget = None) -> QuantSummary:
    """Restrict the channel to a proper mixing carve-out W of its image
    that keeps every liftable orbit of period up to N1 and loses at most
    epsilon of entropy; V is the preimage of W.

    The carve starts from a syndetic sub-SFT of the image (or an inner
    SFT approximation when the image is strictly sofic), is spliced into
    a mixing enlargement, and then absorbs the short liftable orbits so
    the r tables of the channel and of its restriction agree up to N1.
    Growth of r beyond N1 is spot checked against the entropy target.
    """
    budget = budget or DEFAULT_BUDGET
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    if pi.memory != 0 or pi.anticipation != 0:
        raise UsageError("channel map must be 1-block")
    y = image(x, pi, budget=budget)
    sty = y.structure(budget=budget)
    if not sty["mixing"]:
        raise UsageError("channel image must be mixing")
    hy = entropy(y, budget=budget)
    try:
        as_sft(y, max_memory=8, budget=budget)
        w0, base_note = _syndetic_carve(y, hy, epsilon, budget)
    except NotSFTError:
        w0 = inner_sft_approximation(y, epsilon / 2, budget=budget)
        base_note = {"kind": "inner_sft"}
    v1, cert = enlarge_mixing(x, pi, w0, budget=budget, with_certificate=True)
    w1 = image(v1, pi, budget=budget)

    n1 = max(1, n0)
    last_err = None
    for _ in range(4):
        n_hi = n1 + 2
        ref = count_liftable(x, pi, n_hi, budget=budget, with_witnesses=False)
        rx, wit = _liftable_restricted(x, pi, n_hi, budget=budget)
        for n in range(1, n_hi + 1):
            if rx[n] != ref.r[n]:
                raise ConstructionError(
                    f"liftability census mismatch between methods at n={n}")
        w = _adjoin_orbits(w1, [cw for n in range(1, n1 + 1) for cw in wit[n]])
        v = preimage_sft(x, pi, w, budget=budget)
        rv, _ = _liftable_restricted(v, pi, n_hi, budget=budget)
        bad_eq = [n for n in range(1, n1 + 1) if rv[n] != ref.r[n]]
        bad_gro = [n for n in range(n1 + 1, n_hi + 1)
                   if not rv[n] > math.exp(n * (hy.hi - epsilon))]
        if not bad_eq and not bad_gro:
            break
        last_err = (bad_eq, bad_gro)
        n1 += 1
    else:
        raise ConstructionError(f"count table verification failed: {last_err}")

    cmp_w = entropy_compare(w, y, budget=budget)
    if cmp_w != "less":
        raise ConstructionError("carved image is not properly smaller than the image")
    hw = entropy(w, budget=budget)
    if not hw.lo > hy.hi - epsilon:
        raise ConstructionError("carved image lost more than epsilon of entropy")
    rows = []
    for n in range(1, n_hi + 1):
        row = {"n": n, "r_channel": ref.r[n], "r_restricted": rv[n]}
        if n > n1:
            row["growth_floor"] = math.exp(n * (hy.hi - epsilon))
        rows.append(row)
    transcript = {"base": base_note, "enlarge": cert,
                  "properness": {"entropy_order": cmp_w,
                                 "witness_window": cert["witness_window"]},
                  "entropy_Y": (hy.lo, hy.hi), "entropy_W": (hw.lo, hw.hi)}
    return QuantSummary(V=v, W=w, N1=n1, epsilon=epsilon, table=rows,
                        transcript=transcript)


# --------------------------------------------------------- parameter packs


@dataclass
class ParameterPack:
    """Everything the marker stage needs: the block scale N, the restricted
    channel domain V and image carve-out W, a stamp for W inside the image,
    and the junction length ell."""

    N: int
    V: Presentation
    W: Presentation
    stamp: Stamp
    ell: int
    report: dict = field(default_factory=dict, repr=False)

    def __iter__(self):
        return iter((self.N, self.V, self.W, self.stamp, self.ell))

    def to_doc(self):
        return {"N": self.N, "ell": self.ell,
                "stamp": word_str(self.stamp.word),
                "report": {k: v for k, v in self.report.items()
                           if k not in ("decision",)}}


def _counting_scale(z: Presentation, v: Presentation, w: Presentation,
                    pi: BlockMap, ell: int, mu_len: int, budget: Budget,
                    n_cap: int = 40):
    """First block scale N making both counting inequalities hold:
    q_n(z) <= r_n(restricted channel) for n < N, and
    |B_n(z)| <= |B_(n-ell)(w)| for N <= n <= 2N + ell.

    Returns (N, tables) or None.  Periodic counts for strictly sofic z are
    capped at period 14 by enumeration cost, which caps N as well.
    """
    periodic_reach = n_cap if z.sft else 14
    if z.sft:
        qz = count_periodic_sft(z, periodic_reach, budget=budget).q
    else:
        qz = count_periodic_sofic(z, periodic_reach, budget=budget).q
    zb = z.count_blocks_table(2 * n_cap + ell + 1, budget=budget)
    wb = w.count_blocks_table(2 * n_cap + 1, budget=budget)

    # symbolwise section: when some right inverse of the symbol map carries
    # w into v, every w-orbit lifts with equal least period, so the
    # restricted r table IS the periodic census of w
    sec = {}
    for key, ysym in sorted(pi.table.items()):
        sec.setdefault(ysym, key[0])
    qw_fast = None
    try:
        wd = w if w.sft else w.determinize(budget=budget)
        lifted = Presentation([(s, t, sec[l]) for (s, t, l) in w.edges],
                              alphabet=v.alphabet)
        if wd.sft and language_subset(lifted, v, budget=budget):
            qw_fast = count_periodic_sft(wd, periodic_reach, budget=budget).q
    except (KeyError, EmptyShiftError, BudgetExceeded):
        pass
    relab = _relabel(v, pi)
    rv_cache = {}

    def rv(n: int) -> int:
        if qw_fast is not None:
            return qw_fast[n]
        if n not in rv_cache:
            rv_cache[n] = _liftable_count_n(relab, n, budget,
                                            faithful=v.sft)[0]
        return rv_cache[n]

    n_min = mu_len + ell
    for n_scale in range(n_min, min(n_cap, periodic_reach + 1) + 1):
        if any(zb[n] > wb[n - ell]
               for n in range(n_scale, 2 * n_scale + ell + 1)):
            continue
        per_rows = []
        ok = True
        for n in range(1, n_scale):
            if qz[n] == 0:
                per_rows.append((n, 0, None))
                continue
            if n > 20 and qw_fast is None:
                # enumeration-backed periodic checks stop paying off here
                ok = False
                break
            r = rv(n)
            per_rows.append((n, qz[n], r))
            if qz[n] > r:
                ok = False
                break
        if not ok:
            # a periodic violation below this scale also breaks every
            # larger scale, so the candidate is dead
            return None
        blk_rows = [(n, zb[n], wb[n - ell])
                    for n in range(n_scale, 2 * n_scale + ell + 1)]
        return n_scale, {"periodic": per_rows, "blocks": blk_rows}
    return None


def custom_W(x: Presentation, pi: BlockMap, z: Presentation, *,
             budget: Budget = None, decision=None) -> ParameterPack:
    """Counting parameters for the embedding of z through the channel:
    a proper image carve-out W with a stamp, its preimage V, and a block
    scale N at which the periodic and block inequalities are verified.

    One-word carve-outs of the image are tried first, smallest aperiodic
    word first; if none supports the counting, an entropy-calibrated
    carve via the quantitative summary is used as a fallback.
    """
    budget = budget or DEFAULT_BUDGET
    rep = decision if decision is not None else decide_embeddable(
        x, pi, z, budget=budget)
    if rep.verdict != "Embeddable":
        raise UsageError(f"channel embedding is {rep.verdict}; "
                         "no parameters to search for")
    # the structure gap is presentation dependent and feeds straight into
    # the window length, so shrink the graph before reading it off
    xm = x.minimal(budget=budget)
    if len(xm.vertices) < len(x.vertices) and xm.sft:
        x = xm
    y = image(x, pi, budget=budget)
    g = x.structure(budget=budget)["gap"]
    tried = []
    for wlen in range(3, 7):
        for w0w in sorted(y.language_blocks(wlen, budget=budget)):
            if least_period(w0w) != wlen:
                continue
            try:
                wc = y.intersect(from_forbidden(y.alphabet, [w0w], budget=budget),
                                 budget=budget)
            except EmptyShiftError:
                continue
            if entropy_compare(z, wc, budget=budget) != "less":
                tried.append((word_str(w0w), "entropy"))
                continue
            try:
                stamp = find_stamp(y, wc, g, wlen + 2 * g + 6, budget=budget)
            except ConstructionError:
                tried.append((word_str(w0w), "stamp"))
                continue
            ell = len(stamp.word) + 2 * g
            vc = preimage_sft(x, pi, wc, budget=budget)
            got = _counting_scale(z, vc, wc, pi, ell, len(stamp.word), budget)
            if got is None:
                tried.append((word_str(w0w), "counting"))
                continue
            n_scale, tables = got
            report = {"carve": word_str(w0w), "counts": tables,
                      "block_range_checked": [n_scale, 2 * n_scale + ell],
                      "tried": tried, "decision": rep}
            return ParameterPack(N=n_scale, V=vc, W=wc, stamp=stamp, ell=ell,
                                 report=report)
        # only the smallest workable word length is scanned exhaustively;
        # longer words explode the carve count without helping
        if wlen >= 4 and tried:
            break
    hz = entropy(z, budget=budget)
    hy = entropy(y, budget=budget)
    eps = (hy.lo - hz.hi) / 2
    if eps <= 0:
        raise ParameterSearchExhausted(
            "entropy margin too thin for the fallback carve")
    qs = quant_summary(x, pi, min(eps, 0.5), budget=budget)
    stamp = find_stamp(y, qs.W, g, 2 * g + 16, budget=budget)
    ell = len(stamp.word) + 2 * g
    got = _counting_scale(z, qs.V, qs.W, pi, ell, len(stamp.word), budget)
    if got is None:
        raise ParameterSearchExhausted(
            "no block scale satisfied the counting inequalities")
    n_scale, tables = got
    report = {"carve": "quantitative", "counts": tables,
              "block_range_checked": [n_scale, 2 * n_scale + ell],
              "tried": tried, "decision": rep}
    return ParameterPack(N=n_scale, V=qs.V, W=qs.W, stamp=stamp, ell=ell,
                         report=report)
