"""Sliding block codes: application, composition, recoding, images,
preimages, and the pair-graph decision procedures for injectivity and
finite-to-one.
"""

from __future__ import annotations

from collections import namedtuple

from .errors import (
    Budget,
    DEFAULT_BUDGET,
    EmptyShiftError,
    NoPreimageError,
    NotSFTError,
    ShiftCodecError,
    UndefinedWindow,
    UsageError,
    WindowTooShort,
)
from .shifts import Presentation, Word, word, word_str


class BlockMap:
    """A sliding block code with memory m and anticipation a.

    The table maps (m+a+1)-windows of the domain language to target symbols.
    Large-window codes may be backed by a function instead of a dict; lookups
    are memoized, and such maps serialize only after materialization.
    """

    __slots__ = ("source_alphabet", "target_alphabet", "memory",
                 "anticipation", "table", "fn", "name")

    def __init__(self, source_alphabet, target_alphabet, memory, anticipation,
                 table=None, fn=None, name=""):
        if memory < 0 or anticipation < 0:
            raise UsageError("memory and anticipation must be >= 0")
        if table is None and fn is None:
            raise UsageError("a block map needs a table or a function")
        self.source_alphabet = tuple(sorted(set(source_alphabet)))
        self.target_alphabet = tuple(sorted(set(target_alphabet)))
        self.memory = memory
        self.anticipation = anticipation
        self.table = {word(k): v for k, v in (table or {}).items()}
        self.fn = fn
        self.name = name
        for k, v in self.table.items():
            if len(k) != self.window:
                raise UsageError(f"table window {word_str(k)} has wrong length")
            if v not in self.target_alphabet:
                raise UsageError(f"table output {v} not in target alphabet")

    @property
    def window(self) -> int:
        return self.memory + self.anticipation + 1

    @classmethod
    def identity(cls, alphabet) -> "BlockMap":
        return cls(alphabet, alphabet, 0, 0,
                   table={(a,): a for a in alphabet}, name="id")

    @classmethod
    def one_block(cls, mapping: dict, name="") -> "BlockMap":
        """Symbol-to-symbol map given as a plain dict."""
        return cls(mapping.keys(), mapping.values(), 0, 0,
                   table={(k,): v for k, v in mapping.items()}, name=name)

    def lookup(self, w: Word) -> str:
        w = word(w)
        if len(w) != self.window:
            raise WindowTooShort(
                f"window length {len(w)}, code expects {self.window}")
        if w in self.table:
            return self.table[w]
        if self.fn is not None:
            out = self.fn(w)
            if out not in self.target_alphabet:
                raise ShiftCodecError(
                    f"function-backed code emitted {out!r} outside target alphabet")
            self.table[w] = out
            return out
        raise UndefinedWindow(f"window {word_str(w)} not in the code's domain")

    def apply(self, w) -> Word:
        """Windowwise application; output shrinks by memory + anticipation."""
        w = word(w)
        k = self.window
        if len(w) < k:
            raise WindowTooShort(
                f"need at least {k} symbols, got {len(w)}")
        return tuple(self.lookup(w[i:i + k]) for i in range(len(w) - k + 1))

    def apply_cyclic(self, w) -> Word:
        """Apply to w read as a necklace: output has the same length."""
        w = word(w)
        if not w:
            raise UsageError("empty cyclic word")
        ext = w * ((self.window // len(w)) + 2)
        n = len(w)
        k = self.window
        return tuple(self.lookup(ext[i:i + k]) for i in range(n))

    def compose(self, inner: "BlockMap") -> "BlockMap":
        """self after inner: apply(self.compose(g), w) = apply(self, apply(g, w))."""
        if set(inner.target_alphabet) - set(self.source_alphabet):
            raise UsageError("alphabet mismatch in composition")
        outer = self

        def fn(w):
            mid = inner.apply(w)
            return outer.lookup(mid)

        return BlockMap(
            inner.source_alphabet,
            self.target_alphabet,
            self.memory + inner.memory,
            self.anticipation + inner.anticipation,
            fn=fn,
            name=f"{self.name or 'f'}.{inner.name or 'g'}",
        )

    def materialize(self, windows) -> "BlockMap":
        """Evaluate the map on every given window and return a table-only copy."""
        table = {}
        for w in windows:
            w = word(w)
            table[w] = self.lookup(w)
        return BlockMap(self.source_alphabet, self.target_alphabet,
                        self.memory, self.anticipation, table=table,
                        name=self.name)

    def is_one_block(self) -> bool:
        return self.window == 1

    def __repr__(self):
        kind = "fn" if self.fn is not None else f"{len(self.table)} entries"
        return (f"BlockMap({self.name or 'anon'}: m={self.memory}, "
                f"a={self.anticipation}, {kind})")

    def to_doc(self) -> dict:
        if self.fn is not None:
            raise UsageError("materialize a function-backed code before serializing")
        return {
            "source_alphabet": list(self.source_alphabet),
            "target_alphabet": list(self.target_alphabet),
            "memory": self.memory,
            "anticipation": self.anticipation,
            "table": sorted(
                ({"window": list(k), "output": v} for k, v in self.table.items()),
                key=lambda e: e["window"],
            ),
        }

    @classmethod
    def from_doc(cls, doc) -> "BlockMap":
        try:
            return cls(
                doc["source_alphabet"],
                doc["target_alphabet"],
                doc["memory"],
                doc["anticipation"],
                table={word(e["window"]): e["output"] for e in doc["table"]},
            )
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed block map document: {exc}") from exc


def apply(c: BlockMap, w) -> Word:
    return c.apply(w)


def compose(f: BlockMap, g: BlockMap) -> BlockMap:
    return f.compose(g)


Recoded = namedtuple("Recoded", "presentation code encode decode")


def recode_one_block(x: Presentation, c: BlockMap, *, budget: Budget = None) -> Recoded:
    """Conjugate x to a higher block shift on which c becomes 1-block.

    Returns (x', c', encode, decode) with c = c' after encode, exactly:
    both sides have the same memory/anticipation and agree on every window.
    """
    if c.is_one_block():
        ident = BlockMap.identity(x.alphabet)
        return Recoded(x, c, ident, ident)
    k = c.window
    xk, enc, dec = x.higher_block(k, memory=c.memory)
    budget = budget or DEFAULT_BUDGET
    table = {}
    for sym_word, sym in enc.table.items():
        table[(sym,)] = c.lookup(sym_word)
    c1 = BlockMap(xk.alphabet, c.target_alphabet, 0, 0, table=table,
                  name=f"{c.name or 'c'}'")
    return Recoded(xk, c1, enc, dec)


def image(x: Presentation, c: BlockMap, *, budget: Budget = None) -> Presentation:
    """Presentation of the image shift (relabel after recoding to 1-block)."""
    if x.is_empty:
        return Presentation.empty(c.target_alphabet)
    xk, c1, _, _ = recode_one_block(x, c, budget=budget)
    edges = [(s, t, c1.lookup((l,))) for (s, t, l) in xk.edges]
    return Presentation(edges, alphabet=c.target_alphabet)


def preimage_sft(x: Presentation, c: BlockMap, w: Presentation, *,
                 budget: Budget = None, max_memory: int = 10) -> Presentation:
    """Presentation of the preimage of w's shift under the 1-block code c.

    Product of x with a determinized presentation of w, matched on image
    labels but keeping x's labels.  A faithful de Bruijn form is returned
    when a small-memory one verifies; otherwise the product itself.
    """
    if not c.is_one_block():
        raise UsageError("preimage needs a 1-block code; recode first")
    if x.is_empty or w.is_empty:
        raise EmptyShiftError("preimage over an empty shift")
    wd = w.determinize(budget=budget)
    by_label = {}
    for s, t, l in wd.edges:
        by_label.setdefault(l, []).append((s, t))
    edges = []
    for s, t, l in x.edges:
        for s2, t2 in by_label.get(c.lookup((l,)), ()):
            edges.append(((s, s2), (t, t2), l))
    prod = Presentation(edges, alphabet=x.alphabet)
    if prod.sft:
        return prod
    from .shifts import as_sft

    try:
        faithful, _ = as_sft(prod, max_memory=max_memory, budget=budget)
        return faithful
    except (NotSFTError, Exception):
        return prod


def _pair_graph(x: Presentation, c1: BlockMap):
    """Pair graph for a 1-block code: edges are pairs of x-edges with equal
    image labels; returns (vertices, edges) of the essential part."""
    pair_edges = []
    img = {l: c1.lookup((l,)) for l in {e[2] for e in x.edges}}
    for (s1, t1, l1) in x.edges:
        for (s2, t2, l2) in x.edges:
            if img[l1] != img[l2]:
                continue
            pair_edges.append(((s1, s2), (t1, t2), (l1, l2)))
    verts = {p for p, _, _ in pair_edges} | {q for _, q, _ in pair_edges}
    while True:
        outd = {v: 0 for v in verts}
        ind = {v: 0 for v in verts}
        for p, q, _ in pair_edges:
            outd[p] += 1
            ind[q] += 1
        bad = {v for v in verts if outd[v] == 0 or ind[v] == 0}
        if not bad:
            break
        verts -= bad
        pair_edges = [(p, q, ll) for (p, q, ll) in pair_edges
                      if p in verts and q in verts]
    return verts, pair_edges


def check_injective(x: Presentation, c: BlockMap, *, budget: Budget = None) -> dict:
    """Decide injectivity of the code on the shift presented by x.

    Requires a faithful presentation (labels determine paths) so that the
    pair graph decides point-level injectivity.  The witness, when present,
    is a pair of distinct periodic words with equal image.
    """
    if not x.sft:
        raise NotSFTError("injectivity check needs a faithful SFT presentation")
    if x.is_empty:
        return {"injective": True, "witness": None}
    xk, c1, _, dec = recode_one_block(x, c, budget=budget)
    verts, pedges = _pair_graph(xk, c1)
    offdiag = sorted((v for v in verts if v[0] != v[1]),
                     key=lambda v: repr(v))
    unequal_diag = [e for e in pedges if e[0][0] == e[0][1]
                    and e[1][0] == e[1][1] and e[2][0] != e[2][1]]
    if not offdiag and not unequal_diag:
        return {"injective": True, "witness": None}
    # shortest cycle through an off-diagonal vertex (or an unequal diagonal
    # edge, which only appears when the input was not faithful after all)
    adj = {}
    for p, q, ll in pedges:
        adj.setdefault(p, []).append((q, ll))
    best = None
    for src in offdiag:
        cyc = _shortest_cycle(adj, src)
        if cyc and (best is None or len(cyc) < len(best)):
            best = cyc
    if best is None and unequal_diag:
        p, q, ll = unequal_diag[0]
        cyc = _shortest_path(adj, q, p)
        if cyc is not None:
            best = [(p, q, ll)] + cyc
    w1 = tuple(ll[0] for _, _, ll in best)
    w2 = tuple(ll[1] for _, _, ll in best)
    # translate back to the original alphabet when the code was recoded
    if dec.window == 1 and xk is not x:
        w1 = tuple(dec.lookup((a,)) for a in w1)
        w2 = tuple(dec.lookup((a,)) for a in w2)
    return {"injective": False, "witness": (w1, w2)}


def _shortest_cycle(adj, src):
    """Shortest pair-graph cycle src -> src as a list of edges (BFS)."""
    from collections import deque

    prev = {src: None}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for t, ll in adj.get(v, ()):
            if t == src:
                path = [(v, t, ll)]
                while prev[v] is not None:
                    pv, pll = prev[v]
                    path.append((pv, v, pll))
                    v = pv
                path.reverse()
                return path
            if t not in prev:
                prev[t] = (v, ll)
                queue.append(t)
    return None


def _shortest_path(adj, src, dst):
    from collections import deque

    if src == dst:
        return []
    prev = {src: None}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for t, ll in adj.get(v, ()):
            if t not in prev:
                prev[t] = (v, ll)
                if t == dst:
                    path = []
                    while prev[t] is not None:
                        pv, pll = prev[t]
                        path.append((pv, t, pll))
                        t = pv
                    path.reverse()
                    return path
                queue.append(t)
    return None


def check_finite_to_one(x: Presentation, c: BlockMap, *, budget: Budget = None) -> bool:
    """True iff the code is finite-to-one on the presented SFT.

    Standard no-diamond criterion: no pair of distinct equal-image paths
    sharing both endpoints, i.e. no unequal pair-graph edge on a path from
    the diagonal back to the diagonal.
    """
    if not x.sft:
        raise NotSFTError("finite-to-one check needs a faithful SFT presentation")
    if x.is_empty:
        return True
    xk, c1, _, _ = recode_one_block(x, c, budget=budget)
    # the diamond criterion needs the full pair graph, not just its
    # essential part: diamonds are finite path segments
    img = {l: c1.lookup((l,)) for l in {e[2] for e in xk.edges}}
    pedges = []
    for (s1, t1, l1) in xk.edges:
        for (s2, t2, l2) in xk.edges:
            if img[l1] == img[l2]:
                pedges.append(((s1, s2), (t1, t2), l1 != l2))
    diag = {(v, v) for v in xk.vertices}
    fwd = set(diag)
    changed = True
    adj = {}
    radj = {}
    for p, q, u in pedges:
        adj.setdefault(p, []).append(q)
        radj.setdefault(q, []).append(p)
    stack = list(diag)
    while stack:
        v = stack.pop()
        for t in adj.get(v, ()):
            if t not in fwd:
                fwd.add(t)
                stack.append(t)
    bwd = set(diag)
    stack = list(diag)
    while stack:
        v = stack.pop()
        for t in radj.get(v, ()):
            if t not in bwd:
                bwd.add(t)
                stack.append(t)
    for p, q, unequal in pedges:
        if unequal and p in fwd and q in bwd:
            return False
    return True


def lift_word(x: Presentation, c: BlockMap, w, *, budget: Budget = None) -> Word:
    """Lexicographically least preimage of w under a 1-block code.

    Backward feasibility sets make the greedy forward choice safe.
    """
    if not c.is_one_block():
        raise UsageError("lift_word needs a 1-block code; recode first")
    w = word(w)
    if not w:
        return ()
    fibers = {}
    for l in {e[2] for e in x.edges}:
        fibers.setdefault(c.lookup((l,)), set()).add(l)
    n = len(w)
    feas = [None] * (n + 1)
    feas[n] = set(x.vertices)
    for i in range(n - 1, -1, -1):
        allowed = fibers.get(w[i], ())
        feas[i] = {s for (s, t, l) in x.edges if l in allowed and t in feas[i + 1]}
        if not feas[i]:
            raise NoPreimageError(f"no preimage of {word_str(w)} at position {i}")
    out = []
    cur = feas[0]
    for i in range(n):
        allowed = fibers.get(w[i], ())
        options = sorted(
            {l for (s, t, l) in x.edges
             if s in cur and l in allowed and t in feas[i + 1]})
        a = options[0]
        out.append(a)
        cur = {t for (s, t, l) in x.edges if s in cur and l == a and t in feas[i + 1]}
    return tuple(out)


def lift_orbit(x: Presentation, c: BlockMap, y, *, budget: Budget = None):
    """A canonical equal-least-period preimage orbit of the necklace y.

    Searches x-cycles whose image, aligned at y's canonical rotation, equals
    y and whose own least period is the full length.  Raises NoPreimageError
    when none exists, which certifies that y carries no equal-period lift.
    """
    from .census import CyclicWord, least_period

    if not c.is_one_block():
        raise UsageError("lift_orbit needs a 1-block code; recode first")
    if isinstance(y, CyclicWord):
        yw = y.canonical
    else:
        yw = CyclicWord(word(y)).canonical
    n = len(yw)
    if least_period(yw) != n:
        raise UsageError("lift_orbit expects a necklace given at full least period")
    # product with the cyclic phase automaton
    states = [(v, p) for v in x.vertices for p in range(n)]
    adj = {st: [] for st in states}
    for (s, t, l) in x.edges:
        for p in range(n):
            if c.lookup((l,)) == yw[p]:
                adj[(s, p)].append(((t, (p + 1) % n), l))
    for st in adj:
        adj[st].sort(key=lambda e: (e[1], repr(e[0])))
    # backward feasibility: can reach (start, 0) from state in exactly r steps
    budget = budget or DEFAULT_BUDGET
    best = None
    for start in sorted(x.vertices, key=repr):
        target = (start, 0)
        reach = [set() for _ in range(n + 1)]
        reach[0] = {target}
        for r in range(1, n + 1):
            for st in states:
                if any(t in reach[r - 1] for t, _ in adj[st]):
                    reach[r].add(st)
        if target not in reach[n]:
            continue
        found = _lex_cycles(adj, target, reach, n, budget)
        for cand in found:
            if least_period(cand) == n:
                if best is None or cand < best:
                    best = cand
                break
    if best is None:
        raise NoPreimageError(
            f"no equal-least-period preimage of necklace {word_str(yw)}")
    return CyclicWord(best)


def _lex_cycles(adj, start, reach, n, budget):
    """Yield label words of length-n cycles start -> start in lex order."""
    out_count = 0
    stack = [(start, ())]
    while stack:
        st, acc = stack.pop()
        depth = len(acc)
        if depth == n:
            if st == start:
                yield acc
                out_count += 1
                budget.charge_words(out_count, "orbit lift enumeration")
            continue
        rem = n - depth - 1
        nxt = [(t, l) for (t, l) in adj[st] if t in reach[rem]]
        for t, l in reversed(nxt):
            stack.append((t, acc + (l,)))
