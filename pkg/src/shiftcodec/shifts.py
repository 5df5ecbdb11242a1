"""Labeled-graph presentations of subshifts and the structural operations on them.

A subshift is presented by a finite labeled directed multigraph: the shift is
the set of bi-infinite label sequences along bi-infinite paths.  When the
labeling is faithful (reading labels recovers the path), the presentation is
flagged ``sft`` and the shift is the edge shift in disguise, hence a 1-step
SFT up to the vertex memory.

Words are tuples of symbol strings.  Symbols may be multi-character (higher
block alphabets), so words are never plain strings internally.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Optional

from .errors import (
    Budget,
    DEFAULT_BUDGET,
    EmptyShiftError,
    NotSFTError,
    ShiftCodecError,
    UsageError,
)

Word = tuple  # tuple of symbol strings


def word(symbols: Iterable[str]) -> Word:
    """Normalize an iterable of symbols (or a plain string) to a Word.

    A plain string is split into single-character symbols, which is the
    convenient form for tests and CLI input.
    """
    if isinstance(symbols, str):
        return tuple(symbols)
    return tuple(symbols)


def word_str(w: Word) -> str:
    """Render a word for humans; multi-char symbols get | separators."""
    if any(len(s) != 1 for s in w):
        return "|".join(w)
    return "".join(w)


def _stname(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, tuple):
        return "(" + ",".join(_stname(x) for x in v) + ")"
    return repr(v)


class Presentation:
    """A finite labeled graph presenting a subshift.

    Construction trims eagerly to the essential subgraph (every vertex with
    in- and out-degree >= 1).  An empty essential graph raises EmptyShiftError
    unless the presentation was built by Presentation.empty().
    """

    __slots__ = (
        "vertices",
        "edges",
        "alphabet",
        "sft",
        "is_empty",
        "_out",
        "_in",
        "_cache",
    )

    def __init__(self, edges, alphabet=None, sft: Optional[bool] = None,
                 _empty_alphabet=None):
        if _empty_alphabet is not None:
            self.vertices = ()
            self.edges = ()
            self.alphabet = tuple(sorted(_empty_alphabet))
            self.sft = True
            self.is_empty = True
            self._out = {}
            self._in = {}
            self._cache = {}
            return
        edges = [(s, t, lab) for (s, t, lab) in edges]
        verts = {s for s, _, _ in edges} | {t for _, t, _ in edges}
        # iterate trimming to the essential subgraph
        while True:
            outdeg = {v: 0 for v in verts}
            indeg = {v: 0 for v in verts}
            for s, t, _ in edges:
                outdeg[s] += 1
                indeg[t] += 1
            bad = {v for v in verts if outdeg[v] == 0 or indeg[v] == 0}
            if not bad:
                break
            verts -= bad
            edges = [(s, t, l) for (s, t, l) in edges if s in verts and t in verts]
        if not edges:
            raise EmptyShiftError("no bi-infinite path survives trimming")
        self.is_empty = False
        self.vertices = tuple(sorted(verts, key=_stname))
        self.edges = tuple(sorted(edges, key=lambda e: (_stname(e[0]), e[2], _stname(e[1]))))
        labs = sorted({l for _, _, l in self.edges})
        if alphabet is None:
            self.alphabet = tuple(labs)
        else:
            alphabet = tuple(alphabet)
            if len(set(alphabet)) != len(alphabet):
                raise UsageError("alphabet has duplicate symbols")
            missing = set(labs) - set(alphabet)
            if missing:
                raise UsageError(f"edge labels {sorted(missing)} not in declared alphabet")
            self.alphabet = tuple(sorted(alphabet))
        self._out = {v: [] for v in self.vertices}
        self._in = {v: [] for v in self.vertices}
        for s, t, l in self.edges:
            self._out[s].append((l, t))
            self._in[t].append((l, s))
        self._cache = {}
        self.sft = self._label_faithful() if sft is None else bool(sft)

    # -- constructors ---------------------------------------------------

    @classmethod
    def empty(cls, alphabet) -> "Presentation":
        return cls((), _empty_alphabet=tuple(alphabet))

    @classmethod
    def full_shift(cls, alphabet) -> "Presentation":
        """Full shift: one vertex, one loop per symbol."""
        alphabet = tuple(alphabet)
        if not alphabet:
            raise UsageError("alphabet must be nonempty")
        return cls([("q", "q", a) for a in alphabet], alphabet=alphabet, sft=True)

    @classmethod
    def from_forbidden(cls, alphabet, forbidden, *, budget: Budget = None) -> "Presentation":
        """De Bruijn style SFT presentation forbidding the given words.

        The result is flagged sft: label sequences determine the vertex
        sequence, because vertices are sliding windows of the labels.
        """
        budget = budget or DEFAULT_BUDGET
        alphabet = tuple(sorted(set(alphabet)))
        if not alphabet:
            raise UsageError("alphabet must be nonempty")
        forbidden = [word(f) for f in forbidden]
        for f in forbidden:
            if any(a not in alphabet for a in f):
                raise UsageError(f"forbidden word {word_str(f)} leaves the alphabet")
        if any(len(f) == 0 for f in forbidden):
            raise EmptyShiftError("empty word forbidden: no points remain")
        fset = set(forbidden)
        k = max((len(f) for f in forbidden), default=1)
        m = max(k - 1, 1)
        budget.charge_words(len(alphabet) ** m, "from_forbidden vertex set")

        def clean(w):
            return not any(w[i:i + len(f)] == f for f in fset for i in range(len(w) - len(f) + 1))

        verts = [w for w in itertools.product(alphabet, repeat=m) if clean(w)]
        edges = []
        for v in verts:
            for a in alphabet:
                nxt = v + (a,)
                if clean(nxt):
                    edges.append((v, nxt[1:], a))
        return cls(edges, alphabet=alphabet, sft=True)

    # -- basic structure -------------------------------------------------

    def __eq__(self, other):
        return (isinstance(other, Presentation)
                and self.vertices == other.vertices
                and self.edges == other.edges
                and self.alphabet == other.alphabet)

    def __hash__(self):
        return hash((self.vertices, self.edges, self.alphabet))

    def __repr__(self):
        if self.is_empty:
            return f"Presentation.empty(alphabet={self.alphabet})"
        return (f"Presentation({len(self.vertices)} vertices, "
                f"{len(self.edges)} edges, sft={self.sft})")

    def out_edges(self, v):
        return self._out[v]

    def in_edges(self, v):
        return self._in[v]

    def _label_faithful(self) -> bool:
        """True iff the label map is injective on bi-infinite paths.

        Two distinct bi-infinite paths share a label sequence iff the
        essential pair graph keeps an off-diagonal vertex, or keeps a
        parallel pair of distinct equally-labeled edges between diagonal
        vertices.
        """
        if self.is_empty:
            return True
        pair_edges = []
        for i, (s1, t1, l1) in enumerate(self.edges):
            for j, (s2, t2, l2) in enumerate(self.edges):
                if l1 != l2:
                    continue
                pair_edges.append(((s1, s2), (t1, t2), i != j))
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
            pair_edges = [(p, q, u) for (p, q, u) in pair_edges if p in verts and q in verts]
        for (a, b) in verts:
            if a != b:
                return False
        for _, _, unequal in pair_edges:
            if unequal:
                return False
        return True

    # -- language --------------------------------------------------------

    def membership(self, w: Word) -> bool:
        """True iff w appears in the presented shift."""
        w = word(w)
        if self.is_empty:
            return False
        if any(a not in set(self.alphabet) for a in w):
            return False
        reach = set(self.vertices)
        for a in w:
            nxt = set()
            for v in reach:
                for l, t in self._out[v]:
                    if l == a:
                        nxt.add(t)
            if not nxt:
                return False
            reach = nxt
        return True

    def language_blocks(self, n: int, *, budget: Budget = None) -> set:
        """The set of length-n words of the shift."""
        budget = budget or DEFAULT_BUDGET
        if self.is_empty:
            return set()
        if n == 0:
            return {()}
        # frontier: word -> set of possible end vertices
        frontier = {(): set(self.vertices)}
        for _ in range(n):
            nxt = {}
            for w, ends in frontier.items():
                for v in ends:
                    for l, t in self._out[v]:
                        nxt.setdefault(w + (l,), set()).add(t)
            budget.charge_words(len(nxt), "language_blocks")
            frontier = nxt
        return set(frontier)

    def count_blocks(self, n: int, *, budget: Budget = None) -> int:
        """Exact number of length-n words, via the determinized word automaton."""
        if self.is_empty:
            return 0
        if n == 0:
            return 1
        init, delta = self._word_automaton(budget)
        counts = {init: 1}
        for _ in range(n):
            nxt = {}
            for st, c in counts.items():
                for _, t in delta[st]:
                    nxt[t] = nxt.get(t, 0) + c
            counts = nxt
            if not counts:
                return 0
        return sum(counts.values())

    def count_blocks_table(self, n_max: int, *, budget: Budget = None) -> list:
        """[|B_0|, |B_1|, ..., |B_n_max|] in one DP sweep."""
        if self.is_empty:
            return [0] * (n_max + 1)
        init, delta = self._word_automaton(budget)
        out = [1]
        counts = {init: 1}
        for _ in range(n_max):
            nxt = {}
            for st, c in counts.items():
                for _, t in delta[st]:
                    nxt[t] = nxt.get(t, 0) + c
            counts = nxt
            out.append(sum(counts.values()))
        return out

    def _word_automaton(self, budget: Budget = None):
        """Subset automaton from the full vertex set.

        Returns (initial state, delta) with delta[state] = sorted list of
        (label, state).  Accepts exactly the language; deterministic, so
        counting paths counts words.
        """
        if "wauto" in self._cache:
            return self._cache["wauto"]
        budget = budget or DEFAULT_BUDGET
        init = frozenset(self.vertices)
        delta = {}
        stack = [init]
        while stack:
            st = stack.pop()
            if st in delta:
                continue
            budget.charge_states(len(delta) + 1, "subset construction")
            moves = {}
            for v in st:
                for l, t in self._out[v]:
                    moves.setdefault(l, set()).add(t)
            delta[st] = sorted(((l, frozenset(ts)) for l, ts in moves.items()),
            # label order fixes determinism of everything downstream
                               key=lambda p: p[0])
            for _, t in delta[st]:
                if t not in delta:
                    stack.append(t)
        self._cache["wauto"] = (init, delta)
        return init, delta

    def determinize(self, *, budget: Budget = None) -> "Presentation":
        """Right-resolving presentation of the same sofic shift.

        Builds the subset automaton from the full vertex set, essentializes
        it, then keeps the smallest strongly connected component that still
        presents the full language (the minimal component exists for
        irreducible inputs).
        """
        if "determinized" in self._cache:
            return self._cache["determinized"]
        if self.is_empty:
            return self
        if self._is_right_resolving() and self.sft:
            self._cache["determinized"] = self
            return self
        init, delta = self._word_automaton(budget)
        edges = []
        for st, moves in delta.items():
            for l, t in moves:
                edges.append((st, t, l))
        det = Presentation(
            [( _subset_name(s), _subset_name(t), l) for s, t, l in edges],
            alphabet=self.alphabet,
        )
        det = det._select_language_component(self)
        self._cache["determinized"] = det
        return det

    def minimal(self, *, budget: Budget = None) -> "Presentation":
        """Merge right-equivalent vertices of the determinized presentation.

        Partition refinement on follower sets.  For an irreducible input
        this reaches the unique minimal right-resolving presentation, which
        often carries a smaller structure gap than the raw graph.
        """
        if "minimal" in self._cache:
            return self._cache["minimal"]
        det = self.determinize(budget=budget)
        if det.is_empty:
            return det
        part = {v: 0 for v in det.vertices}
        while True:
            sig = {v: (part[v], tuple(sorted((l, part[t]) for l, t in det._out[v])))
                   for v in det.vertices}
            ranking = {s: i for i, s in enumerate(sorted(set(sig.values()), key=repr))}
            new = {v: ranking[sig[v]] for v in det.vertices}
            if len(set(new.values())) == len(set(part.values())):
                break
            part = new
        if len(set(part.values())) == len(det.vertices):
            self._cache["minimal"] = det
            return det
        merged = Presentation(
            sorted({("m%d" % part[s], "m%d" % part[t], l) for (s, t, l) in det.edges}),
            alphabet=det.alphabet,
        )
        if not language_equal(merged, det, budget=budget):
            merged = det
        self._cache["minimal"] = merged
        return merged

    def _is_right_resolving(self) -> bool:
        for v in self.vertices:
            labs = [l for l, _ in self._out[v]]
            if len(labs) != len(set(labs)):
                return False
        return True

    def _select_language_component(self, reference: "Presentation") -> "Presentation":
        comps = self._sccs_with_edges()
        candidates = []
        for verts, edges in comps:
            if not edges:
                continue
            try:
                sub = Presentation(edges, alphabet=self.alphabet)
            except EmptyShiftError:
                continue
            if language_equal(sub, reference):
                candidates.append(sub)
        if not candidates:
            return self
        return min(candidates, key=lambda p: (len(p.vertices), len(p.edges),
                                              tuple(_stname(v) for v in p.vertices)))

    def _sccs_with_edges(self):
        comps = strongly_connected_components(self.vertices, self.edges)
        out = []
        for comp in comps:
            cset = set(comp)
            out.append((comp, [(s, t, l) for (s, t, l) in self.edges
                               if s in cset and t in cset]))
        return out

    # -- recoding ---------------------------------------------------------

    def higher_block(self, k: int, *, memory: int = 0):
        """Presentation of the k-th higher block shift with the conjugacy pair.

        Returns (presentation, encode, decode).  encode reads the window
        [i-memory, i+k-1-memory] and emits it as one symbol; decode is the
        1-block map picking out coordinate `memory` of the block symbol.
        """
        from .codes import BlockMap

        if k < 1:
            raise UsageError("higher_block needs k >= 1")
        if not 0 <= memory < k:
            raise UsageError("memory must lie in [0, k)")
        if self.is_empty:
            raise EmptyShiftError("higher_block of the empty shift")
        if k == 1:
            ident = BlockMap.identity(self.alphabet)
            return self, ident, ident
        # vertices are (k-1)-paths (vertex run + label word), edges are k-paths
        kpaths = [((s, t), (l,)) for (s, t, l) in self.edges]
        for _ in range(k - 1):
            nxt = []
            for verts, labs in kpaths:
                for l, t in self._out[verts[-1]]:
                    nxt.append((verts + (t,), labs + (l,)))
            kpaths = nxt
        sep = "" if all(len(a) == 1 for a in self.alphabet) else "|"
        blocks = sorted({labs for _, labs in kpaths})
        sym = {b: sep.join(b) for b in blocks}
        edges = []
        for verts, labs in kpaths:
            src = (verts[:-1], labs[:-1])
            dst = (verts[1:], labs[1:])
            edges.append((_hb_vertex(src), _hb_vertex(dst), sym[labs]))
        pres = Presentation(edges, alphabet=sorted(sym.values()),
                            sft=self.sft or None)
        enc = BlockMap(
            source_alphabet=self.alphabet,
            target_alphabet=pres.alphabet,
            memory=memory,
            anticipation=k - 1 - memory,
            table={b: sym[b] for b in blocks},
        )
        dec = BlockMap(
            source_alphabet=pres.alphabet,
            target_alphabet=self.alphabet,
            memory=0,
            anticipation=0,
            table={(sym[b],): b[memory] for b in blocks},
        )
        return pres, enc, dec

    def structure(self, *, budget: Budget = None) -> dict:
        """Irreducibility, mixing, mixing gap and period of the presentation.

        Sofic inputs are determinized first, so the verdicts are about the
        language, not about whatever graph happened to present it.
        """
        if self.is_empty:
            raise EmptyShiftError("structure of the empty shift")
        p = self if self.sft else self.determinize(budget=budget)
        comps = strongly_connected_components(p.vertices, p.edges)
        nontrivial = []
        for comp in comps:
            cset = set(comp)
            if any(s in cset and t in cset for s, t, _ in p.edges):
                nontrivial.append(comp)
        irreducible = len(nontrivial) == 1 and len(nontrivial[0]) == len(p.vertices)
        period = _graph_period(p)
        gap = None
        mixing = False
        if irreducible and period == 1:
            gap = _mixing_gap(p, budget or DEFAULT_BUDGET)
            mixing = gap is not None
        return {
            "irreducible": irreducible,
            "mixing": mixing,
            "gap": gap,
            "period": period,
        }

    def markov_blocks(self, n: int, *, budget: Budget = None) -> "Presentation":
        """The SFT allowing exactly this shift's length-n blocks."""
        return markov_approximation(
            lambda m: self.language_blocks(m, budget=budget), n)

    def intersect(self, other: "Presentation", *, budget: Budget = None) -> "Presentation":
        return intersect(self, other, budget=budget)

    # -- serialization ----------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "vertices": sorted(_stname(v) for v in self.vertices),
            "edges": sorted(
                ({"from": _stname(s), "to": _stname(t), "label": l}
                 for s, t, l in self.edges),
                key=lambda e: (e["from"], e["label"], e["to"]),
            ),
            "sft": self.sft,
            "empty": self.is_empty,
        }

    @classmethod
    def from_doc(cls, doc) -> "Presentation":
        try:
            alphabet = tuple(doc["alphabet"])
            if doc.get("empty"):
                return cls.empty(alphabet)
            edges = [(e["from"], e["to"], e["label"]) for e in doc["edges"]]
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed presentation document: {exc}") from exc
        return cls(edges, alphabet=alphabet)


def _hb_vertex(pair):
    verts, labs = pair
    return (tuple(_stname(v) for v in verts), labs)


def _subset_name(s: frozenset) -> str:
    return "{" + ",".join(sorted(_stname(v) for v in s)) + "}"


# -- free functions -------------------------------------------------------


def membership(p: Presentation, w) -> bool:
    return p.membership(word(w))


def language_blocks(p: Presentation, n: int, *, budget: Budget = None) -> set:
    return p.language_blocks(n, budget=budget)


def from_forbidden(alphabet, forbidden, *, budget: Budget = None) -> Presentation:
    return Presentation.from_forbidden(alphabet, forbidden, budget=budget)


def higher_block(p: Presentation, k: int, *, memory: int = 0):
    return p.higher_block(k, memory=memory)


def structure(p: Presentation, *, budget: Budget = None) -> dict:
    return p.structure(budget=budget)


def markov_approximation(blocks_oracle: Callable[[int], set], n: int) -> Presentation:
    """SFT allowing exactly the oracle's length-n blocks.

    Checks oracle consistency: sub-blocks of length n-1 must be reported at
    n-1 (otherwise the de Bruijn graph would silently drop words).
    """
    if n < 1:
        raise UsageError("markov approximation needs n >= 1")
    blocks = {word(w) for w in blocks_oracle(n)}
    if not blocks:
        raise EmptyShiftError("oracle reports no blocks at length n")
    if any(len(w) != n for w in blocks):
        raise UsageError("oracle returned blocks of the wrong length")
    alphabet = sorted({a for w in blocks for a in w})
    if n == 1:
        return Presentation([("q", "q", a) for w in blocks for a in w],
                            alphabet=alphabet, sft=True)
    prev = {word(w) for w in blocks_oracle(n - 1)}
    for w in blocks:
        if w[:-1] not in prev or w[1:] not in prev:
            raise ShiftCodecError(
                f"inconsistent oracle: window of {word_str(w)} missing at length {n - 1}")
    edges = [(w[:-1], w[1:], w[-1]) for w in sorted(blocks)]
    return Presentation(edges, alphabet=alphabet, sft=True)


def intersect(p: Presentation, q: Presentation, *, budget: Budget = None) -> Presentation:
    """Label-product presentation of the intersection of the two shifts."""
    if set(p.alphabet) != set(q.alphabet):
        raise UsageError("intersection needs a common alphabet")
    if p.is_empty or q.is_empty:
        raise EmptyShiftError("intersection with the empty shift")
    by_label = {}
    for s, t, l in q.edges:
        by_label.setdefault(l, []).append((s, t))
    edges = []
    for s, t, l in p.edges:
        for s2, t2 in by_label.get(l, ()):
            edges.append(((s, s2), (t, t2), l))
    return Presentation(edges, alphabet=p.alphabet)


def language_equal(p: Presentation, q: Presentation, *, budget: Budget = None) -> bool:
    """Exact language equality via the product of the word automata.

    Searches for a separating word: one that stays alive in one automaton
    and dies in the other.  No length cutoff is needed; the product is
    finite.
    """
    if p.is_empty or q.is_empty:
        return p.is_empty and q.is_empty
    if set(p.alphabet) != set(q.alphabet):
        # a symbol used by only one side separates immediately
        used_p = {l for _, _, l in p.edges}
        used_q = {l for _, _, l in q.edges}
        if used_p != used_q:
            return False
    ip, dp = p._word_automaton(budget)
    iq, dq = q._word_automaton(budget)
    seen = {(ip, iq)}
    stack = [(ip, iq)]
    while stack:
        sp, sq = stack.pop()
        mp = dict(dp[sp])
        mq = dict(dq[sq])
        if set(mp) != set(mq):
            return False
        for l, tp in mp.items():
            pair = (tp, mq[l])
            if pair not in seen:
                seen.add(pair)
                stack.append(pair)
    return True


def language_subset(p: Presentation, q: Presentation, *, budget: Budget = None) -> bool:
    """Exact check that the language of p is contained in that of q."""
    if p.is_empty:
        return True
    if q.is_empty:
        return False
    ip, dp = p._word_automaton(budget)
    iq, dq = q._word_automaton(budget)
    seen = {(ip, iq)}
    stack = [(ip, iq)]
    while stack:
        sp, sq = stack.pop()
        mp = dict(dp[sp])
        mq = dict(dq[sq])
        for l, tp in mp.items():
            if l not in mq:
                return False
            pair = (tp, mq[l])
            if pair not in seen:
                seen.add(pair)
                stack.append(pair)
    return True


def strongly_connected_components(vertices, edges):
    """Tarjan, iterative.  Returns components as sorted tuples."""
    adj = {v: [] for v in vertices}
    for s, t, *_ in edges:
        adj[s].append(t)
    index = {}
    low = {}
    onstack = set()
    stack = []
    comps = []
    counter = itertools.count()
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = next(counter)
        stack.append(root)
        onstack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for t in it:
                if t not in index:
                    index[t] = low[t] = next(counter)
                    stack.append(t)
                    onstack.add(t)
                    work.append((t, iter(adj[t])))
                    advanced = True
                    break
                elif t in onstack:
                    low[v] = min(low[v], index[t])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(tuple(sorted(comp, key=_stname)))
    return comps


def _graph_period(p: Presentation) -> int:
    """gcd of cycle lengths over nontrivial SCCs (0 if none, cannot happen
    on essential graphs)."""
    import math

    comps = strongly_connected_components(p.vertices, p.edges)
    g = 0
    for comp in comps:
        cset = set(comp)
        internal = [(s, t) for s, t, _ in p.edges if s in cset and t in cset]
        if not internal:
            continue
        adj = {}
        for s, t in internal:
            adj.setdefault(s, []).append(t)
        level = {comp[0]: 0}
        queue = [comp[0]]
        local = 0
        while queue:
            v = queue.pop()
            for t in adj.get(v, ()):
                if t not in level:
                    level[t] = level[v] + 1
                    queue.append(t)
                else:
                    local = math.gcd(local, level[v] + 1 - level[t])
        g = math.gcd(g, abs(local))
    return g if g else 1


def _mixing_gap(p: Presentation, budget: Budget):
    """Least g with every vertex pair joined by a length-g path, or None.

    The Wielandt bound (n-1)^2 + 1 caps the search for primitive graphs.
    """
    n = len(p.vertices)
    if n == 1:
        # essential single vertex means a loop: length-g paths for every g
        return 0
    idx = {v: i for i, v in enumerate(p.vertices)}
    rows = [0] * n
    for s, t, _ in p.edges:
        rows[idx[s]] |= 1 << idx[t]
    full = (1 << n) - 1
    cur = rows[:]
    bound = (n - 1) * (n - 1) + 1
    for g in range(1, bound + 1):
        if all(r == full for r in cur):
            return g
        nxt = [0] * n
        for i in range(n):
            r = cur[i]
            acc = 0
            j = 0
            while r:
                if r & 1:
                    acc |= rows[j]
                r >>= 1
                j += 1
            nxt[i] = acc
        cur = nxt
    if all(r == full for r in cur):
        return bound + 1
    return None


def find_connector(p: Presentation, u: Word, v: Word, g: int) -> Word:
    """Lexicographically least w with |w| = g and u w v in the language."""
    u, v = word(u), word(v)
    if not p.membership(u) or not p.membership(v):
        raise ShiftCodecError("connector endpoints must be legal words")
    # end states of u in the word automaton, then search forward
    init, delta = p._word_automaton(None)
    st = init
    for a in u:
        st = dict(delta[st]).get(a)
        if st is None:
            raise ShiftCodecError("unreachable: u legal but no automaton run")

    def ok_suffix(state, w):
        s = state
        for a in w:
            s = dict(delta[s]).get(a)
            if s is None:
                return False
        return True

    def search(state, remaining, acc):
        if remaining == 0:
            return acc if ok_suffix(state, v) else None
        for a, t in delta[state]:
            res = search(t, remaining - 1, acc + (a,))
            if res is not None:
                return res
        return None

    res = search(st, g, ())
    if res is None:
        raise ShiftCodecError(
            f"no connector of length {g} between {word_str(u)} and {word_str(v)}")
    return res


def as_sft(p: Presentation, max_memory: int = 8, *, budget: Budget = None) -> tuple:
    """A faithful de Bruijn presentation of p's shift, if it is an SFT of
    small memory.

    Tries memories m = 1, 2, ... and verifies exactly by language equality.
    Returns (presentation, m).  Raises NotSFTError when no memory up to
    max_memory works (the shift may be properly sofic, or just deeper).
    """
    if p.is_empty:
        raise EmptyShiftError("as_sft of the empty shift")
    if p.sft:
        pass  # already faithful, but a caller may want de Bruijn form anyway
    for m in range(1, max_memory + 1):
        blocks = p.language_blocks(m + 1, budget=budget)
        if not blocks:
            raise EmptyShiftError("no blocks at memory window")
        cand = markov_approximation(lambda n: p.language_blocks(n, budget=budget), m + 1)
        if language_equal(cand, p, budget=budget):
            return cand, m
    raise NotSFTError(f"not an SFT with memory <= {max_memory}")
