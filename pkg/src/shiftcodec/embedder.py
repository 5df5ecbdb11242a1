"""Synthesis of channel-injective embeddings and the derived stream codec.

Given a mixing SFT domain, a 1-block factor code pi onto its sofic image,
and a source SFT z that passes the periodic-point decision, synthesize
builds a sliding block code psi: z -> X with pi o psi injective and wraps
it in a certificate carrying every table needed to verify or decode.

The pipeline route codes marker intervals of z into blank-separated data
blocks over a carved image subshift W, lifts them through the channel with
a self-synchronizing stamp, and composes the stages.  A direct route that
just relabels symbols is probed first; when it verifies, the heavy
machinery is skipped.  Verification is not optional: a certificate is
returned only after its checks ran, and the decoder re-encodes what it
decoded before reporting success.
"""

from __future__ import annotations

import itertools
import random
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .census import (
    CyclicWord,
    _least_rotation,
    count_periodic_sft,
    count_liftable,
    decide_embeddable,
    least_period,
)
from .codes import BlockMap, check_injective, image, lift_word
from .combinatorics import MarkerSet, Stamp, marker_set, verify_stamp
from .constructions import ParameterPack, custom_W
from .errors import (
    Budget,
    BudgetExceeded,
    ConstructionError,
    CountingHypothesisError,
    DEFAULT_BUDGET,
    DecodeMismatch,
    EmptyShiftError,
    NotConjugateError,
    NotLocallyPeriodic,
    NotSFTError,
    ShiftCodecError,
    StampInvalid,
    SyncFailure,
    UndefinedWindow,
    UsageError,
    WindowTooShort,
)
from .shifts import (
    Presentation,
    Word,
    find_connector,
    language_subset,
    structure,
    word,
    word_str,
)

BLANK = "*"
_SEED = 1729


# ------------------------------------------------------------- injections


@dataclass(frozen=True)
class BlockInjection:
    """An injective coding table for one length or one period.

    kind "moderate" maps data blocks of length n to blocks shorter by ell;
    kind "periodic" maps necklaces of least period n to necklaces of the
    same least period (phase alignment is handled by the encoder, so the
    table itself only pairs canonical rotations).
    """

    kind: str
    n: int
    table: dict

    def verify(self, ell: int = None):
        vals = list(self.table.values())
        if len(set(vals)) != len(vals):
            raise CountingHypothesisError(
                f"{self.kind} table at n={self.n} is not injective")
        for src, dst in self.table.items():
            if self.kind == "moderate":
                if len(src) != self.n or len(dst) != self.n - (ell or 0):
                    raise UsageError(
                        f"moderate table at n={self.n} has a wrong length pair")
            else:
                if least_period(src) != self.n or least_period(dst) != self.n:
                    raise UsageError(
                        f"periodic table at n={self.n} does not preserve the period")

    def to_doc(self):
        return {
            "kind": self.kind,
            "n": self.n,
            "table": [{"from": word_str(k), "to": word_str(v)}
                      for k, v in sorted(self.table.items())],
        }


# ------------------------------------------------------------ blanks specs


@dataclass(frozen=True)
class BlanksSpec:
    """Finite description of a blank-separated subshift over inner's alphabet.

    Points are data words from `blocks` or periodic runs over `orbits`,
    separated by exactly ell blanks.  N is the marker distance of the source
    that will be coded in: block lengths live in [N-ell, 2N-1] and runs have
    length at least 2N, so a segment's length alone tells the two apart.
    `blocks` and `orbits` are index-aligned between the two sides of a
    channel pair; the conjugacy reads kappa and lambda off that alignment.
    """

    inner: Presentation
    blank: str
    N: int
    ell: int
    blocks: tuple
    orbits: tuple
    name: str = ""

    @property
    def min_run(self) -> int:
        return 2 * self.N

    def validate(self, *, budget: Budget = None):
        budget = budget or DEFAULT_BUDGET
        if self.blank in self.inner.alphabet:
            raise UsageError("blank symbol collides with the data alphabet")
        if self.ell < 1 or self.N <= self.ell:
            raise UsageError("need 1 <= ell < N")
        if len(set(self.blocks)) != len(self.blocks):
            raise UsageError("duplicate data blocks")
        for b in self.blocks:
            if not self.N - self.ell <= len(b) <= 2 * self.N - 1:
                raise UsageError(
                    f"block {word_str(b)} outside lengths [{self.N - self.ell}, {2 * self.N - 1}]")
            if not self.inner.membership(b):
                raise UsageError(f"block {word_str(b)} not in the data language")
        for o in self.orbits:
            p = len(o)
            if least_period(o) != p or p > self.N - 1:
                raise UsageError(f"orbit {word_str(o)} is not a short necklace")
            reps = -(-(2 * self.N + 2) // p)
            if not self.inner.membership(o * reps):
                raise UsageError(f"orbit {word_str(o)} not cyclically legal")
        if len(set(self.orbits)) != len(self.orbits):
            raise UsageError("duplicate orbits")

    @property
    def alphabet(self):
        return tuple(sorted(set(self.inner.alphabet) | {self.blank}))

    def presentation(self, *, budget: Budget = None) -> Presentation:
        """Splice-graph presentation; honest about not being label faithful."""
        budget = budget or DEFAULT_BUDGET
        edges = []
        for i in range(1, self.ell):
            edges.append((("b", i), ("b", i + 1), self.blank))
        start = ("b", self.ell)
        for wi, w in enumerate(self.blocks):
            prev = start
            for j, a in enumerate(w):
                nxt = ("m", wi, j + 1)
                edges.append((prev, nxt, a))
                prev = nxt
            edges.append((prev, ("b", 1), self.blank))
        cap = self.min_run
        for oi, o in enumerate(self.orbits):
            p = len(o)
            for j in range(p):
                edges.append((start, ("r", oi, j, 1), o[j]))
                for c in range(1, cap):
                    edges.append((("r", oi, j, c),
                                  ("r", oi, (j + 1) % p, c + 1), o[(j + 1) % p]))
                edges.append((("r", oi, j, cap),
                              ("r", oi, (j + 1) % p, cap), o[(j + 1) % p]))
                edges.append((("r", oi, j, cap), ("b", 1), self.blank))
        budget.charge_states(len(edges), "blanks presentation")
        return Presentation(edges, alphabet=self.alphabet, sft=False)

    def to_doc(self):
        return {
            "name": self.name,
            "blank": self.blank,
            "N": self.N,
            "ell": self.ell,
            "blocks": [word_str(b) for b in self.blocks],
            "orbits": [word_str(o) for o in self.orbits],
        }


# ------------------------------------------------------------ wlog recode


def wlog_recode(x: Presentation, pi: BlockMap, z: Presentation, *,
                budget: Budget = None, n_match: int = 8, m_cap: int = 12):
    """Reduce the source to finite type without touching the decision.

    A faithful SFT source passes through unchanged.  A strictly sofic one is
    replaced by its m-th Markov approximation, with m grown until the small
    period census matches the source exactly and the embeddability decision
    still holds; the inclusion is then the identity 1-block code.
    """
    from .census import count_periodic_sofic

    budget = budget or DEFAULT_BUDGET
    if z.is_empty:
        raise EmptyShiftError("cannot recode the empty shift")
    if z.sft:
        return z, BlockMap.identity(z.alphabet)
    qz = count_periodic_sofic(z, n_match, budget=budget).q
    last = None
    for m in range(2, m_cap + 1):
        zm = z.markov_blocks(m, budget=budget)
        if not zm.sft:
            continue
        qm = count_periodic_sft(zm, n_match, budget=budget).q
        last = {n: (qm[n], qz[n]) for n in qm if qm[n] != qz[n]}
        if last:
            continue
        rep = decide_embeddable(x, pi, zm, budget=budget)
        if rep.verdict != "Embeddable":
            continue
        inc = BlockMap.identity(z.alphabet)
        inc.name = f"inclusion[m={m}]"
        return zm, inc
    raise ConstructionError(
        f"no Markov approximation up to depth {m_cap} matched the census; "
        f"last mismatches {last}")


def _source_memory(z: Presentation, cap: int, *, budget: Budget) -> int:
    """Smallest m with z equal to its own depth-(m+1) block approximation."""
    from .shifts import language_equal

    for m in range(1, cap + 1):
        try:
            if language_equal(z.markov_blocks(m + 1, budget=budget), z,
                              budget=budget):
                return m
        except (EmptyShiftError, BudgetExceeded):
            break
    raise ConstructionError(
        f"source memory exceeds {cap}; marker distance too small")


# ------------------------------------------------ carving the coding specs


def _z_necklaces(z: Presentation, n: int, span: int, *, budget: Budget):
    """Canonical least-period-n necklaces of z, by cyclic membership."""
    reps = -(-(span + 1) // n) + 1
    out = set()
    for w in z.language_blocks(n, budget=budget):
        c = _least_rotation(w)
        if c in out or least_period(c) != n:
            continue
        if z.membership(c * reps):
            out.add(c)
    return sorted(out)


def build_injections(z: Presentation, pack: ParameterPack, pi: BlockMap, *,
                     budget: Budget = None):
    """Lex-paired coding tables plus the aligned blanks specs of both sides.

    Moderate blocks: for each interval length n in [N, 2N+ell-1], the sorted
    z blocks pair with the lex-least equally many W blocks of length n-ell.
    Periodic orbits: sorted z necklaces of each least period below N pair
    with liftable image necklaces, whose equal-period lifts land in V.
    Returns (injections, w_spec, v_spec).
    """
    budget = budget or DEFAULT_BUDGET
    P, V, W, stamp, ell = pack
    if not V.sft:
        from .shifts import as_sft

        V, _ = as_sft(V, budget=budget)
    injections = []
    w_blocks = []
    v_blocks = []
    for n in range(P, 2 * P + ell):
        zb = sorted(z.language_blocks(n, budget=budget))
        wb = sorted(W.language_blocks(n - ell, budget=budget))
        if len(zb) > len(wb):
            raise CountingHypothesisError(
                f"|B_{n}(z)| = {len(zb)} exceeds |B_{n - ell}(W)| = {len(wb)}")
        inj = BlockInjection("moderate", n, dict(zip(zb, wb)))
        inj.verify(ell)
        injections.append(inj)
        for w in wb[:len(zb)]:
            w_blocks.append(w)
            v_blocks.append(lift_word(V, pi, w, budget=budget))
    lifts = count_liftable(V, pi, P - 1, budget=budget, with_witnesses=True)
    w_orbits = []
    v_orbits = []
    for n in range(1, P):
        necks = _z_necklaces(z, n, 2 * P + ell, budget=budget)
        if not necks:
            continue
        wits = lifts.witnesses.get(n, [])
        if len(necks) > len(wits):
            raise CountingHypothesisError(
                f"{len(necks)} source orbits of period {n} but only "
                f"{len(wits)} liftable image orbits")
        chosen = wits[:len(necks)]
        inj = BlockInjection(
            "periodic", n,
            {zn: iw.canonical for zn, (iw, _) in zip(necks, chosen)})
        inj.verify()
        injections.append(inj)
        for iw, lv in chosen:
            w_orbits.append(iw.canonical)
            v_orbits.append(lv.canonical)
    w_spec = BlanksSpec(W, BLANK, P, ell, tuple(w_blocks), tuple(w_orbits),
                        name="image side")
    v_spec = BlanksSpec(V, BLANK, P, ell, tuple(v_blocks), tuple(v_orbits),
                        name="lift side")
    w_spec.validate(budget=budget)
    v_spec.validate(budget=budget)
    return injections, w_spec, v_spec


# --------------------------------------------------------- marker encoding


def _rotation_offset(rep: Word, canonical: Word) -> int:
    p = len(rep)
    for s in range(p):
        if all(rep[i] == canonical[(i + s) % p] for i in range(p)):
            return s
    raise ShiftCodecError("rotation offset of a non-rotation")


class _PhiContext:
    """Shared classification core for the marker stage.

    Works on any symbol sequence with an explicit center and a list of
    marker centers restricted to the visible reach, so the windowed block
    map and the stream encoder cannot disagree.
    """

    __slots__ = ("z", "P", "ell", "co", "reach", "markers",
                 "dtab", "ctab", "blank")

    def __init__(self, z, P, ell, markers, dtab, ctab, blank):
        self.z = z
        self.P = P
        self.ell = ell
        self.co = markers.center_offset
        self.reach = 2 * P + ell
        self.markers = markers
        self.dtab = dtab
        self.ctab = ctab
        self.blank = blank

    @property
    def half(self) -> int:
        return self.reach + self.co

    def centers(self, u: Word):
        return [s + self.co for s in self.markers.hits(u)]

    def _orbit_symbol(self, seq, a0, t):
        """Image symbol at t for the periodic run anchored at a0."""
        win = seq[a0:a0 + 2 * self.P + 1]
        from .combinatorics import extend_locally_periodic

        rho = extend_locally_periodic(self.z, win, self.P).canonical
        p = len(rho)
        rep = win[:p]
        s = _rotation_offset(rep, rho)
        target = self.ctab.get(rho)
        if target is None:
            raise UndefinedWindow(
                f"periodic content {word_str(rho)} has no orbit table entry")
        return target[((t - a0) + s) % p]

    def value(self, seq, c0, centers):
        """phi at position c0 of seq; centers limited to [c0-reach, c0+reach]."""
        P, ell, reach = self.P, self.ell, self.reach
        i = bisect_right(centers, c0)
        a = centers[i - 1] if i > 0 and centers[i - 1] >= c0 - reach else None
        b = centers[i] if i < len(centers) and centers[i] <= c0 + reach else None
        if a is None and b is None:
            return self._orbit_symbol(seq, c0 - P, c0)
        if a is None:
            return self._orbit_symbol(seq, b - 2 * P, c0)
        off = c0 - a
        if off < ell:
            return self.blank
        if b is None:
            return self._orbit_symbol(seq, a, c0)
        n = b - a
        if n >= 2 * P + ell:
            return self._orbit_symbol(seq, a, c0)
        tab = self.dtab.get(n)
        enc = tab.get(seq[a:b]) if tab else None
        if enc is None:
            raise UndefinedWindow(
                f"interval content {word_str(seq[a:b])} has no block table entry")
        return enc[off - ell]


def marker_encode(z: Presentation, spec: BlanksSpec, injections,
                  markers: MarkerSet, *, budget: Budget = None) -> BlockMap:
    """The marker-interval coder phi from z into the blank-separated shift.

    Marker centers cut z into intervals: lengths in [N, 2N+ell-1] are data
    and anything longer is forced periodic, so each interval is replaced by
    ell blanks plus its table image, in place.  The window half-width is
    center_offset + 2N + ell: enough to see every marker that can bound the
    interval through position zero.
    """
    budget = budget or DEFAULT_BUDGET
    if markers.N != spec.N:
        raise UsageError("marker distance disagrees with the blanks spec")
    P, ell = spec.N, spec.ell
    dtab = {}
    ctab = {}
    for inj in injections:
        if inj.kind == "moderate":
            dtab[inj.n] = inj.table
        else:
            ctab.update(inj.table)
    for n in range(P, 2 * P + ell):
        tab = dtab.get(n)
        if tab is None or set(tab) != z.language_blocks(n, budget=budget):
            raise CountingHypothesisError(
                f"moderate table at n={n} missing or not total")
        bad = [v for v in tab.values() if v not in set(spec.blocks)]
        if bad:
            raise CountingHypothesisError(
                f"table image {word_str(bad[0])} is not a declared block")
    for n in range(1, P):
        for zn in _z_necklaces(z, n, 2 * P + ell, budget=budget):
            if zn not in ctab:
                raise CountingHypothesisError(
                    f"source orbit {word_str(zn)} of period {n} has no table entry")
            if ctab[zn] not in set(spec.orbits):
                raise CountingHypothesisError(
                    f"orbit image {word_str(ctab[zn])} is not a declared orbit")
    ctx = _PhiContext(z, P, ell, markers, dtab, ctab, spec.blank)
    half = ctx.half

    def fn(u):
        try:
            return ctx.value(u, half, ctx.centers(u))
        except (NotLocallyPeriodic, UsageError, IndexError) as exc:
            raise UndefinedWindow(f"window not codable: {exc}") from exc

    bm = BlockMap(z.alphabet, spec.alphabet, half, half, fn=fn, name="phi")
    bm._phi_ctx = ctx
    return bm


# the fn-backed maps hang their stream context off the instance; BlockMap
# declares __slots__, so allow the two attributes here
if "_phi_ctx" not in getattr(BlockMap, "__slots__", ()):
    try:
        BlockMap.__slots__ = tuple(BlockMap.__slots__) + ("_phi_ctx", "_inv_ctx")
    except (AttributeError, TypeError):
        pass


# --------------------------------------------------------- blanks conjugacy


class _InvContext:
    """Reconstruction core for the inverse of the 1-block channel on blanks.

    Classification by segment length: data up to 2N-1, runs from 2N.  The
    reach 2N + ell + 1 suffices to see either both ends of a data segment or
    a full period window of a run.
    """

    __slots__ = ("w_spec", "kappa", "lam", "blank")

    def __init__(self, w_spec, kappa, lam):
        self.w_spec = w_spec
        self.kappa = kappa
        self.lam = lam
        self.blank = w_spec.blank

    @property
    def half(self) -> int:
        return 2 * self.w_spec.N + self.w_spec.ell + 1

    def _run_symbol(self, seq, a0, t):
        P = self.w_spec.N
        win = seq[a0:a0 + 2 * P + 1]
        rho = None
        for p in range(1, P):
            if all(win[i] == win[i + p] for i in range(len(win) - p)):
                rho = win[:p]
                break
        if rho is None:
            raise UndefinedWindow("run content is not short-periodic")
        can = _least_rotation(rho)
        target = self.lam.get(can)
        if target is None:
            raise UndefinedWindow(
                f"run orbit {word_str(can)} has no lift table entry")
        s = _rotation_offset(rho, can)
        return target[((t - a0) + s) % len(can)]

    def value(self, seq, c0, lo, hi):
        """Lift symbol at c0; seq is consulted only inside [lo, hi]."""
        if seq[c0] == self.blank:
            return self.blank
        bl = None
        for t in range(c0 - 1, lo - 1, -1):
            if seq[t] == self.blank:
                bl = t
                break
        br = None
        for t in range(c0 + 1, hi + 1):
            if seq[t] == self.blank:
                br = t
                break
        P = self.w_spec.N
        if bl is not None and br is not None and br - bl - 1 <= 2 * P - 1:
            seg = seq[bl + 1:br]
            lift = self.kappa.get(seg)
            if lift is None:
                raise UndefinedWindow(
                    f"segment {word_str(seg)} has no block table entry")
            return lift[c0 - (bl + 1)]
        if bl is not None:
            return self._run_symbol(seq, bl + 1, c0)
        if br is not None:
            return self._run_symbol(seq, br - (2 * P + 1), c0)
        return self._run_symbol(seq, c0 - P, c0)


def blanks_conjugacy(v_spec: BlanksSpec, w_spec: BlanksSpec, pi: BlockMap, *,
                     budget: Budget = None, rounds: int = 500,
                     seed: int = _SEED):
    """The 1-block channel between aligned blanks shifts and its inverse.

    Verifies that pi carries the lift-side blocks and orbits exactly onto
    the image-side ones, index by index and with least periods preserved,
    then returns (pi_star, inverse) after random round trips in both
    directions.  Failures raise NotConjugateError with the offending item.
    """
    budget = budget or DEFAULT_BUDGET
    if (v_spec.N, v_spec.ell) != (w_spec.N, w_spec.ell):
        raise UsageError("blanks parameters differ between the two sides")
    if len(v_spec.blocks) != len(w_spec.blocks) or \
            len(v_spec.orbits) != len(w_spec.orbits):
        raise NotConjugateError("the two sides pair different table sizes")
    for vb, wb in zip(v_spec.blocks, w_spec.blocks):
        if tuple(pi.lookup((a,)) for a in vb) != wb:
            raise NotConjugateError(
                f"block {word_str(vb)} does not project onto {word_str(wb)}")
    for vo, wo in zip(v_spec.orbits, w_spec.orbits):
        img = tuple(pi.lookup((a,)) for a in vo)
        if _least_rotation(img) != wo or least_period(img) != len(wo):
            raise NotConjugateError(
                f"orbit {word_str(vo)} does not project onto {word_str(wo)} "
                "with equal least period")
    if len(set(v_spec.blocks)) != len(v_spec.blocks):
        raise NotConjugateError("lift-side blocks collide; kappa not injective")
    if len(set(v_spec.orbits)) != len(v_spec.orbits):
        raise NotConjugateError("lift-side orbits collide; lambda not injective")

    mapping = {a: pi.lookup((a,)) for a in v_spec.inner.alphabet}
    mapping[v_spec.blank] = w_spec.blank
    pi_star = BlockMap.one_block(mapping, name="pi*")

    kappa = dict(zip(w_spec.blocks, v_spec.blocks))
    lam = dict(zip(w_spec.orbits, v_spec.orbits))
    ctx = _InvContext(w_spec, kappa, lam)
    half = ctx.half

    def fn(u):
        try:
            return ctx.value(u, half, 0, len(u) - 1)
        except IndexError as exc:
            raise UndefinedWindow(f"window not decodable: {exc}") from exc

    inv = BlockMap(w_spec.alphabet, v_spec.alphabet, half, half, fn=fn,
                   name="pi*^-1")
    inv._inv_ctx = ctx

    pres = v_spec.presentation(budget=budget)
    rng = random.Random(seed)
    for _ in range(rounds):
        xi = _random_walk_word(pres, 2 * half + 1 + rng.randrange(40), rng)
        eta = pi_star.apply(xi)
        back = inv.apply(eta)
        if back != xi[half:len(xi) - half]:
            raise NotConjugateError(
                f"round trip failed on {word_str(xi)}")
    return pi_star, inv


def _random_walk_word(p: Presentation, n: int, rng) -> Word:
    v = rng.choice(p.vertices)
    out = []
    for _ in range(n):
        l, t = rng.choice(p.out_edges(v))
        out.append(l)
        v = t
    return tuple(out)


# ---------------------------------------------------------- channel embed


def _channel_tables(x: Presentation, pi: BlockMap, stamp: Stamp,
                    alphabet, g: int, *, budget: Budget = None):
    """Stamp lift and the two connector tables, all lexicographically least."""
    mu_hat = lift_word(x, pi, stamp.word, budget=budget)
    gp = {}
    gm = {}
    for a in sorted(alphabet):
        try:
            gp[a] = find_connector(x, (a,), mu_hat, g)
            gm[a] = find_connector(x, mu_hat, (a,), g)
        except ShiftCodecError as exc:
            raise ConstructionError(
                f"no length-{g} connector at symbol {a}: {exc}") from exc
    return mu_hat, gp, gm


def channel_embed(v_spec: BlanksSpec, x: Presentation, pi: BlockMap,
                  stamp: Stamp, *, budget: Budget = None) -> BlockMap:
    """The lifting code gamma from the lift-side blanks shift into x.

    Each run of ell blanks between data symbols b and a becomes the block
    gamma+(b) mu_hat gamma-(a) of the same length; data symbols pass
    through.  Stamp and length preconditions are re-verified here because
    the injectivity of pi o gamma rests on them.
    """
    budget = budget or DEFAULT_BUDGET
    mu = stamp.word
    g = structure(x, budget=budget)["gap"]
    if v_spec.ell != len(mu) + 2 * g:
        raise UsageError(
            f"ell = {v_spec.ell} but the stamp needs {len(mu)} + 2*{g}")
    if stamp.context_k != g:
        raise UsageError("stamp context length differs from the mixing gap")
    if v_spec.blocks and min(len(b) for b in v_spec.blocks) < len(mu):
        raise UsageError("a data block is shorter than the stamp")
    if v_spec.N < len(mu):
        raise UsageError("marker distance below the stamp length")
    y = image(x, pi, budget=budget)
    w_img = image(v_spec.inner, pi, budget=budget)
    if not verify_stamp(y, w_img, g, mu, budget=budget):
        raise StampInvalid(f"stamp {word_str(mu)} failed re-verification")
    mu_hat, gp, gm = _channel_tables(x, pi, stamp, v_spec.inner.alphabet, g,
                                     budget=budget)
    ell = v_spec.ell
    blank = v_spec.blank

    def fn(u):
        c0 = ell
        if u[c0] != blank:
            return u[c0]
        j = 0
        while j < ell and u[c0 - j - 1] == blank:
            j += 1
        b = u[c0 - j - 1]
        a = u[c0 + (ell - j)]
        if b == blank or a == blank:
            raise UndefinedWindow("blank run longer than ell")
        try:
            rep = gp[b] + mu_hat + gm[a]
        except KeyError as exc:
            raise UndefinedWindow(f"symbol {exc} has no connector") from exc
        return rep[j]

    return BlockMap(v_spec.alphabet, x.alphabet, ell, ell, fn=fn, name="gamma")


# ------------------------------------------------------------- certificate


@dataclass
class EmbeddingCertificate:
    """A verified embedding: the code, its tables, and what was checked.

    stages holds live BlockMaps (phi, pi_star, inv, gamma on the pipeline
    route); params holds only plain data so to_doc is always serializable.
    """

    route: str
    psi: BlockMap
    channel: BlockMap
    x: Presentation
    z: Presentation
    params: dict
    transcript: dict
    stages: dict = field(default_factory=dict, repr=False)
    decision: object = None

    @property
    def window(self) -> int:
        return self.psi.window

    def to_doc(self):
        def plain(v):
            if isinstance(v, tuple) and all(isinstance(a, str) for a in v):
                return word_str(v)
            if isinstance(v, dict):
                return {word_str(k) if isinstance(k, tuple) else str(k): plain(u)
                        for k, u in sorted(v.items(), key=lambda kv: repr(kv[0]))}
            if isinstance(v, (list, tuple)):
                return [plain(a) for a in v]
            if hasattr(v, "to_doc"):
                return v.to_doc()
            return v

        return {
            "route": self.route,
            "window": self.window,
            "x": repr(self.x),
            "z": repr(self.z),
            "channel": self.channel.name or "pi",
            "params": plain(self.params),
            "transcript": plain(self.transcript),
        }


# ------------------------------------------------------------- direct route


def _direct_probe(x: Presentation, pi: BlockMap, z: Presentation, *,
                  budget: Budget):
    """Search 1-block relabelings with a symbolwise invertible composite."""
    if len(x.alphabet) ** len(z.alphabet) > 4096:
        return None
    for combo in itertools.product(sorted(x.alphabet), repeat=len(z.alphabet)):
        mapping = dict(zip(sorted(z.alphabet), combo))
        comp = {a: pi.lookup((mapping[a],)) for a in mapping}
        if len(set(comp.values())) != len(comp):
            continue
        try:
            relab = Presentation([(s, t, mapping[l]) for (s, t, l) in z.edges],
                                 alphabet=x.alphabet, sft=z.sft)
            if not language_subset(relab, x, budget=budget):
                continue
        except (EmptyShiftError, UsageError):
            continue
        chk = check_injective(z, BlockMap.one_block(comp, name="pi.psi"),
                              budget=budget)
        if chk["injective"]:
            return mapping, comp, chk
    return None


# ---------------------------------------------------------------- synthesize


def synthesize(x: Presentation, pi: BlockMap, z: Presentation, *,
               route: str = "auto", budget: Budget = None, seed: int = _SEED,
               rounds: int = 120) -> EmbeddingCertificate:
    """Build and verify an embedding certificate for z through the channel.

    Gated by the decision procedure: a verdict other than Embeddable raises
    with the report attached.  route "auto" tries the 1-block relabeling
    probe before the full pipeline; "direct" and "pipeline" force a route.
    """
    budget = budget or DEFAULT_BUDGET
    if route not in ("auto", "direct", "pipeline"):
        raise UsageError(f"unknown route {route!r}")
    if not pi.is_one_block():
        raise UsageError("the channel must be a 1-block code; recode first")
    rep = decide_embeddable(x, pi, z, budget=budget)
    if rep.verdict != "Embeddable":
        err = UsageError(
            f"synthesis refused: decision verdict is {rep.verdict}")
        err.report = rep
        raise err
    xm = x.minimal(budget=budget)
    if not xm.sft:
        xm = x
    z1, inc = wlog_recode(xm, pi, z, budget=budget)

    if route in ("auto", "direct"):
        got = _direct_probe(xm, pi, z1, budget=budget)
        if got is not None:
            return _finish_direct(xm, pi, z, z1, inc, got, rep, budget=budget)
        if route == "direct":
            raise ConstructionError("no direct 1-block relabeling verified")
    return _finish_pipeline(xm, pi, z, z1, inc, rep, budget=budget,
                            seed=seed, rounds=rounds)


def _finish_direct(xm, pi, z, z1, inc, got, rep, *, budget):
    mapping, comp, chk = got
    psi1 = BlockMap.one_block(mapping, name="psi")
    psi = psi1 if inc.name == "id" else psi1.compose(inc)
    comp_map = BlockMap.one_block(comp, name="pi.psi")
    ltest = 2 * psi.window + 8
    seen = {}
    collisions = 0
    for u in sorted(z1.language_blocks(ltest, budget=budget)):
        img = comp_map.apply(u)
        if img in seen and seen[img] != u:
            collisions += 1
        seen[img] = u
    necess = _necessity_census(z1, psi, pi, min(6, ltest), budget=budget)
    img_pres = image(z1, psi1, budget=budget)
    from .entropy import entropy_compare

    transcript = {
        "pi_psi_injective": {"method": "pair graph", "result": chk},
        "collision_scan": {"length": ltest, "words": len(seen),
                           "collisions": collisions},
        "necessity": necess,
        "entropy_image": entropy_compare(z1, img_pres, budget=budget),
        "recode": inc.name,
    }
    if collisions:
        raise ConstructionError("collision scan contradicted the pair graph")
    if transcript["entropy_image"] != "equal":
        raise ConstructionError("image entropy drifted from the source")
    params = {
        "mapping": {k: v for k, v in sorted(mapping.items())},
        "composite": {k: v for k, v in sorted(comp.items())},
        "inverse": {v: k for k, v in sorted(comp.items())},
        "window": psi.window,
    }
    return EmbeddingCertificate("direct", psi, pi, xm, z, params, transcript,
                                stages={"inclusion": inc}, decision=rep)


def _finish_pipeline(xm, pi, z, z1, inc, rep, *, budget, seed, rounds):
    pack = custom_W(xm, pi, z1, budget=budget, decision=rep)
    P, V, W, stamp, ell = pack
    mem = _source_memory(z1, P - 1, budget=budget)
    markers = marker_set(z1, P, budget=budget, max_offset=P + 8)
    injections, w_spec, v_spec = build_injections(z1, pack, pi, budget=budget)
    phi = marker_encode(z1, w_spec, injections, markers, budget=budget)
    pi_star, inv = blanks_conjugacy(v_spec, w_spec, pi, budget=budget,
                                    rounds=max(100, rounds), seed=seed)
    gamma = channel_embed(v_spec, xm, pi, stamp, budget=budget)
    psi1 = gamma.compose(inv).compose(phi)
    psi1.name = "psi"
    psi = psi1 if inc.name == "id" else psi1.compose(inc)
    if psi1.window != phi.window + inv.window + gamma.window - 2:
        raise ConstructionError("stage windows do not add up")

    g = structure(xm, budget=budget)["gap"]
    mu_hat, gp, gm = _channel_tables(xm, pi, stamp, v_spec.inner.alphabet, g,
                                     budget=budget)
    params = {
        "N": P,
        "ell": ell,
        "g": g,
        "source_memory": mem,
        "blank": BLANK,
        "mu": stamp.word,
        "mu_hat": mu_hat,
        "gamma_plus": gp,
        "gamma_minus": gm,
        "kappa": dict(zip(w_spec.blocks, v_spec.blocks)),
        "lam": dict(zip(w_spec.orbits, v_spec.orbits)),
        "marker": markers.to_doc(),
        "w_spec": w_spec.to_doc(),
        "v_spec": v_spec.to_doc(),
        "injections": [inj.to_doc() for inj in injections],
        "window": psi.window,
        "stage_windows": [phi.window, inv.window, gamma.window],
    }
    stages = {"phi": phi, "pi_star": pi_star, "inv": inv, "gamma": gamma,
              "inclusion": inc, "markers": markers,
              "w_spec": w_spec, "v_spec": v_spec, "z1": z1}
    cert = EmbeddingCertificate("pipeline", psi, pi, xm, z, params, {},
                                stages=stages, decision=rep)
    cert.transcript = _verify_pipeline(cert, budget=budget, seed=seed,
                                       rounds=rounds)
    return cert


def _verify_pipeline(cert, *, budget, seed, rounds):
    """Mandatory post-construction verification of a pipeline certificate."""
    z1 = cert.stages["z1"]
    psi = cert.psi
    pi = cert.channel
    transcript = {"recode": cert.stages["inclusion"].name,
                  "stage_windows": cert.params["stage_windows"]}

    inj_gate = _gamma_injectivity(cert, budget=budget)
    transcript["pi_gamma_injective"] = inj_gate

    count = z1.count_blocks(psi.window + 8, budget=budget)
    rng = random.Random(seed)
    if count <= 4096:
        words = sorted(z1.language_blocks(psi.window + 8, budget=budget))
        mode = "exhaustive"
    else:
        words = {_random_walk_word(z1, psi.window + 8 + rng.randrange(16), rng)
                 for _ in range(min(1000, 4 * rounds))}
        words = sorted(words)
        mode = "sampled"
    seen = {}
    collisions = []
    for u in words:
        img = tuple(pi.lookup((a,)) for a in psi.apply(u))
        key = (len(u), img)
        if key in seen and seen[key] != u:
            collisions.append((seen[key], u))
        seen[key] = u
    transcript["collision_scan"] = {"mode": mode, "words": len(words),
                                    "collisions": len(collisions)}
    if collisions:
        raise ConstructionError(
            f"distinct sources collided after the channel: {collisions[0]}")

    transcript["necessity"] = _necessity_census(
        z1, psi, pi, min(6, cert.params["N"] - 1), budget=budget)

    ok = skipped = 0
    for _ in range(rounds):
        wlen = psi.window + 60 + rng.randrange(120)
        u = _random_walk_word(z1, wlen, rng)
        yw = tuple(pi.lookup((a,)) for a in _stream_encode(cert, u))
        try:
            off, dec = decode_stream(cert, yw, with_offset=True)
        except SyncFailure:
            skipped += 1
            continue
        if dec != u[off:off + len(dec)]:
            raise ConstructionError(
                f"round trip decoded the wrong content at offset {off}")
        ok += 1
    transcript["roundtrip"] = {"rounds": rounds, "decoded": ok,
                               "skipped_no_sync": skipped, "mismatches": 0}

    agree = all(
        _stream_encode(cert, u) == psi.apply(u)
        for u in (_random_walk_word(z1, psi.window + 24, rng) for _ in range(8)))
    if not agree:
        raise ConstructionError("stream encoder disagrees with the block map")
    transcript["stream_agrees_with_block_map"] = True
    transcript["pi_psi_injective"] = {
        "method": "stage composition",
        "stages": {"phi": "marker reconstruction with injective tables",
                   "pi_star": "verified conjugacy",
                   "pi_gamma": inj_gate},
        "result": True,
    }
    return transcript


def _gamma_injectivity(cert, *, budget):
    """Pair-graph check of pi o gamma when the blanks graph is small enough."""
    v_spec = cert.stages["v_spec"]
    gamma = cert.stages["gamma"]
    pi = cert.channel
    pres = v_spec.presentation(budget=budget)
    if len(pres.vertices) > 420:
        return {"method": "structural",
                "reason": f"{len(pres.vertices)} states exceed the pair graph gate",
                "stamp_verified": True}
    det = pres.determinize(budget=budget)
    if not det.sft:
        return {"method": "structural", "reason": "no faithful presentation",
                "stamp_verified": True}
    comp = pi.compose(gamma)
    chk = check_injective(det, comp, budget=budget)
    if not chk["injective"]:
        raise ConstructionError(
            f"pi o gamma is not injective: witness {chk['witness']}")
    return {"method": "pair graph", "states": len(det.vertices),
            "result": "injective"}


def _necessity_census(z1, psi, pi, n_max, *, budget):
    """Least periods survive psi and the channel on every short orbit."""
    checked = 0
    for n in range(1, n_max + 1):
        for zn in _z_necklaces(z1, n, 2 * n + 4, budget=budget):
            lift = psi.apply_cyclic(zn)
            img = tuple(pi.lookup((a,)) for a in lift)
            if least_period(lift) != n or least_period(img) != n:
                raise ConstructionError(
                    f"orbit {word_str(zn)} lost its least period through the code")
            checked += 1
    return {"n_max": n_max, "orbits": checked, "ok": True}


# ------------------------------------------------------------ stream codec


def _stream_apply(bm: BlockMap, ctx_attr: str, w: Word) -> Word:
    """Apply a context-backed stage over a whole word in one pass."""
    half = bm.memory
    if ctx_attr == "_phi_ctx":
        ctx = bm._phi_ctx
        centers = ctx.centers(w)
        out = []
        for t in range(half, len(w) - half):
            lo = bisect_left(centers, t - ctx.reach)
            hi = bisect_right(centers, t + ctx.reach)
            out.append(ctx.value(w, t, centers[lo:hi]))
        return tuple(out)
    ctx = bm._inv_ctx
    return tuple(ctx.value(w, t, t - half, t + half)
                 for t in range(half, len(w) - half))


def _stream_encode(cert: EmbeddingCertificate, w: Word) -> Word:
    """psi over a finite word, one stage at a time (same values, no windowing)."""
    st = cert.stages
    mid = _stream_apply(st["phi"], "_phi_ctx", word(w))
    mid = _stream_apply(st["inv"], "_inv_ctx", mid)
    return st["gamma"].apply(mid)


def encode_stream(cert: EmbeddingCertificate, w) -> Word:
    """Apply the certified code to a finite source word.

    The output shrinks by window - 1; no padding is invented.  Illegal
    source words raise UndefinedWindow before any output is produced.
    """
    w = word(w)
    if len(w) < cert.window:
        raise WindowTooShort(
            f"need at least {cert.window} symbols, got {len(w)}")
    zsrc = cert.stages.get("z1", cert.z)
    if not zsrc.membership(w):
        raise UndefinedWindow("input word is not in the source language")
    if cert.route == "direct":
        return cert.psi.apply(w)
    return _stream_encode(cert, w)


def _stamp_runs(cert, y: Word):
    """Blank-run spans implied by stamp occurrences, fully inside y."""
    mu = cert.params["mu"]
    g = cert.params["g"]
    ell = cert.params["ell"]
    m = len(mu)
    occ = [i for i in range(len(y) - m + 1) if y[i:i + m] == mu]
    runs = [(o - g, o - g + ell) for o in occ
            if o - g >= 0 and o - g + ell <= len(y)]
    return runs


def decode_stream(cert: EmbeddingCertificate, y, *, with_offset: bool = False):
    """Recover the determined source coordinates from a channel output.

    Pipeline route: stamps localize the blank runs, segment lengths pick the
    table, and the decoded content is mandatorily re-encoded and compared
    against the input; SyncFailure below two stamps, DecodeMismatch on any
    inconsistency.  Direct route: symbolwise inversion plus the same
    re-encode check.
    """
    y = word(y)
    if cert.route == "direct":
        invmap = cert.params["inverse"]
        try:
            dec = tuple(invmap[a] for a in y)
        except KeyError as exc:
            raise DecodeMismatch(f"symbol {exc} is outside the image") from exc
        re = tuple(cert.params["composite"][a] for a in dec)
        if re != y:
            raise DecodeMismatch("re-encode disagrees with the input")
        return (0, dec) if with_offset else dec

    P = cert.params["N"]
    ell = cert.params["ell"]
    g = cert.params["g"]
    mu = cert.params["mu"]
    kappa = cert.params["kappa"]
    lam = cert.params["lam"]
    dinv = {}
    cinv = {}
    for inj in cert.stages and _cert_injections(cert):
        if inj.kind == "moderate":
            dinv[inj.n] = {v: k for k, v in inj.table.items()}
        else:
            cinv.update({v: k for k, v in inj.table.items()})
    runs = _stamp_runs(cert, y)
    if len(runs) < 2:
        raise SyncFailure(
            f"found {len(runs)} usable stamps, need at least 2")
    for (s1, e1), (s2, e2) in zip(runs, runs[1:]):
        if e1 > s2:
            raise DecodeMismatch("overlapping stamp regions")

    pieces = []
    for (s1, e1), (s2, e2) in zip(runs, runs[1:]):
        seg = y[e1:s2]
        m = len(seg)
        if m == 0:
            raise DecodeMismatch("adjacent stamps with no data between them")
        if m <= 2 * P - 1:
            tab = dinv.get(m + ell)
            zt = tab.get(seg) if tab else None
            if zt is None:
                raise DecodeMismatch(
                    f"segment {word_str(seg)} matches no data table")
            if kappa.get(seg) is None:
                raise DecodeMismatch("segment missing from the lift table")
        else:
            zt = _decode_run(cert, seg, cinv, s1, s2, P, ell)
        pieces.append(zt)
    zw = tuple(itertools.chain.from_iterable(pieces))

    lpsi = (cert.window - 1) // 2
    _reencode_compare(cert, zw, y, runs[0][0], lpsi)
    off = runs[0][0] + lpsi
    return (off, zw) if with_offset else zw


def _cert_injections(cert):
    if "injections" not in cert.stages:
        injs = []
        for doc in cert.params["injections"]:
            injs.append(BlockInjection(
                doc["kind"], doc["n"],
                {word(e["from"]): word(e["to"]) for e in doc["table"]}))
        cert.stages["injections"] = injs
    return cert.stages["injections"]


def _decode_run(cert, seg, cinv, s1, s2, P, ell):
    """Invert a periodic run segment, including its blank prefix."""
    rho = None
    for p in range(1, P):
        if all(seg[i] == seg[i + p] for i in range(len(seg) - p)):
            rho = seg[:p]
            break
    if rho is None:
        raise DecodeMismatch(f"long segment {word_str(seg)} is not periodic")
    can = _least_rotation(rho)
    zsrc = cinv.get(can)
    if zsrc is None:
        raise DecodeMismatch(f"run orbit {word_str(can)} matches no table")
    s = _rotation_offset(rho, can)
    p = len(can)
    # the interval starts at the blank run start s1; content anchored at
    # the segment start s1 + ell with rotation s
    return tuple(zsrc[((t - (s1 + ell)) + s) % p] for t in range(s1, s2))


def _reencode_compare(cert, zw, y, y_start, lpsi):
    if len(zw) < cert.window:
        zsrc = cert.stages["z1"]
        if not zsrc.membership(zw):
            raise DecodeMismatch("decoded content leaves the source language")
        return
    try:
        out = _stream_encode(cert, zw)
    except (UndefinedWindow, WindowTooShort) as exc:
        raise DecodeMismatch(f"decoded content does not re-encode: {exc}") from exc
    pi = cert.channel
    for i, a in enumerate(out):
        t = y_start + lpsi + i
        if 0 <= t < len(y) and pi.lookup((a,)) != y[t]:
            raise DecodeMismatch(
                f"re-encode disagrees with the input at position {t}")
