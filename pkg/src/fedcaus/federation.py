"""Federated reconstruction protocol: clients answer scalar regret queries,
the server searches graph space by worst-case regret.

The server holds no data. It proposes candidate graphs and collects one
regret scalar per client per candidate. Two phases run in sequence. The
aggregation phase grows a skeleton with insert and delete moves, accepting a
move while the sorted regret vector keeps strictly decreasing, then settles
compelled orientations: a collider candidate is adopted when no client
objects to it while each of its reversed marks does draw an objection. The
refinement phase probes both orientations of every remaining undirected
edge the same way, adopting the direction whose reverse is objected to,
which is where clients with interventional data sharpen the result beyond
the observational class.

A regret at or below the tolerance reads as "consistent with everything
this client knows"; a regret above it is an objection. Orientation moves
are decided purely on that asymmetry, never on score descent, because a
correct mark does not lower any client's regret, it merely avoids raising
one.

Optionally each reported regret carries Laplace noise calibrated to a
sensitivity bound and a privacy budget.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .formats import parse_graph, serialize_graph
from .graphs import (
    Cpdag,
    InconsistentPdagError,
    PDGraph,
    _directed_part_acyclic,
    complete_pdag,
    skeleton,
)
from .scoring import LocalScoreCache, max_orientation_score, per_node_regret, score_pdag
from .sem import Dataset


class Phase(enum.Enum):
    AGGREGATION = "aggregation"
    REFINEMENT = "refinement"


class ClientFailure(RuntimeError):
    """A client could not produce a valid report; the round is aborted."""


@dataclass(frozen=True)
class RegretQuery:
    round_id: int
    phase: Phase
    graph_text: str


@dataclass(frozen=True)
class RegretReport:
    client_id: int
    round_id: int
    regret: float
    noised: bool


@dataclass(frozen=True)
class DpConfig:
    """Laplace mechanism parameters: scale = sensitivity / epsilon."""

    epsilon: float
    sensitivity: float
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.epsilon > 0 and self.sensitivity > 0):
            raise ValueError("epsilon and sensitivity must be positive")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


def laplace_noise(scale: float, rng: np.random.Generator) -> float:
    """One Laplace(0, scale) draw by inverting the CDF on a uniform sample.

    The median draw (u = 0.5) maps to exactly 0.0.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    u = rng.random() - 0.5
    inner = max(1.0 - 2.0 * abs(u), np.finfo(float).tiny)
    return float(-scale * np.sign(u) * math.log(inner))


def _effective_graph(h: PDGraph, mask: PDGraph) -> PDGraph:
    """Project a candidate onto the edges the local graph knows about.

    An edge survives only if both graphs have it. The candidate's direction
    wins outright whenever it is directed: a disagreement with the local mark
    must stay visible to the score, otherwise a wrongly oriented candidate
    would be silently re-oriented here and become indistinguishable from a
    right one. Where the candidate is undirected the local mark fills in,
    which is what makes missing orientations free and keeps converged
    candidates at zero regret.
    """
    hm, mm = h.matrix, mask.matrix
    both = (hm | hm.T) & (mm | mm.T)
    h_dir = hm & ~hm.T
    h_und = hm & hm.T
    m_dir = mm & ~mm.T
    m_und = mm & mm.T
    out = (h_dir & both) | (h_und & m_dir) | (h_und & m_und)
    return PDGraph(out, h.labels)


class ClientState:
    """One simulated participant: private data, a locally discovered graph,
    and the regret oracle the server is allowed to call.

    The only public surface the protocol uses is ``answer``; everything else
    is local. The reported regret is the baseline (the score of the local
    graph's class) minus the best score any orientation of the effective
    graph can reach. Whenever the candidate's marks are consistent with the
    local class, some orientation recovers a class member and the regret is
    at most zero on any data; a positive regret therefore singles out marks
    the local data genuinely rejects. Noiseless values are memoized per
    (phase, effective graph), so the many candidates that project onto the
    same local view cost one evaluation, and under privacy noise each
    repetition still gets a fresh draw.
    """

    def __init__(
        self,
        client_id: int,
        data: Dataset,
        local_cpdag: Cpdag,
        dp: DpConfig | None = None,
        penalty: float = 1.0,
    ):
        if local_cpdag.node_count != data.d:
            raise ValueError("local graph node count differs from data")
        self.client_id = int(client_id)
        self.dp = dp
        self._data = data
        self._penalty = float(penalty)
        self._local = local_cpdag
        self._local_skeleton = skeleton(local_cpdag)
        self._cache = LocalScoreCache(data, penalty)
        self._baseline = score_pdag(data, local_cpdag, self._cache, penalty)
        if not math.isfinite(self._baseline):
            raise ValueError("baseline score is not finite")
        self._memo: dict[tuple[Phase, bytes], float] = {}
        self._rng = np.random.default_rng(dp.rng_seed) if dp is not None else None
        self.queries_answered = 0

    @property
    def node_count(self) -> int:
        return self._data.d

    @property
    def baseline_score(self) -> float:
        return self._baseline

    def _effective(self, h: PDGraph, phase: Phase) -> PDGraph:
        """Candidate projected onto local knowledge.

        During aggregation the full local graph contributes its marks, so a
        direction the client cannot distinguish costs the candidate nothing,
        while a direction that contradicts the local class stays visible and
        is penalized by the score. During refinement only the local skeleton
        masks, so every surviving mark is the candidate's own claim and is
        scored as such.
        """
        mask = self._local if phase is Phase.AGGREGATION else self._local_skeleton
        return _effective_graph(h, mask)

    def answer(self, query: RegretQuery) -> RegretReport:
        """Regret of one candidate graph against the local view.

        A candidate whose directed marks cannot be realized by any acyclic
        orientation of the locally visible skeleton draws the largest
        representable objection instead of an error, so one impossible probe
        cannot abort a run it should merely lose.
        """
        try:
            h = parse_graph(query.graph_text)
        except ValueError as exc:
            raise ClientFailure(f"client {self.client_id}: unreadable query graph: {exc}") from exc
        if h.node_count != self._data.d:
            raise ClientFailure(
                f"client {self.client_id}: query has {h.node_count} nodes, data has {self._data.d}"
            )
        effective = self._effective(h, query.phase)
        key = (query.phase, effective.key())
        value = self._memo.get(key)
        if value is None:
            best = max_orientation_score(self._data, effective, self._cache, self._penalty)
            value = self._baseline - best if math.isfinite(best) else 1e300
            if math.isnan(value):
                raise ClientFailure(f"client {self.client_id}: non-finite regret")
            self._memo[key] = value
        if self._rng is not None:
            value = value + laplace_noise(self.dp.scale, self._rng)
        self.queries_answered += 1
        return RegretReport(self.client_id, query.round_id, float(value), self._rng is not None)

    def per_node_decomposition(self, h: PDGraph, phase: Phase) -> np.ndarray:
        """Node-by-node regret of a candidate, for debugging and worked
        examples. Not part of the protocol; the server never sees this."""
        return per_node_regret(self._data, self._effective(h, phase), self._local, self._cache, self._penalty)


@dataclass
class FederationConfig:
    tolerance: float = 1e-6
    max_parents: int | None = None
    max_rounds: int | None = None
    parallel_queries: bool = False
    assume_observational_client: bool = True

    def round_cap(self, d: int) -> int:
        return self.max_rounds if self.max_rounds is not None else 10 * d * d


@dataclass(frozen=True)
class CandidateRecord:
    """One candidate evaluation, one line of the round log."""

    round: int
    phase: str
    operator: str
    worst_regret: float | None
    accepted: bool

    def keys(self):
        return ("round", "phase", "operator", "worst_regret", "accepted").__iter__()

    def __getitem__(self, key: str):
        return getattr(self, key)


@dataclass
class FederationResult:
    cpdag: Cpdag
    refined: PDGraph
    log: list[CandidateRecord] = field(default_factory=list)
    rounds: int = 0
    queries: int = 0


class _Server:
    """Search state plus the query fan-out. Clients are duck-typed: anything
    with an ``answer(RegretQuery) -> RegretReport`` method participates.

    Variable names are shared schema, so the caller may pass them in; they
    are cosmetic (logs and serialized graphs) and never come from clients.
    """

    def __init__(self, clients, cfg: FederationConfig, labels=None):
        if not clients:
            raise ValueError("at least one client is required")
        self.clients = list(clients)
        self.cfg = cfg
        self.labels = tuple(labels) if labels is not None else None
        self.log: list[CandidateRecord] = []
        self.round_id = 0
        self.queries = 0

    def worst_regret(self, phase: Phase, g: PDGraph) -> float:
        return self.regret_vector(phase, g)[0]

    def regret_vector(self, phase: Phase, g: PDGraph) -> tuple[float, ...]:
        """All client regrets for one candidate, sorted worst first."""
        query = RegretQuery(self.round_id, phase, serialize_graph(g))
        self.round_id += 1
        reports = self._collect(query)
        self.queries += len(reports)
        return tuple(sorted((r.regret for r in reports), reverse=True))

    def _collect(self, query: RegretQuery) -> list[RegretReport]:
        try:
            if self.cfg.parallel_queries and len(self.clients) > 1:
                with ThreadPoolExecutor(max_workers=len(self.clients)) as pool:
                    reports = list(pool.map(lambda c: c.answer(query), self.clients))
            else:
                reports = [c.answer(query) for c in self.clients]
        except ClientFailure:
            raise
        except Exception as exc:
            raise ClientFailure(f"round {query.round_id}: client error: {exc}") from exc
        return sorted(reports, key=lambda r: r.client_id)

    def record(self, phase: Phase, operator: str, worst: float | None, accepted: bool) -> None:
        self.log.append(CandidateRecord(self.round_id, phase.value, operator, worst, accepted))


def _dedup(candidates: list[tuple[str, PDGraph]]) -> list[tuple[str, PDGraph]]:
    seen: set[bytes] = set()
    out = []
    for desc, g in candidates:
        k = g.key()
        if k not in seen:
            seen.add(k)
            out.append((desc, g))
    return out


def _directed_marks(g: PDGraph) -> int:
    return int(np.sum(g.matrix & ~g.matrix.T))


def _pick_best(server: _Server, candidates, phase: Phase):
    """Evaluate every candidate and pick the one with the smallest sorted
    regret vector (worst client first), breaking exact vector ties toward
    fewer directed marks, then enumeration order.

    Comparing full vectors instead of the maximum alone matters twice over.
    A harmful move can hide behind another client's larger regret, but the
    vector still shows its damage at whichever position that client sorts
    to. And a move that helps only a client below the maximum still reads
    as progress, so the walk cannot stall just because the currently worst
    client has nothing left to gain."""
    best_idx = -1
    best_key: tuple = ()
    evaluated: list[tuple[str, float]] = []
    best_vec: tuple[float, ...] = ()
    for idx, (desc, g) in enumerate(candidates):
        vec = server.regret_vector(phase, g)
        evaluated.append((desc, vec[0]))
        key = (vec, _directed_marks(g), idx)
        if best_idx < 0 or key < best_key:
            best_key = key
            best_idx = idx
            best_vec = vec
    return best_idx, best_vec, evaluated


def _lex_improves(candidate: tuple[float, ...], incumbent: tuple[float, ...], tol: float) -> bool:
    """Strict lexicographic decrease of a sorted regret vector, with every
    comparison padded by the tolerance so floating-point jitter and DP noise
    cannot fake progress."""
    for a, b in zip(candidate, incumbent):
        if a < b - tol:
            return True
        if a > b + tol:
            return False
    return False


def _greedy_stage(server: _Server, current: PDGraph, incumbent: tuple[float, ...], enumerate_stage, phase: Phase):
    cap = server.cfg.round_cap(current.node_count)
    for _ in range(cap):
        candidates = _dedup(enumerate_stage(current))
        if not candidates:
            break
        best_idx, best_vec, evaluated = _pick_best(server, candidates, phase)
        accept = _lex_improves(best_vec, incumbent, server.cfg.tolerance)
        for i, (desc, worst) in enumerate(evaluated):
            server.record(phase, desc, worst, accepted=accept and i == best_idx)
        if not accept:
            break
        current = candidates[best_idx][1]
        incumbent = best_vec
    return current, incumbent


def _skeleton_insert_stage(g: PDGraph) -> list[tuple[str, PDGraph]]:
    labels = g.labels
    out = []
    d = g.node_count
    for i in range(d):
        for j in range(i + 1, d):
            if not g.adjacent(i, j):
                m = g.matrix.copy()
                m[i, j] = m[j, i] = True
                out.append((f"insert {labels[i]}-{labels[j]}", PDGraph(m, labels)))
    return out


def _skeleton_delete_stage(g: PDGraph) -> list[tuple[str, PDGraph]]:
    labels = g.labels
    out = []
    for i, j in sorted(skeleton(g).undirected_edges()):
        m = g.matrix.copy()
        m[i, j] = m[j, i] = False
        out.append((f"delete {labels[i]}-{labels[j]}", PDGraph(m, labels)))
    return out


def _consolidate_marks(server: _Server, current: PDGraph, phase: Phase) -> PDGraph:
    """Settle compelled colliders on a converged skeleton by unanimity.

    For each unshielded triple a - c - b the server probes the collider
    a -> c <- b together with the reversed single marks c -> a and c -> b.
    The collider is adopted exactly when nobody objects to it while every
    probed reverse draws an objection. Correct marks never lower a regret,
    they only avoid raising one, so the decision has to rest on that
    asymmetry rather than on descent. A triple whose center already has one
    mark into it (from an earlier adoption) is probed with just the missing
    mark and its reverse, which picks up colliders that share an edge.

    A reverse probe whose marks cannot be extended acyclically counts as
    objected to without being sent; it is logged with a blank regret. Meek
    propagation runs once at the very end, after the last sweep: a mid-pass
    closure would orient edges at centers whose remaining colliders have not
    been probed yet, and those premature marks are exactly the kind of error
    the probes cannot undo.
    """
    tol = server.cfg.tolerance
    labels = current.labels
    for _ in range(server.cfg.round_cap(current.node_count)):
        changed = False
        for c in range(current.node_count):
            spokes = sorted(set(current.undirected_neighbors(c)) | set(current.parents(c)))
            for a, b in itertools.combinations(spokes, 2):
                if current.adjacent(a, b):
                    continue
                m = current.matrix
                a_in, a_und = m[a, c] and not m[c, a], m[a, c] and m[c, a]
                b_in, b_und = m[b, c] and not m[c, b], m[b, c] and m[c, b]
                if not ((a_in or a_und) and (b_in or b_und)):
                    continue
                if a_in and b_in:
                    continue
                pair = current.orient([(a, c), (b, c)])
                if not _directed_part_acyclic(pair.matrix):
                    continue
                w_pair = server.worst_regret(phase, pair)
                reverses: list[tuple[int, float, float | None]] = []
                for s in (a, b):
                    if not (m[s, c] and m[c, s]):
                        continue
                    rev = current.orient([(c, s)])
                    if _directed_part_acyclic(rev.matrix):
                        w = server.worst_regret(phase, rev)
                        reverses.append((s, w, w))
                    else:
                        reverses.append((s, math.inf, None))
                adopt = w_pair <= tol and all(w > tol for _, w, _ in reverses)
                desc = f"collide {labels[a]}->{labels[c]}<-{labels[b]}"
                server.record(phase, desc, w_pair, accepted=adopt)
                for s, _, shown in reverses:
                    server.record(phase, f"reverse {labels[c]}->{labels[s]}", shown, accepted=False)
                if adopt:
                    current = pair
                    changed = True
        if not changed:
            break
    try:
        return complete_pdag(current)
    except InconsistentPdagError:
        return current


def phase1_aggregate(
    clients,
    cfg: FederationConfig | None = None,
    labels=None,
    server: _Server | None = None,
) -> Cpdag:
    """Reconstruct the consensus CPDAG by worst-regret greedy search from the
    empty graph.

    The walk grows the skeleton one undirected edge at a time while the worst
    regret keeps dropping, then tries deletions the same way. Orientations
    are settled last, once every client's regret has bottomed out: committing
    marks while edges are still missing is unreliable, because scores of
    partial graphs can genuinely prefer a wrong collider whose shield is
    absent. At the converged skeleton every wrong mark is visible to some
    client and every right mark is free, so the collider consolidation pass
    is safe.
    """
    cfg = cfg or FederationConfig()
    srv = server or _Server(clients, cfg, labels)
    d = srv.clients[0].node_count
    current: PDGraph = PDGraph.empty(d, srv.labels)
    incumbent = srv.regret_vector(Phase.AGGREGATION, current)
    srv.record(Phase.AGGREGATION, "start", incumbent[0], accepted=True)
    current, incumbent = _greedy_stage(srv, current, incumbent, _skeleton_insert_stage, Phase.AGGREGATION)
    current, incumbent = _greedy_stage(srv, current, incumbent, _skeleton_delete_stage, Phase.AGGREGATION)
    current = _consolidate_marks(srv, current, Phase.AGGREGATION)
    return Cpdag._trusted(current.matrix, srv.labels)


def phase2_refine(
    g_hat: Cpdag,
    clients,
    cfg: FederationConfig | None = None,
    server: _Server | None = None,
) -> PDGraph:
    """Tighten the consensus graph with the clients' interventional
    knowledge. The skeleton never changes and existing directed edges are
    never reversed; the only moves are orientations of remaining undirected
    edges.

    Each such edge is probed in both directions against the current graph.
    A direction is adopted when it draws no objection while its reverse
    does: the client whose intervention severs an edge sees which way the
    surviving dependencies point, and the mutilated class it scores against
    admits only one of the two marks. If both directions pass (no client
    can tell, the edge is reversible everywhere) or both fail (conflicting
    evidence, typically finite-sample) the edge is left undirected. A
    direction whose marks cannot be extended acyclically counts as objected
    to without being queried and is logged with a blank regret. Adopted
    marks are propagated between passes so their consequences feed later
    probes, and the sweep repeats until a pass adopts nothing.
    """
    cfg = cfg or FederationConfig()
    srv = server or _Server(clients, cfg)
    current: PDGraph = g_hat
    tol = cfg.tolerance
    labels = current.labels
    srv.record(Phase.REFINEMENT, "start", srv.worst_regret(Phase.REFINEMENT, current), accepted=True)
    for _ in range(cfg.round_cap(current.node_count)):
        changed = False
        for i, j in sorted(current.undirected_edges()):
            sides = []
            for u, v in ((i, j), (j, i)):
                h = current.orient([(u, v)])
                if _directed_part_acyclic(h.matrix):
                    w = srv.worst_regret(Phase.REFINEMENT, h)
                    sides.append((u, v, h, w, w))
                else:
                    sides.append((u, v, h, math.inf, None))
            (fu, fv, fwd, w_fwd, show_fwd), (ru, rv, rev, w_rev, show_rev) = sides
            take_fwd = w_fwd <= tol < w_rev
            take_rev = w_rev <= tol < w_fwd
            srv.record(Phase.REFINEMENT, f"orient {labels[fu]}->{labels[fv]}", show_fwd, accepted=take_fwd)
            srv.record(Phase.REFINEMENT, f"orient {labels[ru]}->{labels[rv]}", show_rev, accepted=take_rev)
            if take_fwd:
                current, changed = fwd, True
            elif take_rev:
                current, changed = rev, True
        if not changed:
            break
        try:
            current = complete_pdag(current)
        except InconsistentPdagError:
            pass
    return current


def run_federated_discovery(clients, cfg: FederationConfig | None = None, labels=None) -> FederationResult:
    """Full two-phase protocol. Returns both graphs, the candidate log, and
    the total number of rounds and scalar reports exchanged."""
    cfg = cfg or FederationConfig()
    srv = _Server(clients, cfg, labels)
    consensus = phase1_aggregate(clients, cfg, server=srv)
    refined = phase2_refine(consensus, clients, cfg, server=srv)
    return FederationResult(consensus, refined, srv.log, srv.round_id, srv.queries)
