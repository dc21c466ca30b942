"""Single-pass online construction of one head kind's clauses.

One learner owns either the initiation or the termination side of a theory.
Each clause keeps accumulated tp/fp/fn counts together with the counts of all
its live specializations (parent body plus up to ``depth`` literals from the
clause's bottom clause).  A clause is replaced by its best specialization once
the Hoeffding bound over the observed score difference allows the decision, or
earlier on an adaptive tie-break; clauses whose score provably sits below the
quality threshold are pruned.  Interpretations are never stored: each one is
reduced to counter increments and discarded.
"""

from __future__ import annotations

import json
import math
import sys
import threading
from dataclasses import dataclass, field
from itertools import combinations
from typing import IO, Iterable, Sequence

from .bottom import BottomClause, Seed, abduce_seeds, build_bottom
from .logic import (
    Clause,
    Literal,
    ModeBias,
    Term,
    clause_key,
    render_clause,
    theta_subsumes,
)
from .semantics import (
    HEAD_KINDS,
    INITIATED,
    Interpretation,
    OutcomeDelta,
    TargetSpec,
    evaluate_family,
    infer_var_types,
    type_domains,
)


class NoSeedError(ValueError):
    """Raised when an interpretation yields no abducible seed of the requested kind."""


@dataclass
class ClauseStats:
    """Accumulated evaluation counters of one clause over the stream."""

    n: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def record(self, delta: OutcomeDelta) -> None:
        self.n += 1
        self.tp += delta.tp
        self.fp += delta.fp
        self.fn += delta.fn

    def as_dict(self) -> dict:
        return {"n": self.n, "tp": self.tp, "fp": self.fp, "fn": self.fn}


def clause_score(stats: ClauseStats, kind: str) -> float:
    """Mean clause quality: precision for initiation, recall for termination.

    Computed from the accumulated counts; 0.0 when the denominator is zero.
    """
    if kind == INITIATED:
        denom = stats.tp + stats.fp
    else:
        denom = stats.tp + stats.fn
    return stats.tp / denom if denom else 0.0


def hoeffding_epsilon(delta: float, n: int) -> float:
    """Error margin for a [0,1] mean after n independent observations."""
    if n < 1:
        raise ValueError("insufficient observations: n must be >= 1")
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class LearnerConfig:
    kind: str
    delta: float = 1e-5
    depth: int = 1
    prune_threshold: float = 0.5
    warmup: int = 1000
    max_bottom_literals: int = 25

    def __post_init__(self) -> None:
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"kind must be one of {HEAD_KINDS}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0,1)")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.prune_threshold <= 1.0:
            raise ValueError("prune threshold must lie in [0,1]")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")


@dataclass
class Candidate:
    clause: Clause
    added: tuple[Literal, ...]
    stats: ClauseStats = field(default_factory=ClauseStats)


@dataclass
class LearnedClause:
    """A clause under construction: its bottom clause, counters, and live candidates."""

    id: int
    clause: Clause
    bottom: BottomClause
    stats: ClauseStats = field(default_factory=ClauseStats)
    candidates: list[Candidate] = field(default_factory=list)

    def score(self, kind: str) -> float:
        return clause_score(self.stats, kind)


def specializations(clause: Clause, bottom: BottomClause, depth: int) -> list[Clause]:
    """All clauses extending the body with 1..depth unused bottom literals,
    deduplicated up to variable renaming."""
    unused = [l for l in bottom.body if l not in clause.body]
    out: list[Clause] = []
    seen: set[str] = set()
    for size in range(1, depth + 1):
        for combo in combinations(unused, size):
            cand = Clause(clause.head, clause.body + combo)
            key = clause_key(cand)
            if key not in seen:
                seen.add(key)
                out.append(cand)
    return out


def _candidate_set(clause: Clause, bottom: BottomClause, depth: int) -> list[Candidate]:
    return [Candidate(c, c.body[len(clause.body):]) for c in specializations(clause, bottom, depth)]


class DecisionLog:
    """Line-delimited JSON records of expansion and prune events, for auditing."""

    def __init__(self, sink: IO[str]) -> None:
        self._sink = sink
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            self._sink.write(line + "\n")


class RuleLearner:
    """Online learner for one head kind; single-owner mutable state."""

    def __init__(self, bias: ModeBias, target: TargetSpec, config: LearnerConfig,
                 log: DecisionLog | None = None) -> None:
        self.bias = bias
        self.target = target
        self.config = config
        self.log = log
        self.clauses: list[LearnedClause] = []
        self.interps_seen = 0
        self.eps_count = 0
        self.eps_sum = 0.0
        self._next_id = 0
        self._last_fired: frozenset[Term] = frozenset()
        self._var_types: dict[int, dict[str, str]] = {}
        if log is not None:
            log.write({"event": "config", "learner": self.config.kind,
                       "delta": config.delta, "depth": config.depth,
                       "prune_threshold": config.prune_threshold,
                       "warmup": config.warmup})

    # -- statistics ---------------------------------------------------------

    @property
    def tie_threshold(self) -> float:
        """Running mean of every Hoeffding margin computed by this learner."""
        return self.eps_sum / self.eps_count if self.eps_count else 0.0

    def _observe_epsilon(self, eps: float) -> float:
        self.eps_count += 1
        self.eps_sum += eps
        return self.tie_threshold

    def update_stats(self, interp: Interpretation,
                     domains: dict[str, tuple[Term, ...]] | None = None) -> frozenset[Term]:
        """Fold one interpretation into every clause's and candidate's counters.

        Returns the union of ground fluents the theory's clauses fired on, for
        failure detection.  The interpretation itself is not retained.
        """
        if domains is None:
            domains = type_domains(interp, self.target)
        fired: set[Term] = set()
        for learned in self.clauses:
            fam = evaluate_family(learned.clause, [c.added for c in learned.candidates],
                                  interp, self.target, domains,
                                  self._types_for(learned))
            learned.stats.record(fam.parent)
            for cand, delta in zip(learned.candidates, fam.extras):
                cand.stats.record(delta)
            fired |= fam.fired
        self.interps_seen += 1
        self._last_fired = frozenset(fired)
        return self._last_fired

    def _types_for(self, learned: LearnedClause) -> dict[str, str]:
        types = self._var_types.get(learned.id)
        if types is None:
            types = infer_var_types(learned.bottom.as_clause(), self.target)
            self._var_types[learned.id] = types
        return types

    @property
    def last_fired(self) -> frozenset[Term]:
        return self._last_fired

    # -- theory expansion ---------------------------------------------------

    def start_new_clause(self, interp: Interpretation) -> LearnedClause:
        """Most-specific bottom from the interpretation's best seed, entered into
        the theory as an empty-bodied clause with zeroed counters."""
        seeds = [s for s in abduce_seeds(interp, self.target) if s.kind == self.config.kind]
        if not seeds:
            raise NoSeedError(f"no {self.config.kind} seed in interpretation {interp.id}")
        bottoms = [build_bottom(s, interp, self.bias, self.target,
                                self.config.max_bottom_literals) for s in seeds]
        best = max(range(len(seeds)),
                   key=lambda i: (len(bottoms[i].body), repr(seeds[i].fluent)))
        bottom = bottoms[best]
        clause = Clause(bottom.head)
        learned = LearnedClause(self._next_id, clause, bottom,
                                candidates=_candidate_set(clause, bottom, self.config.depth))
        self._next_id += 1
        return learned

    def try_theory_expansion(self, interp: Interpretation) -> LearnedClause | None:
        """Add a new clause unless no seed exists or an existing clause's bottom
        theta-subsumes the candidate bottom (redundant context)."""
        try:
            learned = self.start_new_clause(interp)
        except NoSeedError:
            return None
        new_bottom = learned.bottom.as_clause()
        for existing in self.clauses:
            if theta_subsumes(existing.bottom.as_clause(), new_bottom):
                return None
        self.clauses.append(learned)
        if self.log is not None:
            self.log.write({"event": "new_clause", "learner": self.config.kind,
                            "interp": interp.id, "clause_id": learned.id,
                            "clause": render_clause(learned.clause),
                            "bottom_size": len(learned.bottom.body)})
        return learned

    # -- clause expansion ---------------------------------------------------

    def try_expand_clause(self, learned: LearnedClause,
                          interp_id: int | None = None) -> LearnedClause:
        """Replace the clause by its best specialization when the Hoeffding test
        (or the adaptive tie-break) sanctions the choice; otherwise keep it."""
        if learned.stats.n < 1 or not learned.candidates:
            return learned
        kind = self.config.kind
        eps = hoeffding_epsilon(self.config.delta, learned.stats.n)
        tau = self._observe_epsilon(eps)
        ranked = sorted(learned.candidates,
                        key=lambda c: (-clause_score(c.stats, kind), clause_key(c.clause)))
        best = ranked[0]
        g_best = clause_score(best.stats, kind)
        g_second = clause_score(ranked[1].stats, kind) if len(ranked) > 1 else 0.0
        g_parent = learned.score(kind)
        if not (g_best > g_parent and (g_best - g_second > eps or eps < tau)):
            return learned
        new_clause = best.clause
        replacement = LearnedClause(self._next_id, new_clause, learned.bottom,
                                    candidates=_candidate_set(new_clause, learned.bottom,
                                                              self.config.depth))
        self._next_id += 1
        self._var_types[replacement.id] = self._types_for(learned)
        if self.log is not None:
            self.log.write({
                "event": "expand", "learner": kind, "interp": interp_id,
                "clause_id": learned.id, "new_clause_id": replacement.id,
                "n": learned.stats.n, "g": g_parent, "g_best": g_best,
                "g_second": g_second, "eps": eps, "tau": tau,
                "eps_count": self.eps_count, "eps_sum": self.eps_sum,
                "parent_counts": learned.stats.as_dict(),
                "best_counts": best.stats.as_dict(),
                "second_counts": ranked[1].stats.as_dict() if len(ranked) > 1 else None,
                "clause": render_clause(learned.clause),
                "selected": render_clause(new_clause),
                "added": [repr(l) for l in best.added],
            })
        return replacement

    def expand_clauses(self, interp_id: int | None = None) -> None:
        for i, learned in enumerate(self.clauses):
            self.clauses[i] = self.try_expand_clause(learned, interp_id)

    # -- pruning ------------------------------------------------------------

    def prune(self, interp_id: int | None = None) -> list[LearnedClause]:
        """Drop every clause whose score sits provably below the quality threshold.

        Uses each clause's own current margin; suppressed during a clause's
        warm-up so newborn clauses get evaluated first.
        """
        kept: list[LearnedClause] = []
        removed: list[LearnedClause] = []
        for learned in self.clauses:
            n = learned.stats.n
            if n < max(1, self.config.warmup):
                kept.append(learned)
                continue
            eps = hoeffding_epsilon(self.config.delta, n)
            g = learned.score(self.config.kind)
            if self.config.prune_threshold - g > eps:
                removed.append(learned)
                if self.log is not None:
                    self.log.write({"event": "prune", "learner": self.config.kind,
                                    "interp": interp_id, "clause_id": learned.id,
                                    "n": n, "g": g, "eps": eps,
                                    "prune_threshold": self.config.prune_threshold,
                                    "counts": learned.stats.as_dict(),
                                    "clause": render_clause(learned.clause)})
                self._var_types.pop(learned.id, None)
            else:
                kept.append(learned)
        self.clauses = kept
        return removed

    # -- output -------------------------------------------------------------

    def output_hypothesis(self, warmup: int | None = None) -> list[Clause]:
        """Clauses evaluated on at least the warm-up number of interpretations."""
        minimum = self.config.warmup if warmup is None else warmup
        return [l.clause for l in self.clauses if l.stats.n >= minimum]

    # -- introspection ------------------------------------------------------

    def state_bytes(self) -> int:
        """Approximate resident size of the learner state (clauses, candidates,
        counters); used to check that memory does not grow with stream length."""
        seen: set[int] = set()

        def size(obj) -> int:
            if id(obj) in seen:
                return 0
            seen.add(id(obj))
            total = sys.getsizeof(obj)
            if isinstance(obj, dict):
                total += sum(size(k) + size(v) for k, v in obj.items())
            elif isinstance(obj, (list, tuple, set, frozenset)):
                total += sum(size(x) for x in obj)
            elif hasattr(obj, "__dict__"):
                total += size(obj.__dict__)
            elif hasattr(obj, "__slots__"):
                total += sum(size(getattr(obj, s)) for s in obj.__slots__
                             if hasattr(obj, s))
            return total

        return size(self.clauses) + size(self._var_types) + size(self._last_fired)
