"""Parallel initiation/termination learners over a fanned-out stream.

Each interpretation is forwarded, in order, to both learners.  A learner first
folds the interpretation into its counters, then classifies its own failure to
account for the interpretation as FP or FN atoms, and routes control: an
initiation learner treats a missed transition (FN) as grounds for a new clause
and a spurious initiation (FP) as evidence for specialization; a termination
learner treats a missed ending (FP) as grounds for a new clause and a spurious
termination (FN) as evidence for specialization.
"""

from __future__ import annotations

import enum
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .learner import DecisionLog, LearnerConfig, RuleLearner
from .logic import Clause, ModeBias
from .semantics import INITIATED, TERMINATED, Interpretation, TargetSpec, type_domains

logger = logging.getLogger(__name__)

FP = "FP"
FN = "FN"


class Action(enum.Enum):
    THEORY_EXPANSION = "theory_expansion"
    CLAUSE_EXPANSION = "clause_expansion"


_DISPATCH = {
    (INITIATED, FP): Action.CLAUSE_EXPANSION,
    (INITIATED, FN): Action.THEORY_EXPANSION,
    (TERMINATED, FP): Action.THEORY_EXPANSION,
    (TERMINATED, FN): Action.CLAUSE_EXPANSION,
}


def dispatch(learner_kind: str, failure: str) -> Action:
    """Route a failure kind to the corrective action for the given learner."""
    try:
        return _DISPATCH[(learner_kind, failure)]
    except KeyError:
        raise ValueError(f"no dispatch rule for ({learner_kind!r}, {failure!r})") from None


def detect_failures(learner: RuleLearner, interp: Interpretation) -> set[str]:
    """Failure kinds of one learner's current theory on one interpretation.

    Initiation: FN when some annotated transition into holding has no firing
    clause, FP when some clause initiates a fluent that does not hold at t+1.
    Termination: FP when some fluent ends at t yet no clause terminates it,
    FN when some clause terminates a persisting fluent.
    Uses the firing sets cached by the preceding update_stats call.
    """
    fired = learner.last_fired
    failures: set[str] = set()
    if learner.config.kind == INITIATED:
        starting = {f for f in interp.holds_next - interp.holds_now
                    if learner.target.is_target(f)}
        if starting - fired:
            failures.add(FN)
        if any(f not in interp.holds_next for f in fired):
            failures.add(FP)
    else:
        ending = {f for f in interp.holds_now - interp.holds_next
                  if learner.target.is_target(f)}
        persisting = interp.holds_now & interp.holds_next
        if ending - fired:
            failures.add(FP)
        if fired & persisting:
            failures.add(FN)
    return failures


def process_interpretation(learner: RuleLearner, interp: Interpretation) -> None:
    """One online-learning step for one learner: update counters, pick at most one
    theory expansion or attempt clause expansions, then prune."""
    domains = type_domains(interp, learner.target)
    learner.update_stats(interp, domains)
    failures = detect_failures(learner, interp)
    actions = {dispatch(learner.config.kind, f) for f in failures}
    if Action.THEORY_EXPANSION in actions:
        learner.try_theory_expansion(interp)
    else:
        learner.expand_clauses(interp.id)
    learner.prune(interp.id)


@dataclass
class RunConfig:
    """Everything needed to run the two learners over a stream."""

    bias: ModeBias
    target: str
    delta: float = 1e-5
    depth: int = 1
    prune_threshold: float = 0.5
    warmup: int = 1000
    max_bottom_literals: int = 25
    buffer_size: int = 64
    progress_every: int = 0
    log: DecisionLog | None = None
    concurrent: bool = True

    def learner_config(self, kind: str) -> LearnerConfig:
        return LearnerConfig(kind=kind, delta=self.delta, depth=self.depth,
                             prune_threshold=self.prune_threshold, warmup=self.warmup,
                             max_bottom_literals=self.max_bottom_literals)


@dataclass
class RunResult:
    init_learner: RuleLearner
    term_learner: RuleLearner
    interpretations: int
    init_seconds: float
    term_seconds: float
    peak_state_bytes: int = 0

    @property
    def train_seconds(self) -> float:
        """Reported training time: the maximum of the two parallel learners."""
        return max(self.init_seconds, self.term_seconds)

    def theory(self, warmup: int | None = None) -> list[Clause]:
        return merge_output(self.init_learner, self.term_learner, warmup)


def merge_output(init_learner: RuleLearner, term_learner: RuleLearner,
                 warmup: int | None = None) -> list[Clause]:
    """Union of both learners' output hypotheses as one program, initiation first."""
    return init_learner.output_hypothesis(warmup) + term_learner.output_hypothesis(warmup)


class _Worker(threading.Thread):
    """Consumes one learner's bounded queue; accumulates per-item processing time."""

    def __init__(self, learner: RuleLearner, buffer_size: int, progress_every: int,
                 sample_state: bool = False) -> None:
        super().__init__(daemon=True)
        self.learner = learner
        self.queue: queue.Queue[Interpretation | None] = queue.Queue(maxsize=max(1, buffer_size))
        self.progress_every = progress_every
        self.sample_state = sample_state
        self.seconds = 0.0
        self.peak_state = 0
        self.error: BaseException | None = None

    def run(self) -> None:
        try:
            while True:
                interp = self.queue.get()
                if interp is None:
                    return
                start = time.perf_counter()
                process_interpretation(self.learner, interp)
                self.seconds += time.perf_counter() - start
                self._tick()
        except BaseException as exc:  # propagated by run_online
            self.error = exc

    def _tick(self) -> None:
        seen = self.learner.interps_seen
        if self.sample_state and seen % 500 == 0:
            self.peak_state = max(self.peak_state, self.learner.state_bytes())
        if self.progress_every and seen % self.progress_every == 0:
            logger.info("learner=%s processed=%d clauses=%d mean_eps=%.5f",
                        self.learner.config.kind, seen, len(self.learner.clauses),
                        self.learner.tie_threshold)


def run_online(stream: Iterable[Interpretation], config: RunConfig,
               sample_state: bool = False) -> RunResult:
    """Fan a stream out to the two learners and collect their final states.

    Both learners observe the identical interpretation sequence in the same
    order.  With ``concurrent`` set, each learner runs on its own thread behind
    a bounded queue (back-pressure); otherwise the fan-out is sequential.
    Stream errors propagate to the caller.
    """
    target = TargetSpec.from_bias(config.bias, config.target)
    init = RuleLearner(config.bias, target, config.learner_config(INITIATED), config.log)
    term = RuleLearner(config.bias, target, config.learner_config(TERMINATED), config.log)
    count = 0
    if not config.concurrent:
        seconds = {INITIATED: 0.0, TERMINATED: 0.0}
        peak = 0
        for interp in stream:
            count += 1
            for learner in (init, term):
                start = time.perf_counter()
                process_interpretation(learner, interp)
                seconds[learner.config.kind] += time.perf_counter() - start
            if sample_state and count % 500 == 0:
                peak = max(peak, init.state_bytes() + term.state_bytes())
        return RunResult(init, term, count, seconds[INITIATED], seconds[TERMINATED], peak)

    workers = [_Worker(init, config.buffer_size, config.progress_every, sample_state),
               _Worker(term, config.buffer_size, config.progress_every, sample_state)]
    for w in workers:
        w.start()
    try:
        for interp in stream:
            count += 1
            for w in workers:
                w.queue.put(interp)
    finally:
        for w in workers:
            w.queue.put(None)
        for w in workers:
            w.join()
    for w in workers:
        if w.error is not None:
            raise w.error
    return RunResult(init, term, count, workers[0].seconds, workers[1].seconds,
                     workers[0].peak_state + workers[1].peak_state)
