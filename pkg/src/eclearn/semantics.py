"""Event Calculus semantics over consecutive time-point windows.

Implements the two domain-independent axioms — a fluent holds at t+1 if it was
initiated at t, or if it held at t and was not terminated at t — together with
the per-clause outcome counting used to score initiation and termination
clauses independently of each other.

Clause variables are grounded over typed domains derived from the mode
declarations: a type's domain in an interpretation is the set of ground terms
occupying that type's placemarker slots in the interpretation's facts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Iterable, Iterator, Sequence

from .logic import (
    Clause,
    Const,
    FactSet,
    Literal,
    ModeBias,
    Placemarker,
    Struct,
    Term,
    Var,
    apply_literal,
    apply_term,
    is_ground,
    join_positives,
    literal_vars,
    one_way_match,
    render_term,
    term_vars,
)

INITIATED = "initiatedAt"
TERMINATED = "terminatedAt"
HOLDS = "holdsAt"
HAPPENS = "happensAt"

HEAD_KINDS = (INITIATED, TERMINATED)


def holds_atom(fluent: Term, time: int) -> Literal:
    return Literal(HOLDS, (fluent, Const(time)))


@dataclass(frozen=True)
class Interpretation:
    """One training instance: ground facts over the consecutive pair (t, t+1).

    ``narrative`` holds observations (simple events, context, derived test
    atoms); ``annotation`` holds the ground holdsAt atoms for target fluents
    at t and t+1, closed-world for absences.
    """

    id: int
    t: int
    narrative: frozenset[Literal]
    annotation: frozenset[Literal]

    @cached_property
    def facts(self) -> FactSet:
        return FactSet(self.narrative)

    @cached_property
    def holds_now(self) -> frozenset[Term]:
        return self._holds(self.t)

    @cached_property
    def holds_next(self) -> frozenset[Term]:
        return self._holds(self.t + 1)

    def _holds(self, time: int) -> frozenset[Term]:
        time_const = Const(time)
        return frozenset(a.args[0] for a in self.annotation
                         if a.pred == HOLDS and len(a.args) == 2 and a.args[1] == time_const)


@dataclass(frozen=True)
class OutcomeDelta:
    """Per-interpretation tp/fp/fn contribution of one clause."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "OutcomeDelta") -> "OutcomeDelta":
        return OutcomeDelta(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


# ---------------------------------------------------------------------------
# Target description and typed domains
# ---------------------------------------------------------------------------

class BiasError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """The learned fluent: its typed template plus the bias it came from."""

    bias: ModeBias
    name: str
    fluent_template: Term      # e.g. moving(+person,+person)
    time_type: str
    any_arity: bool = False    # functor-only matching, for bias-less stream reads

    @staticmethod
    def from_bias(bias: ModeBias, name: str) -> "TargetSpec":
        template: Term | None = None
        time_type = "time"
        for decl in bias.heads:
            lit = decl.literal
            if lit.pred not in HEAD_KINDS or len(lit.args) != 2:
                continue
            fluent = lit.args[0]
            functor = fluent.functor if isinstance(fluent, Struct) else None
            if functor == name or (isinstance(fluent, Const) and fluent.value == name):
                template = fluent
                if isinstance(lit.args[1], Placemarker):
                    time_type = lit.args[1].type
                break
        if template is None:
            raise BiasError(f"no modeh declaration found for target fluent {name!r}")
        return TargetSpec(bias, name, template, time_type)

    def head_decl(self, kind: str) -> Literal:
        return Literal(kind, (self.fluent_template, Placemarker("+", self.time_type)))

    def is_target(self, fluent: Term) -> bool:
        if isinstance(self.fluent_template, Struct):
            return (isinstance(fluent, Struct)
                    and fluent.functor == self.fluent_template.functor
                    and len(fluent.args) == len(self.fluent_template.args))
        return fluent == Const(self.name)


def _collect_typed(decl: Term, term: Term, out: dict[str, set[Term]]) -> bool:
    """Walk a declaration template against a ground term, collecting slot fillers."""
    if isinstance(decl, Placemarker):
        if not is_ground(term):
            return False
        out.setdefault(decl.type, set()).add(term)
        return True
    if isinstance(decl, Struct):
        if not isinstance(term, Struct) or decl.functor != term.functor \
                or len(decl.args) != len(term.args):
            return False
        return all(_collect_typed(d, a, out) for d, a in zip(decl.args, term.args))
    return decl == term


def _collect_literal(decl: Literal, atom: Literal, out: dict[str, set[Term]]) -> bool:
    if decl.pred != atom.pred or len(decl.args) != len(atom.args):
        return False
    tmp: dict[str, set[Term]] = {}
    if all(_collect_typed(d, a, tmp) for d, a in zip(decl.args, atom.args)):
        for k, vals in tmp.items():
            out.setdefault(k, set()).update(vals)
        return True
    return False


def type_domains(interp: Interpretation, target: TargetSpec) -> dict[str, tuple[Term, ...]]:
    """Per-type domains observed in one interpretation, sorted for determinism."""
    out: dict[str, set[Term]] = {}
    decls = [d.literal for d in target.bias.bodies]
    annotation_decl = Literal(HOLDS, (target.fluent_template, Placemarker("+", target.time_type)))
    for atom in interp.narrative:
        for decl in decls:
            _collect_literal(decl, atom, out)
        _collect_literal(annotation_decl, atom, out)
    for atom in interp.annotation:
        _collect_literal(annotation_decl, atom, out)
    return {k: tuple(sorted(v, key=render_term)) for k, v in out.items()}


def _align_var_types(decl: Term, term: Term, out: dict[str, str]) -> bool:
    if isinstance(decl, Placemarker):
        if isinstance(term, Var):
            out.setdefault(term.name, decl.type)
        return True
    if isinstance(decl, Struct):
        if not isinstance(term, Struct) or decl.functor != term.functor \
                or len(decl.args) != len(term.args):
            return False
        return all(_align_var_types(d, a, out) for d, a in zip(decl.args, term.args))
    return decl == term or isinstance(term, Var)


def infer_var_types(clause: Clause, target: TargetSpec) -> dict[str, str]:
    """Map each clause variable to its mode type, by aligning literals with declarations."""
    out: dict[str, str] = {}
    head_decl = target.head_decl(clause.head.pred)
    if len(clause.head.args) == len(head_decl.args):
        for d, a in zip(head_decl.args, clause.head.args):
            _align_var_types(d, a, out)
    for lit in clause.body:
        for decl in target.bias.bodies:
            if decl.literal.pred != lit.pred or len(decl.literal.args) != len(lit.args):
                continue
            tmp = dict(out)
            if all(_align_var_types(d, a, tmp) for d, a in zip(decl.literal.args, lit.args)):
                out = tmp
                break
    return out


# ---------------------------------------------------------------------------
# Clause grounding against one interpretation
# ---------------------------------------------------------------------------

def _head_parts(clause: Clause) -> tuple[Term, Term]:
    if clause.head.pred not in HEAD_KINDS or len(clause.head.args) != 2:
        raise ValueError(f"clause head must be initiatedAt/2 or terminatedAt/2: {clause.head!r}")
    return clause.head.args[0], clause.head.args[1]


def _seed_time(time_term: Term, t: int) -> dict[str, Term] | None:
    if isinstance(time_term, Var):
        return {time_term.name: Const(t)}
    return {} if time_term == Const(t) else None


def _domain_of(name: str, var_types: dict[str, str],
               domains: dict[str, tuple[Term, ...]]) -> tuple[Term, ...]:
    type_name = var_types.get(name)
    if type_name is None:
        raise BiasError(f"cannot type variable {name}: no matching mode declaration")
    return domains.get(type_name, ())

def _free_names(terms_vars: Iterable[Var], theta: dict[str, Term]) -> list[str]:
    out: dict[str, None] = {}
    for v in terms_vars:
        if v.name not in theta:
            out.setdefault(v.name)
    return list(out)


def _grounded_heads(head_fluent: Term, negatives: Sequence[Literal],
                    thetas: Iterable[dict[str, Term]], facts: FactSet,
                    var_types: dict[str, str],
                    domains: dict[str, tuple[Term, ...]]) -> set[Term]:
    """Distinct ground head fluents over all groundings that satisfy the negatives.

    Head variables left unbound by the positive body range over their typed
    domains; so do variables occurring only in negated literals.
    """
    heads: set[Term] = set()
    neg_vars = [v for lit in negatives for v in literal_vars(lit)]
    for theta in thetas:
        free = _free_names(list(term_vars(head_fluent)) + neg_vars, theta)
        if not free:
            if all(apply_literal(l, theta).positive() not in facts for l in negatives):
                heads.add(apply_term(head_fluent, theta))
            continue
        pools = [_domain_of(n, var_types, domains) for n in free]
        for combo in product(*pools):
            full = dict(theta)
            full.update(zip(free, combo))
            if all(apply_literal(l, full).positive() not in facts for l in negatives):
                heads.add(apply_term(head_fluent, full))
    return heads


def initiated_fluents(clause: Clause, interp: Interpretation, target: TargetSpec,
                      domains: dict[str, tuple[Term, ...]] | None = None,
                      var_types: dict[str, str] | None = None) -> set[Term]:
    """Ground fluents F for which the clause derives initiatedAt(F, t)."""
    fluent, time_term = _head_parts(clause)
    seed = _seed_time(time_term, interp.t)
    if seed is None:
        return set()
    if domains is None:
        domains = type_domains(interp, target)
    if var_types is None:
        var_types = infer_var_types(clause, target)
    positives = [l for l in clause.body if not l.negated]
    negatives = [l for l in clause.body if l.negated]
    thetas = join_positives(positives, interp.facts, seed)
    return _grounded_heads(fluent, negatives, thetas, interp.facts, var_types, domains)


def _fires_on(clause: Clause, interp: Interpretation, fluent: Term, target: TargetSpec,
              domains: dict[str, tuple[Term, ...]],
              var_types: dict[str, str]) -> bool:
    """Does the clause derive its head for this specific ground fluent at time t?"""
    head_fluent, time_term = _head_parts(clause)
    seed = _seed_time(time_term, interp.t)
    if seed is None:
        return False
    seed = one_way_match(head_fluent, fluent, seed)
    if seed is None:
        return False
    positives = [l for l in clause.body if not l.negated]
    negatives = [l for l in clause.body if l.negated]
    thetas = join_positives(positives, interp.facts, seed)
    if not negatives:
        return bool(thetas)
    heads = _grounded_heads(head_fluent, negatives, thetas, interp.facts, var_types, domains)
    return fluent in heads


# ---------------------------------------------------------------------------
# Outcome counting (decoupled per-clause evaluation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyEval:
    """Outcome deltas for a clause and a family of specializations of it."""

    parent: OutcomeDelta
    extras: tuple[OutcomeDelta, ...]
    fired: frozenset[Term]


def _init_delta(heads: Iterable[Term], interp: Interpretation) -> OutcomeDelta:
    tp = fp = 0
    for f in heads:
        if f in interp.holds_next:
            tp += 1
        else:
            fp += 1
    return OutcomeDelta(tp=tp, fp=fp)


def evaluate_family(parent: Clause, extensions: Sequence[tuple[Literal, ...]],
                    interp: Interpretation, target: TargetSpec,
                    domains: dict[str, tuple[Term, ...]] | None = None,
                    var_types: dict[str, str] | None = None) -> FamilyEval:
    """Count outcomes for ``parent`` and for each ``parent + extension`` in one pass.

    Initiation clauses: one tp (resp. fp) per distinct ground head whose fluent
    does (resp. does not) hold at t+1.  Termination clauses: one tp per
    annotated fluent persisting from t to t+1 that the clause does not
    terminate, one fn per persisting fluent it does terminate; fluents that
    end at t touch no counter.
    """
    if domains is None:
        domains = type_domains(interp, target)
    kind = parent.head.pred
    if var_types is None:
        probe = Clause(parent.head, parent.body + tuple(l for ext in extensions for l in ext))
        var_types = infer_var_types(probe, target)
    facts = interp.facts
    head_fluent, time_term = _head_parts(parent)
    positives = [l for l in parent.body if not l.negated]
    negatives = [l for l in parent.body if l.negated]

    if kind == INITIATED:
        seed = _seed_time(time_term, interp.t)
        base = join_positives(positives, facts, seed) if seed is not None else []
        parent_heads = _grounded_heads(head_fluent, negatives, base, facts, var_types, domains)
        extra_deltas = []
        for ext in extensions:
            ext_pos = [l for l in ext if not l.negated]
            ext_neg = negatives + [l for l in ext if l.negated]
            thetas = [t2 for th in base for t2 in join_positives(ext_pos, facts, th)]
            heads = _grounded_heads(head_fluent, ext_neg, thetas, facts, var_types, domains)
            extra_deltas.append(_init_delta(heads, interp))
        return FamilyEval(_init_delta(parent_heads, interp), tuple(extra_deltas),
                          frozenset(parent_heads))

    # Termination: examine every annotated target fluent at t; only the
    # persisting ones contribute counts, but firing on ending ones is recorded
    # for failure detection.
    persisting = interp.holds_now & interp.holds_next
    fired: set[Term] = set()
    tp = fn = 0
    extra_tp = [0] * len(extensions)
    extra_fn = [0] * len(extensions)
    for fluent in sorted(interp.holds_now, key=render_term):
        seed = _seed_time(time_term, interp.t)
        seed = one_way_match(head_fluent, fluent, seed) if seed is not None else None
        base = join_positives(positives, facts, seed) if seed is not None else []
        if negatives:
            heads = _grounded_heads(head_fluent, negatives, base, facts, var_types, domains)
            parent_fires = fluent in heads
        else:
            parent_fires = bool(base)
        if parent_fires:
            fired.add(fluent)
        is_persisting = fluent in persisting
        if is_persisting:
            if parent_fires:
                fn += 1
            else:
                tp += 1
        if not is_persisting and not extensions:
            continue
        for i, ext in enumerate(extensions):
            if not is_persisting:
                continue
            if not parent_fires:
                extra_tp[i] += 1  # specializations fire on a subset of the parent
                continue
            ext_pos = [l for l in ext if not l.negated]
            ext_neg = negatives + [l for l in ext if l.negated]
            thetas = [t2 for th in base for t2 in join_positives(ext_pos, facts, th)]
            if ext_neg:
                heads = _grounded_heads(head_fluent, ext_neg, thetas, facts, var_types, domains)
                fires = fluent in heads
            else:
                fires = bool(thetas)
            if fires:
                extra_fn[i] += 1
            else:
                extra_tp[i] += 1
    extra_deltas = tuple(OutcomeDelta(tp=a, fn=b) for a, b in zip(extra_tp, extra_fn))
    return FamilyEval(OutcomeDelta(tp=tp, fn=fn), extra_deltas, frozenset(fired))


def count_outcomes(clause: Clause, interp: Interpretation, target: TargetSpec) -> OutcomeDelta:
    """Outcome counts of a single clause on one interpretation (see evaluate_family)."""
    return evaluate_family(clause, (), interp, target).parent


# ---------------------------------------------------------------------------
# Models and stream inference
# ---------------------------------------------------------------------------

def _ground_head_facts(facts: FactSet, kind: str, t: int, target: TargetSpec) -> set[Term]:
    time_const = Const(t)
    return {a.args[0] for a in facts
            if a.pred == kind and len(a.args) == 2 and a.args[1] == time_const
            and target.is_target(a.args[0])}


def step_fluents(theory: Sequence[Clause], interp: Interpretation, holds_now: Iterable[Term],
                 target: TargetSpec,
                 domains: dict[str, tuple[Term, ...]] | None = None) -> set[Term]:
    """Target fluents holding at t+1 given the fluents holding at t.

    Initiation makes a fluent hold at t+1; a fluent holding at t persists
    unless some termination clause (or ground terminatedAt fact) fires at t.
    Ground initiatedAt/terminatedAt atoms present in the narrative act exactly
    like always-firing clauses for their instance.
    """
    if domains is None:
        domains = type_domains(interp, target)
    initiated = _ground_head_facts(interp.facts, INITIATED, interp.t, target)
    terminated_facts = _ground_head_facts(interp.facts, TERMINATED, interp.t, target)
    init_clauses = [c for c in theory if c.head.pred == INITIATED]
    term_clauses = [(c, infer_var_types(c, target)) for c in theory if c.head.pred == TERMINATED]
    for clause in init_clauses:
        initiated |= initiated_fluents(clause, interp, target, domains)
    surviving: set[Term] = set()
    for fluent in holds_now:
        if fluent in terminated_facts:
            continue
        if any(_fires_on(c, interp, fluent, target, domains, vt) for c, vt in term_clauses):
            continue
        surviving.add(fluent)
    return initiated | surviving


def compute_model(theory: Sequence[Clause], interp: Interpretation,
                  target: TargetSpec) -> set[Literal]:
    """Ground holdsAt atoms at t+1 entailed by the axioms, with the annotation
    at t as the inertia source (the decoupled training-time convention)."""
    fluents = step_fluents(theory, interp, interp.holds_now, target)
    return {holds_atom(f, interp.t + 1) for f in fluents}


def infer_stream(theory: Sequence[Clause], stream: Iterable[Interpretation],
                 target: TargetSpec) -> set[Literal]:
    """Full test-time inference: inertia chains over the model's own predictions.

    The chain restarts whenever the window times are not consecutive (a new
    episode).  Returns every predicted target holdsAt atom.
    """
    predictions: set[Literal] = set()
    holds: set[Term] = set()
    prev_t: int | None = None
    for interp in stream:
        if prev_t is None or interp.t != prev_t + 1:
            holds = set()
        holds = step_fluents(theory, interp, holds, target)
        predictions.update(holds_atom(f, interp.t + 1) for f in holds)
        prev_t = interp.t
    return predictions
