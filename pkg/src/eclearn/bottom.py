"""Abduction of unobserved initiation/termination seeds and bottom-clause construction.

Target predicates never appear in the data: the annotation only says which
fluents hold when.  Under the two axioms, an annotated transition into holding
is explained exactly by an initiation at the earlier time point, and a
transition out of holding by a termination, so seeds can be abduced directly
from annotation transitions.  A seed is then saturated into a most-specific
ground clause by collecting every narrative atom that instantiates a body mode
template over the seed's constants, and variabilized per the placemarkers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .logic import (
    Clause,
    Const,
    Literal,
    ModeBias,
    ModeDecl,
    Placemarker,
    Struct,
    Term,
    Var,
    is_ground,
    render_literal,
    render_term,
)
from .semantics import INITIATED, TERMINATED, Interpretation, TargetSpec

DEFAULT_MAX_BODY = 25


@dataclass(frozen=True)
class Seed:
    """An abduced target-predicate instance explaining one annotation transition."""

    kind: str       # initiatedAt | terminatedAt
    fluent: Term
    time: int

    def head_atom(self) -> Literal:
        return Literal(self.kind, (self.fluent, Const(self.time)))


@dataclass(frozen=True)
class BottomClause:
    """The most specific clause for a seed; learned clauses draw body literals from it."""

    head: Literal
    body: tuple[Literal, ...]
    bindings: Mapping[str, Term] = field(default_factory=dict)

    def as_clause(self) -> Clause:
        return Clause(self.head, self.body)

    def __repr__(self) -> str:
        return repr(self.as_clause())


def abduce_seeds(interp: Interpretation, target: TargetSpec) -> list[Seed]:
    """Seeds for every annotation transition in the interpretation.

    A fluent absent at t and present at t+1 yields an initiation seed at t; one
    present at t and absent at t+1 yields a termination seed at t.  Persisting
    (or persistently false) fluents yield nothing: inertia explains them.
    """
    seeds = []
    for fluent in interp.holds_next - interp.holds_now:
        if target.is_target(fluent):
            seeds.append(Seed(INITIATED, fluent, interp.t))
    for fluent in interp.holds_now - interp.holds_next:
        if target.is_target(fluent):
            seeds.append(Seed(TERMINATED, fluent, interp.t))
    seeds.sort(key=lambda s: (s.kind, render_term(s.fluent)))
    return seeds


def _slot_consts(decl: Term, term: Term, pool: set[Term],
                 outputs: set[Term]) -> bool:
    """Check one template slot against a ground subterm, collecting +/- fillers."""
    if isinstance(decl, Placemarker):
        if not is_ground(term):
            return False
        if decl.kind == "+":
            return term in pool
        if decl.kind == "-":
            outputs.add(term)
        return True
    if isinstance(decl, Struct):
        if not isinstance(term, Struct) or decl.functor != term.functor \
                or len(decl.args) != len(term.args):
            return False
        return all(_slot_consts(d, a, pool, outputs) for d, a in zip(decl.args, term.args))
    return decl == term


def _atom_matches(decl: ModeDecl, atom: Literal, pool: set[Term]) -> set[Term] | None:
    """Outputs contributed by the atom if it instantiates the template over ``pool``."""
    lit = decl.literal
    if lit.pred != atom.pred or len(lit.args) != len(atom.args):
        return None
    outputs: set[Term] = set()
    if all(_slot_consts(d, a, pool, outputs) for d, a in zip(lit.args, atom.args)):
        return outputs
    return None


def saturate(seed: Seed, interp: Interpretation, bias: ModeBias,
             max_body: int = DEFAULT_MAX_BODY) -> BottomClause:
    """Ground bottom clause: the seed atom as head, and every narrative atom at the
    seed's time that instantiates a body template over the seed's constants (or
    constants reachable through output slots) as body, in deterministic order."""
    pool: set[Term] = set(_ground_subterms(seed.fluent))
    pool.add(Const(seed.time))
    body: list[Literal] = []
    chosen: set[Literal] = set()
    atoms = sorted(interp.narrative, key=render_literal)
    changed = True
    while changed:
        changed = False
        for decl in bias.bodies:
            for atom in atoms:
                if atom in chosen or atom.negated:
                    continue
                outputs = _atom_matches(decl, atom, pool)
                if outputs is None:
                    continue
                chosen.add(atom)
                body.append(atom)
                if outputs - pool:
                    pool |= outputs
                    changed = True
    return BottomClause(seed.head_atom(), tuple(body[:max_body]))


def _ground_subterms(t: Term):
    if isinstance(t, Const):
        yield t
    elif isinstance(t, Struct):
        for a in t.args:
            yield from _ground_subterms(a)


class _Renamer:
    """Consistent constant-to-variable mapping; time-typed slots become T, T1, ..."""

    def __init__(self, time_type: str) -> None:
        self.time_type = time_type
        self.mapping: dict[Term, Var] = {}
        self._n_plain = 0
        self._n_time = 0

    def var_for(self, const: Term, type_name: str) -> Var:
        var = self.mapping.get(const)
        if var is None:
            if type_name == self.time_type:
                var = Var("T" if self._n_time == 0 else f"T{self._n_time}")
                self._n_time += 1
            else:
                var = Var(f"X{self._n_plain}")
                self._n_plain += 1
            self.mapping[const] = var
        return var


def _variabilize_term(decl: Term, term: Term, renamer: _Renamer) -> Term:
    if isinstance(decl, Placemarker):
        if decl.kind in "+-" and isinstance(term, Const):
            return renamer.var_for(term, decl.type)
        return term
    if isinstance(decl, Struct) and isinstance(term, Struct):
        return Struct(term.functor,
                      tuple(_variabilize_term(d, a, renamer) for d, a in zip(decl.args, term.args)))
    return term


def _decl_for(lit: Literal, decls) -> ModeDecl | None:
    for decl in decls:
        if decl.literal.pred == lit.pred and len(decl.literal.args) == len(lit.args):
            if _shape_matches(decl.literal, lit):
                return decl
    return None


def _shape_matches(decl_lit: Literal, lit: Literal) -> bool:
    def walk(d: Term, a: Term) -> bool:
        if isinstance(d, Placemarker):
            return True
        if isinstance(d, Struct):
            return (isinstance(a, Struct) and d.functor == a.functor
                    and len(d.args) == len(a.args)
                    and all(walk(x, y) for x, y in zip(d.args, a.args)))
        return d == a or isinstance(a, Var)
    return all(walk(d, a) for d, a in zip(decl_lit.args, lit.args))


def variabilize(bottom: BottomClause, bias: ModeBias, target: TargetSpec) -> BottomClause:
    """Replace constants in input/output slots with variables, the same constant
    mapping to the same variable everywhere; '#'-slot constants are kept.
    Idempotent, and preserves the literal count."""
    renamer = _Renamer(target.time_type)
    head_decl = target.head_decl(bottom.head.pred)
    head = Literal(bottom.head.pred,
                   tuple(_variabilize_term(d, a, renamer)
                         for d, a in zip(head_decl.args, bottom.head.args)))
    body = []
    for lit in bottom.body:
        decl = _decl_for(lit, bias.bodies)
        if decl is None:
            body.append(lit)
            continue
        body.append(Literal(lit.pred,
                            tuple(_variabilize_term(d, a, renamer)
                                  for d, a in zip(decl.literal.args, lit.args)),
                            lit.negated))
    bindings = {var.name: const for const, var in renamer.mapping.items()}
    return BottomClause(head, tuple(body), bindings)


def build_bottom(seed: Seed, interp: Interpretation, bias: ModeBias, target: TargetSpec,
                 max_body: int = DEFAULT_MAX_BODY) -> BottomClause:
    """Saturate a seed and variabilize the result."""
    return variabilize(saturate(seed, interp, bias, max_body), bias, target)
