"""First-order terms, literals, clauses, ground matching and the mode-declaration bias.

The term language is deliberately small: constants are lowercase symbols or
integers, compound terms nest arbitrarily, variables start with an uppercase
letter, and ``not`` marks negation-as-failure.  Matching always runs against a
closed set of ground facts, so no general unification or occurs check is
needed.  Every value in this module is immutable and safe to share between
concurrently running learners.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, Mapping, Sequence, Union


class ParseError(ValueError):
    """Malformed input; carries the offset at which parsing failed."""

    def __init__(self, message: str, text: str, pos: int) -> None:
        snippet = text[max(0, pos - 15):pos + 15]
        super().__init__(f"{message} at offset {pos} (near {snippet!r})")
        self.pos = pos


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    """A logical variable, identified by its (uppercase-initial) name."""

    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    """A symbol or integer constant."""

    value: Union[str, int]

    def __repr__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Struct:
    """A compound term: functor applied to argument terms."""

    functor: str
    args: "tuple[Term, ...]"

    def __repr__(self) -> str:
        return render_term(self)


@dataclass(frozen=True)
class Placemarker:
    """A mode-declaration slot: '+' input variable, '-' output variable, '#' constant.

    Placemarkers appear only inside mode declarations, never in data or in
    learned clauses.
    """

    kind: str
    type: str

    def __repr__(self) -> str:
        return self.kind + self.type


Term = Union[Var, Const, Struct, Placemarker]


@dataclass(frozen=True)
class Literal:
    """A possibly negated atom."""

    pred: str
    args: tuple[Term, ...] = ()
    negated: bool = False

    @property
    def arity(self) -> int:
        return len(self.args)

    def positive(self) -> "Literal":
        return Literal(self.pred, self.args) if self.negated else self

    def __repr__(self) -> str:
        return render_literal(self)


@dataclass(frozen=True)
class Clause:
    """``head :- body`` with a positive head and an ordered body."""

    head: Literal
    body: tuple[Literal, ...] = ()

    @property
    def literal_count(self) -> int:
        return 1 + len(self.body)

    def __repr__(self) -> str:
        return render_clause(self)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        return str(t.value)
    if isinstance(t, Placemarker):
        return t.kind + t.type
    return f"{t.functor}({','.join(render_term(a) for a in t.args)})"


def render_literal(lit: Literal) -> str:
    neg = "not " if lit.negated else ""
    if not lit.args:
        return neg + lit.pred
    return f"{neg}{lit.pred}({','.join(render_term(a) for a in lit.args)})"


def render_clause(clause: Clause) -> str:
    if not clause.body:
        return render_literal(clause.head) + "."
    body = ", ".join(render_literal(l) for l in clause.body)
    return f"{render_literal(clause.head)} :- {body}."


# ---------------------------------------------------------------------------
# Walkers and substitutions
# ---------------------------------------------------------------------------

Subst = Mapping[str, Term]


def term_vars(t: Term) -> Iterator[Var]:
    if isinstance(t, Var):
        yield t
    elif isinstance(t, Struct):
        for a in t.args:
            yield from term_vars(a)


def literal_vars(lit: Literal) -> Iterator[Var]:
    for a in lit.args:
        yield from term_vars(a)


def clause_vars(clause: Clause) -> list[Var]:
    seen: dict[Var, None] = {}
    for v in literal_vars(clause.head):
        seen.setdefault(v)
    for lit in clause.body:
        for v in literal_vars(lit):
            seen.setdefault(v)
    return list(seen)


def term_consts(t: Term) -> Iterator[Const]:
    if isinstance(t, Const):
        yield t
    elif isinstance(t, Struct):
        for a in t.args:
            yield from term_consts(a)


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Struct):
        for a in t.args:
            yield from subterms(a)


def is_ground(t: Term) -> bool:
    if isinstance(t, Var) or isinstance(t, Placemarker):
        return False
    if isinstance(t, Struct):
        return all(is_ground(a) for a in t.args)
    return True


def is_ground_literal(lit: Literal) -> bool:
    return all(is_ground(a) for a in lit.args)


def apply_term(t: Term, subst: Subst) -> Term:
    if isinstance(t, Var):
        return subst.get(t.name, t)
    if isinstance(t, Struct):
        return Struct(t.functor, tuple(apply_term(a, subst) for a in t.args))
    return t


def apply_literal(lit: Literal, subst: Subst) -> Literal:
    return Literal(lit.pred, tuple(apply_term(a, subst) for a in lit.args), lit.negated)


def one_way_match(pattern: Term, target: Term, subst: dict[str, Term]) -> dict[str, Term] | None:
    """Extend ``subst`` so that pattern[subst] == target, binding only pattern variables.

    Variables on the target side are treated as inert symbols, which is what
    theta-subsumption requires.  Returns None when no extension exists.
    """
    if isinstance(pattern, Var):
        bound = subst.get(pattern.name)
        if bound is None:
            out = dict(subst)
            out[pattern.name] = target
            return out
        return subst if bound == target else None
    if isinstance(pattern, Struct):
        if not isinstance(target, Struct) or pattern.functor != target.functor \
                or len(pattern.args) != len(target.args):
            return None
        for p, g in zip(pattern.args, target.args):
            nxt = one_way_match(p, g, subst)
            if nxt is None:
                return None
            subst = nxt
        return subst
    return subst if pattern == target else None


def match_literal(pattern: Literal, target: Literal, subst: dict[str, Term]) -> dict[str, Term] | None:
    if pattern.pred != target.pred or len(pattern.args) != len(target.args) \
            or pattern.negated != target.negated:
        return None
    for p, g in zip(pattern.args, target.args):
        nxt = one_way_match(p, g, subst)
        if nxt is None:
            return None
        subst = nxt
    return subst


def canonical_clause(clause: Clause) -> Clause:
    """Rename variables to V0,V1,... in order of first occurrence.

    Two clauses that differ only by a variable renaming (with identical
    literal order) canonicalize to equal values, which is how duplicate
    specializations are detected.
    """
    mapping: dict[str, Term] = {}
    for v in clause_vars(clause):
        mapping[v.name] = Var(f"V{len(mapping)}")
    return Clause(apply_literal(clause.head, mapping),
                  tuple(apply_literal(l, mapping) for l in clause.body))


def clause_key(clause: Clause) -> str:
    return render_clause(canonical_clause(clause))


# ---------------------------------------------------------------------------
# Ground fact store and body matching
# ---------------------------------------------------------------------------

_EMPTY: tuple = ()


class FactSet:
    """An immutable, positionally indexed set of ground atoms."""

    __slots__ = ("atoms", "_by_pred", "_by_arg", "_universe")

    def __init__(self, atoms: Iterable[Literal]) -> None:
        store: set[Literal] = set()
        by_pred: dict[tuple[str, int], list[Literal]] = {}
        by_arg: dict[tuple[str, int, int, Term], list[Literal]] = {}
        for atom in atoms:
            atom = atom.positive()
            if atom in store:
                continue
            store.add(atom)
            key = (atom.pred, len(atom.args))
            by_pred.setdefault(key, []).append(atom)
            for i, arg in enumerate(atom.args):
                by_arg.setdefault((atom.pred, len(atom.args), i, arg), []).append(atom)
        self.atoms = frozenset(store)
        self._by_pred = by_pred
        self._by_arg = by_arg
        self._universe: tuple[Term, ...] | None = None

    def __contains__(self, lit: Literal) -> bool:
        return lit.positive() in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.atoms)

    @property
    def universe(self) -> tuple[Term, ...]:
        """All ground terms occurring (at any depth) in the stored atoms."""
        if self._universe is None:
            seen: dict[Term, None] = {}
            for atom in self.atoms:
                for arg in atom.args:
                    for sub in subterms(arg):
                        seen.setdefault(sub)
            self._universe = tuple(sorted(seen, key=render_term))
        return self._universe

    def candidates(self, lit: Literal, subst: Subst) -> Sequence[Literal]:
        """Facts that could match ``lit`` under ``subst``, via the most selective index."""
        best: Sequence[Literal] = self._by_pred.get((lit.pred, len(lit.args)), _EMPTY)
        if not best:
            return best
        for i, arg in enumerate(lit.args):
            bound = apply_term(arg, subst)
            if is_ground(bound):
                bucket = self._by_arg.get((lit.pred, len(lit.args), i, bound), _EMPTY)
                if len(bucket) < len(best):
                    best = bucket
                    if not best:
                        break
        return best


def join_positives(literals: Sequence[Literal], facts: FactSet,
                   seed: Subst | None = None) -> list[dict[str, Term]]:
    """All substitutions grounding every (positive) literal against ``facts``.

    Literals are consumed most-bound-first, which is an internal reordering
    only: the result set is order-independent.
    """
    results: list[dict[str, Term]] = []

    def walk(theta: dict[str, Term], remaining: list[Literal]) -> None:
        if not remaining:
            results.append(theta)
            return
        best_i = 0
        best_cands: Sequence[Literal] | None = None
        for i, lit in enumerate(remaining):
            cands = facts.candidates(lit, theta)
            if best_cands is None or len(cands) < len(best_cands):
                best_i, best_cands = i, cands
                if not cands:
                    return
        lit = remaining[best_i]
        rest = remaining[:best_i] + remaining[best_i + 1:]
        for fact in best_cands:
            nxt = match_literal(lit, fact, theta)
            if nxt is not None:
                walk(nxt, rest)

    walk(dict(seed or {}), list(literals))
    return results


def _subst_key(theta: Mapping[str, Term]) -> tuple:
    return tuple(sorted((k, render_term(v)) for k, v in theta.items()))


def _negatives_ok(negatives: Sequence[Literal], theta: Subst, facts: FactSet) -> bool:
    return all(apply_literal(lit, theta).positive() not in facts for lit in negatives)


def match_body(body: Sequence[Literal], facts: FactSet | Iterable[Literal],
               seed: Subst | None = None) -> list[dict[str, Term]]:
    """All substitutions extending ``seed`` under which the body holds in ``facts``.

    Positive literals must be present in the fact set, negated literals absent
    (closed world over the fact set).  Variables that appear only in negated
    literals range over the ground-subterm universe of the facts.  Results are
    returned in a deterministic order.
    """
    fs = facts if isinstance(facts, FactSet) else FactSet(facts)
    positives = [l for l in body if not l.negated]
    negatives = [l for l in body if l.negated]
    out: dict[tuple, dict[str, Term]] = {}
    for theta in join_positives(positives, fs, seed):
        free: dict[str, None] = {}
        for lit in negatives:
            for v in literal_vars(lit):
                if v.name not in theta:
                    free.setdefault(v.name)
        if free:
            names = list(free)
            for combo in product(fs.universe, repeat=len(names)):
                full = dict(theta)
                full.update(zip(names, combo))
                if _negatives_ok(negatives, full, fs):
                    out.setdefault(_subst_key(full), full)
        elif _negatives_ok(negatives, theta, fs):
            out.setdefault(_subst_key(theta), theta)
    return [out[k] for k in sorted(out)]


def theta_subsumes(general: Clause, specific: Clause) -> bool:
    """True iff a substitution maps general's head onto specific's head and its
    body into specific's body (literal-wise, respecting negation flags)."""
    theta = match_literal(general.head, specific.head, {})
    if theta is None:
        return False

    def cover(i: int, theta: dict[str, Term]) -> bool:
        if i == len(general.body):
            return True
        lit = general.body[i]
        for cand in specific.body:
            nxt = match_literal(lit, cand, theta)
            if nxt is not None and cover(i + 1, nxt):
                return True
        return False

    return cover(0, theta)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NAME_RE = re.compile(r"[a-z][A-Za-z0-9_]*")
_VAR_RE = re.compile(r"[A-Z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"-?\d+")


class _Scanner:
    __slots__ = ("text", "pos")

    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.text, self.pos)

    def skip_ws(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "%":
                nl = text.find("\n", self.pos)
                self.pos = n if nl < 0 else nl + 1
            else:
                return

    def eof(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, token: str) -> bool:
        self.skip_ws()
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str) -> None:
        if not self.take(token):
            raise self.error(f"expected {token!r}")

    def regex(self, pattern: re.Pattern[str], what: str) -> str:
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if m is None:
            raise self.error(f"expected {what}")
        self.pos = m.end()
        return m.group()


def _parse_term(s: _Scanner) -> Term:
    s.skip_ws()
    ch = s.peek()
    if ch == "":
        raise s.error("expected term")
    if ch in "+#" or (ch == "-" and not (s.pos + 1 < len(s.text) and s.text[s.pos + 1].isdigit())):
        s.pos += 1
        return Placemarker(ch, s.regex(_NAME_RE, "placemarker type"))
    if ch == "-" or ch.isdigit():
        return Const(int(s.regex(_INT_RE, "integer")))
    if ch.isupper() or ch == "_":
        return Var(s.regex(_VAR_RE, "variable"))
    if ch.islower():
        name = s.regex(_NAME_RE, "identifier")
        if s.peek() == "(":
            s.pos += 1
            args = [_parse_term(s)]
            while s.take(","):
                args.append(_parse_term(s))
            s.expect(")")
            return Struct(name, tuple(args))
        return Const(name)
    raise s.error("expected term")


def _parse_literal(s: _Scanner, allow_negation: bool = False) -> Literal:
    s.skip_ws()
    negated = False
    if allow_negation and _NAME_RE.match(s.text, s.pos) and s.text.startswith("not", s.pos):
        after = s.pos + 3
        if after < len(s.text) and s.text[after] in " \t":
            s.pos = after
            negated = True
    term = _parse_term(s)
    if isinstance(term, Const) and isinstance(term.value, str):
        return Literal(term.value, (), negated)
    if isinstance(term, Struct):
        return Literal(term.functor, term.args, negated)
    raise s.error("expected an atom")


def parse_term(text: str) -> Term:
    s = _Scanner(text)
    term = _parse_term(s)
    s.take(".")
    if not s.eof():
        raise s.error("trailing input after term")
    return term


def parse_atom(text: str) -> Literal:
    """Parse one atom, e.g. ``happensAt(walking(id1),1)``; a trailing period is allowed."""
    s = _Scanner(text)
    lit = _parse_literal(s)
    s.take(".")
    if not s.eof():
        raise s.error("trailing input after atom")
    return lit


def _parse_clause(s: _Scanner) -> Clause:
    head = _parse_literal(s)
    if head.negated:
        raise s.error("clause head cannot be negated")
    body: list[Literal] = []
    if s.take(":-"):
        body.append(_parse_literal(s, allow_negation=True))
        while s.take(","):
            body.append(_parse_literal(s, allow_negation=True))
    s.expect(".")
    return Clause(head, tuple(body))


def parse_clause(text: str) -> Clause:
    s = _Scanner(text)
    clause = _parse_clause(s)
    if not s.eof():
        raise s.error("trailing input after clause")
    return clause


def parse_program(text: str) -> list[Clause]:
    """Parse a sequence of period-terminated clauses; ``%`` starts a comment."""
    s = _Scanner(text)
    clauses = []
    while not s.eof():
        clauses.append(_parse_clause(s))
    return clauses


# ---------------------------------------------------------------------------
# Mode declarations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeDecl:
    """One modeh/modeb template; argument slots carry placemarkers."""

    literal: Literal

    def __repr__(self) -> str:
        return render_literal(self.literal)


@dataclass(frozen=True, eq=False)
class ModeBias:
    """The hypothesis-language bias: head/body templates plus the constant vocabulary."""

    heads: tuple[ModeDecl, ...]
    bodies: tuple[ModeDecl, ...]
    constants: Mapping[str, tuple[Const, ...]]

    def constants_of(self, type_name: str) -> tuple[Const, ...]:
        return self.constants.get(type_name, ())


def _decl_placemarkers(t: Term) -> Iterator[Placemarker]:
    if isinstance(t, Placemarker):
        yield t
    elif isinstance(t, Struct):
        for a in t.args:
            yield from _decl_placemarkers(a)


def _check_decl(literal: Literal, line: str) -> None:
    for arg in literal.args:
        for sub in subterms(arg) if not isinstance(arg, Placemarker) else [arg]:
            if isinstance(sub, Var):
                raise ParseError("variables are not allowed in mode declarations", line, 0)


def parse_mode_bias(text: str) -> ModeBias:
    """Parse a mode-bias file: one ``modeh(...)``/``modeb(...)``/``constants(...)`` per line."""
    heads: dict[ModeDecl, None] = {}
    bodies: dict[ModeDecl, None] = {}
    constants: dict[str, tuple[Const, ...]] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        try:
            s = _Scanner(line)
            kind = s.regex(_NAME_RE, "declaration")
            if kind in ("modeh", "modeb"):
                s.expect("(")
                inner = _parse_literal(s)
                s.expect(")")
                s.take(".")
                if not s.eof():
                    raise s.error("trailing input")
                _check_decl(inner, line)
                (heads if kind == "modeh" else bodies).setdefault(ModeDecl(inner))
            elif kind == "constants":
                s.expect("(")
                type_name = s.regex(_NAME_RE, "type name")
                s.expect(",")
                s.expect("[")
                values = [_parse_term(s)]
                while s.take(","):
                    values.append(_parse_term(s))
                s.expect("]")
                s.expect(")")
                s.take(".")
                if not s.eof() or not all(isinstance(v, Const) for v in values):
                    raise s.error("malformed constants declaration")
                constants[type_name] = tuple(values)  # type: ignore[arg-type]
            else:
                raise s.error(f"unknown declaration {kind!r}")
        except ParseError as exc:
            raise ParseError(f"line {line_no}: {exc}", raw, exc.pos) from None
    return ModeBias(tuple(heads), tuple(bodies), constants)
