"""Stream parsing, windowing, derived spatial test atoms, and theory files.

Input streams are line-based ground facts (one period-terminated atom per
line, ``%`` comments).  Facts are grouped by their time argument and emitted
as one interpretation per consecutive time pair; mild out-of-order arrival is
tolerated within a bounded skew window.  When a mode bias is supplied, spatial
comparison atoms (distance/direction against the bias's constant vocabulary)
are computed from coordinate and direction atoms once per time point, so
clause bodies match against precomputed test atoms.

The synthetic generator simulates entities that wander, pair up to walk
together, and split, writes the narrative as fact lines, computes the
annotation by full inference with a ground-truth theory, and optionally
applies annotation-flip and narrative-drop noise.
"""

from __future__ import annotations

import io
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .logic import (
    Clause,
    Const,
    Literal,
    ModeBias,
    Placemarker,
    Struct,
    Term,
    parse_atom,
    parse_program,
    render_clause,
    render_literal,
)
from .semantics import HOLDS, Interpretation, TargetSpec, step_fluents

DISTANCE_LESS = "distanceLessThan"
DISTANCE_MORE = "distanceMoreThan"
DIRECTION_LESS = "directionLessThan"
DIRECTION_MORE = "directionMoreThan"
_DERIVED = (DISTANCE_LESS, DISTANCE_MORE, DIRECTION_LESS, DIRECTION_MORE)


class StreamOrderError(ValueError):
    """A fact arrived with a time stamp older than the allowed skew window."""


# ---------------------------------------------------------------------------
# Derived spatial test atoms
# ---------------------------------------------------------------------------

def _derived_vocab(bias: ModeBias) -> dict[str, tuple[int, ...]]:
    """Threshold constants per derived predicate, from the '#' slot's type."""
    vocab: dict[str, tuple[int, ...]] = {}
    for decl in bias.bodies:
        lit = decl.literal
        if lit.pred not in _DERIVED or len(lit.args) != 4:
            continue
        slot = lit.args[2]
        if isinstance(slot, Placemarker) and slot.kind == "#":
            values = tuple(c.value for c in bias.constants_of(slot.type)
                           if isinstance(c.value, int))
            vocab[lit.pred] = values
    return vocab


def _angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def materialize_derived(atoms: Iterable[Literal], t: int, bias: ModeBias) -> list[Literal]:
    """Distance/direction comparison atoms for every ordered pair of distinct
    entities with coordinates (resp. directions) at time t."""
    vocab = _derived_vocab(bias)
    if not vocab:
        return []
    time_const = Const(t)
    coords: dict[Term, tuple[float, float]] = {}
    headings: dict[Term, float] = {}
    for atom in atoms:
        if atom.pred != HOLDS or len(atom.args) != 2 or atom.args[1] != time_const:
            continue
        inner = atom.args[0]
        if not isinstance(inner, Struct):
            continue
        if inner.functor == "coords" and len(inner.args) == 3:
            p, x, y = inner.args
            if isinstance(x, Const) and isinstance(y, Const):
                coords[p] = (float(x.value), float(y.value))
        elif inner.functor == "direction" and len(inner.args) == 2:
            p, d = inner.args
            if isinstance(d, Const):
                headings[p] = float(d.value)
    out: list[Literal] = []

    def emit(pred: str, a: Term, b: Term, threshold: int) -> None:
        out.append(Literal(pred, (a, b, Const(threshold), time_const)))

    for a in sorted(coords, key=repr):
        for b in sorted(coords, key=repr):
            if a == b:
                continue
            (x1, y1), (x2, y2) = coords[a], coords[b]
            dist = math.hypot(x1 - x2, y1 - y2)
            for th in vocab.get(DISTANCE_LESS, ()):
                if dist < th:
                    emit(DISTANCE_LESS, a, b, th)
            for th in vocab.get(DISTANCE_MORE, ()):
                if dist > th:
                    emit(DISTANCE_MORE, a, b, th)
    for a in sorted(headings, key=repr):
        for b in sorted(headings, key=repr):
            if a == b:
                continue
            diff = _angle_diff(headings[a], headings[b])
            for th in vocab.get(DIRECTION_LESS, ()):
                if diff < th:
                    emit(DIRECTION_LESS, a, b, th)
            for th in vocab.get(DIRECTION_MORE, ()):
                if diff > th:
                    emit(DIRECTION_MORE, a, b, th)
    return out


# ---------------------------------------------------------------------------
# Stream reading and windowing
# ---------------------------------------------------------------------------

def _atom_time(atom: Literal, line_no: int) -> int:
    if atom.args and isinstance(atom.args[-1], Const) and isinstance(atom.args[-1].value, int):
        return atom.args[-1].value
    raise ValueError(f"line {line_no}: fact has no integer time argument: {atom!r}")


def _is_annotation(atom: Literal, target: TargetSpec) -> bool:
    return atom.pred == HOLDS and len(atom.args) == 2 and target.is_target(atom.args[0])


class _TimeSlot:
    __slots__ = ("narrative", "annotation", "derived")

    def __init__(self) -> None:
        self.narrative: list[Literal] = []
        self.annotation: list[Literal] = []
        self.derived: list[Literal] | None = None


def read_stream(source: IO[str] | Iterable[str] | str | Path, target: str | TargetSpec,
                bias: ModeBias | None = None, skew: int = 2) -> Iterator[Interpretation]:
    """Parse a fact stream and yield one interpretation per consecutive time pair.

    Annotation is separated from narrative by predicate: holdsAt atoms over the
    target fluent are annotation, everything else narrative.  Facts may arrive
    out of order within ``skew`` time points; regression beyond that raises
    StreamOrderError.  With a bias, derived test atoms are added to the
    narrative (cached once per time point).
    """
    if isinstance(target, TargetSpec):
        tspec = target
    elif bias is not None:
        tspec = TargetSpec.from_bias(bias, target)
    else:
        template = Struct(str(target), ())  # functor-only matching fallback
        tspec = TargetSpec(ModeBias((), (), {}), str(target), template, "time")
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from _read_lines(fh, tspec, bias, skew)
    else:
        yield from _read_lines(source, tspec, bias, skew)


def _read_lines(lines: Iterable[str], tspec: TargetSpec, bias: ModeBias | None,
                skew: int) -> Iterator[Interpretation]:
    slots: dict[int, _TimeSlot] = {}
    max_seen: int | None = None
    next_id = 0

    def derived_for(t: int) -> list[Literal]:
        slot = slots[t]
        if slot.derived is None:
            slot.derived = materialize_derived(slot.narrative, t, bias) if bias else []
        return slot.derived

    def emit(t: int) -> Interpretation:
        nonlocal next_id
        narrative = list(slots[t].narrative) + derived_for(t) \
            + list(slots[t + 1].narrative) + derived_for(t + 1)
        annotation = slots[t].annotation + slots[t + 1].annotation
        interp = Interpretation(next_id, t, frozenset(narrative), frozenset(annotation))
        next_id += 1
        return interp

    def closed_windows(limit: int) -> Iterator[Interpretation]:
        for t in sorted(slots):
            if t + 1 > limit:
                break
            if t + 1 in slots:
                yield emit(t)
            # drop times that can no longer open a window
            if t + 1 <= limit:
                prev = t - 1
                if prev not in slots or prev + 1 <= limit:
                    del slots[t]

    for line_no, raw in enumerate(lines, 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        try:
            atom = parse_atom(line)
        except ValueError as exc:
            raise ValueError(f"line {line_no}: {exc}") from None
        t = _atom_time(atom, line_no)
        if max_seen is not None and t < max_seen - skew:
            raise StreamOrderError(
                f"line {line_no}: time {t} regressed beyond skew window "
                f"(latest seen {max_seen}, skew {skew})")
        slot = slots.setdefault(t, _TimeSlot())
        if _is_annotation(atom, tspec):
            slot.annotation.append(atom)
        else:
            slot.narrative.append(atom)
        if max_seen is None or t > max_seen:
            max_seen = t
            yield from closed_windows(max_seen - skew - 1)
    if max_seen is not None:
        yield from closed_windows(max_seen)


# ---------------------------------------------------------------------------
# Theory files
# ---------------------------------------------------------------------------

def theory_size(theory: Sequence[Clause]) -> int:
    """Total literal count, heads included."""
    return sum(c.literal_count for c in theory)


def write_theory(theory: Sequence[Clause], sink: IO[str]) -> None:
    sink.write(f"% {len(theory)} clauses, {theory_size(theory)} literals (heads counted)\n")
    for clause in theory:
        sink.write(render_clause(clause) + "\n")


def parse_theory(text: str) -> list[Clause]:
    return parse_program(text)


# ---------------------------------------------------------------------------
# Synthetic stream generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Annotation flip probability, narrative drop probability, and RNG seed."""

    flip: float = 0.0
    drop: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip <= 1.0 or not 0.0 <= self.drop <= 1.0:
            raise ValueError("noise probabilities must lie in [0,1]")


_WALKING, _ACTIVE, _INACTIVE = "walking", "active", "inactive"
_ARENA = 260.0
_EPISODE_GAP = 3


class _Entity:
    __slots__ = ("name", "x", "y", "heading", "state", "mode", "partner", "timer")

    def __init__(self, name: str, rng: random.Random) -> None:
        self.name = name
        self.x = rng.uniform(20.0, _ARENA - 20.0)
        self.y = rng.uniform(20.0, _ARENA - 20.0)
        self.heading = float(rng.randrange(360))
        self.state = rng.choice((_WALKING, _ACTIVE, _INACTIVE))
        self.mode = "free"
        self.partner: "_Entity | None" = None
        self.timer = 0

    def move(self, speed: float) -> None:
        rad = math.radians(self.heading)
        self.x = min(_ARENA, max(0.0, self.x + speed * math.cos(rad)))
        self.y = min(_ARENA, max(0.0, self.y + speed * math.sin(rad)))

    def bearing_to(self, other: "_Entity") -> float:
        return math.degrees(math.atan2(other.y - self.y, other.x - self.x)) % 360.0

    def distance_to(self, other: "_Entity") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _step_entities(entities: list[_Entity], rng: random.Random) -> None:
    for e in entities:
        if e.mode == "free":
            free_others = [o for o in entities if o is not e and o.mode == "free"]
            if free_others and rng.random() < 0.02:
                partner = rng.choice(free_others)
                e.mode = partner.mode = "seek"
                e.partner, partner.partner = partner, e
                e.state = partner.state = _WALKING
                continue
            if rng.random() < 0.15:
                e.state = rng.choice((_WALKING, _WALKING, _ACTIVE, _INACTIVE))
            if e.state == _WALKING:
                e.heading = (e.heading + rng.uniform(-30.0, 30.0)) % 360.0
                e.move(4.0)
        elif e.mode == "seek":
            partner = e.partner
            assert partner is not None
            e.state = _WALKING
            e.heading = e.bearing_to(partner)
            e.move(5.0)
            if e.distance_to(partner) < 12.0:
                shared = float(rng.randrange(360))
                e.heading = partner.heading = shared
                e.mode = partner.mode = "paired"
        elif e.mode == "paired":
            partner = e.partner
            assert partner is not None
            e.state = _WALKING
            if id(e) < id(partner):  # pair leader drives shared heading and splits
                e.heading = (e.heading + rng.uniform(-6.0, 6.0)) % 360.0
                partner.heading = e.heading
                if rng.random() < 0.03:
                    e.mode, e.timer = "leaving", 30
                    partner.mode, partner.timer = "stopped", 45
                    partner.state = _INACTIVE
                    continue
            if e.distance_to(partner) > 14.0:
                e.heading = e.bearing_to(partner)
            e.move(3.0)
        elif e.mode == "leaving":
            e.state = _WALKING
            e.move(5.0)
            e.timer -= 1
            if e.timer <= 0:
                e.mode, e.partner = "free", None
        elif e.mode == "stopped":
            e.state = _INACTIVE
            e.timer -= 1
            if e.timer <= 0:
                e.mode, e.partner = "free", None


def _frame_atoms(entities: list[_Entity], t: int) -> list[Literal]:
    time_const = Const(t)
    atoms = []
    for e in entities:
        name = Const(e.name)
        atoms.append(Literal("happensAt", (Struct(e.state, (name,)), time_const)))
        atoms.append(Literal(HOLDS, (Struct("coords", (name, Const(round(e.x)),
                                                       Const(round(e.y)))), time_const)))
        atoms.append(Literal(HOLDS, (Struct("direction", (name, Const(round(e.heading) % 360))),
                                     time_const)))
    return atoms


def generate_fact_lines(gt: Sequence[Clause], bias: ModeBias, target: str,
                        n_entities: int, length: int, noise: NoiseSpec = NoiseSpec(),
                        seed: int = 0, episode_length: int = 1000) -> list[str]:
    """Deterministic synthetic stream: narrative from simulated entities, annotation
    from full inference with the ground-truth theory, episode gaps every
    ``episode_length`` frames, then noise.  Identical arguments give identical
    lines, and with zero noise the annotation equals the theory's inference on
    the narrative by construction."""
    tspec = TargetSpec.from_bias(bias, target)
    traj_rng = random.Random(seed)
    noise_rng = random.Random(noise.seed)
    names = [f"id{i}" for i in range(n_entities)]
    lines: list[str] = []
    frames_left = length
    base_t = 0
    while frames_left > 0:
        n_frames = min(episode_length, frames_left)
        frames_left -= n_frames
        entities = [_Entity(name, traj_rng) for name in names]
        frames: list[tuple[int, list[Literal]]] = []
        for k in range(n_frames):
            _step_entities(entities, traj_rng)
            frames.append((base_t + k, _frame_atoms(entities, base_t + k)))
        annotation = _infer_annotation(gt, tspec, frames)
        if noise.flip > 0.0:
            _flip_annotation(annotation, names, [t for t, _ in frames], noise_rng, noise.flip)
        for t, atoms in frames:
            for atom in atoms:
                if noise.drop > 0.0 and noise_rng.random() < noise.drop:
                    continue
                lines.append(render_literal(atom) + ".")
            for fluent in sorted(annotation.get(t, ()), key=repr):
                lines.append(render_literal(Literal(HOLDS, (fluent, Const(t)))) + ".")
        base_t += n_frames + _EPISODE_GAP
    return lines


def _infer_annotation(gt: Sequence[Clause], tspec: TargetSpec,
                      frames: list[tuple[int, list[Literal]]]) -> dict[int, set[Term]]:
    annotation: dict[int, set[Term]] = {frames[0][0]: set()}
    holds: set[Term] = set()
    derived = {t: atoms + materialize_derived(atoms, t, tspec.bias) for t, atoms in frames}
    for (t, _), (t_next, _) in zip(frames, frames[1:]):
        interp = Interpretation(0, t, frozenset(derived[t] + derived[t_next]), frozenset())
        holds = step_fluents(gt, interp, holds, tspec)
        annotation[t_next] = set(holds)
    return annotation


def _flip_annotation(annotation: dict[int, set[Term]], names: list[str], times: list[int],
                     rng: random.Random, p: float) -> None:
    for t in times:
        cell = annotation.setdefault(t, set())
        for a in names:
            for b in names:
                if a == b:
                    continue
                if rng.random() < p:
                    fluent = Struct("moving", (Const(a), Const(b)))
                    cell.symmetric_difference_update({fluent})


def generate_stream(gt: Sequence[Clause], bias: ModeBias, target: str, n_entities: int,
                    length: int, noise: NoiseSpec = NoiseSpec(), seed: int = 0,
                    episode_length: int = 1000) -> list[Interpretation]:
    """The same stream as generate_fact_lines, parsed back into interpretations."""
    lines = generate_fact_lines(gt, bias, target, n_entities, length, noise, seed,
                                episode_length)
    return list(read_stream(io.StringIO("\n".join(lines)), target, bias))
