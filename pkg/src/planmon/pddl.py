"""STRIPS subset of PDDL, from text to ground actions and their state semantics.

Only ``:strips`` and ``:typing`` are accepted.  Preconditions are conjunctions
of positive atoms; effects are conjunctions of atoms and negated atoms.  Types
are a flat list underneath the implicit universal type ``object``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

OBJECT = "object"
SUPPORTED_REQUIREMENTS = (":strips", ":typing")

State = frozenset  # frozenset[Atom]


class ParseError(ValueError):
    """Malformed or inconsistent PDDL input, positioned at line/column (1-based)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class InapplicableActionError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Atom:
    """A predicate applied to arguments.

    Arguments are object names in ground atoms and may also be ``?variables``
    inside action schemas.  The dataclass ordering (predicate, then args) is
    the canonical order used everywhere states are serialized.
    """

    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"

    def to_pddl(self) -> str:
        return "(" + " ".join((self.predicate,) + self.args) + ")"

    def substitute(self, binding: dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True)
class Predicate:
    name: str
    parameters: tuple[tuple[str, str], ...] = ()

    @property
    def arity(self) -> int:
        return len(self.parameters)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[tuple[str, str], ...] = ()
    preconditions: tuple[Atom, ...] = ()
    add_effects: tuple[Atom, ...] = ()
    delete_effects: tuple[Atom, ...] = ()


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple[str, ...] = ()
    types: tuple[str, ...] = ()
    constants: tuple[tuple[str, str], ...] = ()
    predicates: tuple[Predicate, ...] = ()
    schemas: tuple[ActionSchema, ...] = ()

    def predicate(self, name: str) -> Optional[Predicate]:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def schema(self, name: str) -> ActionSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise KeyError(name)


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...] = ()
    init: frozenset = frozenset()
    goal: frozenset = frozenset()


@dataclass(frozen=True, order=True)
class GroundAction:
    """A fully instantiated action.

    Ordering compares the canonical key (schema position, binding position),
    which is what the planner uses for tie-breaking.
    """

    key: tuple = field(repr=False)
    schema: str = field(compare=False)
    binding: tuple[str, ...] = field(compare=False, default=())
    pre: frozenset = field(compare=False, default=frozenset())
    add: frozenset = field(compare=False, default=frozenset())
    delete: frozenset = field(compare=False, default=frozenset())

    @property
    def name(self) -> str:
        return f"{self.schema}({', '.join(self.binding)})"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class GroundTask:
    name: str
    objects: tuple[tuple[str, str], ...]
    atoms: frozenset
    init: frozenset
    goal: frozenset
    actions: tuple[GroundAction, ...]

    def action(self, name: str) -> GroundAction:
        name = normalize_action_name(name)
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(f"unknown action {name!r} in task {self.name!r}")

    def with_init(self, init: Iterable[Atom]) -> "GroundTask":
        return GroundTask(self.name, self.objects, self.atoms, frozenset(init),
                          self.goal, self.actions)


# ---------------------------------------------------------------------------
# state semantics


def applicable(state: frozenset, action: GroundAction) -> bool:
    return action.pre <= state


def apply(state: frozenset, action: GroundAction, *, strict: bool = True) -> frozenset:
    """Return ``(state - delete) | add``; never mutates ``state``."""
    if strict and not action.pre <= state:
        missing = ", ".join(str(a) for a in sorted(action.pre - state))
        raise InapplicableActionError(f"{action.name} inapplicable: missing {missing}")
    return (frozenset(state) - action.delete) | action.add


def canonical(state: Iterable[Atom]) -> list[str]:
    return [str(a) for a in sorted(state)]


def parse_atom(text: str) -> Atom:
    """Parse ``in_hand(plate)``, ``on(bread, plate)`` or ``(on bread plate)``."""
    s = text.strip().lower()
    if s.startswith("("):
        parts = s.strip("()").split()
        if not parts:
            raise ValueError(f"empty atom: {text!r}")
        return Atom(parts[0], tuple(parts[1:]))
    if "(" not in s or not s.endswith(")"):
        if s and s.replace("_", "").replace("-", "").isalnum():
            return Atom(s)
        raise ValueError(f"malformed atom: {text!r}")
    head, rest = s.split("(", 1)
    args = tuple(a.strip() for a in rest[:-1].split(",") if a.strip())
    if not head.strip():
        raise ValueError(f"malformed atom: {text!r}")
    return Atom(head.strip(), args)


def normalize_action_name(text: str) -> str:
    a = parse_atom(text)
    return f"{a.predicate}({', '.join(a.args)})"


# ---------------------------------------------------------------------------
# lexer / s-expressions


@dataclass
class _Tok:
    value: str
    line: int
    col: int


@dataclass
class _List:
    items: list
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col, i, n = 1, 1, 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            i, col = i + 1, col + 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            toks.append(_Tok(ch, line, col))
            i, col = i + 1, col + 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "();":
            j += 1
        word = text[i:j]
        bad = [c for c in word if not (c.isalnum() or c in "-_?:.")]
        if bad:
            raise ParseError(f"unexpected character {bad[0]!r}", line, col + word.index(bad[0]))
        toks.append(_Tok(word.lower(), line, col))
        col += j - i
        i = j
    toks.append(_Tok("", line, col))  # end-of-input marker
    return toks


def _read_sexprs(text: str) -> list:
    toks = _tokenize(text)
    eof = toks[-1]
    stack: list[_List] = []
    top: list = []
    for t in toks[:-1]:
        if t.value == "(":
            stack.append(_List([], t.line, t.col))
        elif t.value == ")":
            if not stack:
                raise ParseError("unbalanced parentheses: unexpected ')'", t.line, t.col)
            node = stack.pop()
            (stack[-1].items if stack else top).append(node)
        else:
            (stack[-1].items if stack else top).append(t)
    if stack:
        raise ParseError("unbalanced parentheses: expected ')' before end of input",
                         eof.line, eof.col)
    return top


def _pos(node) -> tuple[int, int]:
    return node.line, node.col


def _expect_list(node, what: str) -> _List:
    if not isinstance(node, _List):
        raise ParseError(f"expected {what}", *_pos(node))
    return node


def _expect_word(node, what: str) -> _Tok:
    if not isinstance(node, _Tok):
        raise ParseError(f"expected {what}", *_pos(node))
    return node


def _typed_list(items: list, allow_variables: bool) -> list[tuple[_Tok, str]]:
    """Parse ``a b - t c`` into [(a, t), (b, t), (c, object)]."""
    out: list[tuple[_Tok, str]] = []
    pending: list[_Tok] = []
    i = 0
    while i < len(items):
        tok = _expect_word(items[i], "name")
        if tok.value == "-":
            if i + 1 >= len(items) or not pending:
                raise ParseError("expected type name after '-'", tok.line, tok.col)
            typ = _expect_word(items[i + 1], "type name")
            out.extend((p, typ.value) for p in pending)
            pending = []
            i += 2
            continue
        if tok.value.startswith("?") != allow_variables:
            kind = "variable" if allow_variables else "object name"
            raise ParseError(f"expected {kind}, got {tok.value!r}", tok.line, tok.col)
        pending.append(tok)
        i += 1
    out.extend((p, OBJECT) for p in pending)
    return out


def _atom_node(node, what: str) -> tuple[Atom, _List]:
    lst = _expect_list(node, what)
    if not lst.items:
        raise ParseError(f"expected {what}, got ()", *_pos(lst))
    words = [_expect_word(x, "term") for x in lst.items]
    return Atom(words[0].value, tuple(w.value for w in words[1:])), lst


def _is_head(node, word: str) -> bool:
    return isinstance(node, _List) and bool(node.items) and \
        isinstance(node.items[0], _Tok) and node.items[0].value == word


def _conjunction(node, what: str, allow_negation: bool):
    """Yield (atom, negated, node) for an atom, ``(and ...)``, ``(not ...)`` or ``()``."""
    lst = _expect_list(node, what)
    if not lst.items:
        return
    if _is_head(lst, "and"):
        for child in lst.items[1:]:
            yield from _conjunction(child, what, allow_negation)
        return
    if _is_head(lst, "not"):
        if not allow_negation:
            raise ParseError("negative preconditions are not supported", *_pos(lst))
        if len(lst.items) != 2:
            raise ParseError("expected (not <atom>)", *_pos(lst))
        atom, inner = _atom_node(lst.items[1], "atom")
        yield atom, True, inner
        return
    head = lst.items[0]
    if isinstance(head, _Tok) and head.value in ("or", "imply", "exists", "forall", "when", "="):
        raise ParseError(f"unsupported construct {head.value!r}", head.line, head.col)
    atom, inner = _atom_node(lst, what)
    yield atom, False, inner


def _header(top: list, kind: str) -> tuple[_List, str]:
    if len(top) != 1:
        where = top[1] if len(top) > 1 else None
        if where is None:
            raise ParseError("empty input: expected (define ...)", 1, 1)
        raise ParseError("expected a single (define ...) form", *_pos(where))
    root = _expect_list(top[0], "(define ...)")
    if not _is_head(root, "define"):
        raise ParseError("expected 'define'", *_pos(root))
    if len(root.items) < 2:
        raise ParseError(f"expected ({kind} <name>)", *_pos(root))
    hdr = _expect_list(root.items[1], f"({kind} <name>)")
    if len(hdr.items) != 2 or not _is_head(hdr, kind):
        raise ParseError(f"expected ({kind} <name>)", *_pos(hdr))
    return root, _expect_word(hdr.items[1], "name").value


class _Checker:
    """Shared declaration lookups for domain and problem validation."""

    def __init__(self, types: Iterable[str], predicates: Iterable[Predicate]):
        self.types = set(types) | {OBJECT}
        self.predicates = {p.name: p for p in predicates}

    def check_type(self, typ: str, node) -> None:
        if typ not in self.types:
            raise ParseError(f"undeclared type {typ!r}", *_pos(node))

    def check_atom(self, atom: Atom, node, terms: dict[str, str]) -> None:
        pred = self.predicates.get(atom.predicate)
        if pred is None:
            raise ParseError(f"undeclared predicate {atom.predicate!r}", *_pos(node))
        if pred.arity != len(atom.args):
            raise ParseError(f"predicate {atom.predicate!r} expects {pred.arity} "
                             f"argument(s), got {len(atom.args)}", *_pos(node))
        for arg, (_, want) in zip(atom.args, pred.parameters):
            if arg not in terms:
                kind = "variable" if arg.startswith("?") else "object"
                raise ParseError(f"undeclared {kind} {arg!r} in {atom.predicate!r}", *_pos(node))
            have = terms[arg]
            if want != OBJECT and have != OBJECT and have != want:
                raise ParseError(f"argument {arg!r} of type {have!r} does not fit "
                                 f"{want!r} in {atom.predicate!r}", *_pos(node))


def parse_domain(text: str) -> Domain:
    top = _read_sexprs(text)
    root, name = _header(top, "domain")
    requirements: list[str] = []
    types: list[str] = []
    constants: list[tuple[str, str]] = []
    predicates: list[Predicate] = []
    schema_nodes: list[_List] = []
    const_nodes: list[tuple[_Tok, str]] = []
    for section in root.items[2:]:
        sec = _expect_list(section, "domain section")
        head = _expect_word(sec.items[0], "section keyword") if sec.items else None
        if head is None:
            raise ParseError("empty section", *_pos(sec))
        if head.value == ":requirements":
            for r in sec.items[1:]:
                tok = _expect_word(r, "requirement flag")
                if tok.value not in SUPPORTED_REQUIREMENTS:
                    raise ParseError(f"unsupported requirement {tok.value!r} "
                                     f"(expected one of {', '.join(SUPPORTED_REQUIREMENTS)})",
                                     tok.line, tok.col)
                requirements.append(tok.value)
        elif head.value == ":types":
            for tok, parent in _typed_list(sec.items[1:], allow_variables=False):
                if parent != OBJECT:
                    raise ParseError(f"type hierarchies are not supported ({tok.value} - {parent})",
                                     tok.line, tok.col)
                if tok.value in types:
                    raise ParseError(f"duplicate type {tok.value!r}", tok.line, tok.col)
                types.append(tok.value)
        elif head.value == ":constants":
            const_nodes.extend(_typed_list(sec.items[1:], allow_variables=False))
        elif head.value == ":predicates":
            for p in sec.items[1:]:
                plist = _expect_list(p, "predicate declaration")
                pname = _expect_word(plist.items[0], "predicate name") if plist.items else None
                if pname is None:
                    raise ParseError("empty predicate declaration", *_pos(plist))
                if any(q.name == pname.value for q in predicates):
                    raise ParseError(f"duplicate predicate {pname.value!r}", pname.line, pname.col)
                params = _typed_list(plist.items[1:], allow_variables=True)
                predicates.append(Predicate(pname.value, tuple((t.value, ty) for t, ty in params)))
                for tok, ty in params:
                    if ty not in set(types) | {OBJECT}:
                        raise ParseError(f"undeclared type {ty!r}", tok.line, tok.col)
        elif head.value == ":action":
            schema_nodes.append(sec)
        else:
            raise ParseError(f"unknown domain section {head.value!r}", head.line, head.col)

    checker = _Checker(types, predicates)
    for tok, ty in const_nodes:
        checker.check_type(ty, tok)
        if any(c == tok.value for c, _ in constants):
            raise ParseError(f"duplicate constant {tok.value!r}", tok.line, tok.col)
        constants.append((tok.value, ty))
    schemas = [_parse_schema(node, checker, dict(constants)) for node in schema_nodes]
    seen: set[str] = set()
    for s, node in zip(schemas, schema_nodes):
        if s.name in seen:
            raise ParseError(f"duplicate action {s.name!r}", *_pos(node))
        seen.add(s.name)
    return Domain(name, tuple(requirements), tuple(types), tuple(constants),
                  tuple(predicates), tuple(schemas))


def _parse_schema(node: _List, checker: _Checker, constants: dict[str, str]) -> ActionSchema:
    if len(node.items) < 2:
        raise ParseError("expected action name", *_pos(node))
    name = _expect_word(node.items[1], "action name").value
    params: list[tuple[str, str]] = []
    pre: list[Atom] = []
    add: list[Atom] = []
    dele: list[Atom] = []
    terms = dict(constants)
    rest = node.items[2:]
    if len(rest) % 2:
        raise ParseError(f"action {name!r}: keyword without value", *_pos(rest[-1]))
    pending = []
    for key, value in zip(rest[::2], rest[1::2]):
        kw = _expect_word(key, "action keyword")
        if kw.value == ":parameters":
            plist = _expect_list(value, "parameter list")
            for tok, ty in _typed_list(plist.items, allow_variables=True):
                checker.check_type(ty, tok)
                if tok.value in terms:
                    raise ParseError(f"duplicate parameter {tok.value!r}", tok.line, tok.col)
                params.append((tok.value, ty))
                terms[tok.value] = ty
        elif kw.value in (":precondition", ":effect"):
            pending.append((kw.value, value))
        else:
            raise ParseError(f"unknown action keyword {kw.value!r}", kw.line, kw.col)
    for kw, value in pending:
        if kw == ":precondition":
            for atom, _, at in _conjunction(value, "precondition", allow_negation=False):
                checker.check_atom(atom, at, terms)
                if atom not in pre:
                    pre.append(atom)
        else:
            for atom, neg, at in _conjunction(value, "effect", allow_negation=True):
                checker.check_atom(atom, at, terms)
                bucket = dele if neg else add
                if atom not in bucket:
                    bucket.append(atom)
    clash = set(add) & set(dele)
    if clash:
        raise ParseError(f"action {name!r} both adds and deletes "
                         f"{sorted(clash)[0].to_pddl()}", *_pos(node))
    return ActionSchema(name, tuple(params), tuple(pre), tuple(add), tuple(dele))


def parse_problem(text: str, domain: Optional[Domain] = None) -> Problem:
    """Parse a problem file.  With ``domain`` given, atoms are checked against it."""
    top = _read_sexprs(text)
    root, name = _header(top, "problem")
    domain_name = None
    objects: list[tuple[str, str]] = []
    init_nodes: list = []
    goal_node = None
    for section in root.items[2:]:
        sec = _expect_list(section, "problem section")
        head = _expect_word(sec.items[0], "section keyword") if sec.items else None
        if head is None:
            raise ParseError("empty section", *_pos(sec))
        if head.value == ":domain":
            if len(sec.items) != 2:
                raise ParseError("expected (:domain <name>)", *_pos(sec))
            domain_name = _expect_word(sec.items[1], "domain name").value
        elif head.value == ":requirements":
            for r in sec.items[1:]:
                tok = _expect_word(r, "requirement flag")
                if tok.value not in SUPPORTED_REQUIREMENTS:
                    raise ParseError(f"unsupported requirement {tok.value!r}", tok.line, tok.col)
        elif head.value == ":objects":
            for tok, ty in _typed_list(sec.items[1:], allow_variables=False):
                if domain is not None and ty not in set(domain.types) | {OBJECT}:
                    raise ParseError(f"undeclared type {ty!r}", tok.line, tok.col)
                if any(o == tok.value for o, _ in objects):
                    raise ParseError(f"duplicate object {tok.value!r}", tok.line, tok.col)
                objects.append((tok.value, ty))
        elif head.value == ":init":
            init_nodes.extend(sec.items[1:])
        elif head.value == ":goal":
            if len(sec.items) != 2:
                raise ParseError("expected (:goal <formula>)", *_pos(sec))
            goal_node = sec.items[1]
        else:
            raise ParseError(f"unknown problem section {head.value!r}", head.line, head.col)
    if domain_name is None:
        raise ParseError("missing (:domain <name>)", *_pos(root))

    terms = dict(objects)
    if domain is not None:
        for c, ty in domain.constants:
            terms.setdefault(c, ty)
        checker = _Checker(domain.types, domain.predicates)
    else:
        checker = None

    def check(atom: Atom, node) -> None:
        if checker is not None:
            checker.check_atom(atom, node, terms)
        else:
            for arg in atom.args:
                if arg not in terms:
                    raise ParseError(f"undeclared object {arg!r} in {atom.predicate!r}", *_pos(node))

    init: list[Atom] = []
    for n in init_nodes:
        atom, at = _atom_node(n, "ground atom")
        check(atom, at)
        init.append(atom)
    goal: list[Atom] = []
    if goal_node is not None:
        for atom, _, at in _conjunction(goal_node, "goal", allow_negation=False):
            check(atom, at)
            goal.append(atom)
    return Problem(name, domain_name, tuple(objects), frozenset(init), frozenset(goal))


# ---------------------------------------------------------------------------
# pretty printing


def _fmt_typed(pairs: Iterable[tuple[str, str]]) -> str:
    out: list[str] = []
    for typ, group in itertools.groupby(pairs, key=lambda p: p[1]):
        names = [n for n, _ in group]
        out.append(" ".join(names) if typ == OBJECT else " ".join(names) + f" - {typ}")
    return " ".join(out)


def _fmt_conj(atoms: Iterable[Atom], negated: Iterable[Atom] = ()) -> str:
    parts = [a.to_pddl() for a in atoms] + [f"(not {a.to_pddl()})" for a in negated]
    if not parts:
        return "()"
    if len(parts) == 1:
        return parts[0]
    return "(and " + " ".join(parts) + ")"


def domain_to_pddl(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append(f"  (:types {' '.join(domain.types)})")
    if domain.constants:
        lines.append(f"  (:constants {_fmt_typed(domain.constants)})")
    lines.append("  (:predicates")
    for p in domain.predicates:
        params = _fmt_typed(p.parameters)
        lines.append(f"    ({p.name}{' ' + params if params else ''})")
    lines[-1] += ")"
    for s in domain.schemas:
        lines.append(f"  (:action {s.name}")
        lines.append(f"    :parameters ({_fmt_typed(s.parameters)})")
        lines.append(f"    :precondition {_fmt_conj(s.preconditions)}")
        lines.append(f"    :effect {_fmt_conj(s.add_effects, s.delete_effects)})")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def problem_to_pddl(problem: Problem) -> str:
    lines = [f"(define (problem {problem.name})", f"  (:domain {problem.domain_name})"]
    lines.append(f"  (:objects {_fmt_typed(problem.objects)})")
    lines.append("  (:init")
    for a in sorted(problem.init):
        lines.append(f"    {a.to_pddl()}")
    lines[-1] += ")"
    lines.append(f"  (:goal {_fmt_conj(sorted(problem.goal))}))")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# grounding


def ground(domain: Domain, problem: Problem) -> GroundTask:
    """Instantiate every schema over all type-consistent bindings.

    Objects are ordered problem objects first, then domain constants; this
    order together with schema declaration order defines the canonical action
    key.  A ground delete effect that is also added is dropped (add wins).
    """
    if problem.domain_name != domain.name:
        raise ValueError(f"problem {problem.name!r} is for domain {problem.domain_name!r}, "
                         f"not {domain.name!r}")
    objects = list(problem.objects)
    for c, ty in domain.constants:
        if all(c != o for o, _ in objects):
            objects.append((c, ty))
    index = {o: i for i, (o, _) in enumerate(objects)}

    def candidates(typ: str) -> list[str]:
        return [o for o, t in objects if typ == OBJECT or t == typ]

    actions: list[GroundAction] = []
    for si, schema in enumerate(domain.schemas):
        variables = [v for v, _ in schema.parameters]
        pools = [candidates(t) for _, t in schema.parameters]
        for combo in itertools.product(*pools):
            binding = dict(zip(variables, combo))
            pre = frozenset(a.substitute(binding) for a in schema.preconditions)
            add = frozenset(a.substitute(binding) for a in schema.add_effects)
            dele = frozenset(a.substitute(binding) for a in schema.delete_effects) - add
            key = (si,) + tuple(index[o] for o in combo)
            actions.append(GroundAction(key, schema.name, tuple(combo), pre, add, dele))
    atoms = set(problem.init) | set(problem.goal)
    for a in actions:
        atoms |= a.pre | a.add | a.delete
    return GroundTask(problem.name, tuple(objects), frozenset(atoms), frozenset(problem.init),
                      frozenset(problem.goal), tuple(actions))
