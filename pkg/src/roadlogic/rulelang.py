"""A small textual rule language with stratified negation-as-failure.

Programs are made of ground facts and Horn rules written Prolog-style::

    lane_change_action(change_lane_left).
    suspect(Frame) :- cluster(Frame, A), lane_change_action(A), \\+ explained(Frame), Frame >= 10.

Evaluation is bottom-up (semi-naive fixpoint per stratum), so negation is
tested against fully computed lower strata and every query is total.  Each
derived fact keeps the first derivation found under textual rule/fact order,
which `explain` turns into a human-readable tree.

Terms are symbols (lowercase), integers, reals and variables (capitalised;
`_` is anonymous).  Comparisons (`>`, `<`, `>=`, `=<`, `=`, `\\=`) and
arithmetic bindings (`X is A + B`) operate on bound values only; rules must
be range-restricted, i.e. every variable used in a negated literal, a
comparison or an arithmetic expression is bound by an earlier positive
literal or binding, and every head variable is bound by the body.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


class RuleError(Exception):
    """Base class for every rule-language error."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


class RuleSyntaxError(RuleError):
    pass


class RangeRestrictionError(RuleError):
    def __init__(self, variable: str, message: str, line=None, col=None):
        self.variable = variable
        super().__init__(message, line, col)


class UnstratifiableError(RuleError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("program is unstratifiable: negation cycle through " + " -> ".join(cycle))


class EvaluationTypeError(RuleError):
    pass


class ExplainError(RuleError):
    pass


# ---------------------------------------------------------------------------
# Terms and program structure


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self):
        return self.name


Term = Union[str, int, float, Var]
Atom = tuple[str, tuple]


def _term_str(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, float):
        return repr(t)
    return str(t)


@dataclass(frozen=True)
class Literal:
    pred: str
    args: tuple
    negated: bool = False

    def __str__(self):
        inner = f"{self.pred}({', '.join(_term_str(a) for a in self.args)})" if self.args else self.pred
        return ("\\+ " if self.negated else "") + inner


@dataclass(frozen=True)
class Comparison:
    op: str  # one of > < >= =< = \=
    left: Term
    right: Term

    def __str__(self):
        return f"{_term_str(self.left)} {self.op} {_term_str(self.right)}"


@dataclass(frozen=True)
class Binding:
    target: Var
    op: str  # one of + - * /
    left: Term
    right: Term

    def __str__(self):
        return f"{self.target} is {_term_str(self.left)} {self.op} {_term_str(self.right)}"


BodyItem = Union[Literal, Comparison, Binding]


@dataclass(frozen=True)
class Rule:
    head: Literal
    body: tuple
    line: int = 0

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


@dataclass
class RuleProgram:
    rules: list[Rule]
    facts: list[Atom]

    def predicates(self) -> set[str]:
        preds = {r.head.pred for r in self.rules}
        preds.update(p for p, _ in self.facts)
        for r in self.rules:
            for item in r.body:
                if isinstance(item, Literal):
                    preds.add(item.pred)
        return preds


# ---------------------------------------------------------------------------
# Tokenizer / parser

_PUNCT = (":-", "\\+", ">=", "=<", "\\=", "is", ">", "<", "=", "(", ")", ",", ".", "+", "-", "*", "/")


@dataclass
class _Token:
    kind: str  # name var number punct end
    value: object
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    line = 1
    col = 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit() and _numeric_context(tokens)):
            j = i + 1
            while j < n and (
                text[j].isdigit() or (text[j] == "." and j + 1 < n and text[j + 1].isdigit())
            ):
                j += 1
            # allow exponent
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            raw = text[i:j]
            try:
                value: object = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    raise RuleSyntaxError(f"bad number {raw!r}", line, col)
            tokens.append(_Token("number", value, line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word == "is":
                tokens.append(_Token("punct", "is", line, col))
            elif word[0].isupper() or word[0] == "_":
                tokens.append(_Token("var", word, line, col))
            else:
                tokens.append(_Token("name", word, line, col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(_Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise RuleSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("end", None, line, col))
    return tokens


def _numeric_context(tokens: list[_Token]) -> bool:
    """A '-' starts a negative number except right after a value token."""
    if not tokens:
        return True
    last = tokens[-1]
    if last.kind in ("number", "var", "name"):
        return False
    return last.value != ")"


_COMPARE_OPS = (">", "<", ">=", "=<", "=", "\\=")
_ARITH_OPS = ("+", "-", "*", "/")


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self._anon = 0
        self._last_line = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str) -> _Token:
        tok = self.next()
        if tok.kind != "punct" or tok.value != value:
            raise RuleSyntaxError(f"expected {value!r}, found {tok.value!r}", tok.line, tok.col)
        return tok

    def parse_program(self) -> RuleProgram:
        rules: list[Rule] = []
        facts: list[Atom] = []
        while self.peek().kind != "end":
            rule = self.parse_statement()
            if not rule.body:
                for a in rule.head.args:
                    if isinstance(a, Var):
                        raise RangeRestrictionError(
                            a.name, f"variable {a.name} in a fact", rule.line, None
                        )
                facts.append((rule.head.pred, rule.head.args))
            else:
                _check_range_restriction(rule)
                rules.append(rule)
        return RuleProgram(rules, facts)

    def parse_statement(self) -> Rule:
        head = self.parse_atom()
        head_line = self._last_line
        tok = self.next()
        body: list[BodyItem] = []
        if tok.kind == "punct" and tok.value == ":-":
            body.append(self.parse_body_item())
            while True:
                tok = self.next()
                if tok.kind == "punct" and tok.value == ",":
                    body.append(self.parse_body_item())
                elif tok.kind == "punct" and tok.value == ".":
                    break
                else:
                    raise RuleSyntaxError(f"expected ',' or '.', found {tok.value!r}", tok.line, tok.col)
        elif not (tok.kind == "punct" and tok.value == "."):
            raise RuleSyntaxError(f"expected ':-' or '.', found {tok.value!r}", tok.line, tok.col)
        return Rule(head, tuple(body), line=head_line)

    def parse_body_item(self) -> BodyItem:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == "\\+":
            self.next()
            atom = self.parse_atom()
            return Literal(atom.pred, atom.args, negated=True)
        # Could be an atom, a comparison or a binding; parse a term and look ahead.
        left = self.parse_term()
        tok = self.peek()
        if tok.kind == "punct" and tok.value == "is":
            self.next()
            if not isinstance(left, Var):
                raise RuleSyntaxError("left side of 'is' must be a variable", tok.line, tok.col)
            a = self.parse_term()
            op_tok = self.next()
            if op_tok.kind != "punct" or op_tok.value not in _ARITH_OPS:
                raise RuleSyntaxError(f"expected arithmetic operator, found {op_tok.value!r}", op_tok.line, op_tok.col)
            b = self.parse_term()
            return Binding(left, op_tok.value, a, b)
        if tok.kind == "punct" and tok.value in _COMPARE_OPS:
            self.next()
            right = self.parse_term()
            return Comparison(tok.value, left, right)
        if isinstance(left, str):
            # bare predicate name: 0-ary atom or atom with args
            if tok.kind == "punct" and tok.value == "(":
                args = self.parse_args()
                return Literal(left, args)
            return Literal(left, ())
        raise RuleSyntaxError(f"expected a literal, found term {left!r}", tok.line, tok.col)

    def parse_atom(self) -> Literal:
        tok = self.next()
        if tok.kind != "name":
            raise RuleSyntaxError(f"expected a predicate name, found {tok.value!r}", tok.line, tok.col)
        self._last_line = tok.line
        if self.peek().kind == "punct" and self.peek().value == "(":
            return Literal(tok.value, self.parse_args())
        return Literal(tok.value, ())

    def parse_args(self) -> tuple:
        self.expect("(")
        args = [self.parse_term()]
        while True:
            tok = self.next()
            if tok.kind == "punct" and tok.value == ",":
                args.append(self.parse_term())
            elif tok.kind == "punct" and tok.value == ")":
                return tuple(args)
            else:
                raise RuleSyntaxError(f"expected ',' or ')', found {tok.value!r}", tok.line, tok.col)

    def parse_term(self) -> Term:
        tok = self.next()
        if tok.kind == "number":
            return tok.value
        if tok.kind == "var":
            if tok.value == "_":
                self._anon += 1
                return Var(f"_G{self._anon}")
            return Var(tok.value)
        if tok.kind == "name":
            return tok.value
        raise RuleSyntaxError(f"expected a term, found {tok.value!r}", tok.line, tok.col)


def _check_range_restriction(rule: Rule) -> None:
    bound: set[str] = set()
    for item in rule.body:
        if isinstance(item, Literal) and not item.negated:
            bound.update(a.name for a in item.args if isinstance(a, Var))
        elif isinstance(item, Literal):
            for a in item.args:
                if isinstance(a, Var) and a.name not in bound:
                    raise RangeRestrictionError(
                        a.name,
                        f"variable {a.name} unbound at negated literal {item} in rule '{rule.head}'",
                        rule.line,
                    )
        elif isinstance(item, Comparison):
            for a in (item.left, item.right):
                if isinstance(a, Var) and a.name not in bound:
                    raise RangeRestrictionError(
                        a.name,
                        f"variable {a.name} unbound at comparison {item} in rule '{rule.head}'",
                        rule.line,
                    )
        elif isinstance(item, Binding):
            for a in (item.left, item.right):
                if isinstance(a, Var) and a.name not in bound:
                    raise RangeRestrictionError(
                        a.name,
                        f"variable {a.name} unbound in arithmetic {item} in rule '{rule.head}'",
                        rule.line,
                    )
            bound.add(item.target.name)
    for a in rule.head.args:
        if isinstance(a, Var) and a.name not in bound:
            raise RangeRestrictionError(
                a.name, f"head variable {a.name} not bound by the body of '{rule.head}'", rule.line
            )


def parse_rules(text: str) -> RuleProgram:
    """Parse a rule program, raising positioned errors on bad input."""
    return _Parser(text).parse_program()


# ---------------------------------------------------------------------------
# Stratification


@dataclass
class StratifiedProgram:
    program: RuleProgram
    stratum_of: dict[str, int]
    strata: list[list[Rule]]  # rules grouped by the stratum of their head


def stratify(program: RuleProgram) -> StratifiedProgram:
    """Assign predicates to strata so negated dependencies strictly increase."""
    preds = sorted(program.predicates())
    stratum = {p: 0 for p in preds}
    deps: list[tuple[str, str, bool]] = []  # (head, body_pred, negated)
    for rule in program.rules:
        for item in rule.body:
            if isinstance(item, Literal):
                deps.append((rule.head.pred, item.pred, item.negated))
    limit = len(preds) + 1
    for _ in range(limit + 1):
        changed = False
        for head, body, negated in deps:
            need = stratum[body] + (1 if negated else 0)
            if stratum[head] < need:
                stratum[head] = need
                changed = True
        if not changed:
            break
        if max(stratum.values(), default=0) > limit:
            raise UnstratifiableError(_negation_cycle(deps))
    else:
        raise UnstratifiableError(_negation_cycle(deps))

    n_strata = max(stratum.values(), default=0) + 1
    strata: list[list[Rule]] = [[] for _ in range(n_strata)]
    for rule in program.rules:
        strata[stratum[rule.head.pred]].append(rule)
    return StratifiedProgram(program, stratum, strata)


def _negation_cycle(deps: list[tuple[str, str, bool]]) -> list[str]:
    """Find some cycle in the dependency graph that passes through a negated edge."""
    graph: dict[str, list[tuple[str, bool]]] = {}
    for head, body, neg in deps:
        graph.setdefault(head, []).append((body, neg))
        graph.setdefault(body, [])
    for start, neg_targets in [(h, b) for h, b, n in deps if n]:
        # path from neg target back to start closes a cycle through the negation
        path = _find_path(graph, neg_targets, start)
        if path is not None:
            return [start] + path
    return [h for h, b, n in deps if n][:1]


def _find_path(graph: dict, src: str, dst: str) -> Optional[list[str]]:
    stack = [(src, [src])]
    seen = {src}
    while stack:
        node, path = stack.pop()
        if node == dst:
            return path
        for nxt, _neg in graph.get(node, []):
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, path + [nxt]))
    return None


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class Derivation:
    rule: Optional[Rule]  # None for input facts
    children: list[Atom] = field(default_factory=list)
    negated_absent: list[Atom] = field(default_factory=list)


class Model:
    """The set of facts derived from a stratified program plus a fact base."""

    def __init__(self):
        self._relations: dict[str, list[tuple]] = {}
        self._members: set[Atom] = set()
        self._provenance: dict[Atom, Derivation] = {}

    def add(self, atom: Atom, derivation: Derivation) -> bool:
        if atom in self._members:
            return False
        self._members.add(atom)
        self._relations.setdefault(atom[0], []).append(atom[1])
        self._provenance[atom] = derivation
        return True

    def __contains__(self, atom: Atom) -> bool:
        return atom in self._members

    def __len__(self) -> int:
        return len(self._members)

    def relation(self, pred: str) -> list[tuple]:
        return self._relations.get(pred, [])

    def facts(self) -> Iterator[Atom]:
        for pred, rows in self._relations.items():
            for row in rows:
                yield (pred, row)

    def derivation(self, atom: Atom) -> Derivation:
        return self._provenance[atom]


def _eval_term(term: Term, sub: dict) -> object:
    if isinstance(term, Var):
        return sub[term.name]
    return term


def _unify(pattern: tuple, row: tuple, sub: dict) -> Optional[dict]:
    out = sub
    copied = False
    for p, v in zip(pattern, row):
        if isinstance(p, Var):
            if p.name in out:
                if not _values_equal(out[p.name], v):
                    return None
            else:
                if not copied:
                    out = dict(out)
                    copied = True
                out[p.name] = v
        else:
            if not _values_equal(p, v):
                return None
    return out if copied else dict(out)


def _values_equal(a, b) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    return a == b  # numeric comparison covers int/float mixes


def _require_number(value, item) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise EvaluationTypeError(f"non-numeric value {value!r} in {item}")
    return value


def _apply_comparison(item: Comparison, sub: dict) -> bool:
    left = _eval_term(item.left, sub)
    right = _eval_term(item.right, sub)
    op = item.op
    if op == "=":
        return _values_equal(left, right)
    if op == "\\=":
        return not _values_equal(left, right)
    left = _require_number(left, item)
    right = _require_number(right, item)
    if op == ">":
        return left > right
    if op == "<":
        return left < right
    if op == ">=":
        return left >= right
    if op == "=<":
        return left <= right
    raise AssertionError(op)


def _apply_binding(item: Binding, sub: dict) -> dict:
    a = _require_number(_eval_term(item.left, sub), item)
    b = _require_number(_eval_term(item.right, sub), item)
    if item.op == "+":
        value = a + b
    elif item.op == "-":
        value = a - b
    elif item.op == "*":
        value = a * b
    else:
        if b == 0:
            raise EvaluationTypeError(f"division by zero in {item}")
        value = a / b
    out = dict(sub)
    out[item.target.name] = value
    return out


def _ground(literal: Literal, sub: dict) -> Atom:
    return (literal.pred, tuple(_eval_term(a, sub) for a in literal.args))


@dataclass
class _Match:
    sub: dict
    children: list[Atom]
    negated: list[Atom]


def _match_rule(rule: Rule, model: Model, delta: Optional[dict[str, set]], delta_at: Optional[int]):
    """All body matches, optionally restricting one positive literal to a delta."""
    matches = [_Match({}, [], [])]
    for idx, item in enumerate(rule.body):
        if not matches:
            return []
        if isinstance(item, Literal) and not item.negated:
            rows = model.relation(item.pred)
            if delta_at is not None and idx == delta_at:
                rows = [r for r in rows if r in delta.get(item.pred, ())]
            new: list[_Match] = []
            for m in matches:
                for row in rows:
                    sub = _unify(item.args, row, m.sub)
                    if sub is not None:
                        new.append(_Match(sub, m.children + [(item.pred, row)], m.negated))
            matches = new
        elif isinstance(item, Literal):
            kept = []
            for m in matches:
                atom = _ground(item, m.sub)
                if atom not in model:
                    kept.append(_Match(m.sub, m.children, m.negated + [atom]))
            matches = kept
        elif isinstance(item, Comparison):
            matches = [m for m in matches if _apply_comparison(item, m.sub)]
        else:
            matches = [_Match(_apply_binding(item, m.sub), m.children, m.negated) for m in matches]
    return matches


def evaluate(stratified: StratifiedProgram | RuleProgram, extra_facts: Iterable[Atom] = ()) -> Model:
    """Compute the perfect model of a stratified program over a fact base."""
    if isinstance(stratified, RuleProgram):
        stratified = stratify(stratified)
    model = Model()
    for atom in stratified.program.facts:
        model.add(atom, Derivation(None))
    for atom in extra_facts:
        model.add((atom[0], tuple(atom[1])), Derivation(None))

    for rules in stratified.strata:
        if not rules:
            continue
        local_preds = {r.head.pred for r in rules}
        # first full pass
        delta: dict[str, set] = {}
        for rule in rules:
            for m in _match_rule(rule, model, None, None):
                atom = _ground(rule.head, m.sub)
                if model.add(atom, Derivation(rule, m.children, m.negated)):
                    delta.setdefault(atom[0], set()).add(atom[1])
        # semi-naive iterations
        while delta:
            new_delta: dict[str, set] = {}
            for rule in rules:
                positions = [
                    i
                    for i, item in enumerate(rule.body)
                    if isinstance(item, Literal) and not item.negated and item.pred in local_preds
                ]
                for pos in positions:
                    if rule.body[pos].pred not in delta:
                        continue
                    for m in _match_rule(rule, model, delta, pos):
                        atom = _ground(rule.head, m.sub)
                        if model.add(atom, Derivation(rule, m.children, m.negated)):
                            new_delta.setdefault(atom[0], set()).add(atom[1])
            delta = new_delta
    return model


# ---------------------------------------------------------------------------
# Explanations


@dataclass
class DerivationTree:
    fact: Atom
    rule: Optional[Rule]
    children: list["DerivationTree"]
    negated_absent: list[Atom]

    def leaves(self) -> list[Atom]:
        if self.rule is None:
            return [self.fact]
        out: list[Atom] = []
        for child in self.children:
            out.extend(child.leaves())
        return out


def explain(model: Model, fact: Atom) -> DerivationTree:
    """Derivation tree for a fact in the model; leaves are input facts."""
    fact = (fact[0], tuple(fact[1]))
    if fact not in model:
        raise ExplainError(f"fact {_atom_str(fact)} is not in the model")
    deriv = model.derivation(fact)
    children = [explain(model, c) for c in deriv.children]
    return DerivationTree(fact, deriv.rule, children, list(deriv.negated_absent))


def _atom_str(atom: Atom) -> str:
    pred, args = atom
    if not args:
        return pred
    return f"{pred}({', '.join(_term_str(a) for a in args)})"


def render_derivation(tree: DerivationTree, indent: str = "") -> str:
    lines = [indent + _atom_str(tree.fact)]
    if tree.rule is None:
        lines[0] += "   [given]"
        return "\n".join(lines)
    lines.append(f"{indent}  by rule: {tree.rule}")
    for check in tree.negated_absent:
        lines.append(f"{indent}  checked absent: {_atom_str(check)}")
    for child in tree.children:
        lines.append(render_derivation(child, indent + "    "))
    return "\n".join(lines)
