"""Naive full-recompute fixpoint evaluator, used as an oracle for the
semi-naive engine.  Deliberately dumb: every pass re-joins every rule
against the whole model until nothing changes."""

from __future__ import annotations

import itertools

from roadlogic.rulelang import (
    Binding,
    Comparison,
    Literal,
    RuleProgram,
    Var,
    stratify,
)


def _value(term, sub):
    if isinstance(term, Var):
        return sub[term.name]
    return term


def _all_matches(body, relations, model_set, sub):
    if not body:
        yield sub
        return
    item, rest = body[0], body[1:]
    if isinstance(item, Literal) and not item.negated:
        for row in relations.get(item.pred, []):
            new = dict(sub)
            ok = True
            for p, v in zip(item.args, row):
                if isinstance(p, Var):
                    if p.name in new and new[p.name] != v:
                        ok = False
                        break
                    new[p.name] = v
                elif p != v:
                    ok = False
                    break
            if ok:
                yield from _all_matches(rest, relations, model_set, new)
    elif isinstance(item, Literal):
        atom = (item.pred, tuple(_value(a, sub) for a in item.args))
        if atom not in model_set:
            yield from _all_matches(rest, relations, model_set, sub)
    elif isinstance(item, Comparison):
        left = _value(item.left, sub)
        right = _value(item.right, sub)
        ok = {
            ">": lambda: left > right,
            "<": lambda: left < right,
            ">=": lambda: left >= right,
            "=<": lambda: left <= right,
            "=": lambda: left == right,
            "\\=": lambda: left != right,
        }[item.op]()
        if ok:
            yield from _all_matches(rest, relations, model_set, sub)
    elif isinstance(item, Binding):
        a = _value(item.left, sub)
        b = _value(item.right, sub)
        value = {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else None}[item.op]
        if value is None:
            return
        new = dict(sub)
        new[item.target.name] = value
        yield from _all_matches(rest, relations, model_set, new)


def naive_model(program: RuleProgram, extra_facts=()) -> set:
    stratified = stratify(program)
    relations: dict[str, set] = {}
    model_set: set = set()

    def add(atom):
        if atom in model_set:
            return False
        model_set.add(atom)
        relations.setdefault(atom[0], set()).add(atom[1])
        return True

    for atom in itertools.chain(program.facts, extra_facts):
        add((atom[0], tuple(atom[1])))

    for rules in stratified.strata:
        changed = True
        while changed:
            changed = False
            for rule in rules:
                for sub in list(_all_matches(list(rule.body), relations, model_set, {})):
                    atom = (rule.head.pred, tuple(_value(a, sub) for a in rule.head.args))
                    if add(atom):
                        changed = True
    return model_set
