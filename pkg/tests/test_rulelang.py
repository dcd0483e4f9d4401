import random

import pytest

from roadlogic.rulelang import (
    EvaluationTypeError,
    RangeRestrictionError,
    RuleSyntaxError,
    UnstratifiableError,
    evaluate,
    explain,
    parse_rules,
    render_derivation,
    stratify,
)

from oracle_datalog import naive_model


def model_set(model):
    return set(model.facts())


class TestParser:
    def test_single_fact(self):
        program = parse_rules("p(1).")
        assert program.facts == [("p", (1,))]
        assert program.rules == []

    def test_rule_with_negation(self):
        program = parse_rules("q(X) :- p(X), \\+ r(X).")
        assert len(program.rules) == 1
        rule = program.rules[0]
        assert rule.head.pred == "q"
        assert rule.body[1].negated

    def test_comments_and_whitespace(self):
        program = parse_rules(
            """
            % a comment
            p(1).   % trailing
            q(X) :- p(X).
            """
        )
        assert len(program.facts) == 1
        assert len(program.rules) == 1

    def test_zero_arity_and_symbols(self):
        program = parse_rules("raining. wet :- raining.")
        assert ("raining", ()) in program.facts

    def test_negative_numbers_and_floats(self):
        program = parse_rules("p(-3, 2.5). q(X) :- p(X, Y), X < -1.0.")
        assert program.facts[0] == ("p", (-3, 2.5))

    def test_syntax_error_position(self):
        with pytest.raises(RuleSyntaxError) as err:
            parse_rules("p(1).\nq(X) :- p(X)")
        assert err.value.line == 2

    def test_range_restriction_unbound_negation(self):
        with pytest.raises(RangeRestrictionError) as err:
            parse_rules("q(X) :- \\+ r(X).")
        assert err.value.variable == "X"

    def test_range_restriction_unbound_comparison(self):
        with pytest.raises(RangeRestrictionError):
            parse_rules("q(X) :- p(X), Y > 3.")

    def test_range_restriction_head(self):
        with pytest.raises(RangeRestrictionError):
            parse_rules("q(X, Y) :- p(X).")

    def test_variable_in_fact_rejected(self):
        with pytest.raises(RangeRestrictionError):
            parse_rules("p(X).")

    def test_binding_parses(self):
        program = parse_rules("q(Z) :- p(X, Y), Z is X + Y.")
        assert len(program.rules) == 1


class TestStratify:
    def test_mutual_negation_rejected(self):
        program = parse_rules("q :- \\+ r. r :- \\+ q.")
        with pytest.raises(UnstratifiableError) as err:
            stratify(program)
        assert set(err.value.cycle) & {"q", "r"}

    def test_simple_strata(self):
        program = parse_rules("r(1). p(1). q(X) :- p(X), \\+ r(X).")
        stratified = stratify(program)
        assert stratified.stratum_of["q"] == stratified.stratum_of["r"] + 1

    def test_negation_of_derived(self):
        program = parse_rules(
            """
            base(1). base(2). special(1).
            marked(X) :- base(X), special(X).
            plain(X) :- base(X), \\+ marked(X).
            """
        )
        stratified = stratify(program)
        assert stratified.stratum_of["plain"] > stratified.stratum_of["marked"]


class TestEvaluate:
    def test_plain_derivation(self):
        model = evaluate(parse_rules("p(1). p(2). q(X) :- p(X)."))
        assert ("q", (1,)) in model and ("q", (2,)) in model

    def test_negation_empty_relation(self):
        model = evaluate(parse_rules("p(1). q(X) :- p(X), \\+ r(X)."))
        assert ("q", (1,)) in model

    def test_negation_blocks(self):
        model = evaluate(parse_rules("p(1). p(2). r(1). q(X) :- p(X), \\+ r(X)."))
        assert ("q", (1,)) not in model
        assert ("q", (2,)) in model

    def test_extra_facts(self):
        program = parse_rules("q(X) :- p(X).")
        model = evaluate(program, extra_facts=[("p", (7,))])
        assert ("q", (7,)) in model

    def test_transitive_closure(self):
        program = parse_rules(
            """
            edge(1, 2). edge(2, 3). edge(3, 4).
            path(X, Y) :- edge(X, Y).
            path(X, Z) :- path(X, Y), edge(Y, Z).
            """
        )
        model = evaluate(program)
        assert ("path", (1, 4)) in model
        assert len(model.relation("path")) == 6

    def test_comparisons(self):
        program = parse_rules(
            """
            v(a, 5). v(b, 15).
            big(N) :- v(N, X), X >= 10.
            small(N) :- v(N, X), X < 10.
            """
        )
        model = evaluate(program)
        assert ("big", ("b",)) in model and ("big", ("a",)) not in model
        assert ("small", ("a",)) in model

    def test_equality_and_disequality(self):
        program = parse_rules(
            """
            pair(1, 1). pair(1, 2).
            same(X, Y) :- pair(X, Y), X = Y.
            diff(X, Y) :- pair(X, Y), X \\= Y.
            """
        )
        model = evaluate(program)
        assert ("same", (1, 1)) in model
        assert ("diff", (1, 2)) in model
        assert ("diff", (1, 1)) not in model

    def test_arithmetic_binding(self):
        model = evaluate(parse_rules("p(3, 4). s(Z) :- p(X, Y), Z is X + Y."))
        assert ("s", (7,)) in model

    def test_typed_error_on_symbol_arithmetic(self):
        program = parse_rules("p(foo). q(X) :- p(X), X > 3.")
        with pytest.raises(EvaluationTypeError) as err:
            evaluate(program)
        assert "foo" in str(err.value)

    def test_frame_window_idiom(self):
        program = parse_rules(
            """
            frame(12).
            window(10, 20, go).
            inside(F) :- frame(F), window(S, E, _), F >= S, F =< E.
            """
        )
        assert ("inside", (12,)) in evaluate(program)

    def test_order_independence(self):
        base = """
            p(1). p(2). p(3). r(2).
            q(X) :- p(X), \\+ r(X).
            t(X) :- q(X), p(X).
        """
        reference = model_set(evaluate(parse_rules(base)))
        rng = random.Random(0)
        lines = [ln.strip() for ln in base.strip().splitlines() if ln.strip()]
        for _ in range(10):
            rng.shuffle(lines)
            shuffled = model_set(evaluate(parse_rules("\n".join(lines))))
            assert shuffled == reference

    def test_monotone_within_stratum(self):
        program = parse_rules("q(X) :- p(X).")
        small = model_set(evaluate(program, extra_facts=[("p", (1,))]))
        large = model_set(evaluate(program, extra_facts=[("p", (1,)), ("p", (2,))]))
        assert small <= large


class TestExplain:
    def test_leaf(self):
        model = evaluate(parse_rules("p(1)."))
        tree = explain(model, ("p", (1,)))
        assert tree.rule is None
        assert tree.leaves() == [("p", (1,))]

    def test_single_rule_tree(self):
        model = evaluate(parse_rules("p(1). q(X) :- p(X)."))
        tree = explain(model, ("q", (1,)))
        assert tree.rule.head.pred == "q"
        assert tree.children[0].fact == ("p", (1,))

    def test_negation_recorded(self):
        model = evaluate(parse_rules("p(1). q(X) :- p(X), \\+ r(X)."))
        tree = explain(model, ("q", (1,)))
        assert ("r", (1,)) in tree.negated_absent

    def test_missing_fact_raises(self):
        model = evaluate(parse_rules("p(1)."))
        with pytest.raises(Exception):
            explain(model, ("p", (2,)))

    def test_render_contains_rule_and_leaves(self):
        model = evaluate(parse_rules("p(1). q(X) :- p(X), \\+ r(X)."))
        text = render_derivation(explain(model, ("q", (1,))))
        assert "q(1)" in text and "p(1)" in text and "checked absent: r(1)" in text

    def test_replay_from_leaves(self):
        program = parse_rules(
            """
            a(1). b(1). c(2).
            mid(X) :- a(X), b(X).
            top(X) :- mid(X), \\+ c(X).
            """
        )
        model = evaluate(program)
        tree = explain(model, ("top", (1,)))
        replay_program = parse_rules("mid(X) :- a(X), b(X).\ntop(X) :- mid(X), \\+ c(X).")
        replay = evaluate(replay_program, extra_facts=tree.leaves())
        assert ("top", (1,)) in replay


# ---------------------------------------------------------------------------
# Randomized oracle equivalence


def random_program(rng: random.Random):
    """A random stratified, range-restricted program plus base facts."""
    n_base = rng.randint(1, 3)
    base_preds = [f"b{i}" for i in range(n_base)]
    facts = []
    for pred in base_preds:
        arity = rng.randint(1, 2)
        for _ in range(rng.randint(1, 7)):
            facts.append((pred, tuple(rng.randint(0, 4) for _ in range(arity))))
    arities = {p: len(f[1]) for p in base_preds for f in facts if f[0] == p}

    lines = [f"{p}({', '.join(map(str, args))})." for p, args in facts]
    derived = []
    for level in range(rng.randint(1, 3)):
        pred = f"d{level}"
        arity = rng.randint(1, 2)
        arities[pred] = arity
        available = list(arities.keys())[:-1] or base_preds
        for _ in range(rng.randint(1, 2)):
            body_preds = rng.sample(available, k=min(len(available), rng.randint(1, 2)))
            var_names = ["X", "Y", "Z", "W"]
            body = []
            bound = []
            for bp in body_preds:
                args = []
                for _ in range(arities[bp]):
                    v = rng.choice(var_names)
                    args.append(v)
                    bound.append(v)
                body.append(f"{bp}({', '.join(args)})")
            if derived and rng.random() < 0.5:
                neg = rng.choice(derived)
                args = [rng.choice(bound) for _ in range(arities[neg])]
                body.append(f"\\+ {neg}({', '.join(args)})")
            if rng.random() < 0.4:
                body.append(f"{rng.choice(bound)} >= {rng.randint(0, 3)}")
            head_args = [rng.choice(bound) for _ in range(arity)]
            lines.append(f"{pred}({', '.join(head_args)}) :- {', '.join(body)}.")
        derived.append(pred)
    return "\n".join(lines)


@pytest.mark.parametrize("seed", range(40))
def test_matches_naive_oracle(seed):
    rng = random.Random(seed)
    text = random_program(rng)
    program = parse_rules(text)
    assert model_set(evaluate(program)) == naive_model(program)
