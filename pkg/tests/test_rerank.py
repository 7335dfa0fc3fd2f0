import math

import pytest

from foretune.errors import EmptyDatasetError, SchemaError, TiePairError
from foretune.questions import validate_record
from foretune.rerank import (
    LABEL_RANDOMIZED,
    LABEL_TRUE,
    build_pairs,
    control_flip,
    emit_dataset,
    load_dataset,
    load_pairs,
    rank_pair,
    save_pairs,
)
from foretune.selfplay import STYLE_SCRATCHPAD, ReasoningTrace


def make_question(question_id="q1", outcome=1):
    return validate_record({
        "question_id": question_id,
        "title": f"Will {question_id} resolve yes?",
        "background": "Context.",
        "resolution_criteria": "Criteria.",
        "resolution_date": "2024-08-01",
        "outcome": outcome,
    })


def trace(question_id, probability, attempt):
    return ReasoningTrace(
        question_id=question_id,
        raw_text=f"reasoning...\nFinal answer: *{probability}*",
        probability=probability,
        attempt_index=attempt,
        style=STYLE_SCRATCHPAD,
    )


def traces_for(question_id, p1, p2):
    return {question_id: [trace(question_id, p1, 0), trace(question_id, p2, 1)]}


# ranking ------------------------------------------------------------------------


def test_rank_pair_prefers_smaller_distance_to_outcome():
    # both forecasts low and the event did not happen: 0.04 beats 0.08
    assert rank_pair(0.04, 0.08, 0) == (0, 1)
    assert rank_pair(0.08, 0.04, 0) == (1, 0)


def test_rank_pair_positive_outcome():
    assert rank_pair(0.7, 0.6, 1) == (0, 1)
    assert rank_pair(0.2, 0.9, 1) == (1, 0)


def test_rank_pair_rejects_non_binary_outcome():
    with pytest.raises(ValueError):
        rank_pair(0.3, 0.4, 2)


def test_rank_pair_tie_raises():
    with pytest.raises(TiePairError):
        rank_pair(0.5, 0.5, 1)


def test_control_flip_is_deterministic_and_seeded():
    assert control_flip(0, "q1") == control_flip(0, "q1")
    ids = [f"q{i:04d}" for i in range(2000)]
    flips_a = [control_flip(7, qid) for qid in ids]
    flips_b = [control_flip(7, qid) for qid in reversed(ids)]
    assert flips_a == list(reversed(flips_b))
    assert any(control_flip(0, qid) != control_flip(1, qid) for qid in ids)


def test_control_flip_is_a_fair_coin():
    n = 4000
    heads = sum(control_flip(3, f"q{i}") for i in range(n))
    # three sigma around n/2 for a fair coin
    sigma = math.sqrt(n * 0.25)
    assert abs(heads - n / 2) < 3 * sigma


# pair building ---------------------------------------------------------------------


def test_build_pairs_true_labels():
    questions = [make_question("q1", outcome=0)]
    pairs = build_pairs(traces_for("q1", 0.04, 0.08), questions, LABEL_TRUE, seed=0)
    assert len(pairs) == 1
    pair = pairs[0]
    assert pair.chosen.probability == 0.04
    assert pair.rejected.probability == 0.08
    assert pair.r_chosen == pytest.approx(0.04)
    assert pair.r_rejected == pytest.approx(0.08)
    assert pair.label_mode == LABEL_TRUE


def test_build_pairs_skips_questions_without_two_traces(caplog):
    questions = [make_question("q1"), make_question("q2")]
    traces = traces_for("q1", 0.7, 0.6)
    traces["q2"] = [trace("q2", 0.5, 0)]
    pairs = build_pairs(traces, questions, LABEL_TRUE, seed=0)
    assert [p.question_id for p in pairs] == ["q1"]


def test_build_pairs_skips_missing_outcome():
    traces = traces_for("q1", 0.7, 0.6)
    assert build_pairs(traces, [], LABEL_TRUE, seed=0) == []


def test_build_pairs_tie_raises():
    questions = [make_question("q1")]
    with pytest.raises(TiePairError):
        build_pairs(traces_for("q1", 0.5, 0.5), questions, LABEL_TRUE, seed=0)


def test_randomized_mode_keeps_true_distances():
    questions = [make_question("q1", outcome=1)]
    pairs = build_pairs(traces_for("q1", 0.9, 0.2), questions, LABEL_RANDOMIZED, seed=0)
    pair = pairs[0]
    # r values stay honest even when the winner was flipped
    assert {round(pair.r_chosen, 6), round(pair.r_rejected, 6)} == {0.1, 0.8}


def test_randomized_mode_flips_about_half():
    questions = [make_question(f"q{i:03d}", outcome=1) for i in range(400)]
    traces = {}
    for q in questions:
        traces.update(traces_for(q.question_id, 0.9, 0.2))
    pairs = build_pairs(traces, questions, LABEL_RANDOMIZED, seed=11)
    flipped = sum(1 for p in pairs if p.chosen.probability == 0.2)
    sigma = math.sqrt(400 * 0.25)
    assert abs(flipped - 200) < 3 * sigma
    assert flipped not in (0, 400)


def test_randomized_mode_preserves_the_trace_multiset():
    questions = [make_question(f"q{i:03d}", outcome=1) for i in range(50)]
    traces = {}
    for q in questions:
        traces.update(traces_for(q.question_id, 0.8, 0.3))
    true_pairs = build_pairs(traces, questions, LABEL_TRUE, seed=0)
    rand_pairs = build_pairs(traces, questions, LABEL_RANDOMIZED, seed=0)

    def completions(pairs):
        return sorted(
            (p.question_id, frozenset({p.chosen.raw_text, p.rejected.raw_text}))
            for p in pairs
        )

    assert completions(true_pairs) == completions(rand_pairs)


def test_pairs_round_trip(tmp_path):
    questions = [make_question("q1", outcome=0)]
    pairs = build_pairs(traces_for("q1", 0.04, 0.08), questions, LABEL_TRUE, seed=0)
    path = tmp_path / "pairs.jsonl"
    save_pairs(pairs, path, seed=0)
    loaded = load_pairs(path)
    assert len(loaded) == 1
    assert loaded[0].chosen.probability == 0.04
    assert loaded[0].outcome == 0


# dataset emission --------------------------------------------------------------------


def prompts_for(pairs):
    return {p.question_id: f"prompt for {p.question_id}" for p in pairs}


def test_emit_and_load_dataset(tmp_path):
    questions = [make_question("q2", outcome=1), make_question("q1", outcome=0)]
    traces = {}
    traces.update(traces_for("q1", 0.04, 0.08))
    traces.update(traces_for("q2", 0.7, 0.9))
    pairs = build_pairs(traces, questions, LABEL_TRUE, seed=0)
    path = tmp_path / "dataset.jsonl"
    manifest = emit_dataset(pairs, prompts_for(pairs), path, seed=0)
    assert manifest["count"] == 2
    assert manifest["label_mode"] == LABEL_TRUE

    examples = load_dataset(path)
    assert [e.metadata["question_id"] for e in examples] == ["q1", "q2"]
    assert examples[0].prompt == "prompt for q1"
    assert "*0.04*" in examples[0].chosen_completion


def test_emit_rejects_empty_and_mixed(tmp_path):
    with pytest.raises(EmptyDatasetError):
        emit_dataset([], {}, tmp_path / "d.jsonl", seed=0)

    questions = [make_question("q1", outcome=0), make_question("q2", outcome=1)]
    traces = {}
    traces.update(traces_for("q1", 0.04, 0.08))
    traces.update(traces_for("q2", 0.7, 0.9))
    a = build_pairs({k: traces[k] for k in ["q1"]}, questions, LABEL_TRUE, seed=0)
    b = build_pairs({k: traces[k] for k in ["q2"]}, questions, LABEL_RANDOMIZED, seed=0)
    with pytest.raises(ValueError, match="mixed"):
        emit_dataset(a + b, prompts_for(a + b), tmp_path / "d.jsonl", seed=0)


def test_emit_requires_a_prompt_per_pair(tmp_path):
    questions = [make_question("q1", outcome=0)]
    pairs = build_pairs(traces_for("q1", 0.04, 0.08), questions, LABEL_TRUE, seed=0)
    with pytest.raises(SchemaError, match="q1"):
        emit_dataset(pairs, {}, tmp_path / "d.jsonl", seed=0)


def test_load_dataset_verifies_and_validates(tmp_path):
    questions = [make_question("q1", outcome=0)]
    pairs = build_pairs(traces_for("q1", 0.04, 0.08), questions, LABEL_TRUE, seed=0)
    path = tmp_path / "dataset.jsonl"
    emit_dataset(pairs, prompts_for(pairs), path, seed=0)

    text = path.read_text()
    path.write_text(text.replace('"prompt"', '"promptX"'), encoding="utf-8")
    with pytest.raises(Exception):
        load_dataset(path)
