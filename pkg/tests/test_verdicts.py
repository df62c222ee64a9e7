import itertools

import pytest
from hypothesis import given, strategies as st

from scade.local import LocalResult
from scade.thresholding import MODEL_TAGS, Severity
from scade.verdicts import (
    Classification,
    SeverityRecord,
    class_counts,
    combine,
    filter_flagged,
    finalize,
    is_flagged,
)

TP, BP, LEG = Classification.TRUE_POSITIVE, Classification.BENIGN_POSITIVE, Classification.LEGITIMATE
LOCAL_OUTCOMES = ("anomalous", "normal", "abstained")


def rec(ref, sev, z=0.0):
    return SeverityRecord(ref, dict(zip(MODEL_TAGS, sev)), z={t: z for t in MODEL_TAGS})


def local(ref, outcome, score=0.6):
    if outcome == "abstained":
        return LocalResult(ref, None, None, True, "cold start")
    return LocalResult(ref, score, outcome == "anomalous", False)


def expected(flags, outcome):
    """Hand-written rule: any of the four streams at medium or above escalates."""
    if not any(flags):
        return LEG, "normal"
    if outcome == "normal":
        return BP, "normal"
    return TP, ("low" if outcome == "abstained" else "normal")


def test_truth_table_16_by_3():
    n = 0
    for flags in itertools.product([False, True], repeat=4):
        for outcome in LOCAL_OUTCOMES:
            for raised in (Severity.MEDIUM, Severity.HIGH):
                sev = [raised if f else Severity.LOW for f in flags]
                r = rec("x", sev)
                verdict = finalize([r], {"x": local("x", outcome)})[0]
                assert (verdict.classification, verdict.confidence) == expected(flags, outcome)
                if any(flags):
                    assert combine(r, local("x", outcome)).classification == expected(flags, outcome)[0]
            n += 1
    assert n == 48


def test_union_rule_examples():
    assert is_flagged(dict(zip(MODEL_TAGS, [Severity.HIGH, Severity.LOW, Severity.LOW, Severity.LOW])))
    assert not is_flagged(dict.fromkeys(MODEL_TAGS, Severity.LOW))
    assert is_flagged({**dict.fromkeys(MODEL_TAGS, Severity.LOW), "log_entropy:bigram": Severity.MEDIUM})


def test_filter_flagged_requires_all_streams():
    ok = rec("a", [Severity.HIGH, Severity.LOW, Severity.LOW, Severity.LOW])
    assert filter_flagged([ok, rec("b", [Severity.LOW] * 4)]) == ["a"]
    partial = SeverityRecord("c", {"bm25:unigram": Severity.HIGH})
    with pytest.raises(ValueError):
        filter_flagged([partial])


def test_missing_local_result_is_low_confidence_tp():
    v = combine(rec("a", [Severity.HIGH] * 4), None)
    assert v.classification is TP and v.confidence == "low"


def test_fixed_six_payload_fixture():
    L, M, H = Severity.LOW, Severity.MEDIUM, Severity.HIGH
    records = [
        rec("p1", [H, L, L, L], z=3.0),
        rec("p2", [L, L, L, L], z=0.1),
        rec("p3", [M, M, L, L], z=1.8),
        rec("p4", [L, L, L, H], z=2.5),
        rec("p5", [L, L, L, L], z=-0.5),
        rec("p6", [H, H, H, H], z=4.0),
    ]
    loc = {"p1": local("p1", "anomalous"), "p3": local("p3", "normal"), "p4": local("p4", "abstained"),
           "p6": local("p6", "anomalous")}
    got = [(v.event_ref, v.classification, v.confidence) for v in finalize(records, loc)]
    assert got == [
        ("p6", TP, "normal"),
        ("p1", TP, "normal"),
        ("p4", TP, "low"),
        ("p3", BP, "normal"),
        ("p2", LEG, "normal"),
        ("p5", LEG, "normal"),
    ]
    without_bp = finalize(records, loc, include_bp=False)
    assert "p3" not in [v.event_ref for v in without_bp]


def test_zero_flagged_all_legitimate():
    records = [rec(f"p{i}", [Severity.LOW] * 4) for i in range(5)]
    assert class_counts(finalize(records, {})) == {"TruePositive": 0, "BenignPositive": 0, "Legitimate": 5}


def test_record_round_trip():
    r = SeverityRecord("a", dict(zip(MODEL_TAGS, [Severity.HIGH, Severity.LOW, Severity.MEDIUM, Severity.LOW])),
                       scores={"bm25:unigram": 2.0}, z={"bm25:unigram": 2.5}, top_attributions=[("tok", 1.0, 0.5)])
    assert SeverityRecord.from_dict(r.to_dict()) == r
    v = combine(r, local("a", "anomalous"))
    out = v.to_record(n_attributions=1)
    assert out["classification"] == "TruePositive" and out["top_attributions"] == [["tok", 1.0, 0.5]]


sev_st = st.lists(st.sampled_from(list(Severity)), min_size=4, max_size=4)


@given(st.lists(st.tuples(sev_st, st.sampled_from(LOCAL_OUTCOMES)), max_size=30))
def test_partition(items):
    records = [rec(f"p{i}", s) for i, (s, _) in enumerate(items)]
    loc = {f"p{i}": local(f"p{i}", o) for i, (_, o) in enumerate(items)}
    verdicts = finalize(records, loc)
    assert sorted(v.event_ref for v in verdicts) == sorted(r.event_ref for r in records)
    assert sum(class_counts(verdicts).values()) == len(records)


@given(sev_st, st.integers(0, 3), st.sampled_from(LOCAL_OUTCOMES))
def test_monotone_escalation(sev, idx, outcome):
    before = finalize([rec("x", sev)], {"x": local("x", outcome)})[0].classification
    raised = list(sev)
    raised[idx] = Severity.HIGH
    after = finalize([rec("x", raised)], {"x": local("x", outcome)})[0].classification
    if before is LEG:
        assert after in (TP, BP)
    else:
        assert after is before
