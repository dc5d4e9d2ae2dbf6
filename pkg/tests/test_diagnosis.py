"""Suspect flagging, scenario combination and report round trips."""

import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cablewatch import diagnosis as G
from cablewatch.errors import UsageError

HIGH_FORCES = {"SJS09": 0.9, "SJS10": 0.9, "SJS11": 0.9, "SJS12": 0.9,
               "SJS13": 0.9}
HIGH_RATIOS = {"SJ10": 0.9, "SJ11": 0.9, "SJ12": 0.9, "SJ13": 0.9}


# ---------------------------------------------------------------------------
# bundled published tables
# ---------------------------------------------------------------------------

def test_forces_table_median_threshold_and_suspects():
    s1 = G.flag_suspects(G.PUBLISHED_TABLES["forces"]["accuracies"],
                         G.PUBLISHED_TABLES["forces"]["excluded"],
                         scenario="forces")
    # 12 usable accuracies; the two middle values are both 0.60
    assert s1.median_accuracy == pytest.approx(0.60)
    # relative rule binds: 0.6 * 0.60 = 0.36 < 0.45
    assert s1.threshold == pytest.approx(0.36)
    assert s1.names() == ["SJX10", "SJS11"]  # ascending accuracy
    assert s1.deficit_of("SJX10") == pytest.approx((0.60 - 0.25) / 0.60)
    assert s1.deficit_of("SJS11") == pytest.approx((0.60 - 0.28) / 0.60)
    assert not s1.inconclusive


def test_ratio_table_median_threshold_and_suspects():
    s2 = G.flag_suspects(G.PUBLISHED_TABLES["ratios"]["accuracies"],
                         G.PUBLISHED_TABLES["ratios"]["excluded"],
                         scenario="ratios")
    assert s2.median_accuracy == pytest.approx(0.94)
    # absolute rule binds: 0.45 < 0.6 * 0.94
    assert s2.threshold == pytest.approx(0.45)
    assert s2.names() == ["SJ11"]
    assert s2.deficit_of("SJ11") == pytest.approx((0.94 - 0.02) / 0.94)


def test_replay_published_tables_names_the_damaged_cable():
    report = G.replay_published_tables()
    assert report.verdict["status"] == "conclusive"
    assert report.verdict["cable"] == "SJS11"
    assert set(report.suspects["forces"]["entries"][i]["class_id"]
               for i in range(2)) == {"SJS11", "SJX10"}
    assert [e["class_id"] for e in report.suspects["ratios"]["entries"]] == ["SJ11"]
    assert report.scenario_results["forces"]["excluded"] == {
        "SJX08": "sensor failure", "SJX13": "sensor failure"}


# ---------------------------------------------------------------------------
# flag_suspects rules
# ---------------------------------------------------------------------------

def test_absolute_threshold_binds_when_median_high():
    s = G.flag_suspects({**HIGH_FORCES, "SJS08": 0.1})
    assert s.threshold == pytest.approx(0.45)
    assert s.names() == ["SJS08"]


def test_relative_threshold_binds_when_median_low():
    s = G.flag_suspects({"SJS08": 0.1, "SJS09": 0.5, "SJS10": 0.5, "SJS11": 0.5})
    assert s.median_accuracy == pytest.approx(0.5)
    assert s.threshold == pytest.approx(0.30)
    assert s.names() == ["SJS08"]


def test_threshold_is_strict():
    s = G.flag_suspects({"SJS08": 0.45, "SJS09": 0.9, "SJS10": 0.9, "SJS11": 0.9})
    assert s.threshold == pytest.approx(0.45)
    assert s.names() == []  # exactly at the threshold is not below it


def test_pure_relative_rule_with_tau_abs_none():
    s = G.flag_suspects({**HIGH_FORCES, "SJS08": 0.5}, tau_abs=None)
    assert s.threshold == pytest.approx(0.54)
    assert s.names() == ["SJS08"]


@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=14, unique=True),
       st.floats(0.2, 1.0))
@settings(max_examples=60, deadline=None)
def test_relative_rule_is_scale_free(accuracies, scale):
    names = [f"SJS{i:02d}" for i in range(len(accuracies))]
    base = dict(zip(names, accuracies))
    scaled = {k: v * scale for k, v in base.items()}
    a = G.flag_suspects(base, tau_abs=None)
    # near-threshold values can cross the strict < under float rounding
    assume(all(abs(v - a.threshold) > 1e-6 * a.threshold
               for v in base.values()))
    b = G.flag_suspects(scaled, tau_abs=None)
    assert set(a.names()) == set(b.names())
    for name in a.names():
        assert b.deficit_of(name) == pytest.approx(a.deficit_of(name), rel=1e-6)


def test_excluded_classes_are_never_suspects():
    s = G.flag_suspects({**HIGH_FORCES, "SJS08": 0.0},
                        excluded={"SJS08": "sensor failure"})
    assert s.names() == []
    assert s.excluded["SJS08"] == "sensor failure"
    assert "SJS08" not in s.accuracies


def test_excluded_accepts_plain_name_list():
    s = G.flag_suspects({**HIGH_FORCES, "SJS08": 0.0}, excluded=["SJS08"])
    assert s.names() == []
    assert s.excluded == {"SJS08": "excluded"}


def test_missing_test_data_is_auto_excluded():
    s = G.flag_suspects({**HIGH_FORCES, "SJS08": float("nan"), "SJS14": None})
    assert s.excluded == {"SJS08": "no test data", "SJS14": "no test data"}
    assert s.names() == []
    assert s.median_accuracy == pytest.approx(0.9)


def test_input_order_does_not_matter():
    table = {**HIGH_FORCES, "SJS08": 0.1, "SJS14": 0.2}
    reversed_table = dict(reversed(list(table.items())))
    a = G.flag_suspects(table)
    b = G.flag_suspects(reversed_table)
    assert a.names() == b.names() == ["SJS08", "SJS14"]
    assert a.median_accuracy == b.median_accuracy


def test_all_classes_suspect_marks_inconclusive():
    s = G.flag_suspects({"SJS08": 0.1, "SJS09": 0.2, "SJS10": 0.3},
                        tau_rel=2.0, tau_abs=None)
    assert s.names() == ["SJS08", "SJS09", "SJS10"]
    assert s.inconclusive


def test_needs_three_usable_classes():
    with pytest.raises(UsageError, match="at least 3"):
        G.flag_suspects({"SJS08": 0.9, "SJS09": 0.9})
    with pytest.raises(UsageError, match="at least 3"):
        G.flag_suspects({"SJS08": 0.9, "SJS09": 0.9, "SJS10": float("nan")})


def test_accuracy_out_of_range_rejected():
    with pytest.raises(UsageError, match="must be in"):
        G.flag_suspects({**HIGH_FORCES, "SJS08": 1.5})


# ---------------------------------------------------------------------------
# combine_scenarios
# ---------------------------------------------------------------------------

def forces_set(**overrides):
    return G.flag_suspects({**HIGH_FORCES, "SJS14": 0.9, "SJX08": 0.9,
                            **overrides}, scenario="forces")


def ratios_set(**overrides):
    return G.flag_suspects({**HIGH_RATIOS, "SJ08": 0.9, "SJ09": 0.9,
                            **overrides}, scenario="ratios")


def test_single_confirmed_candidate_is_conclusive():
    v = G.combine_scenarios(forces_set(SJS11=0.1), ratios_set(SJ11=0.1))
    assert v.status == "conclusive" and v.conclusive
    assert v.cable == "SJS11"
    assert [c for c, _ in v.candidates] == ["SJS11"]


def test_unconfirmed_cable_suspect_is_inconclusive():
    v = G.combine_scenarios(forces_set(SJS11=0.1), ratios_set())
    assert v.status == "inconclusive"
    assert v.cable is None
    assert "confirmed" in v.reason
    assert v.s1_suspects == ["SJS11"]


def test_pair_suspect_alone_is_inconclusive():
    v = G.combine_scenarios(forces_set(), ratios_set(SJ11=0.1))
    assert v.status == "inconclusive"
    assert v.s2_suspects == ["SJ11"]


def test_no_suspects_reads_as_no_damage():
    v = G.combine_scenarios(forces_set(), ratios_set())
    assert v.status == "inconclusive"
    assert v.reason == "no damage indicated"


def test_multiple_candidates_ranked_by_summed_deficit():
    s1 = forces_set(SJS08=0.10, SJX09=0.20)
    s2 = ratios_set(SJ08=0.30, SJ09=0.05)
    v = G.combine_scenarios(s1, s2)
    assert v.status == "reduced-confidence"
    # summed deficits: SJX09 gets 0.7/0.9 + 0.85/0.9, SJS08 gets 0.8/0.9 + 0.6/0.9
    assert v.cable == "SJX09"
    assert [c for c, _ in v.candidates] == ["SJX09", "SJS08"]
    assert v.candidates[0][1] > v.candidates[1][1]


def test_deficit_tie_breaks_on_scenario1_accuracy():
    # sums are the same two floats added in either order, so the tie is exact
    s1 = forces_set(SJS08=0.2, SJX09=0.1)
    s2 = ratios_set(SJ08=0.1, SJ09=0.2)
    v = G.combine_scenarios(s1, s2)
    assert v.cable == "SJX09"  # lower scenario-1 accuracy wins the tie


def test_full_tie_breaks_on_name():
    s1 = forces_set(SJS08=0.1, SJX09=0.1)
    s2 = ratios_set(SJ08=0.1, SJ09=0.1)
    assert G.combine_scenarios(s1, s2).cable == "SJS08"


def test_combination_ignores_entry_list_order():
    s1 = forces_set(SJS08=0.10, SJX09=0.20)
    s2 = ratios_set(SJ08=0.30, SJ09=0.05)
    baseline = G.combine_scenarios(s1, s2).cable
    s1.entries.reverse()
    s2.entries.reverse()
    assert G.combine_scenarios(s1, s2).cable == baseline


def test_inconclusive_scenario_poisons_the_verdict():
    s1 = G.flag_suspects({"SJS08": 0.1, "SJS09": 0.2, "SJS10": 0.3},
                         tau_rel=2.0, tau_abs=None, scenario="forces")
    v = G.combine_scenarios(s1, ratios_set(SJ11=0.1))
    assert v.status == "inconclusive"
    assert "scenario 1" in v.reason
    assert "model quality" in v.reason


def test_combine_requires_correct_scenario_order():
    with pytest.raises(UsageError, match="forces, ratios"):
        G.combine_scenarios(ratios_set(), forces_set())


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def test_structured_report_round_trip():
    report = G.replay_published_tables()
    text = G.render_report(report, format="structured")
    parsed = G.parse_report(text)
    assert parsed.verdict["cable"] == "SJS11"
    assert parsed.format_version == G.REPORT_FORMAT_VERSION
    # rendering the parsed report reproduces the text byte for byte
    assert G.render_report(parsed, format="structured") == text


def test_parse_report_rejects_unknown_version():
    report = G.replay_published_tables()
    text = G.render_report(report).replace('"format_version": 1',
                                           '"format_version": 99')
    with pytest.raises(UsageError, match="version 99"):
        G.parse_report(text)


def test_human_report_contents():
    text = G.render_report(G.replay_published_tables(), format="human")
    assert "most probable damaged cable: SJS11" in text
    assert "Scenario 1 (raw cable forces)" in text
    assert "SJS11  0.28  <- suspect" in text
    assert "SJX08  -" in text  # excluded rows carry no accuracy
    assert "SJX08: sensor failure" in text


def test_render_report_rejects_unknown_format():
    with pytest.raises(UsageError, match="unknown report format"):
        G.render_report(G.replay_published_tables(), format="xml")


def test_single_scenario_report():
    s1 = forces_set(SJS11=0.1)
    v = G.Verdict(status="inconclusive", s1_suspects=s1.names(),
                  reason="only one scenario evaluated")
    report = G.build_report(s1, None, v)
    assert report.suspects["ratios"] is None
    text = G.render_report(report, format="human")
    assert "not evaluated" in text
    assert "inconclusive: only one scenario evaluated" in text
