"""Damage verdicts from per-class test accuracies.

A damaged cable stops looking like itself to the classifier, so its class's
test accuracy collapses while the others stay high. flag_suspects turns the
per-class accuracies of one scenario into a suspect set via a dual threshold;
combine_scenarios intersects cable suspects (scenario 1, raw forces) with
pair suspects (scenario 2, force ratios) to name the damaged cable.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .data import parse_cable_id
from .errors import UsageError

__all__ = [
    "SuspectEntry",
    "SuspectSet",
    "flag_suspects",
    "Verdict",
    "combine_scenarios",
    "DiagnosisReport",
    "build_report",
    "render_report",
    "parse_report",
    "PUBLISHED_TABLES",
    "replay_published_tables",
]

REPORT_FORMAT_VERSION = 1

# Published per-class test accuracies for the bridge's damage year: raw-force
# classes (cables) and ratio classes (pairs). The '-' rows of the originals
# are the sensor-failed classes listed under 'excluded'. These drive the
# decision-logic replay (CLI flag --replay-paper-tables).
PUBLISHED_TABLES = {
    "forces": {
        "accuracies": {
            "SJS08": 0.53, "SJS09": 0.69, "SJS10": 0.59, "SJS11": 0.28,
            "SJS12": 0.65, "SJS13": 0.89, "SJS14": 0.55,
            "SJX09": 0.83, "SJX10": 0.25, "SJX11": 0.60, "SJX12": 0.61,
            "SJX14": 0.60,
        },
        "excluded": {"SJX08": "sensor failure", "SJX13": "sensor failure"},
    },
    "ratios": {
        "accuracies": {
            "SJ09": 0.94, "SJ10": 0.95, "SJ11": 0.02, "SJ12": 0.94,
            "SJ14": 0.91,
        },
        "excluded": {"SJ08": "sensor failure", "SJ13": "sensor failure"},
    },
}


@dataclass
class SuspectEntry:
    class_id: str
    accuracy: float
    deficit: float


@dataclass
class SuspectSet:
    """Suspect classes of one scenario, sorted ascending by accuracy."""

    scenario: str
    entries: list
    excluded: dict
    accuracies: dict
    median_accuracy: float
    threshold: float
    inconclusive: bool = False

    def names(self):
        return [e.class_id for e in self.entries]

    def deficit_of(self, class_id):
        for e in self.entries:
            if e.class_id == class_id:
                return e.deficit
        raise UsageError(f"{class_id} is not a suspect in scenario {self.scenario!r}")


def _normalize_excluded(excluded):
    if excluded is None:
        return {}
    if isinstance(excluded, dict):
        return dict(excluded)
    return {name: "excluded" for name in excluded}


def flag_suspects(per_class_accuracy, excluded=None, tau_rel=0.6, tau_abs=0.45,
                  scenario="forces"):
    """Flag classes whose accuracy is far below the field.

    A class is suspect iff its accuracy < min(tau_abs, tau_rel * median of
    the non-excluded accuracies); pass ``tau_abs=None`` for the pure relative
    rule. Deficit score = (median - accuracy) / median, the ranking key used
    when scenarios are combined. Classes without test data are excluded
    automatically. Requires >= 3 non-excluded classes; if every class is
    suspect the set is marked inconclusive (model failure, not damage).
    """
    excluded = _normalize_excluded(excluded)
    usable = {}
    for name, acc in per_class_accuracy.items():
        if name in excluded:
            continue
        if acc is None or (isinstance(acc, float) and math.isnan(acc)):
            excluded[name] = "no test data"
            continue
        if not 0.0 <= acc <= 1.0:
            raise UsageError(f"accuracy for {name} must be in [0, 1], got {acc}")
        usable[name] = float(acc)
    if len(usable) < 3:
        raise UsageError(
            f"need at least 3 non-excluded classes, have {len(usable)}"
        )

    ordered = sorted(usable.values())
    n = len(ordered)
    median = (ordered[n // 2] if n % 2 else
              0.5 * (ordered[n // 2 - 1] + ordered[n // 2]))
    threshold = tau_rel * median if tau_abs is None else min(tau_abs, tau_rel * median)

    entries = []
    for name in sorted(usable):
        acc = usable[name]
        if acc < threshold:
            deficit = (median - acc) / median if median > 0 else 0.0
            entries.append(SuspectEntry(name, acc, deficit))
    entries.sort(key=lambda e: (e.accuracy, e.class_id))
    return SuspectSet(
        scenario=scenario,
        entries=entries,
        excluded=excluded,
        accuracies=usable,
        median_accuracy=median,
        threshold=threshold,
        inconclusive=len(entries) == len(usable),
    )


@dataclass
class Verdict:
    """Outcome of combining the two scenarios.

    status: 'conclusive' (single candidate), 'reduced-confidence' (several,
    top-ranked reported) or 'inconclusive'.
    """

    status: str
    cable: str = None
    candidates: list = field(default_factory=list)
    s1_suspects: list = field(default_factory=list)
    s2_suspects: list = field(default_factory=list)
    reason: str = ""

    @property
    def conclusive(self):
        return self.status == "conclusive"


def combine_scenarios(s1, s2):
    """Intersect cable suspects with pair suspects.

    Candidates are scenario-1 cables whose pair is a scenario-2 suspect.
    One candidate is a conclusive verdict; several are ranked by the sum of
    the cable's and its pair's deficit scores and the top one is reported
    with reduced confidence; none means inconclusive. Output does not depend
    on the ordering of the input entries.
    """
    if s1.scenario != "forces" or s2.scenario != "ratios":
        raise UsageError(
            f"expected (forces, ratios) suspect sets, got "
            f"({s1.scenario!r}, {s2.scenario!r})"
        )
    s1_names = s1.names()
    s2_names = s2.names()
    if s1.inconclusive or s2.inconclusive:
        which = " and ".join(
            f"scenario {label}" for label, s in (("1", s1), ("2", s2))
            if s.inconclusive
        )
        return Verdict(
            status="inconclusive", s1_suspects=s1_names, s2_suspects=s2_names,
            reason=f"every class is suspect in {which}: model quality too low to diagnose",
        )

    scored = []
    for entry in s1.entries:
        pair = parse_cable_id(entry.class_id).pair.render()
        if pair in s2_names:
            scored.append((entry.class_id, entry.deficit + s2.deficit_of(pair)))
    # deterministic ranking: biggest summed deficit first, then lowest
    # scenario-1 accuracy, then name
    acc = {e.class_id: e.accuracy for e in s1.entries}
    scored.sort(key=lambda c: (-c[1], acc[c[0]], c[0]))

    if not scored:
        return Verdict(
            status="inconclusive", s1_suspects=s1_names, s2_suspects=s2_names,
            reason="no cable suspect is confirmed by its pair"
            if (s1_names or s2_names) else "no damage indicated",
        )
    if len(scored) == 1:
        return Verdict(
            status="conclusive", cable=scored[0][0], candidates=scored,
            s1_suspects=s1_names, s2_suspects=s2_names,
            reason="single cable suspect confirmed by its pair",
        )
    return Verdict(
        status="reduced-confidence", cable=scored[0][0], candidates=scored,
        s1_suspects=s1_names, s2_suspects=s2_names,
        reason="several confirmed candidates; reporting the largest summed deficit",
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class DiagnosisReport:
    scenario_results: dict
    suspects: dict
    verdict: dict
    thresholds: dict
    provenance: dict
    format_version: int = REPORT_FORMAT_VERSION


def _suspect_set_dict(s):
    return {
        "scenario": s.scenario,
        "entries": [asdict(e) for e in s.entries],
        "excluded": s.excluded,
        "accuracies": s.accuracies,
        "median_accuracy": s.median_accuracy,
        "threshold": s.threshold,
        "inconclusive": s.inconclusive,
    }


def build_report(s1, s2, verdict, thresholds=None, provenance=None,
                 overall=None):
    """Assemble the full report from the two suspect sets and the verdict.

    Either set may be None (single-scenario mode); its report sections are
    null and the verdict is expected to be inconclusive.
    """
    scenario_results = {}
    suspects = {}
    for key, s in (("forces", s1), ("ratios", s2)):
        if s is None:
            scenario_results[key] = None
            suspects[key] = None
            continue
        result = {
            "per_class_accuracy": s.accuracies,
            "excluded": s.excluded,
            "median_accuracy": s.median_accuracy,
        }
        if overall and key in overall:
            result["overall_accuracy"] = overall[key]
        scenario_results[key] = result
        suspects[key] = _suspect_set_dict(s)
    return DiagnosisReport(
        scenario_results=scenario_results,
        suspects=suspects,
        verdict=asdict(verdict),
        thresholds=thresholds or {"tau_rel": 0.6, "tau_abs": 0.45},
        provenance=provenance or {},
    )


def _accuracy_table(title, accuracies, excluded, suspects):
    names = sorted(set(accuracies) | set(excluded))
    width = max([len(n) for n in names] + [5])
    lines = [title, f"{'class':<{width}}  accuracy", f"{'-' * width}  --------"]
    for name in names:
        if name in excluded:
            acc = "-"
        else:
            mark = "  <- suspect" if name in suspects else ""
            acc = f"{accuracies[name]:.2f}{mark}"
        lines.append(f"{name:<{width}}  {acc}")
    return lines


def render_report(report, format="structured"):
    """Render to canonical JSON ('structured') or a readable summary ('human')."""
    if format == "structured":
        return json.dumps(asdict(report), indent=2, sort_keys=True) + "\n"
    if format != "human":
        raise UsageError(f"unknown report format {format!r}")

    lines = []
    titles = {"forces": "Scenario 1 (raw cable forces)",
              "ratios": "Scenario 2 (pair force ratios)"}
    for key in ("forces", "ratios"):
        s = report.suspects.get(key)
        if s is None:
            lines.extend([titles[key], "not evaluated", ""])
            continue
        suspects = [e["class_id"] for e in s["entries"]]
        lines.extend(_accuracy_table(
            titles[key], s["accuracies"], s["excluded"], suspects))
        lines.append(
            f"median {s['median_accuracy']:.2f}, suspect threshold {s['threshold']:.2f}"
        )
        if s["excluded"]:
            notes = ", ".join(f"{k}: {v}" for k, v in sorted(s["excluded"].items()))
            lines.append(f"excluded ({notes})")
        lines.append("")

    v = report.verdict
    lines.append("Verdict")
    lines.append("-------")
    if v["status"] == "inconclusive":
        lines.append(f"inconclusive: {v['reason']}")
        lines.append(f"scenario-1 suspects: {', '.join(v['s1_suspects']) or 'none'}")
        lines.append(f"scenario-2 suspects: {', '.join(v['s2_suspects']) or 'none'}")
    else:
        qualifier = "" if v["status"] == "conclusive" else " (reduced confidence)"
        lines.append(f"most probable damaged cable: {v['cable']}{qualifier}")
        lines.append(f"reason: {v['reason']}")
        if len(v["candidates"]) > 1:
            ranked = ", ".join(f"{c} (deficit {d:.2f})" for c, d in v["candidates"])
            lines.append(f"candidates: {ranked}")
    return "\n".join(lines) + "\n"


def parse_report(text):
    """Inverse of render_report(format='structured')."""
    payload = json.loads(text)
    version = payload.pop("format_version", None)
    if version != REPORT_FORMAT_VERSION:
        raise UsageError(
            f"unsupported report format version {version} "
            f"(this build reads version {REPORT_FORMAT_VERSION})"
        )
    return DiagnosisReport(format_version=version, **payload)


def replay_published_tables(tau_rel=0.6, tau_abs=0.45):
    """Run the decision logic over the bundled published accuracy tables."""
    s1 = flag_suspects(
        PUBLISHED_TABLES["forces"]["accuracies"],
        PUBLISHED_TABLES["forces"]["excluded"],
        tau_rel=tau_rel, tau_abs=tau_abs, scenario="forces",
    )
    s2 = flag_suspects(
        PUBLISHED_TABLES["ratios"]["accuracies"],
        PUBLISHED_TABLES["ratios"]["excluded"],
        tau_rel=tau_rel, tau_abs=tau_abs, scenario="ratios",
    )
    verdict = combine_scenarios(s1, s2)
    return build_report(
        s1, s2, verdict,
        thresholds={"tau_rel": tau_rel, "tau_abs": tau_abs},
        provenance={"source": "bundled published accuracy tables"},
    )
