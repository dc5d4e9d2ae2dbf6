"""Ingestion, screening, clipping, ratios, segmentation and split assembly."""

from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cablewatch import data as D
from cablewatch.errors import ConfigError, DataError, UsageError

DAY = date(2010, 6, 1)


def make_day(name, values, day=DAY, **kwargs):
    source = D.parse_cable_id(name) if len(name) == 5 else D.parse_pair_id(name)
    return D.DaySeries(source=source, date=day, values=np.asarray(values, float),
                       **kwargs)


# ---------------------------------------------------------------------------
# identifiers
# ---------------------------------------------------------------------------

def test_cable_id_round_trip_and_aliases():
    cid = D.parse_cable_id("SJS11")
    assert cid.render() == "SJS11"
    assert cid.upriver and cid.group == "SJ" and cid.pair_index == 11
    assert D.parse_cable_id("sjs11") == cid
    assert D.parse_cable_id("SJU11") == cid  # U is the upriver alias
    down = D.parse_cable_id("SJX11")
    assert D.parse_cable_id("SJD11") == down
    assert not down.upriver
    assert cid.pair == down.pair == D.parse_pair_id("SJ11")


def test_pair_members_order():
    up, down = D.parse_pair_id("SJ08").members()
    assert up.render() == "SJS08"
    assert down.render() == "SJX08"


@pytest.mark.parametrize("bad", ["SJ11", "S11", "SJQ11", "SJS", "11SJS", ""])
def test_cable_id_rejects_malformed(bad):
    with pytest.raises(DataError):
        D.parse_cable_id(bad)


@pytest.mark.parametrize("bad", ["SJS11", "J11", "SJ", ""])
def test_pair_id_rejects_malformed(bad):
    with pytest.raises(DataError):
        D.parse_pair_id(bad)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def test_day_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = 2000.0 + rng.normal(size=100)
    series = make_day("SJS09", values, meta={"dt": 0.5})
    path = D.write_day_csv(series, tmp_path)
    assert path.name == "SJS09_2010-06-01.csv"
    (loaded,) = D.load_day_records(path)
    assert loaded.name == "SJS09"
    assert loaded.date == DAY
    np.testing.assert_array_equal(loaded.values, values)  # bitwise via repr()
    assert loaded.valid.all()


def test_day_csv_round_trip_preserves_gaps(tmp_path):
    values = np.array([1.0, np.nan, 3.0, 4.0])
    series = make_day("SJX09", values, meta={"dt": 1.0})
    D.write_day_csv(series, tmp_path)
    (loaded,) = D.load_day_records(tmp_path)
    np.testing.assert_array_equal(loaded.valid, [True, False, True, True])
    np.testing.assert_array_equal(loaded.values[loaded.valid], [1.0, 3.0, 4.0])
    assert loaded.meta["gaps"] == 1


def test_load_rejects_wrong_header_and_mismatched_cable(tmp_path):
    p = tmp_path / "SJS09_2010-06-01.csv"
    p.write_text("time,cable,force\n")
    with pytest.raises(DataError, match="header"):
        D.load_day_records(p)
    p.write_text("timestamp,cable_id,force_kN\n"
                 "2010-06-01T00:00:00.000Z,SJX09,1.0\n")
    with pytest.raises(DataError, match="does not match"):
        D.load_day_records(p)


def test_load_rejects_bad_filename(tmp_path):
    p = tmp_path / "notaday.csv"
    p.write_text("timestamp,cable_id,force_kN\n")
    with pytest.raises(DataError, match="file name"):
        D.load_day_records(p)


def test_load_directory_requires_csv_files(tmp_path):
    with pytest.raises(DataError, match="no .csv"):
        D.load_day_records(tmp_path)


# ---------------------------------------------------------------------------
# outlier clipping
# ---------------------------------------------------------------------------

def test_clip_masks_and_interpolates():
    values = np.array([10.0, 10.0, 500.0, 10.0, 12.0, 10.0])
    policy = D.OutlierPolicy(fixed_bounds={"SJS08": (0.0, 100.0)})
    out = D.clip_outliers(make_day("SJS08", values), policy)
    assert out.meta["clip_replaced"] == 1
    assert out.valid.all()
    np.testing.assert_allclose(out.values, [10, 10, 10, 10, 12, 10])
    assert out.usable


def test_clip_interpolation_is_linear_between_neighbours():
    values = np.array([0.0, 999.0, 999.0, 3.0])
    policy = D.OutlierPolicy(fixed_bounds={"SJS08": (-10.0, 10.0)})
    out = D.clip_outliers(make_day("SJS08", values), policy)
    np.testing.assert_allclose(out.values, [0.0, 1.0, 2.0, 3.0])


def test_clip_edge_extension():
    values = np.array([500.0, 1.0, 2.0, 700.0])
    policy = D.OutlierPolicy(fixed_bounds={"SJS08": (0.0, 10.0)})
    out = D.clip_outliers(make_day("SJS08", values), policy)
    np.testing.assert_allclose(out.values, [1.0, 1.0, 2.0, 2.0])


def test_clip_flags_unusable_above_masked_fraction():
    values = np.concatenate([np.full(30, 999.0), np.zeros(70)])
    policy = D.OutlierPolicy(fixed_bounds={"SJS08": (-1.0, 1.0)})
    out = D.clip_outliers(make_day("SJS08", values), policy)
    assert not out.usable
    # exactly at the boundary stays usable
    values = np.concatenate([np.full(20, 999.0), np.zeros(80)])
    assert D.clip_outliers(make_day("SJS08", values), policy).usable


def test_policy_fit_pools_pre_damage_days():
    rng = np.random.default_rng(1)
    days = [make_day("SJS08", 100 + rng.normal(size=200), day=DAY + timedelta(days=i))
            for i in range(3)]
    policy = D.OutlierPolicy(iqr_multiplier=5.0).fit(days)
    lo, hi = policy.fitted_bounds["SJS08"]
    pooled = np.concatenate([s.values for s in days])
    q1, q3 = np.percentile(pooled, [25, 75])
    assert lo == pytest.approx(q1 - 5.0 * (q3 - q1))
    assert hi == pytest.approx(q3 + 5.0 * (q3 - q1))


def test_policy_skips_failed_days_and_degenerate_spread():
    ok = make_day("SJS08", np.zeros(50) + 5.0)
    failed = make_day("SJX08", np.random.default_rng(2).normal(size=50),
                      sensor_status="failed")
    policy = D.OutlierPolicy().fit([ok, failed])
    assert "SJX08" not in policy.fitted_bounds  # failed day never enters the fit
    assert "SJS08" not in policy.fitted_bounds  # constant day has zero IQR


# ---------------------------------------------------------------------------
# sensor screening
# ---------------------------------------------------------------------------

def test_robust_range_is_p99_minus_p1():
    values = np.linspace(0.0, 100.0, 1001)
    assert D.robust_range(make_day("SJS08", values)) == pytest.approx(98.0)


def test_detect_sensor_failure_boundary():
    # threshold is failure_fraction * median history = 0.05 * 100 = 5
    history = [100.0, 100.0, 100.0]
    low = make_day("SJS08", np.linspace(0, 5.0, 1000))   # robust range 4.9
    high = make_day("SJS08", np.linspace(0, 5.2, 1000))  # robust range 5.096
    assert D.detect_sensor_failure(low, history).status == "failed"
    assert D.detect_sensor_failure(high, history).status == "ok"


def test_detect_sensor_failure_no_history_passes():
    check = D.detect_sensor_failure(make_day("SJS08", np.zeros(10)), [])
    assert check.status == "ok"
    assert "history" in check.note


def test_screen_days_uses_prior_history_only():
    rng = np.random.default_rng(3)
    days = []
    for i in range(5):
        values = 2000 + 50 * rng.normal(size=500)
        if i == 3:
            values = 2000 + 0.1 * rng.normal(size=500)  # flat-lined day
        days.append(make_day("SJS08", values, day=DAY + timedelta(days=i)))
    screened = D.screen_days(days)
    statuses = [s.sensor_status for s in sorted(screened, key=lambda s: s.date)]
    assert statuses == ["ok", "ok", "ok", "failed", "ok"]
    # the failed day must not drag the later history down
    assert screened[4].meta["sensor_check"]["history_median"] > 100


# ---------------------------------------------------------------------------
# force ratios
# ---------------------------------------------------------------------------

def test_ratio_values_and_source():
    up = make_day("SJS11", np.array([10.0, 20.0, 30.0]))
    down = make_day("SJX11", np.array([20.0, 20.0, 20.0]))
    ratio = D.compute_force_ratio(up, down)
    assert ratio.source == D.parse_pair_id("SJ11")
    np.testing.assert_allclose(ratio.values, [0.5, 1.0, 1.5])


def test_ratio_masks_small_denominator():
    up = make_day("SJS11", np.array([10.0, 10.0, 10.0]))
    down = make_day("SJX11", np.array([20.0, 0.1, 20.0]))
    ratio = D.compute_force_ratio(up, down, denom_floor=1.0)
    np.testing.assert_allclose(ratio.values, [0.5, 0.5, 0.5])
    assert ratio.meta["masked"] == 1


def test_ratio_excluded_on_sensor_failure():
    up = make_day("SJS11", np.ones(4), sensor_status="failed")
    down = make_day("SJX11", np.ones(4))
    assert D.compute_force_ratio(up, down) is None


def test_ratio_argument_checks():
    up = make_day("SJS11", np.ones(4))
    down = make_day("SJX12", np.ones(4))
    with pytest.raises(UsageError, match="not a pair"):
        D.compute_force_ratio(up, down)
    with pytest.raises(UsageError, match="upriver"):
        D.compute_force_ratio(make_day("SJX11", np.ones(4)), up)
    with pytest.raises(UsageError, match="date"):
        D.compute_force_ratio(up, make_day("SJX11", np.ones(4),
                                           day=DAY + timedelta(days=1)))
    with pytest.raises(DataError, match="length"):
        D.compute_force_ratio(up, make_day("SJX11", np.ones(5)))


@given(st.floats(0.5, 2.0), st.floats(100.0, 5000.0))
@settings(max_examples=30, deadline=None)
def test_ratio_scale_invariance(r, base):
    # ratio of (r*f, f) is r regardless of the force scale
    f = np.full(16, base)
    up = make_day("SJS11", r * f)
    down = make_day("SJX11", f)
    ratio = D.compute_force_ratio(up, down)
    np.testing.assert_allclose(ratio.values, r, rtol=1e-12)


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

def test_segment_day_full_scale_counts():
    series = make_day("SJS08", np.arange(172800.0))
    segs = D.segment_day(series, 1600)
    assert segs.shape == (108, 1600)
    np.testing.assert_array_equal(segs[0], np.arange(1600.0))
    np.testing.assert_array_equal(segs[-1], np.arange(171200.0, 172800.0))


def test_segment_day_discards_remainder():
    segs = D.segment_day(make_day("SJS08", np.arange(10.0)), 4)
    assert segs.shape == (2, 4)


def test_segment_day_short_day_and_bad_length():
    assert D.segment_day(make_day("SJS08", np.arange(3.0)), 4).shape == (0, 4)
    with pytest.raises(ConfigError):
        D.segment_day(make_day("SJS08", np.arange(3.0)), 0)


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------

def small_world(n_days=4, n_per_day=40, test_start_offset=3, fail=None):
    """Two pairs of constant-level cables; returns (days, test_start)."""
    rng = np.random.default_rng(0)
    levels = {"SJS08": 100.0, "SJX08": 200.0, "SJS09": 300.0, "SJX09": 400.0}
    days = []
    for i in range(n_days):
        for name, level in levels.items():
            status = "ok"
            if fail and name == fail[0] and i == fail[1]:
                status = "failed"
            days.append(make_day(name, level + 0.1 * rng.normal(size=n_per_day),
                                 day=DAY + timedelta(days=i),
                                 sensor_status=status))
    return days, DAY + timedelta(days=test_start_offset)


def test_build_dataset_forces_layout():
    days, test_start = small_world()
    ds = D.build_dataset(days, "forces", segment_length=10, test_start=test_start)
    assert ds.class_names == ["SJS08", "SJS09", "SJX08", "SJX09"]
    assert ds.num_classes == 4
    # 4 segments per day per cable: 3 pre days -> 12 pre, 1 post day -> 4 post
    counts = ds.counts()
    for name in ds.class_names:
        assert counts["test_post"][name] == 4
        pre_total = sum(counts[k][name] for k in ("train", "val", "test_pre"))
        assert pre_total == 12


def test_build_dataset_split_sizes_exact():
    days, test_start = small_world()
    ds = D.build_dataset(days, "forces", segment_length=10, test_start=test_start,
                         val_fraction=0.25)
    n_pre = 4 * 12
    n_test_pre = n_pre - n_pre // 2
    n_val = int(round(0.25 * (n_pre // 2)))
    sizes = {k: int((ds.split == code).sum()) for k, code in D.SPLIT_NAMES.items()}
    assert sizes == {"train": n_pre // 2 - n_val, "val": n_val,
                     "test_pre": n_test_pre, "test_post": 16}


def test_build_dataset_split_deterministic_and_seed_sensitive():
    days, test_start = small_world()
    a = D.build_dataset(days, "forces", 10, test_start, split_seed=0)
    b = D.build_dataset(days, "forces", 10, test_start, split_seed=0)
    c = D.build_dataset(days, "forces", 10, test_start, split_seed=1)
    np.testing.assert_array_equal(a.split, b.split)
    assert (a.split != c.split).any()
    np.testing.assert_array_equal(a.x, c.x)  # only the assignment changes


def test_build_dataset_ratio_scenario():
    days, test_start = small_world()
    ds = D.build_dataset(days, "ratios", segment_length=10, test_start=test_start)
    assert ds.class_names == ["SJ08", "SJ09"]
    x_tr, y_tr = ds.arrays("train")
    assert x_tr.shape[1] == 10
    # constant levels: pair ratios are 0.5 and 0.75 up to tiny noise
    for ci, expect in ((0, 0.5), (1, 0.75)):
        vals = x_tr[y_tr == ci]
        assert np.allclose(vals, expect, atol=0.01)


def test_sensor_failed_post_day_excludes_cable_and_pair():
    days, test_start = small_world(fail=("SJX08", 3))
    ds = D.build_dataset(days, "forces", 10, test_start)
    assert "SJX08" in ds.excluded
    assert "sensor failure" in ds.excluded["SJX08"]
    x_post, y_post = ds.arrays("test_post")
    ci = ds.class_names.index("SJX08")
    assert not (y_post == ci).any()  # the failed day contributed nothing
    # pre-damage data of the failed cable still trains
    x_tr, y_tr = ds.arrays("train")
    assert (y_tr == ci).any()

    ratios = D.build_dataset(days, "ratios", 10, test_start)
    assert "SJ08" in ratios.excluded
    assert "SJX08" in ratios.excluded["SJ08"]


def test_sensor_failed_pre_day_is_just_dropped():
    days, test_start = small_world(fail=("SJX08", 1))
    ds = D.build_dataset(days, "forces", 10, test_start)
    assert ds.excluded == {}
    counts = ds.counts()
    pre_total = sum(counts[k]["SJX08"] for k in ("train", "val", "test_pre"))
    assert pre_total == 8  # one intact day fewer


def test_unusable_day_skipped():
    days, test_start = small_world()
    for s in days:
        if s.name == "SJS08" and s.date == test_start:
            s.usable = False
    ds = D.build_dataset(days, "forces", 10, test_start)
    x_post, y_post = ds.arrays("test_post")
    ci = ds.class_names.index("SJS08")
    assert not (y_post == ci).any()
    assert "SJS08" not in ds.excluded  # skipping is not an exclusion record


def test_class_without_pre_damage_segments_is_an_error():
    days, test_start = small_world()
    days = [s for s in days
            if not (s.name == "SJS08" and s.date < test_start)]
    with pytest.raises(DataError, match="SJS08.*pre-damage"):
        D.build_dataset(days, "forces", 10, test_start)


def test_build_dataset_rejects_unknown_scenario():
    days, test_start = small_world()
    with pytest.raises(ConfigError):
        D.build_dataset(days, "both", 10, test_start)


# ---------------------------------------------------------------------------
# prepare_dataset: clipping applies to forces only
# ---------------------------------------------------------------------------

def test_prepare_dataset_clips_forces_but_not_ratios(tmp_path):
    rng = np.random.default_rng(7)
    n = 60
    for i in range(4):
        for name, level in (("SJS08", 100.0), ("SJX08", 200.0)):
            values = level + rng.normal(size=n)
            if i == 3 and name == "SJS08":
                values = values * 0.5  # post-damage collapse, out of bounds
            make = make_day(name, values, day=DAY + timedelta(days=i),
                            meta={"dt": 1.0})
            D.write_day_csv(make, tmp_path)
    test_start = DAY + timedelta(days=3)

    forces, prepped = D.prepare_dataset(tmp_path, "forces", 10, test_start,
                                        iqr_multiplier=5.0)
    post_day = [s for s in prepped
                if s.name == "SJS08" and s.date == test_start][0]
    assert not post_day.usable  # the collapsed day was clipped away

    ratios, _ = D.prepare_dataset(tmp_path, "ratios", 10, test_start)
    x_post, y_post = ratios.arrays("test_post")
    assert len(y_post) > 0  # unclipped pipeline keeps the collapsed ratio day
    assert np.allclose(x_post.mean(), 0.25, atol=0.02)  # 0.5 * 100 / 200


# ---------------------------------------------------------------------------
# manifests and stable npz
# ---------------------------------------------------------------------------

def test_write_stable_npz_round_trip_and_identical_bytes(tmp_path):
    arrays = {"x": np.arange(6.0).reshape(2, 3), "names": np.array(["a", "b"])}
    p1 = D.write_stable_npz(tmp_path / "one.npz", arrays)
    p2 = D.write_stable_npz(tmp_path / "two.npz", arrays)
    assert p1.read_bytes() == p2.read_bytes()
    with np.load(p1) as loaded:
        np.testing.assert_array_equal(loaded["x"], arrays["x"])
        assert list(loaded["names"]) == ["a", "b"]


def test_write_manifest_contents(tmp_path):
    import json
    days, test_start = small_world(fail=("SJX08", 3))
    ds = D.build_dataset(days, "forces", 10, test_start)
    path = D.write_manifest(ds, tmp_path / "manifest.json",
                            input_files=["b.csv", "a.csv"],
                            policies={"iqr_multiplier": 5.0})
    payload = json.loads(path.read_text())
    assert payload["format_version"] == 1
    assert payload["scenario"] == "forces"
    assert payload["class_names"] == ds.class_names
    assert payload["excluded"] == ds.excluded
    assert payload["input_files"] == ["a.csv", "b.csv"]
    assert payload["test_start"] == test_start.isoformat()
    assert len(payload["segments"]) == len(ds.y)
    first = payload["segments"][0]
    assert set(first) == {"source", "class", "split"}
    total = sum(sum(v.values()) for v in payload["counts"].values())
    assert total == len(ds.y)
