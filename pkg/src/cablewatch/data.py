"""Cable identifiers, day-series ingestion and dataset assembly.

Pipeline order: ingest day files, screen each day for sensor failure against
the cable's history, clip outliers (masked samples are linearly interpolated
so windowing arithmetic stays exact), optionally form upriver/downriver force
ratios, cut non-overlapping segments, and assemble the labelled splits.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import zipfile
from dataclasses import dataclass, field, replace
from datetime import date as Date, datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, UsageError

__all__ = [
    "CableId",
    "PairId",
    "parse_cable_id",
    "parse_pair_id",
    "DaySeries",
    "load_day_records",
    "write_day_csv",
    "OutlierPolicy",
    "clip_outliers",
    "robust_range",
    "SensorCheck",
    "detect_sensor_failure",
    "screen_days",
    "compute_force_ratio",
    "segment_day",
    "Dataset",
    "build_dataset",
    "prepare_dataset",
    "write_manifest",
    "write_stable_npz",
    "SPLIT_NAMES",
]

logger = logging.getLogger(__name__)

CSV_HEADER = ["timestamp", "cable_id", "force_kN"]
NOMINAL_DT_SECONDS = 0.5

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST_PRE, SPLIT_TEST_POST = 0, 1, 2, 3
SPLIT_NAMES = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test_pre": SPLIT_TEST_PRE,
               "test_post": SPLIT_TEST_POST}


# ---------------------------------------------------------------------------
# identifiers
# ---------------------------------------------------------------------------

_CABLE_RE = re.compile(r"^([A-Z]{2})([SXUD])(\d{1,3})$")
_PAIR_RE = re.compile(r"^([A-Z]{2})(\d{1,3})$")


@dataclass(frozen=True)
class PairId:
    """A cable pair, e.g. SJ11: group letters plus pair index."""

    group: str
    pair_index: int

    def render(self):
        return f"{self.group}{self.pair_index:02d}"

    def members(self):
        """(upriver, downriver) cable ids of this pair."""
        return (CableId(self.group, self.pair_index, True),
                CableId(self.group, self.pair_index, False))


@dataclass(frozen=True)
class CableId:
    """One monitored cable. The third letter of a name encodes the line:
    S or U = upriver, X or D = downriver; S/X is the canonical spelling."""

    group: str
    pair_index: int
    upriver: bool

    def render(self):
        return f"{self.group}{'S' if self.upriver else 'X'}{self.pair_index:02d}"

    @property
    def pair(self):
        return PairId(self.group, self.pair_index)


def parse_cable_id(token):
    m = _CABLE_RE.match(token.strip().upper())
    if not m:
        raise DataError(f"unrecognized cable id {token!r} (expected e.g. 'SJS11')")
    group, line, idx = m.groups()
    return CableId(group, int(idx), line in ("S", "U"))


def parse_pair_id(token):
    m = _PAIR_RE.match(token.strip().upper())
    if not m:
        raise DataError(f"unrecognized pair id {token!r} (expected e.g. 'SJ11')")
    group, idx = m.groups()
    return PairId(group, int(idx))


# ---------------------------------------------------------------------------
# day series
# ---------------------------------------------------------------------------

@dataclass
class DaySeries:
    """One calendar day of one source (a cable, or a pair for ratio series).

    ``values`` is the sampled force (or ratio) and ``valid`` marks samples
    that came from the sensor rather than being gaps/NaN/outliers. Once a
    preprocessing step interpolates masked samples it leaves ``valid`` all
    True and records counts in ``meta``.
    """

    source: object  # CableId | PairId
    date: Date
    values: np.ndarray
    valid: np.ndarray = None
    sensor_status: str = "ok"
    usable: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise DataError(f"day series {self.name} must be a non-empty 1-D array")
        if self.valid is None:
            self.valid = np.isfinite(self.values)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise DataError(f"day series {self.name}: valid mask length mismatch")

    @property
    def name(self):
        return self.source.render() if hasattr(self.source, "render") else str(self.source)

    def label(self):
        return f"{self.name} {self.date.isoformat()}"


def _interpolate_masked(values, valid):
    """Fill masked samples by linear interpolation between valid neighbours
    (nearest-value extension at the edges)."""
    if valid.all():
        return values.copy()
    if not valid.any():
        return values.copy()
    idx = np.arange(values.size, dtype=np.float64)
    return np.interp(idx, idx[valid], values[valid])


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

_FNAME_RE = re.compile(r"^(?P<cable>[A-Za-z0-9]+)_(?P<date>\d{4}-\d{2}-\d{2})\.csv$")


def _parse_timestamp(text, path, line_no):
    try:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"{path}:{line_no}: malformed timestamp {text!r}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def _load_one_csv(path):
    path = Path(path)
    m = _FNAME_RE.match(path.name)
    if not m:
        raise DataError(
            f"{path}: file name must look like '<cable_id>_<YYYY-MM-DD>.csv'"
        )
    cable = parse_cable_id(m.group("cable"))
    day = Date.fromisoformat(m.group("date"))

    times = []
    forces = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (missing header)")
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: header must be {','.join(CSV_HEADER)!r}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{line_no}: expected 3 columns, got {len(row)}")
            ts = _parse_timestamp(row[0], path, line_no)
            token = row[1].strip()
            if parse_cable_id(token) != cable:
                raise DataError(
                    f"{path}:{line_no}: cable id {token!r} does not match file name"
                )
            raw = row[2].strip()
            try:
                force = float(raw) if raw else float("nan")
            except ValueError:
                raise DataError(f"{path}:{line_no}: malformed force value {raw!r}")
            if times and ts <= times[-1]:
                raise DataError(f"{path}:{line_no}: timestamps out of order")
            times.append(ts)
            forces.append(force)

    if not times:
        logger.warning("%s: no data rows, skipping", path)
        return None

    if len(times) == 1:
        dt = NOMINAL_DT_SECONDS
    else:
        dt = min(b - a for a, b in zip(times, times[1:]))
    n_slots = int(round((times[-1] - times[0]) / dt)) + 1
    values = np.full(n_slots, np.nan)
    for ts, force in zip(times, forces):
        pos = (ts - times[0]) / dt
        slot = int(round(pos))
        if abs(pos - slot) > 1e-6:
            raise DataError(
                f"{path}: timestamp {ts} is not on the {dt}-second grid"
            )
        values[slot] = force
    valid = np.isfinite(values)
    n_gaps = int((~valid).sum())
    if n_gaps:
        logger.info("%s: %d missing/NaN samples masked", path, n_gaps)
    return DaySeries(
        source=cable, date=day, values=values, valid=valid,
        meta={"path": str(path), "dt": dt, "gaps": n_gaps},
    )


def load_day_records(path, format="csv"):
    """Read one day file, or every ``*.csv`` under a directory.

    Returns one DaySeries per (cable, date); files with no data rows are
    skipped with a warning.
    """
    if format != "csv":
        raise ConfigError(f"unsupported input format {format!r} (only 'csv')")
    path = Path(path)
    if path.is_dir():
        files = sorted(path.rglob("*.csv"))
        if not files:
            raise DataError(f"{path}: no .csv day files found")
    else:
        files = [path]
    out = []
    for f in files:
        series = _load_one_csv(f)
        if series is not None:
            out.append(series)
    return out


def _format_timestamps(start_epoch, n, dt):
    out = []
    for i in range(n):
        t = start_epoch + i * dt
        whole = int(t // 1)
        frac = t - whole
        stamp = datetime.fromtimestamp(whole, tz=timezone.utc)
        out.append(stamp.strftime("%Y-%m-%dT%H:%M:%S") + f".{int(round(frac * 1000)):03d}Z")
    return out


def write_day_csv(series, out_dir, dt=None):
    """Write a cable day back to the interchange CSV layout; returns the path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = series.name
    path = out_dir / f"{name}_{series.date.isoformat()}.csv"
    if dt is None:
        dt = series.meta.get("dt", NOMINAL_DT_SECONDS)
    start = datetime(series.date.year, series.date.month, series.date.day,
                     tzinfo=timezone.utc).timestamp()
    stamps = _format_timestamps(start, series.values.size, dt)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for stamp, v, ok in zip(stamps, series.values, series.valid):
            writer.writerow([stamp, name, repr(float(v)) if ok else ""])
    return path


# ---------------------------------------------------------------------------
# outlier clipping
# ---------------------------------------------------------------------------

@dataclass
class OutlierPolicy:
    """Bounds for clip_outliers.

    By default bounds come from the quantile rule over the cable's pre-damage
    record: fit() pools the valid samples of the given days per cable and
    stores [Q1 - k*IQR, Q3 + k*IQR]. A day whose cable has no fitted bounds
    falls back to the same rule computed on the day itself. ``fixed_bounds``
    overrides the rule per cable name.
    """

    iqr_multiplier: float = 5.0
    max_masked_fraction: float = 0.2
    fixed_bounds: dict = field(default_factory=dict)
    fitted_bounds: dict = field(default_factory=dict)

    def fit(self, days):
        pooled = {}
        for s in days:
            if s.sensor_status != "ok" or not s.usable:
                continue
            pooled.setdefault(s.name, []).append(s.values[s.valid])
        for name, chunks in pooled.items():
            values = np.concatenate(chunks)
            if values.size == 0:
                continue
            bounds = self._quantile_bounds(values)
            if bounds is not None:
                self.fitted_bounds[name] = bounds
        return self

    def _quantile_bounds(self, values):
        q1, q3 = np.percentile(values, [25.0, 75.0])
        iqr = q3 - q1
        if iqr <= 0.0:
            return None  # degenerate spread: clipping would be meaningless
        return (q1 - self.iqr_multiplier * iqr, q3 + self.iqr_multiplier * iqr)

    def bounds_for(self, series):
        name = series.name
        if name in self.fixed_bounds:
            return self.fixed_bounds[name]
        if name in self.fitted_bounds:
            return self.fitted_bounds[name]
        valid_values = series.values[series.valid]
        if valid_values.size == 0:
            return None
        return self._quantile_bounds(valid_values)


def clip_outliers(series, policy=None):
    """Mask out-of-bounds samples and interpolate every masked sample.

    Returns a new DaySeries with complete values (``valid`` all True);
    ``meta['clip_replaced']`` counts outliers and ``meta['interpolated']`` all
    filled samples. A day with more than ``max_masked_fraction`` masked is
    flagged unusable.
    """
    if policy is None:
        policy = OutlierPolicy()
    bounds = policy.bounds_for(series)
    valid = series.valid.copy()
    n_outliers = 0
    if bounds is not None:
        lo, hi = bounds
        outlier = valid & ((series.values < lo) | (series.values > hi))
        n_outliers = int(outlier.sum())
        valid &= ~outlier
    n_masked = int((~valid).sum())
    frac = n_masked / series.values.size
    usable = series.usable and frac <= policy.max_masked_fraction
    if not usable:
        logger.warning("%s: %.1f%% of samples masked, day flagged unusable",
                       series.label(), 100.0 * frac)
    filled = _interpolate_masked(series.values, valid)
    meta = dict(series.meta)
    meta["clip_replaced"] = n_outliers
    meta["interpolated"] = n_masked
    return replace(
        series, values=filled, valid=np.ones_like(valid), usable=usable, meta=meta
    )


# ---------------------------------------------------------------------------
# sensor-failure screening
# ---------------------------------------------------------------------------

@dataclass
class SensorCheck:
    status: str
    robust_range: float
    history_median: float
    note: str = ""


def robust_range(series):
    """Spread between the 1st and 99th percentile of the day's valid samples."""
    values = series.values[series.valid]
    if values.size == 0:
        return 0.0
    p1, p99 = np.percentile(values, [1.0, 99.0])
    return float(p99 - p1)


def detect_sensor_failure(series, history_ranges, failure_fraction=0.05):
    """Compare a day's robust range against the cable's history.

    The sensor counts as failed only when the day's robust range is strictly
    below ``failure_fraction`` times the median historical range. With no
    history the day passes with an explanatory note.
    """
    today = robust_range(series)
    history = [r for r in history_ranges if np.isfinite(r)]
    if not history:
        return SensorCheck("ok", today, float("nan"),
                           "insufficient history, day accepted unchecked")
    med = float(np.median(history))
    if today < failure_fraction * med:
        return SensorCheck(
            "failed", today, med,
            f"robust range {today:.3g} kN < {failure_fraction:g} x median {med:.3g} kN",
        )
    return SensorCheck("ok", today, med)


def screen_days(days, failure_fraction=0.05):
    """Chronologically screen every cable's days for sensor failure.

    Each day is judged against the median robust range of that cable's
    earlier non-failed days; failed days get ``sensor_status='failed'`` and do
    not enter the history. Returns new DaySeries objects.
    """
    by_cable = {}
    for s in days:
        by_cable.setdefault(s.name, []).append(s)
    out = []
    for name in sorted(by_cable):
        history = []
        for s in sorted(by_cable[name], key=lambda d: d.date):
            check = detect_sensor_failure(s, history)
            meta = dict(s.meta)
            meta["sensor_check"] = {
                "robust_range": check.robust_range,
                "history_median": check.history_median,
                "note": check.note,
            }
            if check.status == "failed":
                logger.warning("%s: sensor failure detected (%s)", s.label(), check.note)
                out.append(replace(s, sensor_status="failed", meta=meta))
            else:
                history.append(check.robust_range)
                out.append(replace(s, meta=meta))
    return out


# ---------------------------------------------------------------------------
# force ratios
# ---------------------------------------------------------------------------

def compute_force_ratio(up, down, denom_floor=1.0, max_masked_fraction=0.2):
    """Upriver force divided by downriver force for one day.

    Samples where |downriver| < ``denom_floor`` kN are masked and
    interpolated. Returns None when either sensor failed that day (the ratio
    day is excluded).
    """
    if not (isinstance(up.source, CableId) and isinstance(down.source, CableId)):
        raise UsageError("compute_force_ratio expects cable day series")
    if up.source.pair != down.source.pair:
        raise UsageError(
            f"cables {up.name} and {down.name} are not a pair"
        )
    if not up.source.upriver or down.source.upriver:
        raise UsageError(
            f"compute_force_ratio expects (upriver, downriver), got ({up.name}, {down.name})"
        )
    if up.date != down.date:
        raise UsageError(f"date mismatch: {up.label()} vs {down.label()}")
    if up.values.size != down.values.size:
        raise DataError(
            f"length mismatch for pair {up.source.pair.render()} on {up.date}: "
            f"{up.name} has {up.values.size} samples, {down.name} has {down.values.size}"
        )
    if up.sensor_status != "ok" or down.sensor_status != "ok":
        logger.info("pair %s %s: ratio excluded (sensor failure)",
                    up.source.pair.render(), up.date)
        return None

    valid = up.valid & down.valid & (np.abs(down.values) >= denom_floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(valid, up.values / np.where(valid, down.values, 1.0), np.nan)
    n_masked = int((~valid).sum())
    frac = n_masked / ratio.size
    usable = up.usable and down.usable and frac <= max_masked_fraction
    filled = _interpolate_masked(ratio, valid)
    return DaySeries(
        source=up.source.pair, date=up.date, values=filled,
        valid=np.ones_like(valid), usable=usable,
        meta={"masked": n_masked, "dt": up.meta.get("dt")},
    )


# ---------------------------------------------------------------------------
# segmentation and dataset assembly
# ---------------------------------------------------------------------------

def segment_day(series, segment_length):
    """Cut a day into consecutive non-overlapping windows.

    Returns an array [n, segment_length]; the trailing remainder is discarded.
    A day shorter than one window yields an empty array with a warning.
    """
    if segment_length < 1:
        raise ConfigError(f"segment_length must be >= 1, got {segment_length}")
    n = series.values.size // segment_length
    if n == 0:
        logger.warning("%s: day shorter than one segment (%d < %d)",
                       series.label(), series.values.size, segment_length)
        return np.empty((0, segment_length))
    return series.values[: n * segment_length].reshape(n, segment_length).copy()


@dataclass
class Dataset:
    """Labelled segments with split assignment and exclusion records."""

    scenario: str
    class_names: list
    segment_length: int
    x: np.ndarray
    y: np.ndarray
    split: np.ndarray
    sources: list
    excluded: dict
    split_seed: int
    val_fraction: float
    test_start: Date

    @property
    def num_classes(self):
        return len(self.class_names)

    def arrays(self, split_name):
        """(x, y) for one of 'train', 'val', 'test_pre', 'test_post'."""
        if split_name not in SPLIT_NAMES:
            raise UsageError(f"unknown split {split_name!r}")
        mask = self.split == SPLIT_NAMES[split_name]
        return self.x[mask], self.y[mask]

    def counts(self):
        """{split_name: {class_name: n}} segment counts."""
        out = {}
        for split_name, code in SPLIT_NAMES.items():
            mask = self.split == code
            per = {}
            for ci, name in enumerate(self.class_names):
                per[name] = int(((self.y == ci) & mask).sum())
            out[split_name] = per
        return out


def _ratio_days(days, test_start):
    """Pair up cable days into ratio days; returns (ratio_days, excluded)."""
    excluded = {}
    by_key = {}
    for s in days:
        if not isinstance(s.source, CableId):
            raise UsageError("ratio scenario expects cable day series as input")
        by_key[(s.source.pair, s.date, s.source.upriver)] = s
    out = []
    seen_pairs = {key[0] for key in by_key}
    for pair in sorted(seen_pairs, key=lambda p: p.render()):
        dates = sorted({d for (p, d, _) in by_key if p == pair})
        for day in dates:
            up = by_key.get((pair, day, True))
            down = by_key.get((pair, day, False))
            if up is None or down is None:
                logger.warning("pair %s %s: missing one line, ratio skipped",
                               pair.render(), day)
                continue
            failed = [s.name for s in (up, down) if s.sensor_status != "ok"]
            if failed:
                if day >= test_start:
                    excluded[pair.render()] = (
                        f"sensor failure on {', '.join(failed)} ({day.isoformat()})"
                    )
                continue
            ratio = compute_force_ratio(up, down)
            if ratio is not None:
                out.append(ratio)
    return out, excluded


def build_dataset(days, scenario, segment_length, test_start, split_seed=0,
                  val_fraction=0.2):
    """Assemble a labelled dataset from preprocessed day series.

    Scenario 'forces' labels segments by cable (one class per cable);
    'ratios' pairs the given cable days into upriver/downriver ratio series
    and labels by pair. Days dated >= ``test_start`` form the post-damage
    test split; earlier days are shuffled under ``split_seed`` into equal
    train-pool/test halves, with ``val_fraction`` of the pool carved off as
    validation. Sensor-failed cables keep their intact-period data for
    training but are excluded (with a reason) from the post-damage split.
    """
    if scenario not in ("forces", "ratios"):
        raise ConfigError(f"scenario must be 'forces' or 'ratios', got {scenario!r}")
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in [0, 1), got {val_fraction}")

    excluded = {}
    if scenario == "ratios":
        series_list, excluded = _ratio_days(days, test_start)
    else:
        series_list = []
        for s in days:
            if not isinstance(s.source, CableId):
                raise UsageError("forces scenario expects cable day series")
            if s.sensor_status != "ok":
                if s.date >= test_start:
                    excluded[s.name] = f"sensor failure ({s.date.isoformat()})"
                continue
            series_list.append(s)

    class_names = sorted({s.name for s in series_list})
    if not class_names:
        raise DataError("no usable day series to build a dataset from")
    label_of = {name: i for i, name in enumerate(class_names)}

    seg_chunks = []
    labels = []
    post_flags = []
    sources = []
    for s in sorted(series_list, key=lambda d: (d.name, d.date)):
        if not s.usable:
            logger.warning("%s: unusable day skipped", s.label())
            continue
        segs = segment_day(s, segment_length)
        if segs.shape[0] == 0:
            continue
        seg_chunks.append(segs)
        labels.extend([label_of[s.name]] * segs.shape[0])
        post_flags.extend([s.date >= test_start] * segs.shape[0])
        sources.extend(
            f"{s.name}:{s.date.isoformat()}:{k}" for k in range(segs.shape[0])
        )

    if not seg_chunks:
        raise DataError("no segments produced (all days unusable or too short)")
    x = np.concatenate(seg_chunks, axis=0)
    y = np.asarray(labels, dtype=np.int64)
    post = np.asarray(post_flags, dtype=bool)

    for name, ci in label_of.items():
        if not ((y == ci) & ~post).any():
            raise DataError(f"class {name} has zero pre-damage segments")

    split = np.full(len(y), SPLIT_TEST_POST, dtype=np.int8)
    pre_idx = np.flatnonzero(~post)
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(pre_idx)
    n_pool = len(perm) // 2
    pool, test_pre = perm[:n_pool], perm[n_pool:]
    split[test_pre] = SPLIT_TEST_PRE
    n_val = int(round(val_fraction * len(pool)))
    pool_perm = rng.permutation(pool)
    split[pool_perm[:n_val]] = SPLIT_VAL
    split[pool_perm[n_val:]] = SPLIT_TRAIN

    return Dataset(
        scenario=scenario,
        class_names=class_names,
        segment_length=segment_length,
        x=x,
        y=y,
        split=split,
        sources=sources,
        excluded=excluded,
        split_seed=split_seed,
        val_fraction=val_fraction,
        test_start=test_start,
    )


def prepare_dataset(data_dir, scenario, segment_length, test_start,
                    split_seed=0, val_fraction=0.2, iqr_multiplier=5.0,
                    failure_fraction=0.05):
    """Full pipeline from a CSV day tree to a labelled dataset.

    Ingests every day file and screens for sensor failures against each
    cable's history. For the forces scenario, outlier bounds are fitted on
    the screened pre-damage record and non-failed days are clipped against
    them. Ratio days are computed from the unclipped record: the ratio
    channel exists to expose intra-pair force redistribution, and bounds
    fitted on the intact period would mask exactly that shift.
    Returns (dataset, days) where ``days`` are the preprocessed series.
    """
    raw = load_day_records(data_dir)
    screened = screen_days(raw, failure_fraction=failure_fraction)
    if scenario == "ratios":
        prepared = screened
    else:
        policy = OutlierPolicy(iqr_multiplier=iqr_multiplier)
        policy.fit([s for s in screened if s.date < test_start])
        prepared = [
            clip_outliers(s, policy) if s.sensor_status == "ok" else s
            for s in screened
        ]
    dataset = build_dataset(
        prepared, scenario, segment_length, test_start,
        split_seed=split_seed, val_fraction=val_fraction,
    )
    return dataset, prepared


def write_stable_npz(path, arrays):
    """Write an npz whose bytes depend only on the arrays (fixed zip dates),
    so identical runs produce identical files."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            payload = io.BytesIO()
            np.lib.format.write_array(payload, np.asarray(arr))
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload.getvalue())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())
    return Path(path)


def write_manifest(dataset, path, input_files=None, policies=None,
                   include_assignments=True):
    """Write the dataset manifest (JSON): provenance, seeds, counts and, by
    default, the per-segment split assignment."""
    payload = {
        "format_version": 1,
        "scenario": dataset.scenario,
        "segment_length": dataset.segment_length,
        "split_seed": dataset.split_seed,
        "val_fraction": dataset.val_fraction,
        "test_start": dataset.test_start.isoformat(),
        "class_names": dataset.class_names,
        "counts": dataset.counts(),
        "excluded": dataset.excluded,
    }
    if input_files is not None:
        payload["input_files"] = sorted(str(f) for f in input_files)
    if policies is not None:
        payload["policies"] = policies
    if include_assignments:
        code_to_name = {v: k for k, v in SPLIT_NAMES.items()}
        payload["segments"] = [
            {"source": src, "class": dataset.class_names[ci], "split": code_to_name[sp]}
            for src, ci, sp in zip(dataset.sources, dataset.y.tolist(),
                                   dataset.split.tolist())
        ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return Path(path)
