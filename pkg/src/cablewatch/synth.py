"""Synthetic multi-day cable-force worlds for end-to-end testing.

Each cable's force is baseline + daily sinusoid + shared traffic pulses +
Gaussian noise. Traffic events are drawn once per (pair, day) and split
between the two lines, so pair ratios hover near their baseline ratio and a
wire rupture (which moves part of one cable's share onto its partner)
produces the ratio collapse the detector looks for. All randomness comes
from streams derived from the master seed per (cable, day), so generation is
deterministic and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date as Date

import numpy as np

from .data import CableId, DaySeries, PairId
from .errors import ConfigError, UsageError

__all__ = [
    "TrafficSpec",
    "PairSpec",
    "BridgeSpec",
    "FaultSpec",
    "generate",
    "apply_rupture",
    "apply_sensor_failure",
    "write_world",
    "world_to_dict",
    "world_from_dict",
    "load_world_spec",
]

SECONDS_PER_DAY = 86400

# stream tags so every consumer of the master seed gets an independent rng
_STREAM_TRAFFIC = 1
_STREAM_NOISE = 2
_STREAM_FAILURE = 3


@dataclass
class TrafficSpec:
    """Vehicle crossings: Poisson arrivals, half-sine force pulses.

    ``rate_mod_depth`` modulates the arrival rate over the day (rush hours),
    keeping the daily total at rate_per_hour * 24 in expectation. Each event
    splits between the pair's lines around ``rho_mean`` with per-event jitter.
    """

    rate_per_hour: float = 120.0
    load_mean_kn: float = 150.0
    load_std_kn: float = 50.0
    pulse_duration_s: float = 10.0
    rho_mean: float = 0.5
    rho_jitter: float = 0.05
    rate_mod_depth: float = 0.0
    rate_mod_phase: float = 0.0

    def validate(self):
        problems = []
        if self.rate_per_hour < 0:
            problems.append("rate_per_hour must be >= 0")
        if self.load_mean_kn <= 0:
            problems.append("load_mean_kn must be > 0")
        if self.load_std_kn < 0:
            problems.append("load_std_kn must be >= 0")
        if self.pulse_duration_s <= 0:
            problems.append("pulse_duration_s must be > 0")
        if not 0.0 < self.rho_mean < 1.0:
            problems.append("rho_mean must be in (0, 1)")
        if self.rho_jitter < 0:
            problems.append("rho_jitter must be >= 0")
        if not 0.0 <= self.rate_mod_depth < 1.0:
            problems.append("rate_mod_depth must be in [0, 1)")
        return problems


@dataclass
class PairSpec:
    """One cable pair: line baselines, shared daily sinusoid, traffic share.

    ``traffic_gain`` scales pulse loads for this pair (longer cables carry
    more live load); ``rho_mean`` overrides the traffic-wide lane split.
    """

    pair: PairId
    baseline_up_kn: float
    baseline_down_kn: float
    amplitude_kn: float = 0.0
    phase_rad: float = 0.0
    traffic_gain: float = 1.0
    rho_mean: float = None

    def validate(self):
        problems = []
        if self.baseline_up_kn <= 0 or self.baseline_down_kn <= 0:
            problems.append(f"{self.pair.render()}: baseline must be > 0")
        if self.amplitude_kn < 0:
            problems.append(f"{self.pair.render()}: amplitude must be >= 0")
        if self.traffic_gain < 0:
            problems.append(f"{self.pair.render()}: traffic_gain must be >= 0")
        if self.rho_mean is not None and not 0.0 < self.rho_mean < 1.0:
            problems.append(f"{self.pair.render()}: rho_mean must be in (0, 1)")
        return problems

    def baseline(self, upriver):
        return self.baseline_up_kn if upriver else self.baseline_down_kn


@dataclass
class BridgeSpec:
    """The whole monitored bridge: pairs, traffic, noise, sampling, dates."""

    pairs: list
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    noise_std_kn: float = 5.0
    sample_rate_hz: float = 2.0
    days: list = field(default_factory=list)
    seed: int = 0
    noise_std_by_cable: dict = field(default_factory=dict)

    def validate(self):
        problems = []
        if not self.pairs:
            problems.append("at least one pair is required")
        seen = set()
        for p in self.pairs:
            problems.extend(p.validate())
            if p.pair in seen:
                problems.append(f"duplicate pair {p.pair.render()}")
            seen.add(p.pair)
        problems.extend(self.traffic.validate())
        if self.noise_std_kn < 0:
            problems.append("noise_std_kn must be >= 0")
        if self.sample_rate_hz <= 0:
            problems.append("sample_rate_hz must be > 0")
        else:
            n = SECONDS_PER_DAY * self.sample_rate_hz
            if abs(n - round(n)) > 1e-9:
                problems.append(
                    "sample_rate_hz must give a whole number of samples per day"
                )
        if not self.days:
            problems.append("at least one day is required")
        if len(set(self.days)) != len(self.days):
            problems.append("days must be unique")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def samples_per_day(self):
        return int(round(SECONDS_PER_DAY * self.sample_rate_hz))

    def cables(self):
        """Canonical cable order: pairs in spec order, upriver line first."""
        out = []
        for p in self.pairs:
            up, down = p.pair.members()
            out.extend([up, down])
        return out

    def pair_spec(self, pair):
        for p in self.pairs:
            if p.pair == pair:
                return p
        raise UsageError(f"pair {pair.render()} not in bridge spec")


@dataclass
class FaultSpec:
    """An injected fault: wire rupture (severity = lost share s) or sensor
    failure (severity = residual fluctuation in kN)."""

    kind: str
    target: CableId
    onset: Date
    severity: float

    def validate(self, spec):
        problems = []
        if self.kind not in ("wire_rupture", "sensor_failure"):
            problems.append(f"unknown fault kind {self.kind!r}")
        if self.target not in spec.cables():
            problems.append(f"fault target {self.target.render()} not on the bridge")
        if spec.days and not (min(spec.days) <= self.onset <= max(spec.days)):
            problems.append(
                f"fault onset {self.onset} outside the generated date range"
            )
        if self.kind == "wire_rupture" and not 0.0 <= self.severity <= 1.0:
            problems.append("rupture severity must be in [0, 1]")
        if self.kind == "sensor_failure" and self.severity < 0:
            problems.append("sensor-failure residual must be >= 0")
        return problems


def _rng(spec, stream, *key):
    return np.random.default_rng([spec.seed, stream, *key])


def _traffic_for_pair_day(spec, pair_idx, day_idx, n):
    """Pulse trains (up, down) for one pair-day, from the pair-day stream."""
    tr = spec.traffic
    pspec = spec.pairs[pair_idx]
    rho_mean = pspec.rho_mean if pspec.rho_mean is not None else tr.rho_mean
    gain = pspec.traffic_gain
    pulse_up = np.zeros(n)
    pulse_down = np.zeros(n)
    if tr.rate_per_hour == 0 or gain == 0:
        return pulse_up, pulse_down

    rng = _rng(spec, _STREAM_TRAFFIC, pair_idx, day_idx)
    lam_max = (tr.rate_per_hour / 3600.0) * (1.0 + tr.rate_mod_depth)
    n_cand = rng.poisson(lam_max * SECONDS_PER_DAY)
    t_cand = np.sort(rng.uniform(0.0, SECONDS_PER_DAY, size=n_cand))
    if tr.rate_mod_depth > 0.0:
        lam = (tr.rate_per_hour / 3600.0) * (
            1.0 + tr.rate_mod_depth
            * np.sin(2.0 * np.pi * t_cand / SECONDS_PER_DAY + tr.rate_mod_phase)
        )
        keep = rng.uniform(0.0, lam_max, size=n_cand) < lam
        times = t_cand[keep]
    else:
        times = t_cand

    n_events = times.size
    loads = rng.normal(tr.load_mean_kn, tr.load_std_kn, size=n_events)
    loads = np.maximum(loads, 0.05 * tr.load_mean_kn) * gain
    rhos = np.clip(rng.normal(rho_mean, tr.rho_jitter, size=n_events), 0.02, 0.98)

    rate = spec.sample_rate_hz
    dur = tr.pulse_duration_s
    for t0, load, rho in zip(times, loads, rhos):
        lo = max(0, int(math.ceil(t0 * rate)))
        hi = min(n - 1, int(math.floor((t0 + dur) * rate)))
        if hi < lo:
            continue
        t = np.arange(lo, hi + 1) / rate
        shape = np.sin(np.pi * (t - t0) / dur)
        pulse_up[lo : hi + 1] += load * rho * shape
        pulse_down[lo : hi + 1] += load * (1.0 - rho) * shape
    return pulse_up, pulse_down


def generate(spec, faults=()):
    """Generate one DaySeries per (cable, day), faults applied.

    Deterministic under ``spec.seed``; the per-(cable, day) streams make the
    output independent of generation order. Each series carries its
    baseline and pulse components in ``meta['components']`` so rupture
    redistribution can be applied exactly.
    """
    spec.validate()
    problems = []
    for f in faults:
        problems.extend(f.validate(spec))
    targets = [f.target for f in faults]
    for t in set(targets):
        if targets.count(t) > 1:
            problems.append(
                f"contradictory faults: {t.render()} appears in more than one fault"
            )
    if problems:
        raise ConfigError("; ".join(problems))

    days = sorted(spec.days)
    n = spec.samples_per_day
    t_seconds = np.arange(n) / spec.sample_rate_hz
    dt = 1.0 / spec.sample_rate_hz

    by_cable = {}
    cable_index = {c: i for i, c in enumerate(spec.cables())}
    for pair_idx, pspec in enumerate(spec.pairs):
        sinusoid = pspec.amplitude_kn * np.sin(
            2.0 * np.pi * t_seconds / SECONDS_PER_DAY + pspec.phase_rad
        )
        up_id, down_id = pspec.pair.members()
        for day_idx, day in enumerate(days):
            pulse_up, pulse_down = _traffic_for_pair_day(spec, pair_idx, day_idx, n)
            for cable, pulses in ((up_id, pulse_up), (down_id, pulse_down)):
                name = cable.render()
                sigma = spec.noise_std_by_cable.get(name, spec.noise_std_kn)
                noise_rng = _rng(spec, _STREAM_NOISE, cable_index[cable], day_idx)
                noise = noise_rng.normal(0.0, sigma, size=n) if sigma > 0 else 0.0
                base = pspec.baseline(cable.upriver)
                values = base + sinusoid + pulses + noise
                by_cable.setdefault(cable, []).append(DaySeries(
                    source=cable, date=day, values=values,
                    meta={
                        "dt": dt,
                        "components": {"baseline": base, "pulses": pulses},
                    },
                ))

    for f in faults:
        if f.kind == "wire_rupture":
            up_id, down_id = f.target.pair.members()
            partner = down_id if f.target == up_id else up_id
            for dmg_day, partner_day in zip(by_cable[f.target], by_cable[partner]):
                if dmg_day.date >= f.onset:
                    new_dmg, new_partner = apply_rupture(
                        dmg_day, partner_day, f.severity
                    )
                    _replace_day(by_cable[f.target], new_dmg)
                    _replace_day(by_cable[partner], new_partner)
        else:
            cable_idx = cable_index[f.target]
            for day_idx, day in enumerate(days):
                series = by_cable[f.target][day_idx]
                if series.date >= f.onset:
                    rng = _rng(spec, _STREAM_FAILURE, cable_idx, day_idx)
                    _replace_day(
                        by_cable[f.target],
                        apply_sensor_failure(series, f.severity, rng=rng),
                    )

    out = []
    for cable in spec.cables():
        out.extend(by_cable[cable])
    return out


def _replace_day(day_list, new_series):
    for i, s in enumerate(day_list):
        if s.date == new_series.date:
            day_list[i] = new_series
            return
    raise UsageError(f"no {new_series.label()} to replace")


def apply_rupture(damaged, partner, severity):
    """Move ``severity`` of the damaged cable's baseline and pulse share onto
    its partner for one day. The pair-sum series is conserved sample-wise;
    sinusoid and noise are untouched. Returns (new_damaged, new_partner)."""
    if not 0.0 <= severity <= 1.0:
        raise ConfigError(f"rupture severity must be in [0, 1], got {severity}")
    for s in (damaged, partner):
        if "components" not in s.meta:
            raise UsageError(
                f"{s.label()}: rupture needs the generator's component records"
            )
    if damaged.date != partner.date:
        raise UsageError("rupture expects the pair's series for the same day")
    if severity == 0.0:
        return damaged, partner

    comp_d = damaged.meta["components"]
    transfer = severity * (comp_d["baseline"] + comp_d["pulses"])
    new_damaged = replace(
        damaged,
        values=damaged.values - transfer,
        meta={**damaged.meta, "components": {
            "baseline": (1.0 - severity) * comp_d["baseline"],
            "pulses": (1.0 - severity) * comp_d["pulses"],
        }},
    )
    comp_p = partner.meta["components"]
    new_partner = replace(
        partner,
        values=partner.values + transfer,
        meta={**partner.meta, "components": {
            "baseline": comp_p["baseline"] + severity * comp_d["baseline"],
            "pulses": comp_p["pulses"] + severity * comp_d["pulses"],
        }},
    )
    return new_damaged, new_partner


def apply_sensor_failure(series, residual, rng=None):
    """Replace one day's record with a flat-lined failure signature: a slow
    random walk around zero with peak-to-peak fluctuation <= ``residual`` kN,
    uncorrelated with traffic."""
    if residual < 0:
        raise ConfigError(f"sensor-failure residual must be >= 0, got {residual}")
    if rng is None:
        rng = np.random.default_rng(0)
    n = series.values.size
    if residual == 0.0:
        values = np.zeros(n)
    else:
        walk = np.cumsum(rng.normal(0.0, 1.0, size=n))
        span = residual * rng.uniform(0.6, 1.0)
        ptp = walk.max() - walk.min()
        if ptp == 0.0:
            values = np.zeros(n)
        else:
            centre = rng.uniform(-0.25, 0.25) * residual
            values = centre + (walk - walk.min()) / ptp * span - span / 2.0
    meta = {k: v for k, v in series.meta.items() if k != "components"}
    meta["sensor_failure"] = {"residual_kn": residual}
    return replace(series, values=values, valid=np.ones(n, dtype=bool),
                   sensor_status="ok", meta=meta)


def write_world(spec, faults, out_dir):
    """Generate and write the world as the ingestible CSV tree; returns the
    list of file paths."""
    from .data import write_day_csv

    days = generate(spec, faults)
    paths = []
    for s in days:
        paths.append(write_day_csv(s, out_dir, dt=1.0 / spec.sample_rate_hz))
    return paths


# ---------------------------------------------------------------------------
# world-spec files
# ---------------------------------------------------------------------------

def world_to_dict(spec, faults=()):
    """JSON-ready description of a world (inverse of world_from_dict)."""
    payload = {
        "pairs": [
            {
                "pair": p.pair.render(),
                "baseline_up_kn": p.baseline_up_kn,
                "baseline_down_kn": p.baseline_down_kn,
                "amplitude_kn": p.amplitude_kn,
                "phase_rad": p.phase_rad,
                "traffic_gain": p.traffic_gain,
                **({"rho_mean": p.rho_mean} if p.rho_mean is not None else {}),
            }
            for p in spec.pairs
        ],
        "traffic": {
            "rate_per_hour": spec.traffic.rate_per_hour,
            "load_mean_kn": spec.traffic.load_mean_kn,
            "load_std_kn": spec.traffic.load_std_kn,
            "pulse_duration_s": spec.traffic.pulse_duration_s,
            "rho_mean": spec.traffic.rho_mean,
            "rho_jitter": spec.traffic.rho_jitter,
            "rate_mod_depth": spec.traffic.rate_mod_depth,
            "rate_mod_phase": spec.traffic.rate_mod_phase,
        },
        "noise_std_kn": spec.noise_std_kn,
        "sample_rate_hz": spec.sample_rate_hz,
        "days": [d.isoformat() for d in spec.days],
        "seed": spec.seed,
    }
    if spec.noise_std_by_cable:
        payload["noise_std_by_cable"] = dict(spec.noise_std_by_cable)
    if faults:
        payload["faults"] = [
            {"kind": f.kind, "target": f.target.render(),
             "onset": f.onset.isoformat(), "severity": f.severity}
            for f in faults
        ]
    return payload


def world_from_dict(payload):
    """Build (BridgeSpec, faults) from a world-spec dictionary."""
    from .data import parse_cable_id, parse_pair_id

    try:
        pairs = [
            PairSpec(
                pair=parse_pair_id(entry["pair"]),
                baseline_up_kn=entry["baseline_up_kn"],
                baseline_down_kn=entry["baseline_down_kn"],
                amplitude_kn=entry.get("amplitude_kn", 0.0),
                phase_rad=entry.get("phase_rad", 0.0),
                traffic_gain=entry.get("traffic_gain", 1.0),
                rho_mean=entry.get("rho_mean"),
            )
            for entry in payload["pairs"]
        ]
        traffic = TrafficSpec(**payload.get("traffic", {}))
        spec = BridgeSpec(
            pairs=pairs,
            traffic=traffic,
            noise_std_kn=payload.get("noise_std_kn", 5.0),
            sample_rate_hz=payload.get("sample_rate_hz", 2.0),
            days=[Date.fromisoformat(d) for d in payload["days"]],
            seed=payload.get("seed", 0),
            noise_std_by_cable=payload.get("noise_std_by_cable", {}),
        )
        faults = [
            FaultSpec(
                kind=entry["kind"],
                target=parse_cable_id(entry["target"]),
                onset=Date.fromisoformat(entry["onset"]),
                severity=entry["severity"],
            )
            for entry in payload.get("faults", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed world spec: {exc}")
    return spec, faults


def load_world_spec(path):
    """Read a world-spec JSON file; returns (BridgeSpec, faults)."""
    import json

    with open(path) as fh:
        payload = json.load(fh)
    return world_from_dict(payload)
