"""The pegboard benchmark: configuration, wiring, and the run loop.

Topology A runs one physics node over the whole region; topology B splits
the region into two partitions on separate physics nodes, either through
the middle of every box (`center_x`, the worst case: most balls migrate)
or between the boxes (`between_boxes`: zero border traffic).  All
cross-node traffic flows through the dispatcher over simulated links, and
every sample tick the run audits ball conservation across creation
queues, active sets, in-flight transfers and terminal states.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .. import __version__ as _code_version
from ..actors import (
    DispatcherActor,
    GaltonGeometry,
    PhysicsActor,
    RunLedger,
    ScriptActor,
)
from ..engine import Engine, seconds_to_us
from ..netsim import Network
from ..partition import PartitionMap, RegionSpec
from ..stats import BucketHistogram, EmpiricalBaseline, rmse, theoretical_distribution
from .report import ExperimentReport, NodeSeries


class ConfigInvalid(ValueError):
    pass


class BoundsDoNotBracket(ValueError):
    """The bisection bounds do not straddle the stability threshold."""


class ConservationViolation(AssertionError):
    """A sample tick found balls unaccounted for."""


SCRIPT = "script"
DISPATCHER = "dispatcher"

TOPOLOGY_A = "A"
TOPOLOGY_B = "B"

SPLIT_CENTER_X = "center_x"
SPLIT_BETWEEN_BOXES = "between_boxes"

#: Runs count as real-time while the final-quarter mean interval stays
#: within this factor of the nominal descent time.
STABILITY_FACTOR = 1.1


@dataclass(frozen=True)
class GaltonExperimentConfig:
    geometry: GaltonGeometry = field(default_factory=GaltonGeometry)
    topology: str = TOPOLOGY_A
    split: str = SPLIT_CENTER_X
    period_t_s: float = 6.0
    capacity_c: int = 6000
    capacity_factor: float = 1.0
    tick_len_s: float = 0.1
    duration_cap_s: float = 21600.0
    epsilon_max_s: float = 0.05
    sample_period_s: float = 5.0
    link_latency_s: float = 0.001
    link_byte_rate: float = 1_250_000.0
    link_jitter_s: float = 0.0
    link_overrides: dict = field(default_factory=dict)
    message_sizes: dict = field(default_factory=dict)
    region_width_m: float = 256.0
    region_depth_m: float = 256.0
    microcell_m: float = 16.0
    seed: int = 0

    def validate(self) -> None:
        if self.topology not in (TOPOLOGY_A, TOPOLOGY_B):
            raise ConfigInvalid(f"unknown topology {self.topology!r}")
        if self.topology == TOPOLOGY_B and self.split not in (
                SPLIT_CENTER_X, SPLIT_BETWEEN_BOXES):
            raise ConfigInvalid(f"unknown split {self.split!r}")
        if self.period_t_s <= 0:
            raise ConfigInvalid("period_t_s must be positive")
        if self.capacity_c < 1 or self.effective_capacity < 1:
            raise ConfigInvalid("capacity must be >= 1")
        if self.tick_len_s <= 0 or self.sample_period_s <= 0:
            raise ConfigInvalid("tick and sample periods must be positive")
        if self.duration_cap_s <= 0:
            raise ConfigInvalid("duration cap must be positive")
        if self.link_byte_rate <= 0 or self.link_latency_s < 0:
            raise ConfigInvalid("bad link parameters")
        try:
            self.region()
        except ValueError as e:
            raise ConfigInvalid(str(e)) from e

    def region(self) -> RegionSpec:
        return RegionSpec(self.region_width_m, self.region_depth_m, self.microcell_m)

    @property
    def effective_capacity(self) -> int:
        return max(1, round(self.capacity_c * self.capacity_factor))

    def physics_nodes(self) -> list[str]:
        if self.topology == TOPOLOGY_A:
            return ["physics-1"]
        return ["physics-1", "physics-2"]

    def build_partition_map(self) -> PartitionMap:
        region = self.region()
        if self.topology == TOPOLOGY_A:
            return PartitionMap.single(region, 1, "physics-1")
        if self.split == SPLIT_CENTER_X:
            return PartitionMap.split_x(region, region.width_m / 2,
                                        (1, "physics-1"), (2, "physics-2"))
        return PartitionMap.split_y(region, region.depth_m / 2,
                                    (1, "physics-1"), (2, "physics-2"))

    # ---- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "geometry": {
                "n_levels": self.geometry.n_levels,
                "boxes": self.geometry.boxes,
                "rows_per_box": self.geometry.rows_per_box,
                "droppers_per_row": self.geometry.droppers_per_row,
                "balls_per_dropper": self.geometry.balls_per_dropper,
                "row_offset_buckets": self.geometry.row_offset_buckets,
                "nominal_descent_s": self.geometry.nominal_descent_s,
            },
            "topology": self.topology,
            "split": self.split,
            "period_t_s": self.period_t_s,
            "capacity_c": self.capacity_c,
            "capacity_factor": self.capacity_factor,
            "tick_len_s": self.tick_len_s,
            "duration_cap_s": self.duration_cap_s,
            "epsilon_max_s": self.epsilon_max_s,
            "sample_period_s": self.sample_period_s,
            "link_latency_s": self.link_latency_s,
            "link_byte_rate": self.link_byte_rate,
            "link_jitter_s": self.link_jitter_s,
            "link_overrides": self.link_overrides,
            "message_sizes": self.message_sizes,
            "region_width_m": self.region_width_m,
            "region_depth_m": self.region_depth_m,
            "microcell_m": self.microcell_m,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaltonExperimentConfig":
        d = dict(d)
        geo = d.pop("geometry", {})
        cfg = cls(geometry=GaltonGeometry(**geo), **d)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "GaltonExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ----------------------------------------------------------------------
# wiring and run loop
# ----------------------------------------------------------------------

def _link_params(config: GaltonExperimentConfig, src: str,
                 dst: str) -> tuple[float, float, float]:
    """Latency, byte rate and jitter for a link, honouring overrides.

    Override keys: exact "src->dst", or the class keys
    "dispatcher->physics" / "physics->dispatcher" covering every physics node.
    """
    latency = config.link_latency_s
    rate = config.link_byte_rate
    jitter = config.link_jitter_s
    candidates = [f"{src}->{dst}"]
    if src == DISPATCHER and dst.startswith("physics"):
        candidates.append("dispatcher->physics")
    if src.startswith("physics") and dst == DISPATCHER:
        candidates.append("physics->dispatcher")
    for key in candidates:
        o = config.link_overrides.get(key)
        if o:
            latency = o.get("latency_s", latency)
            rate = o.get("byte_rate", rate)
            jitter = o.get("jitter_s", jitter)
            break
    return latency, rate, jitter


def run_galton(config: GaltonExperimentConfig,
               baseline: Optional[EmpiricalBaseline] = None) -> ExperimentReport:
    """Run one benchmark experiment to completion or the duration cap."""
    config.validate()
    geometry = config.geometry
    engine = Engine(seed=config.seed, epsilon_max_s=config.epsilon_max_s)
    network = Network(engine, config.message_sizes or None)
    pmap = config.build_partition_map()
    ledger = RunLedger(geometry.bucket_count)

    physics_ids = config.physics_nodes()
    for src, dst in [(SCRIPT, DISPATCHER), (DISPATCHER, SCRIPT)] + \
            [(DISPATCHER, p) for p in physics_ids] + \
            [(p, DISPATCHER) for p in physics_ids]:
        latency, rate, jitter = _link_params(config, src, dst)
        network.add_link(src, dst, latency, rate, jitter_s=jitter)

    script = ScriptActor(SCRIPT, engine, network, DISPATCHER, geometry,
                         config.period_t_s, ledger)
    dispatcher = DispatcherActor(DISPATCHER, engine, network, pmap, geometry,
                                 subscribers={"delete": [SCRIPT], "update": [SCRIPT]},
                                 ledger=ledger)
    physics = {}
    for pid, node in sorted(pmap.partitions.items()):
        physics[node] = PhysicsActor(node, pid, pmap, geometry,
                                     config.effective_capacity, config.tick_len_s,
                                     engine, network, DISPATCHER, ledger)
    network.register_handler(SCRIPT, script.on_message)
    network.register_handler(DISPATCHER, dispatcher.on_message)
    for node, actor in physics.items():
        network.register_handler(node, actor.on_message)

    script.start()

    sample_us = seconds_to_us(config.sample_period_s)
    cap_us = seconds_to_us(config.duration_cap_s)
    node_order = [SCRIPT, DISPATCHER] + physics_ids
    series = {n: NodeSeries() for n in node_order}
    times_s: list[float] = []
    peak_balls = 0
    hit_cap = False
    t = 0
    collection_cursor = 0

    while True:
        t = min(t + sample_us, cap_us)
        engine.run_until(t)
        times_s.append(t / 1e6)
        network.sample_queues(t)
        # per-node interval means over the elapsed window
        window: dict[str, list[int]] = {n: [] for n in physics_ids}
        while collection_cursor < len(ledger.collections):
            ct, interval_us, node, _bucket = ledger.collections[collection_cursor]
            if ct > t:
                break
            window[node].append(interval_us)
            collection_cursor += 1
        for n in node_order:
            s = series[n]
            if n == SCRIPT:
                s.balls_in_scene.append(script.replica.live_count())
                s.load_proxy.append(None)
                s.mean_interval_s.append(None)
                s.msgs_sent.append(script.msgs_sent)
                s.msgs_recv.append(0)
            elif n == DISPATCHER:
                s.balls_in_scene.append(None)
                s.load_proxy.append(None)
                s.mean_interval_s.append(None)
                s.msgs_sent.append(dispatcher.msgs_sent)
                s.msgs_recv.append(dispatcher.msgs_recv)
            else:
                actor = physics[n]
                s.balls_in_scene.append(actor.active_count)
                s.load_proxy.append(actor.load_proxy)
                w = window[n]
                s.mean_interval_s.append(sum(w) / len(w) / 1e6 if w else None)
                s.msgs_sent.append(actor.msgs_sent)
                s.msgs_recv.append(actor.msgs_recv)
        falling = sum(a.active_count for a in physics.values())
        peak_balls = max(peak_balls, falling)
        if not ledger.conservation_holds(falling):
            raise ConservationViolation(
                f"t={t/1e6}s: created={ledger.created} != pending="
                f"{ledger.pending_creates} + falling={falling} + in_flight="
                f"{ledger.transfers_in_flight} + collected={ledger.collected}"
                f" + discarded={ledger.discarded}"
            )
        ghosts = sum(a.ghost_count for a in physics.values())
        acked = ledger.migrations_completed
        if ghosts != ledger.transfers_sent - acked:
            raise ConservationViolation(
                f"t={t/1e6}s: {ghosts} ghosts vs "
                f"{ledger.transfers_sent - acked} unacked transfers"
            )
        done = (script.exhausted
                and ledger.collected + ledger.discarded == ledger.created)
        if done:
            break
        if t >= cap_us:
            hit_cap = True
            break

    end_time_s = t / 1e6
    expected = theoretical_distribution(geometry).expected
    histogram = BucketHistogram(ledger.histogram.copy())
    intervals = np.array([c[1] for c in ledger.collections], dtype=float)
    interval_mean_s = float(intervals.mean() / 1e6) if len(intervals) else float("nan")
    rmse_th = rmse(histogram, expected)
    rmse_base = None
    baseline_mean = baseline_sd = None
    if baseline is not None:
        if baseline.geometry_hash != geometry.geometry_hash():
            raise ConfigInvalid("baseline was captured for a different geometry")
        rmse_base = rmse(histogram, baseline.bucket_mean)
        baseline_mean = baseline.bucket_mean
        baseline_sd = baseline.bucket_sd

    link_totals = {
        link.link_id: {
            "sent_count": link.sent_count,
            "delivered_count": link.delivered_count,
            "sent_bytes": link.sent_bytes,
            "delivered_bytes": link.delivered_bytes,
        }
        for link in network.links()
    }

    return ExperimentReport(
        config=config.to_dict(),
        config_hash=config.config_hash(),
        seed=config.seed,
        code_version=_code_version,
        geometry_hash=geometry.geometry_hash(),
        nominal_descent_s=geometry.nominal_descent_s,
        times_s=times_s,
        nodes=series,
        physics_nodes=physics_ids,
        queue_samples=list(network.samples),
        link_totals=link_totals,
        histogram=histogram,
        discarded=ledger.discarded,
        created_total=ledger.created,
        collected_total=ledger.collected,
        collections=list(ledger.collections),
        interval_mean_s=interval_mean_s,
        peak_load_proxy=max(a.peak_load for a in physics.values()),
        peak_balls_in_scene=peak_balls,
        migrations_total=ledger.transfers_sent,
        migrated_unique=len(ledger.migrated_entities),
        rmse_theoretical=rmse_th,
        rmse_baseline=rmse_base,
        end_time_s=end_time_s,
        hit_cap=hit_cap,
        audit_ok=True,
        expected_theoretical=expected,
        baseline_mean=baseline_mean,
        baseline_sd=baseline_sd,
    )


def run_galton_series(config: GaltonExperimentConfig, seeds: list[int],
                      capacity_jitter_frac: float = 0.0) -> list[ExperimentReport]:
    """Repeat a configuration over seeds, optionally jittering capacity.

    Jitter applies evenly spaced per-run factors spanning
    1 +- capacity_jitter_frac, so "+-50% per run" means the k runs cover
    0.5x .. 1.5x capacity deterministically.
    """
    reports = []
    k = len(seeds)
    for i, seed in enumerate(seeds):
        factor = 1.0
        if capacity_jitter_frac and k > 1:
            factor = 1.0 + capacity_jitter_frac * (2.0 * i / (k - 1) - 1.0)
        cfg = replace(config, seed=seed, capacity_factor=config.capacity_factor * factor)
        reports.append(run_galton(cfg))
    return reports


# ----------------------------------------------------------------------
# scalability search
# ----------------------------------------------------------------------

@dataclass
class SearchResult:
    t_star_s: float
    probes: list[tuple[float, bool, Optional[float]]]


def _is_stable(report: ExperimentReport, factor: float = STABILITY_FACTOR) -> bool:
    """Real-time predicate: final-quarter mean interval within factor x nominal."""
    mean = report.final_quarter_interval_mean()
    if mean is None:
        return False
    return mean <= factor * report.nominal_descent_s


def max_sustainable_rate(config: GaltonExperimentConfig, t_lo_s: float,
                         t_hi_s: float, iterations: int = 8) -> SearchResult:
    """Bisect the drop period for the fastest still-stable schedule.

    Requires the bracket to straddle stability: unstable at t_lo, stable at
    t_hi.  Returns the smallest stable period found.
    """
    if not 0 < t_lo_s < t_hi_s:
        raise ConfigInvalid("need 0 < t_lo < t_hi")
    if iterations < 8:
        raise ConfigInvalid("at least 8 bisection iterations required")
    probes: list[tuple[float, bool, Optional[float]]] = []

    def probe(t: float) -> bool:
        report = run_galton(replace(config, period_t_s=t))
        stable = _is_stable(report)
        probes.append((t, stable, report.final_quarter_interval_mean()))
        return stable

    if not probe(t_hi_s):
        raise BoundsDoNotBracket(f"t_hi={t_hi_s} is not stable")
    if probe(t_lo_s):
        raise BoundsDoNotBracket(f"t_lo={t_lo_s} is already stable")
    lo, hi = t_lo_s, t_hi_s
    for _ in range(iterations):
        mid = (lo + hi) / 2.0
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return SearchResult(hi, probes)


def rmse_envelope(config: GaltonExperimentConfig, seeds: list[int],
                  quantile: float = 0.99) -> tuple[float, list[float]]:
    """Monte Carlo acceptance envelope: RMSE quantile over unstressed runs."""
    values = []
    for seed in seeds:
        report = run_galton(replace(config, seed=seed))
        values.append(report.rmse_theoretical)
    return float(np.quantile(values, quantile)), values
