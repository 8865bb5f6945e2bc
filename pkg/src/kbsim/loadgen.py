"""Hardware load-generator model.

Generates Ethernet frames at a fixed rate or from a trace, stamps each
outgoing frame with the emission tick at a configurable payload offset,
and measures per-packet round-trip latency on frames echoed back. Also
hosts the maximum-sustainable-bandwidth search and a synthetic fixed-cost
echo server used to validate the search against an exhaustive sweep.
"""

from __future__ import annotations

import csv
import math
import struct
from collections import deque
from dataclasses import dataclass, field

from .core import MS, NS, SimulationError
from .net import ETH_HEADER, Frame

LOADGEN_MAC = bytes.fromhex("02aa00000001")
SERVER_MAC = bytes.fromhex("02bb00000001")

STAMP_BYTES = 8


@dataclass
class TraceRecord:
    timestamp_ns: int
    size_bytes: int
    payload_hex: str | None = None


def parse_trace(path) -> list[TraceRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "timestamp_ns":
            raise ValueError(f"{path}: expected header timestamp_ns,size_bytes[,payload_hex]")
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            ts, size = int(row[0]), int(row[1])
            payload = row[2].strip() if len(row) > 2 and row[2].strip() else None
            if prev is not None and ts < prev:
                raise ValueError(f"{path}:{lineno}: timestamps must be non-decreasing")
            prev = ts
            records.append(TraceRecord(ts, size, payload))
    return records


@dataclass
class LoadGenConfig:
    mode: str = "static"          # static | trace | search
    rate_gbps: float = 10.0
    frame_size: int = 1500        # includes the 14-byte Ethernet header
    ts_offset: int = 0            # byte offset of the stamp within the payload
    hist_bin_ns: int = 100
    payload_mode: str = "pattern"  # pattern | random
    keep_sent: bool = False
    keep_received: bool = False

    def validate(self):
        if self.frame_size < ETH_HEADER + self.ts_offset + STAMP_BYTES:
            raise ValueError("frame too small for the timestamp at ts_offset")
        if self.mode not in ("static", "trace", "search"):
            raise ValueError(f"unknown loadgen mode {self.mode!r}")
        if self.rate_gbps <= 0:
            raise ValueError("rate must be positive")


@dataclass
class LatencyStats:
    count: int
    mean_ns: float | None
    median_ns: float | None
    stddev_ns: float | None
    p95_ns: float | None
    p99_ns: float | None
    p999_ns: float | None
    min_ns: float | None
    max_ns: float | None
    drop_pct: float
    histogram: list = field(default_factory=list)  # [lower_ns, upper_ns, count]

    def to_dict(self) -> dict:
        return {
            "count": self.count, "mean_ns": self.mean_ns,
            "median_ns": self.median_ns, "stddev_ns": self.stddev_ns,
            "p95_ns": self.p95_ns, "p99_ns": self.p99_ns,
            "p999_ns": self.p999_ns, "min_ns": self.min_ns,
            "max_ns": self.max_ns, "drop_pct": self.drop_pct,
            "histogram": self.histogram,
        }


def nearest_rank(sorted_values, pct: float):
    """Nearest-rank percentile: value at ceil(pct/100 * n), 1-indexed."""
    n = len(sorted_values)
    rank = max(1, math.ceil(pct * n / 100))
    return sorted_values[min(rank, n) - 1]


def compute_stats(samples_ps, tx_count: int, rx_count: int,
                  hist_bin_ns: int) -> LatencyStats:
    drop_pct = 100.0 * (tx_count - rx_count) / tx_count if tx_count else 0.0
    if not samples_ps:
        return LatencyStats(0, None, None, None, None, None, None, None,
                            None, drop_pct, [])
    ns_values = sorted(s / 1000.0 for s in samples_ps)
    n = len(ns_values)
    mean = sum(ns_values) / n
    var = sum((v - mean) ** 2 for v in ns_values) / n  # population form
    hist = {}
    for v in ns_values:
        hist[int(v) // hist_bin_ns] = hist.get(int(v) // hist_bin_ns, 0) + 1
    lo_bin, hi_bin = min(hist), max(hist)
    histogram = [[b * hist_bin_ns, (b + 1) * hist_bin_ns, hist.get(b, 0)]
                 for b in range(lo_bin, hi_bin + 1)]
    return LatencyStats(
        count=n, mean_ns=mean, median_ns=nearest_rank(ns_values, 50),
        stddev_ns=var ** 0.5, p95_ns=nearest_rank(ns_values, 95),
        p99_ns=nearest_rank(ns_values, 99), p999_ns=nearest_rank(ns_values, 99.9),
        min_ns=ns_values[0], max_ns=ns_values[-1], drop_pct=drop_pct,
        histogram=histogram)


class LoadGen:
    """One generator per NIC port, attached to side 0 of its link."""

    def __init__(self, engine, link, cfg: LoadGenConfig, name="loadgen0",
                 seed_tag=None):
        cfg.validate()
        self.engine = engine
        self.link = link
        self.cfg = cfg
        self.name = name
        self.tx_count = 0
        self.rx_count = 0
        self.corrupt = 0
        self.samples = []       # (tx_tick, rx_tick)
        self.sent_payloads = []
        self.received_payloads = []
        self._template = self._make_template(cfg.frame_size)
        self._seq = 0
        self._window_id = 0
        self._rng = engine.rng(seed_tag or name)
        link.attach(0, self)

    @staticmethod
    def _make_template(size: int) -> bytearray:
        data = bytearray([0xA5]) * size
        data[0:6] = SERVER_MAC
        data[6:12] = LOADGEN_MAC
        data[12:14] = b"\x08\x00"
        return data

    # -- emission --------------------------------------------------------------

    @staticmethod
    def gap_ps(frame_size: int, rate_gbps: float) -> float:
        return frame_size * 8 * 1000 / rate_gbps

    def _build_frame(self, size: int, now: int) -> Frame:
        if self.cfg.payload_mode == "random":
            data = bytearray(size)
            data[0:6] = SERVER_MAC
            data[6:12] = LOADGEN_MAC
            data[12:14] = b"\x08\x00"
            data[ETH_HEADER:] = self._rng.randbytes(size - ETH_HEADER)
        elif size == len(self._template):
            data = bytearray(self._template)
        else:
            data = self._make_template(size)
        self.stamp_packet(data, now)
        frame = Frame(data, self._seq)
        self._seq += 1
        return frame

    def stamp_packet(self, data: bytearray, now: int):
        struct.pack_into("<Q", data, ETH_HEADER + self.cfg.ts_offset, now)

    def start_window(self, rate_gbps: float, duration_ps: int):
        """Emit at a constant rate for duration_ps starting now."""
        self._window_id += 1
        window = self._window_id
        start = self.engine.now()
        end = start + duration_ps
        bits1000 = self.cfg.frame_size * 8 * 1000
        state = [0]  # next frame index
        schedule = self.engine.schedule

        def fire(ev):
            now = self.engine.now()
            if window != self._window_id or now >= end:
                return
            i = state[0]
            state[0] = i + 1
            frame = self._build_frame(self.cfg.frame_size, now)
            if self.cfg.keep_sent:
                self.sent_payloads.append(bytes(frame.data))
            self.tx_count += 1
            self.link.send(0, frame)
            nxt = start + int((i + 1) * bits1000 / rate_gbps)
            schedule(nxt - now, fire, target=self.name, kind="emit")

        schedule(0, fire, target=self.name, kind="emit")
        return end

    def start_burst(self, count: int, rate_gbps: float):
        """Emit exactly `count` frames back to back at the given rate."""
        self._window_id += 1
        window = self._window_id
        start = self.engine.now()
        bits1000 = self.cfg.frame_size * 8 * 1000
        state = [0]

        def fire(ev):
            if window != self._window_id or state[0] >= count:
                return
            now = self.engine.now()
            i = state[0]
            state[0] = i + 1
            frame = self._build_frame(self.cfg.frame_size, now)
            if self.cfg.keep_sent:
                self.sent_payloads.append(bytes(frame.data))
            self.tx_count += 1
            self.link.send(0, frame)
            if i + 1 < count:
                nxt = start + int((i + 1) * bits1000 / rate_gbps)
                self.engine.schedule(max(0, nxt - now), fire,
                                     target=self.name, kind="emit")

        self.engine.schedule(0, fire, target=self.name, kind="emit")

    def replay_trace(self, records: list[TraceRecord]):
        start = self.engine.now()
        for rec in records:
            def fire(ev, rec=rec):
                now = self.engine.now()
                if rec.payload_hex:
                    data = bytearray(bytes.fromhex(rec.payload_hex))
                    if len(data) != rec.size_bytes:
                        raise SimulationError("trace payload length mismatch")
                    self.stamp_packet(data, now)
                    frame = Frame(data, self._seq)
                    self._seq += 1
                else:
                    frame = self._build_frame(rec.size_bytes, now)
                if self.cfg.keep_sent:
                    self.sent_payloads.append(bytes(frame.data))
                self.tx_count += 1
                self.link.send(0, frame)
            self.engine.schedule(start + rec.timestamp_ns * NS - self.engine.now(),
                                 fire, target=self.name, kind="emit")

    # -- receive ----------------------------------------------------------------

    def wire_receive(self, frame: Frame):
        now = self.engine.now()
        if self.cfg.keep_received:
            self.received_payloads.append(bytes(frame.data))
        off = ETH_HEADER + self.cfg.ts_offset
        if len(frame.data) < off + STAMP_BYTES:
            self.corrupt += 1
            return
        ts = struct.unpack_from("<Q", frame.data, off)[0]
        if ts > now:  # negative RTT: no plausible stamp
            self.corrupt += 1
            return
        self.rx_count += 1
        self.samples.append((ts, now))

    def on_receive(self, frame: Frame):
        self.wire_receive(frame)

    # -- stats -------------------------------------------------------------------

    def finalize_stats(self) -> LatencyStats:
        return compute_stats([rx - tx for tx, rx in self.samples],
                             self.tx_count, self.rx_count, self.cfg.hist_bin_ns)

    def dump_samples(self, fh):
        fh.write("tx_tick,rx_tick,rtt_ps\n")
        for tx, rx in self.samples:
            fh.write(f"{tx},{rx},{rx - tx}\n")

    def snapshot(self):
        return self.tx_count, self.rx_count


@dataclass
class SearchConfig:
    start_gbps: float = 1.0
    coarse_step_gbps: float = 5.0
    fine_step_gbps: float = 1.0
    hold_window_ms: float = 10.0
    drain_grace_ms: float = 1.0
    zero_drop_required: bool = True
    ceiling_gbps: float = 200.0

    def validate(self):
        if self.fine_step_gbps > self.coarse_step_gbps:
            raise ValueError("fine_step must be <= coarse_step")
        if self.hold_window_ms <= 0:
            raise ValueError("hold_window must be positive")
        if self.start_gbps <= 0 or self.ceiling_gbps < self.start_gbps:
            raise ValueError("bad search rate range")


class SearchableSystem:
    """What bandwidth_search needs from a system under test."""

    def __init__(self, engine, loadgens, drop_counter):
        self.engine = engine
        self.loadgens = loadgens
        self.drop_counter = drop_counter  # callable -> accounted drops


def try_rate(system: SearchableSystem, per_port_gbps: float,
             cfg: SearchConfig) -> bool:
    """One hold window at the given per-port rate; True if drop-free."""
    hold = int(cfg.hold_window_ms * MS)
    grace = int(cfg.drain_grace_ms * MS)
    drops_before = system.drop_counter()
    before = [lg.snapshot() for lg in system.loadgens]
    for lg in system.loadgens:
        lg.start_window(per_port_gbps, hold)
    system.engine.run_until(system.engine.now() + hold + grace)
    drops = system.drop_counter() - drops_before
    if cfg.zero_drop_required and drops > 0:
        return False
    for lg, (tx0, rx0) in zip(system.loadgens, before):
        dtx, drx = lg.tx_count - tx0, lg.rx_count - rx0
        if dtx == 0 or drx < dtx:
            return False
    return True


def bandwidth_search(system: SearchableSystem, cfg: SearchConfig):
    """Ramp coarse, back off, refine fine; returns (per_port_gbps, diagnostic).

    The result is the highest per-port rate on the fine grid that completed
    a hold window with zero accounted drops and a full echo.
    """
    cfg.validate()
    rate = cfg.start_gbps
    last_good = None
    first_fail = None
    while rate <= cfg.ceiling_gbps + 1e-9:
        if try_rate(system, rate, cfg):
            last_good = rate
            if rate >= cfg.ceiling_gbps - 1e-9:
                return rate, "reached configured ceiling without drops"
            rate = min(rate + cfg.coarse_step_gbps, cfg.ceiling_gbps)
        else:
            first_fail = rate
            break
    if last_good is None:
        return 0.0, f"drops at start rate {cfg.start_gbps} Gbps"
    rate = last_good + cfg.fine_step_gbps
    while rate < first_fail - 1e-9:
        if try_rate(system, rate, cfg):
            last_good = rate
            rate += cfg.fine_step_gbps
        else:
            break
    return last_good, "ok"


class SyntheticEchoServer:
    """Fixed-service-time echo server with a bounded queue.

    Capacity for a fixed frame size is exactly bits/service; used to
    validate the search against an exhaustive sweep.
    """

    def __init__(self, engine, link, service_ps: int, queue_cap: int = 512,
                 name="synth"):
        self.engine = engine
        self.link = link
        self.service_ps = service_ps
        self.queue_cap = queue_cap
        self.name = name
        self.drops = 0
        self.echoed = 0
        self._queue = deque()
        self._busy = False
        link.attach(1, self)

    def wire_receive(self, frame: Frame):
        if self.service_ps < 0:  # zero-capacity configuration
            self.drops += 1
            return
        if len(self._queue) >= self.queue_cap:
            self.drops += 1
            return
        self._queue.append(frame)
        if not self._busy:
            self._serve_next()

    def _serve_next(self):
        if not self._queue:
            self._busy = False
            return
        self._busy = True
        frame = self._queue.popleft()
        self.engine.schedule(self.service_ps,
                             lambda ev: self._done(frame),
                             target=self.name, kind="serve")

    def _done(self, frame: Frame):
        data = bytearray(frame.data)
        data[0:6], data[6:12] = data[6:12], data[0:6]
        self.link.send(1, Frame(data, frame.seq))
        self.echoed += 1
        self._serve_next()


def synthetic_system(seed: int, capacity_gbps: float, frame_size: int,
                     link_gbps: float = 200.0, queue_cap: int = 64):
    """A loadgen wired to a SyntheticEchoServer of known capacity."""
    from .core import Engine, US
    from .net import EtherLink
    engine = Engine(seed)
    link = EtherLink(engine, link_gbps, US)
    lg = LoadGen(engine, link, LoadGenConfig(mode="search", frame_size=frame_size))
    if capacity_gbps <= 0:
        service = -1
    else:
        service = int(frame_size * 8 * 1000 / capacity_gbps)
    server = SyntheticEchoServer(engine, link, service, queue_cap)
    system = SearchableSystem(engine, [lg], lambda: server.drops)
    return system, server
