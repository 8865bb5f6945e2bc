"""System assembly and experiment modes (run / search / sweep / burst study)."""

from __future__ import annotations

import json
import time

from . import REPORT_SCHEMA_VERSION, __version__
from .config import KNOB_ORDER, apply_knob, validate
from .core import MS, NS, US, Engine
from .loadgen import (LoadGen, LoadGenConfig, SearchableSystem, SearchConfig,
                      bandwidth_search, parse_trace)
from .mem import CACHE_BACKEND, CacheLevelConfig, MemoryModel
from .net import EtherLink
from .nic import Nic, NicConfig
from .pci import PciConfigSpace
from .stack import (CoreModel, DeviceBinding, KernelEchoStack, KernelPathCosts,
                    Mempool, PmdConfig, PipelineRxPoller, PipelineWorker,
                    RunToCompletionPoller, SerializedResource, bind_device)

MEMPOOL_BASE = 0x1000_0000
MEMPOOL_STRIDE = 0x0100_0000
RX_RING_BASE = 0x8000_0000
TX_RING_OFFSET = 0x0008_0000
RING_STRIDE = 0x0010_0000


class System:
    def __init__(self, cfg: dict):
        validate(cfg)
        self.cfg = cfg
        self.engine = Engine(cfg["seed"])
        freq_hz = int(cfg["core.freq_ghz"] * 1_000_000_000)
        self.freq_hz = freq_hz
        nics = cfg["topology.nic_count"]
        cores = cfg["topology.core_count"]

        self.mem = MemoryModel(
            ncores=cores,
            l1=CacheLevelConfig(cfg["mem.l1d_kb"] * 1024, cfg["mem.l1_assoc"],
                                cfg["mem.l1_latency_cycles"]),
            l2=CacheLevelConfig(cfg["mem.l2_kb"] * 1024, cfg["mem.l2_assoc"],
                                cfg["mem.l2_latency_cycles"]),
            llc=CacheLevelConfig(cfg["mem.llc_kb"] * 1024, cfg["mem.llc_assoc"],
                                 cfg["mem.llc_latency_cycles"],
                                 dca_way_quota=cfg["mem.dca_way_quota"]),
            freq_hz=freq_hz,
            dram_latency_ns=cfg["mem.dram_latency_ns"],
            dram_dma_block_ns=cfg["mem.dram_dma_block_ns"],
            llc_dma_block_ns=cfg["mem.llc_dma_block_ns"],
            dma_contention=cfg["mem.dma_contention"],
            channels=cfg["mem.channels"],
            interval_ns=cfg["mem.interval_ns"])
        self.mem.set_active_dma_streams(nics)

        self.cores = [CoreModel(self.engine, i, freq_hz) for i in range(cores)]
        self.lock = SerializedResource(cfg["kernel.stack_lock_ns"] * NS)
        self.nics = []
        self.links = []
        self.loadgens = []
        self.bindings = []
        self.pollers = []
        self.kernel_stacks = []
        self.mempools = []

        kind = cfg["stack.kind"]
        pmd_cfg = PmdConfig(
            burst_size=cfg["pmd.burst_size"],
            poll_iteration=cfg["pmd.poll_iteration"],
            per_packet_process=cfg["pmd.per_packet_process"],
            mode=cfg["pmd.mode"],
            pipeline_ring_capacity=cfg["pmd.pipeline_ring_capacity"])
        pmd_cfg.validate()
        kcosts = KernelPathCosts(
            irq_entry=cfg["kernel.irq_entry"],
            softirq_per_packet=cfg["kernel.softirq_per_packet"],
            syscall=cfg["kernel.syscall"],
            copy_per_byte=cfg["kernel.copy_per_byte"],
            context_switch=cfg["kernel.context_switch"],
            socket_overhead_per_packet=cfg["kernel.socket_overhead_per_packet"],
            stack_lock_ns=cfg["kernel.stack_lock_ns"],
            backlog_limit=cfg["kernel.backlog_limit"])

        for i in range(nics):
            pci = PciConfigSpace()
            nic = Nic(self.engine, self.mem, pci,
                      NicConfig(wb_threshold=cfg["nic.wb_threshold"],
                                desc_cache_capacity=cfg["nic.desc_cache_capacity"],
                                rx_ring_size=cfg["nic.rx_ring_size"],
                                tx_ring_size=cfg["nic.tx_ring_size"],
                                dma_fixed_ns=cfg["nic.dma_fixed_ns"],
                                flush_timeout_us=cfg["nic.flush_timeout_us"],
                                dca_enabled=cfg["mem.dca_enabled"]),
                      name=f"nic{i}")
            link = EtherLink(self.engine, cfg["link.bandwidth_gbps"],
                             int(cfg["link.latency_us"] * US))
            link.attach(1, nic)
            nic.link = link
            nic.link_side = 1
            lg = LoadGen(self.engine, link,
                         LoadGenConfig(mode=cfg["loadgen.mode"],
                                       rate_gbps=cfg["loadgen.rate_gbps"],
                                       frame_size=cfg["loadgen.frame_size"],
                                       ts_offset=cfg["loadgen.ts_offset"],
                                       hist_bin_ns=cfg["loadgen.hist_bin_ns"]),
                         name=f"loadgen{i}")
            pool = Mempool(MEMPOOL_BASE + i * MEMPOOL_STRIDE,
                           cfg["mempool.buffer_count"],
                           cfg["mempool.buffer_size"])
            binding = bind_device(nic, kind, pool,
                                  rx_base=RX_RING_BASE + i * RING_STRIDE,
                                  tx_base=RX_RING_BASE + i * RING_STRIDE + TX_RING_OFFSET)
            self.nics.append(nic)
            self.links.append(link)
            self.loadgens.append(lg)
            self.bindings.append(binding)
            self.mempools.append(pool)

            if kind == "pmd" and pmd_cfg.mode == "run_to_completion":
                poller = RunToCompletionPoller(self.engine, self.cores[i],
                                               binding, self.mem, pmd_cfg)
                poller.start()
                self.pollers.append(poller)
            elif kind == "pmd":
                worker = PipelineWorker(self.engine, self.cores[2 * i + 1],
                                        binding, self.mem, pmd_cfg)
                rx = PipelineRxPoller(self.engine, self.cores[2 * i], binding,
                                      pmd_cfg, worker)
                worker.ring = rx.ring
                worker.start()
                rx.start()
                self.pollers.extend([rx, worker])
            else:
                stack = KernelEchoStack(self.engine, self.cores[i], binding,
                                        kcosts, self.lock)
                self.kernel_stacks.append(stack)

    # -- accounting -----------------------------------------------------------

    def accounted_drops(self) -> int:
        total = sum(nic.rx_dropped for nic in self.nics)
        total += sum(b.runt_drops + b.tx_drops for b in self.bindings)
        total += sum(getattr(p, "ring_drops", 0) for p in self.pollers)
        total += sum(k.backlog_drops for k in self.kernel_stacks)
        return total

    def searchable(self) -> SearchableSystem:
        return SearchableSystem(self.engine, self.loadgens, self.accounted_drops)

    def stack_stats(self) -> dict:
        return {
            "runt_drops": sum(b.runt_drops for b in self.bindings),
            "tx_drops": sum(b.tx_drops for b in self.bindings),
            "ring_drops": sum(getattr(p, "ring_drops", 0) for p in self.pollers),
            "backlog_drops": sum(k.backlog_drops for k in self.kernel_stacks),
            "copies_rx": sum(b.copies_rx for b in self.bindings),
            "copies_tx": sum(b.copies_tx for b in self.bindings),
            "idle_polls": sum(getattr(p, "idle_polls", 0) for p in self.pollers),
        }

    def report(self, mode: str, extra: dict | None = None,
               wall_clock: float | None = None) -> dict:
        tx = sum(lg.tx_count for lg in self.loadgens)
        rx = sum(lg.rx_count for lg in self.loadgens)
        l2_total, llc_total = self.mem.series.totals()
        l2_peak, llc_peak = self.mem.series.peaks()
        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "generator": {"name": "kbsim", "version": __version__,
                          "cache_backend": CACHE_BACKEND},
            "mode": mode,
            "config": {k: self.cfg[k] for k in sorted(self.cfg)},
            "results": {
                "per_nic": [nic.stats() for nic in self.nics],
                "per_core": [core.stats() for core in self.cores],
                "stack": self.stack_stats(),
                "latency": [lg.finalize_stats().to_dict() for lg in self.loadgens],
                "corrupt_frames": sum(lg.corrupt for lg in self.loadgens),
                "writebacks": {"l2_total": l2_total, "llc_total": llc_total,
                               "l2_peak_per_interval": l2_peak,
                               "llc_peak_per_interval": llc_peak},
                "conservation": {"tx": tx, "rx": rx,
                                 "accounted_drops": self.accounted_drops()},
                "memory": self.mem.counters(),
                "events_processed": self.engine.events_processed,
            },
        }
        if extra:
            report["results"].update(extra)
        report["wall_clock_seconds"] = wall_clock
        return report


def search_config(cfg: dict) -> SearchConfig:
    return SearchConfig(
        start_gbps=cfg["search.start_gbps"],
        coarse_step_gbps=cfg["search.coarse_step_gbps"],
        fine_step_gbps=cfg["search.fine_step_gbps"],
        hold_window_ms=cfg["search.hold_window_ms"],
        drain_grace_ms=cfg["search.drain_grace_ms"],
        zero_drop_required=cfg["search.zero_drop_required"],
        ceiling_gbps=cfg["link.bandwidth_gbps"])


def run_static(cfg: dict) -> tuple[dict, System]:
    t0 = time.monotonic()
    system = System(cfg)
    duration = int(cfg["duration_ms"] * MS)
    grace = int(cfg["search.drain_grace_ms"] * MS)
    if cfg["loadgen.mode"] == "trace":
        records = parse_trace(cfg["loadgen.trace_path"])
        for lg in system.loadgens:
            lg.replay_trace(records)
        end = (records[-1].timestamp_ns * NS if records else 0)
        system.engine.run_until(end + grace)
    else:
        for lg in system.loadgens:
            lg.start_window(cfg["loadgen.rate_gbps"], duration)
        system.engine.run_until(duration + grace)
    report = system.report("run", wall_clock=round(time.monotonic() - t0, 3))
    return report, system


def run_search(cfg: dict) -> tuple[dict, System]:
    t0 = time.monotonic()
    system = System(cfg)
    per_port, diagnostic = bandwidth_search(system.searchable(), search_config(cfg))
    nics = cfg["topology.nic_count"]
    extra = {"search": {
        "max_sustainable_gbps_per_port": per_port,
        "max_sustainable_gbps": per_port * nics,
        "diagnostic": diagnostic,
    }}
    report = system.report("search", extra,
                           wall_clock=round(time.monotonic() - t0, 3))
    return report, system


def _pow2_at_least(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def burst_study_config(cfg: dict, burst: int) -> dict:
    """Derive the per-burst configuration: DCA on, rings deep enough that
    the whole 1024-packet burst fits while the application is waiting."""
    sub = dict(cfg)
    sub["pmd.burst_size"] = burst
    sub["mem.dca_enabled"] = True
    sub["stack.kind"] = "pmd"
    sub["pmd.mode"] = "run_to_completion"
    ring = max(256, _pow2_at_least(2 * burst))
    sub["nic.rx_ring_size"] = ring
    sub["nic.tx_ring_size"] = ring
    sub["mempool.buffer_count"] = max(sub["mempool.buffer_count"], 4 * ring)
    validate(sub)
    return sub


def run_burst_study(cfg: dict, bursts: list[int]):
    """Inject a fixed packet burst per burst-size setting; returns
    {burst: (report, series_rows)}."""
    out = {}
    packets = cfg["burst.packets"]
    for burst in bursts:
        sub = burst_study_config(cfg, burst)
        t0 = time.monotonic()
        system = System(sub)
        # Hold processing until the full burst has been received when the
        # burst size spans the whole injection.
        if burst >= packets:
            _install_accumulating_poller(system, packets)
        for lg in system.loadgens:
            lg.start_burst(packets, sub["burst.rate_gbps"])
        system.engine.run()
        series = system.mem.interval_stats()
        report = system.report("burst_study",
                               {"burst_size": burst,
                                "packets": packets,
                                "series_rows": len(series.rows())},
                               wall_clock=round(time.monotonic() - t0, 3))
        out[burst] = (report, series.rows())
    return out


def _install_accumulating_poller(system: System, threshold: int):
    """Make the poller wait until `threshold` packets are ring-visible
    before its first harvest (the large-burst forwarding regime)."""
    poller = system.pollers[0]
    binding = poller.binding
    orig_harvest = binding.rx_harvest
    state = {"armed": True}

    def gated(limit=None):
        if state["armed"]:
            ring = binding.rx_ring
            visible = 0
            idx = binding._rx_next
            while ring.descs[idx].dd and visible < threshold:
                visible += 1
                idx = (idx + 1) % ring.size
            if visible < threshold:
                return []
            state["armed"] = False
        return orig_harvest(limit)

    binding.rx_harvest = gated


def run_sweep_point(args):
    label, cfg = args
    try:
        report, _ = run_search(cfg)
        gbps = report["results"]["search"]["max_sustainable_gbps"]
        return label, gbps, report, None
    except Exception as exc:  # per-point failures recorded, sweep continues
        return label, None, None, repr(exc)


def sweep_points(base_cfg: dict, axis: str, nics=(1, 2, 3, 4),
                 stacks=("pmd", "kernel"), knobs=None):
    """Expand a sweep axis into (label, config) grid points."""
    points = []
    if axis == "nics":
        for stack in stacks:
            for n in nics:
                cfg = dict(base_cfg)
                cfg["stack.kind"] = stack
                cfg["topology.nic_count"] = n
                cfg["topology.core_count"] = max(
                    cfg["topology.core_count"],
                    n * (2 if stack == "pmd" and cfg["pmd.mode"] == "pipeline" else 1))
                cfg["loadgen.mode"] = "search"
                points.append((f"{n}xnic-{stack}", cfg))
    elif axis == "knobs":
        knobs = KNOB_ORDER if knobs is None else knobs
        for stack in stacks:
            cfg = dict(base_cfg)
            cfg["stack.kind"] = stack
            cfg["loadgen.mode"] = "search"
            points.append((f"2ghz-base-{stack}", dict(cfg)))
            for knob in knobs:
                apply_knob(cfg, knob)  # cumulative
                points.append((f"{knob}-{stack}", dict(cfg)))
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    for _, cfg in points:
        validate(cfg)
    return points


def run_sweep(base_cfg: dict, axis: str, nics=(1, 2, 3, 4),
              stacks=("pmd", "kernel"), knobs=None, jobs: int = 1):
    points = sweep_points(base_cfg, axis, nics, stacks, knobs)
    if jobs > 1:
        import multiprocessing
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(run_sweep_point, points)
    else:
        results = [run_sweep_point(p) for p in points]
    return results


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"
