"""Cache hierarchy and DRAM timing model.

State (tags, LRU, dirtiness, writeback counters) lives in a cache core
selected at import: the compiled `kbsim._cachecore` when the extension
built, else the pure-Python `kbsim._cachecore_py`. Set
KBSIM_CACHE_BACKEND=python|cython to force one (the benchmark does).

Latency rules:
- CPU accesses pay the sum of traversed-level hit latencies, plus the
  DRAM latency on a full miss.
- DMA moves data in 64-byte blocks through a streaming engine; each block
  costs a fixed service time that depends on where it lands (LLC with DCA,
  DRAM otherwise). DRAM block service is scaled up by a contention factor
  per additional active NIC DMA stream and down by the memory channel
  count. Bandwidth is never modeled as a hard cap, only as latency.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .core import NS

_forced = os.environ.get("KBSIM_CACHE_BACKEND")
if _forced == "python":
    from . import _cachecore_py as _backend
elif _forced == "cython":
    from . import _cachecore as _backend  # type: ignore[no-redef]
else:
    try:
        from . import _cachecore as _backend  # type: ignore[no-redef]
    except ImportError:
        from . import _cachecore_py as _backend  # type: ignore[no-redef]

CACHE_BACKEND = _backend.__name__.rsplit("_", 1)[-1]  # "cachecore" is cython
CACHE_BACKEND = "python" if _backend.__name__.endswith("_py") else "cython"

BLOCK = 64
LEVEL_NAMES = {1: "L1", 2: "L2", 3: "LLC", 4: "DRAM"}


@dataclass
class CacheLevelConfig:
    size_bytes: int
    associativity: int
    hit_latency_cycles: int
    block: int = BLOCK
    inclusive: bool = False
    dca_way_quota: int = 0

    @property
    def sets(self) -> int:
        return self.size_bytes // (self.associativity * self.block)

    def validate(self, name):
        if self.size_bytes % (self.associativity * self.block) != 0:
            raise ValueError(f"{name}: size not divisible by assoc*block")
        if self.dca_way_quota > self.associativity:
            raise ValueError(f"{name}: dca_way_quota exceeds associativity")


@dataclass(slots=True)
class AccessResult:
    latency: int  # ps
    hit_level: str
    writebacks_triggered: dict


@dataclass
class WritebackSeries:
    interval_ps: int
    l2: dict = field(default_factory=dict)   # interval idx -> count
    llc: dict = field(default_factory=dict)

    def record(self, now, l2_delta, llc_delta):
        if l2_delta == 0 and llc_delta == 0:
            return
        idx = now // self.interval_ps
        if l2_delta:
            self.l2[idx] = self.l2.get(idx, 0) + l2_delta
        if llc_delta:
            self.llc[idx] = self.llc.get(idx, 0) + llc_delta

    def totals(self):
        return sum(self.l2.values()), sum(self.llc.values())

    def peaks(self):
        return (max(self.l2.values(), default=0),
                max(self.llc.values(), default=0))

    def rows(self):
        """Contiguous (interval_start_ns, l2, llc) rows covering the data."""
        if not self.l2 and not self.llc:
            return []
        last = max(list(self.l2) + list(self.llc))
        out = []
        for idx in range(last + 1):
            out.append((idx * self.interval_ps // NS,
                        self.l2.get(idx, 0), self.llc.get(idx, 0)))
        return out


class MemoryModel:
    def __init__(self, ncores, l1: CacheLevelConfig, l2: CacheLevelConfig,
                 llc: CacheLevelConfig, freq_hz: int,
                 dram_latency_ns=100, dram_dma_block_ns=10.0,
                 llc_dma_block_ns=3.0, dma_contention=0.2, channels=1,
                 interval_ns=1000):
        l1.validate("l1")
        l2.validate("l2")
        llc.validate("llc")
        self.ncores = ncores
        self.l1, self.l2, self.llc = l1, l2, llc
        self.core = _backend.CacheCore(
            ncores, l1.sets, l1.associativity, l2.sets, l2.associativity,
            llc.sets, llc.associativity, llc.dca_way_quota)
        self.series = WritebackSeries(interval_ns * NS)
        self.dram_latency_ps = dram_latency_ns * NS
        self._dram_dma_block_ns = dram_dma_block_ns
        self._llc_dma_block_ns = llc_dma_block_ns
        self._contention = dma_contention
        self._channels = channels
        self._streams = 1
        # Traversal cost in ps per hit level, precomputed once per freq.
        c1, c2, c3 = l1.hit_latency_cycles, l2.hit_latency_cycles, llc.hit_latency_cycles
        from .core import cycles_to_ps
        self.lat_l1 = cycles_to_ps(c1, freq_hz)
        self.lat_l2 = cycles_to_ps(c1 + c2, freq_hz)
        self.lat_llc = cycles_to_ps(c1 + c2 + c3, freq_hz)
        self.lat_dram = self.lat_llc + self.dram_latency_ps
        self._recompute_block_service()

    def set_active_dma_streams(self, n: int):
        self._streams = max(1, n)
        self._recompute_block_service()

    def _recompute_block_service(self):
        scale = (1.0 + self._contention * (self._streams - 1)) / self._channels
        self.dram_block_ps = int(round(self._dram_dma_block_ns * scale * NS))
        self.llc_block_ps = int(round(self._llc_dma_block_ns * NS))

    @staticmethod
    def block_span(address: int, size: int):
        first = address // BLOCK
        nblocks = (address + size - 1) // BLOCK - first + 1
        return first, nblocks

    def cpu_access(self, address: int, kind: str, core_id: int,
                   now: int = 0) -> AccessResult:
        level, w2, w3 = self.core.cpu_access(core_id, address // BLOCK,
                                             kind == "write")
        if w2 or w3:
            self.series.record(now, w2, w3)
        lat = (self.lat_l1, self.lat_l2, self.lat_llc, self.lat_dram)[level - 1]
        return AccessResult(lat, LEVEL_NAMES[level], {"l2": w2, "llc": w3})

    def cpu_latency(self, address: int, is_write: bool, core_id: int,
                    now: int) -> int:
        """Hot-path variant of cpu_access: latency only, no result object."""
        level, w2, w3 = self.core.cpu_access(core_id, address // BLOCK, is_write)
        if w2 or w3:
            self.series.record(now, w2, w3)
        return (self.lat_l1, self.lat_l2, self.lat_llc, self.lat_dram)[level - 1]

    def dma_write_cost(self, size: int, dca: bool) -> int:
        """Pure service-time estimate for a DMA write of `size` bytes."""
        nblocks = (size + BLOCK - 1) // BLOCK
        return nblocks * (self.llc_block_ps if dca else self.dram_block_ps)

    def dma_write(self, address: int, size: int, dca: bool,
                  now: int = 0) -> AccessResult:
        if size <= 0:
            raise ValueError("dma_write needs size > 0")
        first, nblocks = self.block_span(address, size)
        w3 = self.core.dma_write_range(first, nblocks, dca)
        if w3:
            self.series.record(now, 0, w3)
        per_block = self.llc_block_ps if dca else self.dram_block_ps
        return AccessResult(nblocks * per_block,
                            "LLC" if dca else "DRAM", {"l2": 0, "llc": w3})

    def dma_write_apply(self, address: int, size: int, dca: bool, now: int):
        """Hot-path variant of dma_write: state change only."""
        first, nblocks = self.block_span(address, size)
        w3 = self.core.dma_write_range(first, nblocks, dca)
        if w3:
            self.series.record(now, 0, w3)

    def dma_read(self, address: int, size: int, now: int = 0) -> AccessResult:
        first, nblocks = self.block_span(address, size)
        found = self.core.dma_read_range(first, nblocks)
        lat = found * self.llc_block_ps + (nblocks - found) * self.dram_block_ps
        return AccessResult(lat, "LLC" if found == nblocks else "DRAM",
                            {"l2": 0, "llc": 0})

    def interval_stats(self) -> WritebackSeries:
        return self.series

    def counters(self) -> dict:
        c = self.core
        return {
            "l2_writebacks": c.l2_writebacks,
            "llc_writebacks": c.llc_writebacks,
            "l1_writebacks": c.l1_writebacks,
            "llc_fills": c.llc_fills,
            "llc_evictions": c.llc_evictions,
            "llc_invalidations": c.llc_invalidations,
        }
