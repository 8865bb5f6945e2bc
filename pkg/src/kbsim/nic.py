"""e1000-inspired NIC device model.

Memory-mapped registers (interrupt mask/cause, ring pointers), RX/TX
descriptor rings shared with the driver by simulation convention, an
on-NIC descriptor cache with threshold-triggered writeback, and DMA
engines whose timing runs through the memory model. The legacy interrupt
line follows (ICR & IMS) != 0 gated by the PCI INTx-disable bit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .core import NS, US
from .mem import BLOCK
from .net import Frame

# Register offsets (e1000 layout where the register exists there).
CTRL = 0x0000
ICR = 0x00C0
IMS = 0x00D0
IMC = 0x00D8
RDBA = 0x2800
RDLEN = 0x2808
RDH = 0x2810
RDT = 0x2818
TDBA = 0x3800
TDLEN = 0x3808
TDH = 0x3810
TDT = 0x3818

CTRL_UP = 0x1

ICR_TXDW = 0x01   # transmit descriptor written back
ICR_RXT0 = 0x80   # receiver timer / packet delivered

DESC_BYTES = 16


class MmioAccessError(Exception):
    pass


class Descriptor:
    __slots__ = ("buffer", "length", "dd")

    def __init__(self):
        self.buffer = None
        self.length = 0
        self.dd = False


class DescriptorRing:
    def __init__(self, base: int, size: int, direction: str):
        if size & (size - 1):
            raise ValueError("ring size must be a power of two")
        self.base = base
        self.size = size
        self.direction = direction
        self.head = 0   # NIC-owned
        self.tail = 0   # driver-owned
        self.descs = [Descriptor() for _ in range(size)]

    def available(self) -> int:
        return (self.tail - self.head) % self.size

    def desc_addr(self, idx: int) -> int:
        return self.base + idx * DESC_BYTES


@dataclass
class NicConfig:
    wb_threshold: int = 32
    desc_cache_capacity: int = 64
    rx_ring_size: int = 256
    tx_ring_size: int = 256
    dma_fixed_ns: int = 24
    flush_timeout_us: int = 10
    dca_enabled: bool = False

    def validate(self):
        if not 1 <= self.wb_threshold <= self.desc_cache_capacity:
            raise ValueError("need 1 <= wb_threshold <= desc_cache_capacity")


class Nic:
    def __init__(self, engine, mem, pci, config: NicConfig, name="nic0"):
        config.validate()
        self.engine = engine
        self.mem = mem
        self.pci = pci
        self.config = config
        self.name = name
        pci.on_command_change = lambda old, new: self._update_irq()

        self.regs = {CTRL: 0, ICR: 0, IMS: 0}
        self.rx_ring = None
        self.tx_ring = None

        # Descriptor cache state (RX side only).
        self.free_descs = deque()
        self.used = []            # filled, not yet written back
        self._fetch_inflight = 0
        self._fetch_frontier = 0
        self._rx_engine_free = 0
        self._desc_engine_free = 0
        self._tx_engine_free = 0
        self._wb_in_flight = False
        self._last_rx_activity = 0
        self._tx_known_tail = 0

        self.link = None
        self.link_side = 0
        self.on_rx_ready = None     # called after a descriptor writeback
        self.on_interrupt = None    # called on interrupt-line rising edge
        self.bound = False

        self.frames_in = 0
        self.frames_out = 0
        self.rx_dropped = 0
        self.delivered_to_memory = 0
        self.interrupts_raised = 0
        self.irq_line = False
        self.writeback_batches = {}
        self.flush_batches = {}

    # -- register file -------------------------------------------------------

    def mmio_read(self, offset: int) -> int:
        if offset == ICR:
            value = self.regs[ICR]
            self.regs[ICR] = 0  # read-to-clear
            self._update_irq()
            return value
        if offset in (CTRL, IMS):
            return self.regs[offset]
        if offset == RDH:
            return self.rx_ring.head if self.rx_ring else 0
        if offset == RDT:
            return self.rx_ring.tail if self.rx_ring else 0
        if offset == TDH:
            return self.tx_ring.head if self.tx_ring else 0
        if offset == TDT:
            return self.tx_ring.tail if self.tx_ring else 0
        if offset in (RDBA, RDLEN, TDBA, TDLEN):
            ring = self.rx_ring if offset in (RDBA, RDLEN) else self.tx_ring
            if ring is None:
                return 0
            return ring.base if offset in (RDBA, TDBA) else ring.size
        raise MmioAccessError(f"unmodeled register {offset:#x}")

    def mmio_write(self, offset: int, value: int):
        if offset == CTRL:
            self.regs[CTRL] = value
        elif offset == IMS:
            self.regs[IMS] |= value
            self._update_irq()
        elif offset == IMC:
            self.regs[IMS] &= ~value
            self._update_irq()
        elif offset == ICR:
            self.regs[ICR] &= ~value
            self._update_irq()
        elif offset == RDT:
            if self.rx_ring is None:
                raise MmioAccessError("RDT write with no RX ring")
            self.rx_ring.tail = value % self.rx_ring.size
            self._maybe_prefetch()
        elif offset == TDT:
            if self.tx_ring is None:
                raise MmioAccessError("TDT write with no TX ring")
            self.transmit_tail_write(value % self.tx_ring.size)
        elif offset in (RDBA, RDLEN, TDBA, TDLEN, RDH, TDH):
            pass  # ring geometry is set through attach_*_ring in this model
        else:
            raise MmioAccessError(f"unmodeled register {offset:#x}")

    def raise_cause(self, bits: int):
        self.regs[ICR] |= bits
        self._update_irq()

    def _update_irq(self):
        line = bool(self.regs[ICR] & self.regs[IMS]) and not self.pci.intx_disabled()
        rising = line and not self.irq_line
        # Latch before notifying: the handler may read ICR and re-enter here.
        self.irq_line = line
        if rising:
            self.interrupts_raised += 1
            if self.on_interrupt is not None:
                self.on_interrupt()

    # -- ring attachment (driver side) ---------------------------------------

    def attach_rx_ring(self, ring: DescriptorRing):
        self.rx_ring = ring
        self._fetch_frontier = ring.head

    def attach_tx_ring(self, ring: DescriptorRing):
        self.tx_ring = ring
        self._tx_known_tail = ring.tail

    @property
    def enabled(self) -> bool:
        return bool(self.regs[CTRL] & CTRL_UP)

    # -- RX path --------------------------------------------------------------

    def _dma_fixed_ps(self) -> int:
        return self.config.dma_fixed_ns * NS

    def wire_receive(self, frame: Frame):
        self.frames_in += 1
        if not self.enabled or self.rx_ring is None or not self.free_descs:
            self.rx_dropped += 1
            self._maybe_prefetch()
            return
        idx = self.free_descs.popleft()
        now = self.engine.now()
        service = self._dma_fixed_ps() + self.mem.dma_write_cost(
            len(frame), self.config.dca_enabled)
        start = max(now, self._rx_engine_free)
        done = start + service
        self._rx_engine_free = done
        self.engine.schedule(done - now, self._rx_dma_done,
                             target=self.name, kind="rx_dma",
                             payload=(idx, frame))
        self._maybe_prefetch()

    def _rx_dma_done(self, ev):
        idx, frame = ev.payload
        now = self.engine.now()
        desc = self.rx_ring.descs[idx]
        n = min(len(frame), len(desc.buffer.data))
        desc.buffer.data[:n] = frame.data[:n]
        desc.length = n
        self.mem.dma_write_apply(desc.buffer.addr, n, self.config.dca_enabled,
                                 now=now)
        self.used.append(idx)
        self.delivered_to_memory += 1
        self._last_rx_activity = now
        if len(self.used) >= self.config.wb_threshold:
            self._start_writeback(flush=False)
        else:
            self.engine.schedule(self.config.flush_timeout_us * US,
                                 self._flush_check, target=self.name,
                                 kind="flush_check")

    def _flush_check(self, ev):
        timeout = self.config.flush_timeout_us * US
        if (self.used and not self._wb_in_flight
                and self.engine.now() - self._last_rx_activity >= timeout):
            self._start_writeback(flush=True)

    def _start_writeback(self, flush: bool):
        if self._wb_in_flight or not self.used:
            return
        self._wb_in_flight = True
        batch = self.used[:self.config.wb_threshold]
        nbytes = len(batch) * DESC_BYTES
        nblocks = (nbytes + BLOCK - 1) // BLOCK
        now = self.engine.now()
        service = self._dma_fixed_ps() + nblocks * (
            self.mem.llc_block_ps if self.config.dca_enabled else self.mem.dram_block_ps)
        start = max(now, self._desc_engine_free)
        done = start + service
        self._desc_engine_free = done
        self.engine.schedule(done - now, self._wb_done, target=self.name,
                             kind="desc_wb", payload=(batch, flush))

    def _wb_done(self, ev):
        batch, flush = ev.payload
        now = self.engine.now()
        ring = self.rx_ring
        self.mem.dma_write_apply(ring.desc_addr(batch[0]),
                                 len(batch) * DESC_BYTES,
                                 self.config.dca_enabled, now=now)
        for idx in batch:
            ring.descs[idx].dd = True
        ring.head = (ring.head + len(batch)) % ring.size
        del self.used[:len(batch)]
        hist = self.flush_batches if flush else self.writeback_batches
        hist[len(batch)] = hist.get(len(batch), 0) + 1
        self._wb_in_flight = False
        self.raise_cause(ICR_RXT0)
        if self.on_rx_ready is not None:
            self.on_rx_ready()
        self._maybe_prefetch()
        if len(self.used) >= self.config.wb_threshold:
            self._start_writeback(flush=False)

    def _maybe_prefetch(self):
        """Refill the on-NIC cache of free descriptors from the ring."""
        if self.rx_ring is None:
            return
        cap = self.config.desc_cache_capacity
        held = len(self.free_descs) + len(self.used) + self._fetch_inflight
        if len(self.free_descs) + self._fetch_inflight >= (cap + 1) // 2:
            return
        avail = (self.rx_ring.tail - self._fetch_frontier) % self.rx_ring.size
        n = min(cap - held, avail)
        if n <= 0:
            return
        first = self._fetch_frontier
        self._fetch_frontier = (first + n) % self.rx_ring.size
        self._fetch_inflight += n
        nblocks = (n * DESC_BYTES + BLOCK - 1) // BLOCK
        now = self.engine.now()
        service = self._dma_fixed_ps() + nblocks * self.mem.dram_block_ps
        start = max(now, self._desc_engine_free)
        done = start + service
        self._desc_engine_free = done
        self.engine.schedule(done - now, self._fetch_done, target=self.name,
                             kind="desc_fetch", payload=(first, n))

    def _fetch_done(self, ev):
        first, n = ev.payload
        size = self.rx_ring.size
        self.free_descs.extend((first + i) % size for i in range(n))
        self._fetch_inflight -= n

    # -- TX path --------------------------------------------------------------

    def transmit_tail_write(self, new_tail: int):
        ring = self.tx_ring
        ring.tail = new_tail
        now = self.engine.now()
        while self._tx_known_tail != new_tail:
            idx = self._tx_known_tail
            self._tx_known_tail = (idx + 1) % ring.size
            desc = ring.descs[idx]
            service = self._dma_fixed_ps() + self.mem.dma_read(
                desc.buffer.addr, desc.length, now=now).latency
            start = max(now, self._tx_engine_free)
            done = start + service
            self._tx_engine_free = done
            self.engine.schedule(done - now, self._tx_dma_done,
                                 target=self.name, kind="tx_dma", payload=idx)

    def _tx_dma_done(self, ev):
        idx = ev.payload
        ring = self.tx_ring
        desc = ring.descs[idx]
        frame = Frame(bytearray(desc.buffer.data[:desc.length]), seq=idx)
        desc.dd = True
        ring.head = (ring.head + 1) % ring.size
        self.frames_out += 1
        if self.link is not None:
            self.link.send(self.link_side, frame)
        self.raise_cause(ICR_TXDW)

    # -- reporting -------------------------------------------------------------

    def stats(self) -> dict:
        return {
            "frames_in": self.frames_in,
            "frames_out": self.frames_out,
            "rx_dropped": self.rx_dropped,
            "delivered_to_memory": self.delivered_to_memory,
            "interrupts_raised": self.interrupts_raised,
            "writeback_batches": {str(k): v for k, v in
                                  sorted(self.writeback_batches.items())},
            "flush_batches": {str(k): v for k, v in
                              sorted(self.flush_batches.items())},
        }
