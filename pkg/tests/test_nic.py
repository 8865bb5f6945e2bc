import random

import pytest

from kbsim.core import US
from kbsim.nic import ICR, IMC, IMS, ICR_RXT0, MmioAccessError
from kbsim.pci import PciConfigSpace

from simutil import Rig, eth_frame


def test_ims_write_ors_and_interrupt_asserts():
    rig = Rig(kind="kernel", wb_threshold=1)
    nic = rig.nic
    nic.mmio_write(IMS, 0x80)
    assert nic.regs[IMS] & 0x80
    nic.raise_cause(0x80)
    assert nic.irq_line


def test_imc_masks_everything():
    rig = Rig(kind="kernel")
    nic = rig.nic
    nic.mmio_write(IMC, 0xFFFFFFFF)
    nic.raise_cause(0xFFFFFFFF)
    assert not nic.irq_line


def test_icr_read_to_clear():
    rig = Rig(kind="kernel")
    nic = rig.nic
    nic.regs[ICR] = 0x5
    assert nic.mmio_read(ICR) == 0x5
    assert nic.mmio_read(ICR) == 0x0


def test_interrupt_gating_randomized():
    rig = Rig(kind="kernel")
    nic, pci = rig.nic, rig.pci
    rng = random.Random(77)
    for _ in range(1000):
        icr = rng.randrange(1 << 32)
        ims = rng.randrange(1 << 32)
        intx_off = rng.random() < 0.5
        nic.regs[ICR] = icr
        nic.regs[IMS] = ims
        upper = pci.read_config(0x05, 1)
        pci.write_config(0x05, 1, (upper | 0x04) if intx_off else (upper & ~0x04))
        nic._update_irq()
        assert nic.irq_line == (bool(icr & ims) and not intx_off)


def test_unmodeled_register_rejected():
    rig = Rig()
    with pytest.raises(MmioAccessError):
        rig.nic.mmio_read(0x4242)
    with pytest.raises(MmioAccessError):
        rig.nic.mmio_write(0x4242, 1)


def test_threshold_one_writes_back_every_frame():
    rig = Rig(wb_threshold=1)
    for _ in range(5):
        rig.inject(eth_frame())
        rig.settle(5 * US)
    assert rig.nic.writeback_batches == {1: 5}


def test_threshold_batch_of_32():
    rig = Rig(wb_threshold=32, flush_us=10_000)  # flush far away
    for i in range(31):
        rig.inject(eth_frame(), after=i * 1000_000)
    rig.settle(40 * US)
    assert rig.nic.writeback_batches == {}
    rig.inject(eth_frame())
    rig.settle(5 * US)
    assert rig.nic.writeback_batches == {32: 1}


def test_quiescent_flush_of_partial_batch():
    rig = Rig(wb_threshold=32)
    for i in range(3):
        rig.inject(eth_frame(), after=i * 1000_000)
    rig.settle(30 * US)
    assert rig.nic.flush_batches == {3: 1}
    assert rig.nic.writeback_batches == {}


def test_drop_when_no_free_descriptors():
    # Tiny ring: 4 descriptors, 3 armed. Saturate without harvesting.
    rig = Rig(wb_threshold=1, cache_cap=2, rx_ring=4, tx_ring=4)
    for i in range(12):
        rig.inject(eth_frame(), after=i * 100_000)
    rig.settle(20 * US)
    nic = rig.nic
    assert nic.rx_dropped > 0
    assert nic.frames_in == nic.delivered_to_memory + nic.rx_dropped


def test_batch_bound_under_saturation():
    rig = Rig(wb_threshold=8)
    for i in range(200):
        rig.inject(eth_frame(), after=i * 50_000)  # 50 ns apart: saturating
    rig.settle(100 * US)
    assert rig.nic.writeback_batches
    assert all(size <= 8 for size in rig.nic.writeback_batches)
    assert all(size <= 8 for size in rig.nic.flush_batches)


def test_legacy_mode_full_cache_batches():
    # Threshold == descriptor cache capacity: batches of exactly 64 under
    # saturating arrivals.
    rig = Rig(wb_threshold=64, cache_cap=64)
    for i in range(400):
        rig.inject(eth_frame(), after=i * 30_000)
    rig.settle(200 * US)
    assert set(rig.nic.writeback_batches) == {64}


def test_rx_payload_reaches_buffer_intact():
    rig = Rig(wb_threshold=1)
    payload = eth_frame(size=300, fill=0x3C)
    rig.inject(payload)
    rig.settle(5 * US)
    bufs = rig.binding.rx_harvest(None)
    assert len(bufs) == 1
    assert bytes(bufs[0].data[:bufs[0].pkt_len]) == payload


def test_tx_single_descriptor_emits_identical_frame():
    rig = Rig()
    buf = rig.pool.alloc()
    wire = eth_frame(size=128, fill=0x77)
    buf.data[:len(wire)] = wire
    buf.pkt_len = len(wire)
    assert rig.binding.tx_post([buf]) == 1
    rig.settle(5 * US)
    assert len(rig.tx_frames) == 1
    assert bytes(rig.tx_frames[0][1].data) == wire


def test_tx_32_descriptors_in_ring_order():
    rig = Rig()
    bufs = []
    for i in range(32):
        buf = rig.pool.alloc()
        wire = eth_frame(size=64, fill=i)
        buf.data[:len(wire)] = wire
        buf.pkt_len = len(wire)
        bufs.append(buf)
    assert rig.binding.tx_post(bufs) == 32
    rig.settle(20 * US)
    assert len(rig.tx_frames) == 32
    fills = [frame.data[20] for _, frame in rig.tx_frames]
    assert fills == list(range(32))


def test_tx_tail_write_equal_tail_is_noop():
    rig = Rig()
    tail = rig.nic.tx_ring.tail
    rig.nic.transmit_tail_write(tail)
    rig.settle(5 * US)
    assert rig.tx_frames == []
    assert rig.nic.frames_out == 0


def test_pmd_binding_never_interrupts():
    rig = Rig(kind="pmd", wb_threshold=1)
    for i in range(50):
        rig.inject(eth_frame(), after=i * 500_000)
    rig.settle(50 * US)
    assert rig.nic.delivered_to_memory == 50
    assert rig.nic.interrupts_raised == 0


def test_kernel_binding_first_frame_interrupts_once():
    rig = Rig(kind="kernel", wb_threshold=1)
    seen = []
    rig.nic.on_interrupt = lambda: seen.append(rig.engine.now())
    rig.inject(eth_frame())
    rig.settle(5 * US)
    assert rig.nic.interrupts_raised == 1
    assert len(seen) == 1


def test_vendor_check_and_force():
    from kbsim.stack import BindError
    with pytest.raises(BindError):
        Rig(vendor=0x1234)
    rig = Rig(vendor=0x1234, force=True)  # mirrored DPDK patch behavior
    assert rig.nic.bound


def test_double_bind_rejected():
    from kbsim.stack import BindError, Mempool, bind_device
    rig = Rig()
    with pytest.raises(BindError):
        bind_device(rig.nic, "pmd", rig.pool, 0x9000_0000, 0x9008_0000)


def test_pci_intx_disabled_by_pmd_binding_byte_write():
    rig = Rig(kind="pmd")
    assert rig.pci.intx_disabled()
    assert rig.pci.read_config(0x05, 1) & 0x04


def test_hex_dump_after_pmd_bind_golden():
    rig = Rig(kind="pmd")
    words = rig.pci.hex_dump().split(" ")
    # vendor 8086, device 1075, command = mem_space|bus_master|intx_disable
    assert words[0:6] == ["86", "80", "75", "10", "06", "04"]
