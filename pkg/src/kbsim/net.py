"""Frames and the point-to-point Ethernet link."""

from __future__ import annotations

from .core import US

ETH_HEADER = 14
MIN_FRAME = ETH_HEADER


class Frame:
    """A simulated Ethernet frame: 14-byte header plus payload bytes."""

    __slots__ = ("data", "seq")

    def __init__(self, data: bytearray, seq: int = 0):
        self.data = data
        self.seq = seq

    def __len__(self):
        return len(self.data)

    @property
    def dst_mac(self) -> bytes:
        return bytes(self.data[0:6])

    @property
    def src_mac(self) -> bytes:
        return bytes(self.data[6:12])

    def payload(self) -> bytes:
        return bytes(self.data[ETH_HEADER:])


def make_frame(size: int, dst: bytes, src: bytes, seq: int = 0,
               fill: int = 0) -> Frame:
    if size < MIN_FRAME:
        raise ValueError(f"frame smaller than Ethernet header: {size}")
    data = bytearray([fill & 0xFF]) * size
    data[0:6] = dst
    data[6:12] = src
    data[12:14] = b"\x08\x00"
    return Frame(data, seq)


class EtherLink:
    """Full-duplex link with serialization delay and propagation latency.

    Endpoints are attached with `attach(side, endpoint)`; an endpoint is
    anything with a `wire_receive(frame)` method. Each direction has its
    own transmit timeline so a sender can never exceed the line rate.
    """

    def __init__(self, engine, bandwidth_gbps: float, latency_ps: int = US):
        self.engine = engine
        self.bandwidth_gbps = bandwidth_gbps
        self.latency_ps = latency_ps
        self._ends = [None, None]
        self._line_free = [0, 0]

    def attach(self, side: int, endpoint):
        self._ends[side] = endpoint

    def serialization_ps(self, nbytes: int) -> int:
        # bits / Gbps -> ns; x1000 -> ps. Integer math for determinism.
        return int(nbytes * 8 * 1000 / self.bandwidth_gbps)

    def _deliver0(self, ev):
        self._ends[0].wire_receive(ev.payload)

    def _deliver1(self, ev):
        self._ends[1].wire_receive(ev.payload)

    def send(self, from_side: int, frame: Frame):
        now = self.engine.now()
        depart = max(now, self._line_free[from_side])
        done = depart + self.serialization_ps(len(frame))
        self._line_free[from_side] = done
        deliver = self._deliver1 if from_side == 0 else self._deliver0
        self.engine.schedule(done + self.latency_ps - now, deliver,
                             target="link", kind="deliver", payload=frame)
