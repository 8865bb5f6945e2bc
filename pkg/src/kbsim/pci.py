"""PCI type-0 configuration-space model (first 64 bytes).

Supports 1/2/4-byte aligned accesses so a driver can flip individual
Command Register bytes; bit 10 of the Command Register is the INTx
disable bit that gates legacy interrupts in the NIC model.
"""

from __future__ import annotations

# Fixed field offsets within the 64-byte header.
VENDOR_ID_OFF = 0x00
DEVICE_ID_OFF = 0x02
COMMAND_OFF = 0x04
STATUS_OFF = 0x06

# Command register bits.
CMD_IO_SPACE = 1 << 0
CMD_MEM_SPACE = 1 << 1
CMD_BUS_MASTER = 1 << 2
CMD_INTX_DISABLE = 1 << 10

CONFIG_SIZE = 64


class ConfigAccessError(Exception):
    """Failed config transaction: bad offset, width, or alignment."""


def _default_writable_mask() -> bytearray:
    # Only the command bits used by the drivers are software writable;
    # IDs and status are read-only. Everything else is reserved.
    mask = bytearray(CONFIG_SIZE)
    writable = CMD_IO_SPACE | CMD_MEM_SPACE | CMD_BUS_MASTER | CMD_INTX_DISABLE
    mask[COMMAND_OFF] = writable & 0xFF
    mask[COMMAND_OFF + 1] = (writable >> 8) & 0xFF
    return mask


class PciConfigSpace:
    def __init__(self, vendor_id=0x8086, device_id=0x1075, writable_mask=None):
        self.raw = bytearray(CONFIG_SIZE)
        self.raw[VENDOR_ID_OFF:VENDOR_ID_OFF + 2] = vendor_id.to_bytes(2, "little")
        self.raw[DEVICE_ID_OFF:DEVICE_ID_OFF + 2] = device_id.to_bytes(2, "little")
        self.writable_mask = bytearray(writable_mask) if writable_mask is not None \
            else _default_writable_mask()
        if len(self.writable_mask) != CONFIG_SIZE:
            raise ValueError("writable_mask must cover all 64 bytes")
        # Called with (old_command, new_command) after any command change.
        self.on_command_change = None

    def _check(self, offset: int, width: int):
        if width not in (1, 2, 4):
            raise ConfigAccessError(f"unsupported width {width}")
        if offset < 0 or offset + width > CONFIG_SIZE:
            raise ConfigAccessError(f"offset {offset:#x} width {width} out of range")
        if offset % width != 0:
            raise ConfigAccessError(f"unaligned access at {offset:#x} width {width}")

    def read_config(self, offset: int, width: int) -> int:
        self._check(offset, width)
        return int.from_bytes(self.raw[offset:offset + width], "little")

    def write_config(self, offset: int, width: int, value: int) -> None:
        self._check(offset, width)
        if value < 0 or value >= (1 << (8 * width)):
            raise ConfigAccessError(f"value {value:#x} does not fit width {width}")
        old_cmd = self.command
        new = value.to_bytes(width, "little")
        for i in range(width):
            mask = self.writable_mask[offset + i]
            cur = self.raw[offset + i]
            self.raw[offset + i] = (cur & ~mask) | (new[i] & mask)
        if self.command != old_cmd and self.on_command_change is not None:
            self.on_command_change(old_cmd, self.command)

    @property
    def vendor_id(self) -> int:
        return self.read_config(VENDOR_ID_OFF, 2)

    @property
    def device_id(self) -> int:
        return self.read_config(DEVICE_ID_OFF, 2)

    @property
    def command(self) -> int:
        return self.read_config(COMMAND_OFF, 2)

    @property
    def status(self) -> int:
        return self.read_config(STATUS_OFF, 2)

    def intx_disabled(self) -> bool:
        return bool(self.command & CMD_INTX_DISABLE)

    def bus_master(self) -> bool:
        return bool(self.command & CMD_BUS_MASTER)

    def hex_dump(self) -> str:
        """All 64 bytes as one space-separated hex line (for golden tests)."""
        return " ".join(f"{b:02x}" for b in self.raw)
