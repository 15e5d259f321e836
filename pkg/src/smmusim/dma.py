"""Client devices: the 16 PS DMA channels and the PL DMA-like IP block."""

import enum
from dataclasses import dataclass, field

from .errors import BadRegisterOffset, ChannelDisabled
from .phys_mem import PAGE_SIZE, PhysMemory
from .smmu import AccessResult, Smmu, Transaction
from .stream_mapping import make_stream_id

FPD_BASE = 0xFD50_0000
LPD_BASE = 0xFFA8_0000
CHANNEL_STRIDE = 0x1_0000
FPD_SID_BASE = 0x14E8
LPD_SID_BASE = 0x868


class PowerDomain(enum.Enum):
    LPD = "LPD"
    FPD = "FPD"


@dataclass
class DmaChannel:
    name: str
    base: int
    power_domain: PowerDomain
    bus_width_bits: int
    stream_id: int
    enabled: bool = True


def standard_channels() -> list:
    """FPD channels dma1chan0..dma8chan0 followed by LPD dma9chan0..dma16chan0."""
    chans = []
    for k in range(8):
        chans.append(DmaChannel(f"dma{k + 1}chan0", FPD_BASE + CHANNEL_STRIDE * k,
                                PowerDomain.FPD, 128, FPD_SID_BASE + k))
    for k in range(8):
        chans.append(DmaChannel(f"dma{k + 9}chan0", LPD_BASE + CHANNEL_STRIDE * k,
                                PowerDomain.LPD, 64, LPD_SID_BASE + k))
    return chans


@dataclass
class TransferReport:
    channel: str
    length: int
    results: list = field(default_factory=list)
    copied: int = 0

    @property
    def outcomes(self):
        return [r.outcome for r in self.results]

    @property
    def completed(self) -> bool:
        return self.copied == self.length

    @property
    def fault(self):
        for r in self.results:
            if not r.ok:
                return r.outcome
        return None


def _chunks(src, dst, length):
    pos = 0
    while pos < length:
        n = min(length - pos,
                PAGE_SIZE - (src + pos) % PAGE_SIZE,
                PAGE_SIZE - (dst + pos) % PAGE_SIZE)
        yield pos, n
        pos += n


def dma_transfer(smmu: Smmu, mem: PhysMemory, channel: DmaChannel,
                 src: int, dst: int, length: int) -> TransferReport:
    """Copy ``length`` bytes from ``src`` to ``dst`` through the SMMU.

    Both addresses are device-visible (possibly virtual). The copy is split
    so no transaction crosses a 4 KB page on either side; it stops at the
    first faulting transaction.
    """
    if not channel.enabled:
        raise ChannelDisabled(f"{channel.name} is disabled")
    if length < 1:
        raise ValueError("transfer length must be at least 1")
    report = TransferReport(channel.name, length)
    smmu.emit(f"DMA chan={channel.name} width={channel.bus_width_bits} "
              f"src=0x{src:012x} dst=0x{dst:012x} len={length}")
    for pos, n in _chunks(src, dst, length):
        rd = smmu.access(mem, Transaction.read(channel.stream_id, src + pos, n))
        report.results.append(rd)
        if not rd.ok:
            break
        wr = smmu.access(mem, Transaction.write(channel.stream_id, dst + pos, rd.data))
        report.results.append(wr)
        if not wr.ok:
            break
        report.copied += n
    return report


class Port(enum.Enum):
    HPC0 = 0x8
    HPC1 = 0x9


def port_code(port: Port) -> int:
    return port.value


REG_DEST_LO = 0x30
REG_DEST_HI = 0x34
REG_DATA = 0x38
REG_CACHE = 0x3C
REG_AXI_ID = 0x40
REG_TRIGGER = 0x44
PL_REGS = (REG_DEST_LO, REG_DEST_HI, REG_DATA, REG_CACHE, REG_AXI_ID, REG_TRIGGER)
PL_DEFAULT_BASE = 0xB000_0000


@dataclass
class PlDmaIp:
    """Register model of the PL block that writes one word to a destination."""
    base: int = PL_DEFAULT_BASE
    port: Port = Port.HPC0
    regs: dict = field(default_factory=lambda: dict.fromkeys(PL_REGS, 0))

    def write_reg(self, offset: int, value: int) -> bool:
        """Latch ``value``; returns True when the write fires the trigger."""
        if offset not in PL_REGS:
            raise BadRegisterOffset(f"no PL register at offset 0x{offset:x}")
        self.regs[offset] = value & 0xFFFF_FFFF
        return offset == REG_TRIGGER and value == 1

    def decodes(self, pa: int) -> bool:
        return self.base + REG_DEST_LO <= pa < self.base + REG_TRIGGER + 4

    @property
    def stream_id(self) -> int:
        return make_stream_id(port_code(self.port), self.regs[REG_AXI_ID] & 0x3F)

    def transaction(self) -> Transaction:
        va = (self.regs[REG_DEST_HI] << 32) | self.regs[REG_DEST_LO]
        return Transaction.write(self.stream_id, va, self.regs[REG_DATA].to_bytes(4, "little"),
                                 cache_bits=self.regs[REG_CACHE] & 0xF)


def pl_write_reg(ip: PlDmaIp, offset: int, value: int) -> bool:
    return ip.write_reg(offset, value)


def pl_trigger(smmu: Smmu, mem: PhysMemory, ip: PlDmaIp) -> AccessResult:
    return smmu.access(mem, ip.transaction())

