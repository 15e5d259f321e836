"""The 16 translation context banks."""

import enum
from dataclasses import dataclass
from typing import Optional

from .errors import BankNotAllocated, IndexOutOfRange, InvalidT0sz, NoFreeBank, ReservedEncoding
from .translation_table import WalkConfig

NUM_BANKS = 16

_PASIZE_BITS = {0b000: 32, 0b001: 36, 0b010: 40, 0b011: 42, 0b100: 44, 0b101: 48}

# values the SMMU driver computes for its own tables
DEFAULT_T0SZ = 0x10
DEFAULT_PASIZE = 0b101
# values copied from the CPU's TCR_EL1 when a process table is passed through
PROCESS_T0SZ = 0x19
PROCESS_PASIZE = 0b010


def decode_pasize(code: int) -> int:
    try:
        return _PASIZE_BITS[code]
    except KeyError:
        raise ReservedEncoding(f"PASize encoding 0b{code:03b} is reserved") from None


class Cbar(enum.Enum):
    STAGE2 = 0b00
    STAGE1_S2_BYPASS = 0b01
    STAGE1_S2_FAULT = 0b10
    STAGE1_THEN_STAGE2 = 0b11


@dataclass
class ContextBank:
    index: int
    enabled: bool = False
    ttbr0: int = 0
    t0sz: int = DEFAULT_T0SZ
    pasize: int = DEFAULT_PASIZE
    cbar: Cbar = Cbar.STAGE1_S2_BYPASS
    last_fault: Optional[object] = None

    @property
    def ia_bits(self) -> int:
        return 64 - self.t0sz

    @property
    def oa_bits(self) -> int:
        return decode_pasize(self.pasize)

    def walk_config(self) -> WalkConfig:
        return WalkConfig(ia_bits=self.ia_bits, oa_bits=self.oa_bits, root=self.ttbr0)


class ContextBankFile:
    def __init__(self):
        self.banks = [ContextBank(i) for i in range(NUM_BANKS)]
        self.allocated = [False] * NUM_BANKS

    def __getitem__(self, index) -> ContextBank:
        return self.banks[index]

    def _check(self, index):
        if not 0 <= index < NUM_BANKS:
            raise IndexOutOfRange(f"context bank {index} outside 0..{NUM_BANKS - 1}")
        if not self.allocated[index]:
            raise BankNotAllocated(f"context bank {index} is not allocated")

    def allocate_bank(self) -> int:
        for i, used in enumerate(self.allocated):
            if not used:
                self.allocated[i] = True
                self.banks[i] = ContextBank(i)
                return i
        raise NoFreeBank(f"all {NUM_BANKS} context banks are in use")

    def release_bank(self, index: int) -> None:
        self._check(index)
        self.allocated[index] = False
        self.banks[index] = ContextBank(index)

    def free_count(self) -> int:
        return self.allocated.count(False)

    def program_bank(self, index: int, ttbr0: int, t0sz: int, pasize: int) -> WalkConfig:
        self._check(index)
        if not 25 <= 64 - t0sz <= 48:
            raise InvalidT0sz(f"T0SZ 0x{t0sz:x} gives a {64 - t0sz}-bit input space")
        decode_pasize(pasize)
        bank = self.banks[index]
        bank.ttbr0, bank.t0sz, bank.pasize = ttbr0, t0sz, pasize
        return bank.walk_config()
