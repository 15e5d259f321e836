"""Sparse, page-backed simulated physical memory."""

import hashlib

from .errors import AddressOutOfRange, AllocatorExhausted

PAGE_SHIFT = 12
PAGE_SIZE = 1 << PAGE_SHIFT
PAGE_MASK = PAGE_SIZE - 1
PA_BITS = 40
PA_LIMIT = 1 << PA_BITS

DEFAULT_TABLE_BASE = 0x8000_0000


class PhysMemory:
    """Byte-addressable little-endian memory with lazily created 4 KB pages.

    Unwritten bytes read as zero. ``alloc_table_page`` is a bump allocator
    used for translation-table pages; its base should be kept away from the
    addresses a scenario uses for payload data.
    """

    def __init__(self, table_base=DEFAULT_TABLE_BASE):
        if table_base & PAGE_MASK:
            raise ValueError(f"table base 0x{table_base:x} is not page aligned")
        self.pages: dict[int, bytearray] = {}
        self.alloc_cursor = table_base
        self.table_base = table_base

    @staticmethod
    def _check_range(pa, length):
        if pa < 0 or length < 0 or pa + length > PA_LIMIT:
            raise AddressOutOfRange(
                f"access [0x{pa:x}, +0x{length:x}) exceeds the {PA_BITS}-bit physical space")

    def write_bytes(self, pa: int, data) -> None:
        data = bytes(data)
        self._check_range(pa, len(data))
        pos = 0
        while pos < len(data):
            addr = pa + pos
            off = addr & PAGE_MASK
            n = min(PAGE_SIZE - off, len(data) - pos)
            page = self.pages.get(addr >> PAGE_SHIFT)
            if page is None:
                page = self.pages[addr >> PAGE_SHIFT] = bytearray(PAGE_SIZE)
            page[off:off + n] = data[pos:pos + n]
            pos += n

    def read_bytes(self, pa: int, length: int) -> bytes:
        self._check_range(pa, length)
        out = bytearray()
        pos = 0
        while pos < length:
            addr = pa + pos
            off = addr & PAGE_MASK
            n = min(PAGE_SIZE - off, length - pos)
            page = self.pages.get(addr >> PAGE_SHIFT)
            if page is None:
                out += bytes(n)
            else:
                out += page[off:off + n]
            pos += n
        return bytes(out)

    def read_word32(self, pa: int) -> int:
        return int.from_bytes(self.read_bytes(pa, 4), "little")

    def write_word32(self, pa: int, value: int) -> None:
        self.write_bytes(pa, (value & 0xFFFF_FFFF).to_bytes(4, "little"))

    def read_u64(self, pa: int) -> int:
        return int.from_bytes(self.read_bytes(pa, 8), "little")

    def write_u64(self, pa: int, value: int) -> None:
        self.write_bytes(pa, (value & (1 << 64) - 1).to_bytes(8, "little"))

    def alloc_table_page(self) -> int:
        pa = self.alloc_cursor
        if pa + PAGE_SIZE > PA_LIMIT:
            raise AllocatorExhausted(f"table allocator reached 0x{pa:x}")
        self.pages[pa >> PAGE_SHIFT] = bytearray(PAGE_SIZE)
        self.alloc_cursor = pa + PAGE_SIZE
        return pa

    def digest(self) -> str:
        """Hash of all non-zero page contents, for side-effect checks."""
        h = hashlib.sha256()
        for pfn in sorted(self.pages):
            page = self.pages[pfn]
            if any(page):
                h.update(pfn.to_bytes(8, "little"))
                h.update(page)
        return h.hexdigest()
