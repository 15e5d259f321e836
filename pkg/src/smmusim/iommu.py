"""Linux IOMMU API shaped management layer: devices, groups and domains."""

import itertools
from dataclasses import dataclass, field
from typing import Optional

from . import context_bank as cbk
from .errors import (
    AlreadyAttached,
    DuplicateDevice,
    ExternalTableReadOnly,
    GroupBusy,
    MisalignedAddress,
    NoFreeStreamEntry,
    NotAttached,
    UnknownDevice,
)
from .phys_mem import PAGE_MASK, PAGE_SIZE, PhysMemory
from .smmu import Smmu
from .stream_mapping import InstCfg, S2cr, S2crType, Smr
from .translation_table import WalkConfig, map_page, unmap_page


@dataclass
class IommuDevice:
    name: str
    stream_id: int
    group_id: int


@dataclass
class IommuGroup:
    id: int
    members: list = field(default_factory=list)
    attached_domain: Optional[int] = None
    entries: list = field(default_factory=list)


@dataclass
class IommuDomain:
    id: int
    ttbr: int = 0
    bank_index: Optional[int] = None
    internal_cfg: Optional[WalkConfig] = None
    groups: set = field(default_factory=set)
    # False reproduces the driver before the TTBCR/TTBCR2 patch
    override_tcr: bool = True


class IommuRegistry:
    """Owns devices, groups and domains for one SMMU and its memory."""

    def __init__(self, smmu: Smmu, mem: PhysMemory):
        self.smmu = smmu
        self.mem = mem
        self.devices: dict[str, IommuDevice] = {}
        self.groups: dict[int, IommuGroup] = {}
        self.domains: dict[int, IommuDomain] = {}
        self._group_ids = itertools.count()
        self._domain_ids = itertools.count()

    def register_device(self, name: str, stream_id: int) -> IommuDevice:
        if name in self.devices:
            raise DuplicateDevice(f"device {name!r} already registered")
        group = IommuGroup(next(self._group_ids), [name])
        self.groups[group.id] = group
        dev = self.devices[name] = IommuDevice(name, stream_id, group.id)
        return dev

    def device(self, name: str) -> IommuDevice:
        try:
            return self.devices[name]
        except KeyError:
            raise UnknownDevice(f"no IOMMU device named {name!r}") from None

    def group_get(self, name: str) -> IommuGroup:
        return self.groups[self.device(name).group_id]

    def domain_alloc(self) -> IommuDomain:
        dom = IommuDomain(next(self._domain_ids))
        self.domains[dom.id] = dom
        return dom

    def set_external_table(self, domain: IommuDomain, root: int, override_tcr=True) -> None:
        """Make ``domain`` use an externally built table rooted at ``root``.

        ``root == 0`` restores the driver-owned table path.
        """
        if domain.bank_index is not None:
            raise AlreadyAttached(f"domain {domain.id} already has context bank {domain.bank_index}")
        if root & PAGE_MASK:
            raise MisalignedAddress(f"table root 0x{root:x} not 4 KB aligned")
        domain.ttbr = root
        domain.override_tcr = override_tcr

    def _program_bank(self, domain):
        banks = self.smmu.banks
        if domain.ttbr == 0:
            if domain.internal_cfg is None:
                root = self.mem.alloc_table_page()
                domain.internal_cfg = WalkConfig(
                    64 - cbk.DEFAULT_T0SZ, cbk.decode_pasize(cbk.DEFAULT_PASIZE), root)
            banks.program_bank(domain.bank_index, domain.internal_cfg.root,
                               cbk.DEFAULT_T0SZ, cbk.DEFAULT_PASIZE)
        elif domain.override_tcr:
            banks.program_bank(domain.bank_index, domain.ttbr, cbk.PROCESS_T0SZ, cbk.PROCESS_PASIZE)
        else:
            banks.program_bank(domain.bank_index, domain.ttbr, cbk.DEFAULT_T0SZ, cbk.DEFAULT_PASIZE)
        banks[domain.bank_index].enabled = True

    def attach_group(self, domain: IommuDomain, group: IommuGroup,
                     instcfg: InstCfg = InstCfg.DATA) -> None:
        if group.attached_domain is not None:
            raise GroupBusy(f"group {group.id} already attached to domain {group.attached_domain}")
        table = self.smmu.table
        free = [n for n, (smr, _) in enumerate(table.entries) if not smr.valid]
        if len(free) < len(group.members):
            raise NoFreeStreamEntry("stream mapping table is full")
        new_bank = domain.bank_index is None
        if new_bank:
            domain.bank_index = self.smmu.banks.allocate_bank()
        try:
            self._program_bank(domain)
        except Exception:
            if new_bank:
                self.smmu.banks.release_bank(domain.bank_index)
                domain.bank_index = None
            raise
        for name, n in zip(group.members, free):
            sid = self.devices[name].stream_id
            table.program_entry(n, Smr(valid=True, mask=0, id=sid),
                                S2cr(S2crType.TRANSLATION, domain.bank_index, instcfg))
            group.entries.append(n)
        group.attached_domain = domain.id
        domain.groups.add(group.id)
        self.smmu.tlb_invalidate_all()

    def detach_group(self, domain: IommuDomain, group: IommuGroup) -> None:
        if group.attached_domain != domain.id:
            raise NotAttached(f"group {group.id} is not attached to domain {domain.id}")
        for n in group.entries:
            self.smmu.table.invalidate_entry(n)
        group.entries.clear()
        group.attached_domain = None
        domain.groups.discard(group.id)
        if not domain.groups:
            self.smmu.banks.release_bank(domain.bank_index)
            domain.bank_index = None
        self.smmu.tlb_invalidate_all()

    def _internal_cfg(self, domain):
        if domain.ttbr != 0:
            raise ExternalTableReadOnly(f"domain {domain.id} uses an external table")
        if domain.bank_index is None or domain.internal_cfg is None:
            raise NotAttached(f"domain {domain.id} has no programmed context bank")
        return domain.internal_cfg

    @staticmethod
    def _check_size(va, pa, size):
        if size <= 0 or size % PAGE_SIZE:
            raise MisalignedAddress(f"size 0x{size:x} is not a positive multiple of 4 KB")
        if va & PAGE_MASK or pa & PAGE_MASK:
            raise MisalignedAddress(f"va 0x{va:x} / pa 0x{pa:x} not 4 KB aligned")

    def iommu_map(self, domain: IommuDomain, va: int, pa: int, size: int, flags=0) -> None:
        # flags (read/write permissions) are accepted and ignored
        cfg = self._internal_cfg(domain)
        self._check_size(va, pa, size)
        for off in range(0, size, PAGE_SIZE):
            map_page(self.mem, cfg, va + off, pa + off)

    def iommu_unmap(self, domain: IommuDomain, va: int, size: int) -> None:
        cfg = self._internal_cfg(domain)
        self._check_size(va, 0, size)
        for off in range(0, size, PAGE_SIZE):
            unmap_page(self.mem, cfg, va + off)
