"""Scenario scripts: parse, then replay against a fresh simulated SoC.

One command per line, ``#`` starts a comment. The whole script is parsed
before anything runs, so a typo never leaves a half-executed scenario.
"""

import shlex
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from . import dts
from .context_bank import decode_pasize
from .dma import PlDmaIp, Port, REG_TRIGGER, dma_transfer, pl_trigger, standard_channels
from .errors import SmmuSimError
from .iommu import IommuRegistry
from .phys_mem import PhysMemory
from .smmu import Bypassed, ContextFault, GlobalFault, Smmu, Translated, UnmatchedPolicy, outcome_tag
from .stream_mapping import InstCfg
from .translation_table import build_process_table

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_PARSE = 2
EXIT_RUNTIME = 3

DATA_DIR = resources.files("smmusim") / "data"


class ScriptError(Exception):
    def __init__(self, lineno, msg):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}")


class ScenarioAssertion(Exception):
    pass


@dataclass
class Command:
    lineno: int
    name: str
    args: list


@dataclass
class Scenario:
    name: str
    commands: list = field(default_factory=list)
    base_dir: Optional[Path] = None

    @property
    def assertions(self):
        return [c for c in self.commands if c.name.startswith("expect")]


def _hex(tok):
    return int(tok, 16)


def _num(tok):
    return int(tok, 0)


# command name -> (min args, max args or None, usage)
_USAGE = {
    "load-dts": (1, 1, "load-dts <file>"),
    "policy": (2, 2, "policy unmatched <bypass|fault>"),
    "write-phys": (2, 2, "write-phys <hexaddr> <hexword32>"),
    "read-phys": (1, 1, "read-phys <hexaddr>"),
    "expect-phys": (2, 2, "expect-phys <hexaddr> <hexword32>"),
    "domain": (2, 4, "domain <name> alloc | domain <name> external <process> [no-override]"),
    "process-table": (5, None, "process-table <name> ia <bits> map <hexva> <hexpa> [...]"),
    "attach": (2, 3, "attach <domain> <device> [instcfg=<data|instruction|default>]"),
    "detach": (2, 2, "detach <domain> <device>"),
    "device": (3, 3, "device <name> sid <hexsid>"),
    "map": (4, 4, "map <domain> <hexva> <hexpa> <size>"),
    "unmap": (3, 3, "unmap <domain> <hexva> <size>"),
    "dma": (4, 4, "dma <channel> <hexsrc> <hexdst> <len>"),
    "pl": (1, 3, "pl port <hpc0|hpc1> | pl set <reg-offset> <hexword32> | pl trigger"),
    "tlb": (1, 1, "tlb flush"),
    "expect-fault": (1, 2, "expect-fault <GFAULT|CFAULT> [reason]"),
    "expect-xlate": (1, 1, "expect-xlate <hexpa>"),
    "expect-bypass": (0, 1, "expect-bypass [hexpa]"),
    "expect-bank": (2, None, "expect-bank <cb> key=value..."),
}


def _validate(cmd):
    lo, hi, usage = _USAGE[cmd.name]
    n = len(cmd.args)
    if n < lo or (hi is not None and n > hi):
        raise ScriptError(cmd.lineno, f"usage: {usage}")
    a = cmd.args
    try:
        if cmd.name in ("write-phys", "expect-phys"):
            _hex(a[0]), _hex(a[1])
        elif cmd.name in ("read-phys", "expect-xlate") or (cmd.name == "expect-bypass" and a):
            _hex(a[0])
        elif cmd.name == "policy":
            if a[0] != "unmatched" or a[1] not in ("bypass", "fault"):
                raise ValueError
        elif cmd.name == "domain":
            if a[1] == "alloc":
                if n != 2:
                    raise ValueError
            elif a[1] == "external":
                if n < 3 or (n == 4 and a[3] != "no-override"):
                    raise ValueError
            else:
                raise ValueError
        elif cmd.name == "process-table":
            if a[1] != "ia" or a[3] != "map":
                raise ValueError
            _num(a[2])
            pairs = [t for t in a[4:] if t != "map"]
            if not pairs or len(pairs) % 2:
                raise ValueError
            [_hex(t) for t in pairs]
        elif cmd.name == "attach" and n == 3:
            key, _, val = a[2].partition("=")
            if key != "instcfg" or val not in ("data", "instruction", "default"):
                raise ValueError
        elif cmd.name == "device":
            if a[1] != "sid":
                raise ValueError
            _hex(a[2])
        elif cmd.name == "map":
            _hex(a[1]), _hex(a[2]), _num(a[3])
        elif cmd.name == "unmap":
            _hex(a[1]), _num(a[2])
        elif cmd.name == "dma":
            _hex(a[1]), _hex(a[2]), _num(a[3])
        elif cmd.name == "pl":
            if a[0] == "port":
                if n != 2 or a[1].lower() not in ("hpc0", "hpc1"):
                    raise ValueError
            elif a[0] == "set":
                if n != 3:
                    raise ValueError
                _hex(a[1]), _hex(a[2])
            elif a[0] != "trigger" or n != 1:
                raise ValueError
        elif cmd.name == "tlb":
            if a[0] != "flush":
                raise ValueError
        elif cmd.name == "expect-fault":
            if a[0] not in ("GFAULT", "CFAULT"):
                raise ValueError
        elif cmd.name == "expect-bank":
            _num(a[0])
            for kv in a[1:]:
                key, eq, val = kv.partition("=")
                if not eq or key not in ("t0sz", "pasize", "ttbr0", "enabled", "ia", "oa"):
                    raise ValueError
                _num(val)
    except ValueError:
        raise ScriptError(cmd.lineno, f"usage: {usage}") from None


def parse_script(text: str, name: str = "<script>", base_dir=None) -> Scenario:
    scn = Scenario(name, base_dir=Path(base_dir) if base_dir else None)
    for lineno, line in enumerate(text.splitlines(), 1):
        try:
            toks = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ScriptError(lineno, str(exc)) from None
        if not toks:
            continue
        cmd = Command(lineno, toks[0], toks[1:])
        if cmd.name not in _USAGE:
            raise ScriptError(lineno, f"unknown command {cmd.name!r}")
        _validate(cmd)
        scn.commands.append(cmd)
    return scn


def load_script(path) -> Scenario:
    path = find_bundled(path, "scenarios")
    return parse_script(path.read_text(encoding="utf-8"), path.name, path.parent)


def find_bundled(path, kind, base_dir=None) -> Path:
    """Resolve ``path`` as given, relative to ``base_dir``, then among bundled data."""
    p = Path(path)
    candidates = [p]
    if base_dir is not None and not p.is_absolute():
        candidates.append(Path(base_dir) / p)
    candidates.append(Path(str(DATA_DIR / kind / p.name)))
    for c in candidates:
        if c.is_file():
            return c
    raise FileNotFoundError(f"{path}: not found")


class Simulation:
    """A fresh SoC: memory, SMMU, IOMMU registry, PS DMA channels, PL IP."""

    def __init__(self, trace: Optional[Callable[[str], None]] = None, base_dir=None):
        self.trace_sink = trace
        self.base_dir = base_dir
        self.mem = PhysMemory()
        self.smmu = Smmu(trace=self.out)
        self.iommu = IommuRegistry(self.smmu, self.mem)
        self.channels = {c.name: c for c in standard_channels()}
        for c in self.channels.values():
            self.iommu.register_device(c.name, c.stream_id)
        self.pl = PlDmaIp()
        self.domains = {}
        self.processes = {}
        self.last_outcome = None

    def out(self, line: str) -> None:
        if self.trace_sink is not None:
            self.trace_sink(line)

    # -- device tree ----------------------------------------------------------
    def load_dts(self, root: dts.DtsNode) -> None:
        if self.domains:
            raise SmmuSimError("load-dts must run before any domain is allocated")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", dts.MasterMismatchWarning)
            bindings = dts.resolve_masters(root)
        for w in caught:
            self.out(f"DIAG {w.message}")
        nodes = dts.phandle_map(root)
        by_base = {c.base: c for c in self.channels.values()}
        self.iommu = IommuRegistry(self.smmu, self.mem)
        for b in bindings:
            node = nodes[b.device_phandle]
            chan = by_base.get(dts.reg_base(node))
            if chan is not None:
                chan.stream_id = b.stream_id
                chan.enabled = dts.is_channel_enabled(node)
                name = chan.name
            else:
                name = node.name
            self.iommu.register_device(name, b.stream_id)

    # -- physical access, with the PL register window decoded -----------------
    def write_phys(self, pa: int, value: int) -> None:
        if self.pl.decodes(pa):
            if self.pl.write_reg(pa - self.pl.base, value):
                self.last_outcome = pl_trigger(self.smmu, self.mem, self.pl).outcome
            return
        self.mem.write_word32(pa, value)

    def read_phys(self, pa: int) -> int:
        if self.pl.decodes(pa):
            return self.pl.regs[pa - self.pl.base]
        return self.mem.read_word32(pa)

    # -- command execution ----------------------------------------------------
    def execute(self, cmd: Command) -> None:
        getattr(self, "_cmd_" + cmd.name.replace("-", "_"))(cmd, *cmd.args)

    def _domain(self, name):
        try:
            return self.domains[name]
        except KeyError:
            raise SmmuSimError(f"no domain named {name!r}") from None

    def _cmd_load_dts(self, cmd, path):
        self.load_dts(dts.load_dts(find_bundled(path, "dts", self.base_dir)))

    def _cmd_policy(self, cmd, _what, policy):
        self.smmu.unmatched_policy = UnmatchedPolicy(policy)

    def _cmd_write_phys(self, cmd, addr, word):
        self.write_phys(_hex(addr), _hex(word))

    def _cmd_read_phys(self, cmd, addr):
        self.out(f"PHYS 0x{_hex(addr):012x} = 0x{self.read_phys(_hex(addr)):08x}")

    def _cmd_expect_phys(self, cmd, addr, word):
        got = self.read_phys(_hex(addr))
        if got != _hex(word) & 0xFFFF_FFFF:
            raise ScenarioAssertion(f"phys 0x{_hex(addr):x} = 0x{got:08x}, expected 0x{_hex(word):08x}")

    def _cmd_domain(self, cmd, name, action, *rest):
        if action == "alloc":
            if name in self.domains:
                raise SmmuSimError(f"domain {name!r} already allocated")
            self.domains[name] = self.iommu.domain_alloc()
            return
        proc = rest[0]
        if proc not in self.processes:
            raise SmmuSimError(f"no process table named {proc!r}")
        override = not (len(rest) > 1 and rest[1] == "no-override")
        self.iommu.set_external_table(self._domain(name), self.processes[proc].root, override)

    def _cmd_process_table(self, cmd, name, _ia, bits, _map, *rest):
        vals = [_hex(t) for t in rest if t != "map"]
        pairs = list(zip(vals[0::2], vals[1::2]))
        self.processes[name] = build_process_table(self.mem, _num(bits), pairs)

    def _cmd_attach(self, cmd, domain, device, *opt):
        instcfg = InstCfg.DATA
        if opt:
            instcfg = InstCfg(opt[0].partition("=")[2])
        self.iommu.attach_group(self._domain(domain), self.iommu.group_get(device), instcfg)

    def _cmd_detach(self, cmd, domain, device):
        self.iommu.detach_group(self._domain(domain), self.iommu.group_get(device))

    def _cmd_device(self, cmd, name, _sid, sid):
        self.iommu.register_device(name, _hex(sid))

    def _cmd_map(self, cmd, domain, va, pa, size):
        self.iommu.iommu_map(self._domain(domain), _hex(va), _hex(pa), _num(size))

    def _cmd_unmap(self, cmd, domain, va, size):
        self.iommu.iommu_unmap(self._domain(domain), _hex(va), _num(size))

    def _cmd_dma(self, cmd, channel, src, dst, length):
        try:
            chan = self.channels[channel]
        except KeyError:
            raise SmmuSimError(f"no DMA channel named {channel!r}") from None
        report = dma_transfer(self.smmu, self.mem, chan, _hex(src), _hex(dst), _num(length))
        self.last_outcome = report.outcomes[-1]

    def _cmd_pl(self, cmd, action, *rest):
        if action == "port":
            self.pl.port = Port[rest[0].upper()]
        elif action == "set":
            self.write_phys(self.pl.base + _hex(rest[0]), _hex(rest[1]))
        else:
            self.write_phys(self.pl.base + REG_TRIGGER, 1)

    def _cmd_tlb(self, cmd, _flush):
        self.smmu.tlb_invalidate_all()

    def _cmd_expect_fault(self, cmd, tag, reason=None):
        o = self.last_outcome
        if not isinstance(o, (GlobalFault, ContextFault)) or outcome_tag(o) != tag:
            raise ScenarioAssertion(f"expected {tag}, last outcome was {o}")
        if reason is not None:
            got = str(o.reason) if isinstance(o, GlobalFault) else o.reason_name
            if got != reason:
                raise ScenarioAssertion(f"expected {tag} reason {reason}, got {got}")

    def _cmd_expect_xlate(self, cmd, pa):
        o = self.last_outcome
        if not isinstance(o, Translated) or o.pa != _hex(pa):
            raise ScenarioAssertion(f"expected XLATE pa=0x{_hex(pa):x}, last outcome was {o}")

    def _cmd_expect_bypass(self, cmd, pa=None):
        o = self.last_outcome
        if not isinstance(o, Bypassed) or (pa is not None and o.pa != _hex(pa)):
            raise ScenarioAssertion(f"expected BYPASS, last outcome was {o}")

    def _cmd_expect_bank(self, cmd, index, *kvs):
        bank = self.smmu.banks[_num(index)]
        fields = {"t0sz": bank.t0sz, "pasize": bank.pasize, "ttbr0": bank.ttbr0,
                  "enabled": int(bank.enabled), "ia": bank.ia_bits,
                  "oa": decode_pasize(bank.pasize)}
        for kv in kvs:
            key, _, val = kv.partition("=")
            if fields[key] != _num(val):
                raise ScenarioAssertion(f"bank {index} {key} = 0x{fields[key]:x}, expected {val}")


@dataclass
class RunResult:
    status: int
    trace: list
    message: str = ""


def run_scenario(scn: Scenario, sink: Optional[Callable[[str], None]] = None) -> RunResult:
    trace = []

    def emit(line):
        trace.append(line)
        if sink is not None:
            sink(line)

    sim = Simulation(trace=emit, base_dir=scn.base_dir)
    for cmd in scn.commands:
        try:
            sim.execute(cmd)
        except ScenarioAssertion as exc:
            return RunResult(EXIT_ASSERT, trace, f"{scn.name}:{cmd.lineno}: assertion failed: {exc}")
        except (SmmuSimError, FileNotFoundError) as exc:
            return RunResult(EXIT_RUNTIME, trace, f"{scn.name}:{cmd.lineno}: {type(exc).__name__}: {exc}")
    return RunResult(EXIT_OK, trace)


def run_script(path, sink=None) -> RunResult:
    try:
        scn = load_script(path)
    except ScriptError as exc:
        return RunResult(EXIT_PARSE, [], f"{path}: {exc}")
    except FileNotFoundError as exc:
        return RunResult(EXIT_PARSE, [], str(exc))
    return run_scenario(scn, sink)
