"""Parser for the device-tree source subset used to configure SMMU masters.

Supported input is an already-flattened source: nodes ``name { ... };``,
properties with ``<cells>``, ``"strings"``, ``[bytes]`` or no value, C and
C++ comments, and ``label:`` prefixes (ignored). Directives such as
``/dts-v1/`` and includes are rejected.
"""

import enum
import re
import warnings
from dataclasses import dataclass
from typing import Optional

from .errors import DtsError, ParseError, UnresolvedPhandle
from .stream_mapping import SID_MASK


class ValueKind(enum.Enum):
    EMPTY = "empty"
    CELLS = "cells"
    STRING = "string"
    STRINGS = "strings"
    BYTES = "bytes"
    RAW = "raw"


@dataclass(frozen=True)
class DtsProperty:
    name: str
    kind: ValueKind
    value: object = None


@dataclass(frozen=True)
class DtsNode:
    name: str
    properties: tuple = ()
    children: tuple = ()

    def prop(self, name) -> Optional[DtsProperty]:
        for p in self.properties:
            if p.name == name:
                return p
        return None

    def get(self, name, default=None):
        p = self.prop(name)
        return default if p is None else p.value

    def has(self, name) -> bool:
        return self.prop(name) is not None

    @property
    def phandle(self) -> Optional[int]:
        for key in ("phandle", "linux,phandle"):
            p = self.prop(key)
            if p is not None and p.kind is ValueKind.CELLS and len(p.value) == 1:
                return p.value[0]
        return None

    def iter_nodes(self):
        yield self
        for c in self.children:
            yield from c.iter_nodes()

    def child(self, name) -> Optional["DtsNode"]:
        for c in self.children:
            if c.name == name:
                return c
        return None


@dataclass(frozen=True)
class MasterBinding:
    device_phandle: int
    stream_id: int


class MasterMismatchWarning(UserWarning):
    """A device's ``iommus`` StreamID disagrees with the SMMU's ``mmu-masters``."""


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<directive>/[a-z0-9-]+/)
  | (?P<root>/(?=\s*\{))
  | (?P<punct>[{};=<>\[\],:&])
  | (?P<word>[A-Za-z0-9_,.+#?@-][A-Za-z0-9_,.+#?@/-]*)
""", re.VERBOSE | re.DOTALL)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise ParseError("unterminated string", line, col)
            if text.startswith("/*", pos):
                raise ParseError("unterminated comment", line, col)
            raise ParseError(f"unexpected character {ch!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "directive" or (kind == "word" and s == "#include"):
            raise ParseError(f"unsupported directive {s}", line, col)
        if kind not in ("ws", "lcomment", "bcomment"):
            toks.append(_Tok("word" if kind == "root" else kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    return toks


# --------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0
        self.text = text

    def peek(self, off=0):
        j = self.i + off
        return self.toks[j] if j < len(self.toks) else None

    def eof_position(self):
        lines = self.text.split("\n")
        return len(lines), len(lines[-1]) + 1

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", *self.eof_position())
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def parse_body(self, closing):
        props, children = [], []
        while True:
            tok = self.peek()
            if tok is None:
                if closing:
                    raise ParseError("unbalanced braces: missing '}'", *self.eof_position())
                return props, children
            if tok.text == "}":
                if not closing:
                    raise ParseError("unbalanced braces: unexpected '}'", tok.line, tok.col)
                self.next()
                self.expect(";")
                return props, children
            name = self.next()
            if name.kind != "word":
                raise ParseError(f"expected a name, found {name.text!r}", name.line, name.col)
            # label prefix
            if self.peek() is not None and self.peek().text == ":":
                self.next()
                name = self.next()
                if name.kind != "word":
                    raise ParseError(f"expected a name after label, found {name.text!r}",
                                     name.line, name.col)
            nxt = self.next()
            if nxt.text == "{":
                p, c = self.parse_body(closing=True)
                children.append(DtsNode(name.text, tuple(p), tuple(c)))
            elif nxt.text == ";":
                props.append(DtsProperty(name.text, ValueKind.EMPTY))
            elif nxt.text == "=":
                props.append(self.parse_value(name.text))
            else:
                raise ParseError(f"unexpected {nxt.text!r} after {name.text!r}", nxt.line, nxt.col)

    def parse_value(self, name):
        parts = []
        start = self.peek()
        while True:
            tok = self.next()
            if tok.text == "<":
                parts.append(("cells", self.parse_cells(tok)))
            elif tok.kind == "string":
                parts.append(("string", _unescape(tok.text[1:-1])))
            elif tok.text == "[":
                parts.append(("bytes", self.parse_bytes(tok)))
            else:
                raise ParseError(f"unexpected {tok.text!r} in value of {name!r}", tok.line, tok.col)
            sep = self.next()
            if sep.text == ";":
                break
            if sep.text != ",":
                raise ParseError(f"expected ',' or ';', found {sep.text!r}", sep.line, sep.col)
        kinds = {k for k, _ in parts}
        if any(k == "cells" and v is None for k, v in parts):
            return DtsProperty(name, ValueKind.RAW, self._raw(start))
        if kinds == {"cells"}:
            return DtsProperty(name, ValueKind.CELLS, tuple(c for _, v in parts for c in v))
        if kinds == {"string"}:
            if len(parts) == 1:
                return DtsProperty(name, ValueKind.STRING, parts[0][1])
            return DtsProperty(name, ValueKind.STRINGS, tuple(v for _, v in parts))
        if kinds == {"bytes"} and len(parts) == 1:
            return DtsProperty(name, ValueKind.BYTES, parts[0][1])
        return DtsProperty(name, ValueKind.RAW, self._raw(start))

    def _raw(self, start):
        # source text of the value, from its first token up to the closing ';'
        lines = self.text.splitlines(keepends=True)
        begin = sum(len(l) for l in lines[:start.line - 1]) + start.col - 1
        end_tok = self.toks[self.i - 1]
        end = sum(len(l) for l in lines[:end_tok.line - 1]) + end_tok.col - 1
        return " ".join(self.text[begin:end].split())

    def parse_cells(self, open_tok):
        cells = []
        has_ref = False
        while True:
            tok = self.next()
            if tok.text == ">":
                return None if has_ref else cells
            if tok.text == "&":
                ref = self.next()
                if ref.kind != "word":
                    raise ParseError("malformed phandle reference", ref.line, ref.col)
                has_ref = True
                continue
            if tok.kind != "word":
                raise ParseError(f"malformed cell list: unexpected {tok.text!r}", tok.line, tok.col)
            try:
                v = int(tok.text, 0)
            except ValueError:
                raise ParseError(f"malformed cell {tok.text!r}", tok.line, tok.col) from None
            if not 0 <= v < 1 << 32:
                raise ParseError(f"cell {tok.text} exceeds 32 bits", tok.line, tok.col)
            cells.append(v)

    def parse_bytes(self, open_tok):
        out = bytearray()
        while True:
            tok = self.next()
            if tok.text == "]":
                return bytes(out)
            if tok.kind != "word" or not re.fullmatch(r"(?:[0-9a-fA-F]{2})+", tok.text):
                raise ParseError(f"malformed byte list: {tok.text!r}", tok.line, tok.col)
            out += bytes.fromhex(tok.text)


def _unescape(s):
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), s)


def parse_dts(text: str) -> DtsNode:
    """Parse source text into an implicit root node holding the top-level nodes."""
    p = _Parser(text)
    props, children = p.parse_body(closing=False)
    # a top-level "/ { ... };" block is merged into the implicit root
    merged = []
    for c in children:
        if c.name == "/":
            props.extend(c.properties)
            merged.extend(c.children)
        else:
            merged.append(c)
    root = DtsNode("/", tuple(props), tuple(merged))
    seen = {}
    for node in root.iter_nodes():
        ph = node.phandle
        if ph is None:
            continue
        if ph in seen:
            raise ParseError(f"duplicate phandle 0x{ph:x} on {seen[ph]!r} and {node.name!r}")
        seen[ph] = node.name
    return root


def load_dts(path) -> DtsNode:
    with open(path, encoding="utf-8") as f:
        return parse_dts(f.read())


# --------------------------------------------------------------------------
# serialization

def _quote(s):
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_property(p: DtsProperty) -> str:
    if p.kind is ValueKind.EMPTY:
        return f"{p.name};"
    if p.kind is ValueKind.CELLS:
        return f"{p.name} = <{' '.join(f'0x{c:x}' for c in p.value)}>;"
    if p.kind is ValueKind.STRING:
        return f"{p.name} = {_quote(p.value)};"
    if p.kind is ValueKind.STRINGS:
        return f"{p.name} = {', '.join(_quote(s) for s in p.value)};"
    if p.kind is ValueKind.BYTES:
        return f"{p.name} = [{' '.join(f'{b:02x}' for b in p.value)}];"
    return f"{p.name} = {p.value};"


def format_dts(root: DtsNode) -> str:
    lines = []

    def emit(node, depth):
        pad = "\t" * depth
        lines.append(f"{pad}{node.name} {{")
        for p in node.properties:
            lines.append(f"{pad}\t{format_property(p)}")
        for c in node.children:
            emit(c, depth + 1)
        lines.append(f"{pad}}};")

    for p in root.properties:
        lines.append(format_property(p))
    for c in root.children:
        emit(c, 0)
    return "\n".join(lines) + ("\n" if lines else "")


# --------------------------------------------------------------------------
# queries

def phandle_map(root: DtsNode) -> dict:
    return {n.phandle: n for n in root.iter_nodes() if n.phandle is not None}


def find_smmu(root: DtsNode) -> DtsNode:
    for node in root.iter_nodes():
        if node.has("mmu-masters"):
            return node
    raise DtsError("no node with an mmu-masters property")


def _master_pairs(smmu):
    prop = smmu.prop("mmu-masters")
    if prop.kind is ValueKind.EMPTY:
        return []
    if prop.kind is not ValueKind.CELLS:
        raise DtsError("mmu-masters is not a cell list")
    cells = prop.value
    if len(cells) % 2:
        raise DtsError(f"mmu-masters has an odd number of cells ({len(cells)})")
    return list(zip(cells[0::2], cells[1::2]))


def master_diagnostics(root: DtsNode) -> list:
    """Human-readable notes where ``iommus`` and ``mmu-masters`` disagree."""
    smmu = find_smmu(root)
    nodes = phandle_map(root)
    notes = []
    for ph, sid in _master_pairs(smmu):
        node = nodes.get(ph)
        if node is None:
            continue
        iommus = node.get("iommus")
        if (node.prop("iommus") is not None and node.prop("iommus").kind is ValueKind.CELLS
                and len(iommus) >= 2 and iommus[1] != sid):
            notes.append(f"{node.name} (phandle 0x{ph:x}): iommus StreamID 0x{iommus[1]:x} "
                         f"disagrees with mmu-masters 0x{sid:x}; using 0x{sid:x}")
    return notes


def resolve_masters(root: DtsNode) -> list:
    smmu = find_smmu(root)
    nodes = phandle_map(root)
    out = []
    for ph, sid in _master_pairs(smmu):
        if ph not in nodes:
            raise UnresolvedPhandle(f"mmu-masters lists phandle 0x{ph:x} with no node")
        if sid > SID_MASK:
            raise DtsError(f"StreamID 0x{sid:x} for phandle 0x{ph:x} exceeds 15 bits")
        out.append(MasterBinding(ph, sid))
    for note in master_diagnostics(root):
        warnings.warn(note, MasterMismatchWarning, stacklevel=2)
    return out


def is_channel_enabled(node: DtsNode) -> bool:
    status = node.get("status")
    if status is not None and status != "okay":
        return False
    return node.has("clock-names") and node.has("clocks")


def reg_base(node: DtsNode) -> Optional[int]:
    """Base address from ``reg``, assuming two address cells."""
    reg = node.prop("reg")
    if reg is None or reg.kind is not ValueKind.CELLS or len(reg.value) < 2:
        return None
    return (reg.value[0] << 32) | reg.value[1]
