"""PNC atoms: topology, link success probabilities and the per-round pattern.

An atom is pure data.  The per-slot schedule names, for each transmitting
node, the item it sends (an XOR of the current packets of some flows) and,
for each reception, the receiving node, the link whose success governs it
and the item rule.  The simulator, the channel sampler and the Markov
enumeration all read the same :class:`AtomSpec`.

Pattern file grammar (ASCII, line oriented, ``#`` starts a comment)::

    [atom]
    name <identifier>
    [nodes]
    <node> <source|relay|destination>
    [links]
    <link-id> <kind> <lsp>
    [flows]
    <flow-id> <source-node> <destination-node>
    [slots]
    <index>: <tx>; <tx>; <rx>; ...

    tx  := <node>-><rule>
    rx  := <node><-<link-id>:<rule>
    rule := <token>[+<token>...]    token = flow id or transmitting node

A flow-id token stands for the packet the flow's source sends in that slot.
A node token stands for whatever that node transmits in that slot.  A relay
transmit rule lists the flows whose XOR it forwards; it can only forward
what it decoded earlier in the same round.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

LINK_KINDS = ("relay-decode", "downlink", "overhear", "ack-uplink", "ack-broadcast")
NODE_ROLES = ("source", "relay", "destination")

_IDENT = re.compile(r"^[A-Za-z0-9_.]+$")


class PatternError(ValueError):
    """Syntax or reference error in a pattern document."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class AtomValidationError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class LinkSpec:
    id: str
    kind: str
    lsp: float


@dataclass(frozen=True)
class FlowSpec:
    id: str
    src: str
    dst: str
    # links whose joint success delivers one packet on perfect channels;
    # derived from the pattern by the constructors
    links: tuple[str, ...] = ()


@dataclass(frozen=True)
class Transmission:
    node: str
    rule: tuple[str, ...]


@dataclass(frozen=True)
class Reception:
    node: str
    link: str
    rule: tuple[str, ...]


@dataclass(frozen=True)
class Slot:
    index: int
    transmissions: tuple[Transmission, ...]
    receptions: tuple[Reception, ...]


@dataclass(frozen=True)
class AtomSpec:
    name: str
    nodes: tuple[tuple[str, str], ...]
    links: tuple[LinkSpec, ...]
    flows: tuple[FlowSpec, ...]
    slots: tuple[Slot, ...]
    _link_map: dict = field(init=False, repr=False, compare=False, hash=False)
    _flow_map: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_link_map", {l.id: l for l in self.links})
        object.__setattr__(self, "_flow_map", {f.id: f for f in self.flows})

    @property
    def slots_per_round(self) -> int:
        return len(self.slots)

    @property
    def node_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.nodes)

    def role(self, node: str) -> str | None:
        for name, role in self.nodes:
            if name == node:
                return role
        return None

    def link(self, link_id: str) -> LinkSpec:
        return self._link_map[link_id]

    def flow(self, flow_id: str) -> FlowSpec:
        return self._flow_map[flow_id]

    def has_link(self, link_id: str) -> bool:
        return link_id in self._link_map

    def resolve(self, slot: Slot, rule: tuple[str, ...]) -> frozenset[str]:
        """Flow set of an item rule evaluated inside ``slot``."""
        out: set[str] = set()
        for token in rule:
            if token in self._flow_map:
                out ^= {token}
                continue
            for tx in slot.transmissions:
                if tx.node == token:
                    out ^= set(self.resolve(slot, tx.rule))
                    break
            else:
                raise KeyError(token)
        return frozenset(out)

    def data_events(self) -> tuple[tuple[str, float], ...]:
        """Stochastic link events of one round, as ``(event id, lsp)``."""
        return tuple(
            (event_id(slot.index, rx), self.link(rx.link).lsp)
            for slot in self.slots
            for rx in slot.receptions
        )

    def ack_lsps(self) -> dict[str, float]:
        """Reverse-link LSPs used by realistic ACKs, keyed by ACK event id.

        Reverse links mirror the forward ones: a destination's ACK uplink and
        its overhearing of the relay's ACK broadcast use its downlink LSP; a
        source hears the relay's ACK broadcast with the LSP of the
        relay-decode link it transmits on.
        """
        out: dict[str, float] = {}
        for f in self.flows:
            down = self._downlink_lsp(f.dst)
            out[f"ack-up:{f.dst}"] = down
            out[f"ack-over:{f.dst}"] = down
            out[f"ack-down:{f.src}"] = self._uplink_lsp(f.src)
        return out

    def _downlink_lsp(self, node: str) -> float:
        for slot in self.slots:
            for rx in slot.receptions:
                if rx.node == node and self.link(rx.link).kind == "downlink":
                    return self.link(rx.link).lsp
        raise KeyError(f"no downlink into {node}")

    def _uplink_lsp(self, node: str) -> float:
        for slot in self.slots:
            if any(tx.node == node for tx in slot.transmissions):
                for rx in slot.receptions:
                    if self.link(rx.link).kind == "relay-decode":
                        return self.link(rx.link).lsp
        raise KeyError(f"no relay-decode link for {node}")


def event_id(slot_index: int, rx: Reception) -> str:
    return f"{slot_index}:{rx.node}<-{rx.link}"


def _check_prob(*ps: float) -> None:
    for p in ps:
        if not (0.0 < p <= 1.0) or math.isnan(p):
            raise ValueError(f"link success probability {p!r} out of (0,1]")


def _derive_flow_links(nodes, links, flows, slots) -> tuple[FlowSpec, ...]:
    draft = AtomSpec("draft", nodes, links, tuple(flows), slots)
    out = []
    for f in flows:
        used = []
        for slot in slots:
            for rx in slot.receptions:
                kind = draft.link(rx.link).kind
                carried = draft.resolve(slot, rx.rule)
                if kind == "relay-decode" and f.id in carried:
                    used.append(rx.link)
                elif rx.node == f.dst and kind in ("downlink", "overhear"):
                    used.append(rx.link)
        out.append(FlowSpec(f.id, f.src, f.dst, tuple(dict.fromkeys(used))))
    return tuple(out)


def build_atom(name, nodes, links, flows, slots) -> AtomSpec:
    """Assemble an atom, deriving each flow's link chain from the pattern."""
    nodes = tuple(nodes)
    links = tuple(links)
    slots = tuple(slots)
    flows = _derive_flow_links(nodes, links, [FlowSpec(f.id, f.src, f.dst) for f in flows], slots)
    return AtomSpec(name, nodes, links, flows, slots)


def builtin_cross_atom(*lsps: float) -> AtomSpec:
    """The two-flow cross atom A->R->C, B->R->D.

    Accepts one homogeneous LSP, a ``(p_direct, p_overhear)`` pair, or the
    five heterogeneous values ``p1..p5`` where p1 is the relay decode of
    A xor B, p2 and p3 the downlinks to C and D, p4 the overhearing B->C and
    p5 the overhearing A->D.  With those roles the no-tracking throughput is
    ``p1 * (p2*p4 + p3*p5)`` packets per round.
    """
    if len(lsps) == 1:
        p1 = p2 = p3 = p4 = p5 = lsps[0]
    elif len(lsps) == 2:
        p1 = p2 = p3 = lsps[0]
        p4 = p5 = lsps[1]
    elif len(lsps) == 5:
        p1, p2, p3, p4, p5 = lsps
    else:
        raise TypeError("builtin_cross_atom takes 1, 2 or 5 probabilities")
    _check_prob(p1, p2, p3, p4, p5)
    nodes = (("A", "source"), ("B", "source"), ("R", "relay"),
             ("C", "destination"), ("D", "destination"))
    links = (
        LinkSpec("AB_R", "relay-decode", float(p1)),
        LinkSpec("R_C", "downlink", float(p2)),
        LinkSpec("R_D", "downlink", float(p3)),
        LinkSpec("B_C", "overhear", float(p4)),
        LinkSpec("A_D", "overhear", float(p5)),
    )
    flows = (FlowSpec("AC", "A", "C"), FlowSpec("BD", "B", "D"))
    slots = (
        Slot(1,
             (Transmission("A", ("AC",)), Transmission("B", ("BD",))),
             (Reception("R", "AB_R", ("AC", "BD")),
              Reception("C", "B_C", ("BD",)),
              Reception("D", "A_D", ("AC",)))),
        Slot(2,
             (Transmission("R", ("AC", "BD")),),
             (Reception("C", "R_C", ("R",)),
              Reception("D", "R_D", ("R",)))),
    )
    return build_atom("cross", nodes, links, flows, slots)


def builtin_star_atom(p: float) -> AtomSpec:
    """Three-flow star atom, three slots per round, homogeneous LSP ``p``.

    Slot 1: S1 sends X to the relay, T2 and T3 overhear X.  Slot 2: S2 and
    S3 send Y and Z together; the relay decodes Y xor Z, T1 overhears the
    superposition as Y xor Z, T2 overhears Z and T3 overhears Y.  Slot 3:
    the relay broadcasts X xor Y xor Z.
    """
    _check_prob(p)
    p = float(p)
    nodes = (("S1", "source"), ("S2", "source"), ("S3", "source"), ("R", "relay"),
             ("T1", "destination"), ("T2", "destination"), ("T3", "destination"))
    links = (
        LinkSpec("S1_R", "relay-decode", p),
        LinkSpec("S23_R", "relay-decode", p),
        LinkSpec("S1_T2", "overhear", p),
        LinkSpec("S1_T3", "overhear", p),
        LinkSpec("S23_T1", "overhear", p),
        LinkSpec("S3_T2", "overhear", p),
        LinkSpec("S2_T3", "overhear", p),
        LinkSpec("R_T1", "downlink", p),
        LinkSpec("R_T2", "downlink", p),
        LinkSpec("R_T3", "downlink", p),
    )
    flows = (FlowSpec("f1", "S1", "T1"), FlowSpec("f2", "S2", "T2"), FlowSpec("f3", "S3", "T3"))
    slots = (
        Slot(1,
             (Transmission("S1", ("f1",)),),
             (Reception("R", "S1_R", ("f1",)),
              Reception("T2", "S1_T2", ("f1",)),
              Reception("T3", "S1_T3", ("f1",)))),
        Slot(2,
             (Transmission("S2", ("f2",)), Transmission("S3", ("f3",))),
             (Reception("R", "S23_R", ("f2", "f3")),
              Reception("T1", "S23_T1", ("f2", "f3")),
              Reception("T2", "S3_T2", ("f3",)),
              Reception("T3", "S2_T3", ("f2",)))),
        Slot(3,
             (Transmission("R", ("f1", "f2", "f3")),),
             (Reception("T1", "R_T1", ("R",)),
              Reception("T2", "R_T2", ("R",)),
              Reception("T3", "R_T3", ("R",)))),
    )
    return build_atom("star", nodes, links, flows, slots)


def with_lsp(atom: AtomSpec, p: float) -> AtomSpec:
    """Copy of ``atom`` with every link set to the homogeneous LSP ``p``."""
    _check_prob(p)
    links = tuple(LinkSpec(l.id, l.kind, float(p)) for l in atom.links)
    return AtomSpec(atom.name, atom.nodes, links, atom.flows, atom.slots)


def _gf2_span_contains(vectors: list[frozenset], target: frozenset) -> bool:
    basis: dict[str, frozenset] = {}
    order = sorted({x for v in vectors for x in v} | set(target))
    rank = {x: i for i, x in enumerate(order)}

    def reduce(v):
        v = set(v)
        while v:
            lead = min(v, key=rank.__getitem__)
            if lead not in basis:
                return frozenset(v), lead
            v ^= basis[lead]
        return frozenset(), None

    for vec in vectors:
        r, lead = reduce(vec)
        if lead is not None:
            basis[lead] = r
    return not reduce(target)[0]


def _relay_items(atom: AtomSpec, relay_nodes: set[str], perfect: bool = True):
    """Per slot, item each relay can forward on perfect channels (None if not)."""
    decoded: dict[str, list[frozenset]] = {r: [] for r in relay_nodes}
    sent = {}
    for slot in atom.slots:
        for tx in slot.transmissions:
            if tx.node in relay_nodes:
                target = atom.resolve(slot, tx.rule)
                parts = [d for d in decoded[tx.node] if d <= target]
                cover = frozenset().union(*parts) if parts else frozenset()
                sent[(slot.index, tx.node)] = target if cover == target else None
        for rx in slot.receptions:
            if rx.node in relay_nodes and atom.link(rx.link).kind == "relay-decode":
                decoded[rx.node].append(atom.resolve(slot, rx.rule))
    return sent


def validate_atom(atom: AtomSpec) -> list[str]:
    """Return every invariant violation of ``atom`` (empty list means ok)."""
    v: list[str] = []
    names = atom.node_names
    for name, role in atom.nodes:
        if role not in NODE_ROLES:
            v.append(f"node {name}: unknown role {role!r}")
    if len(set(names)) != len(names):
        v.append("duplicate node names")
    seen = set()
    for link in atom.links:
        if link.id in seen:
            v.append(f"duplicate link {link.id}")
        seen.add(link.id)
        if link.kind not in LINK_KINDS:
            v.append(f"link {link.id}: unknown kind {link.kind!r}")
        if not (0.0 < link.lsp <= 1.0):
            v.append(f"link {link.id}: lsp out of (0,1]")
    flow_ids = {f.id for f in atom.flows}
    if len(flow_ids) != len(atom.flows):
        v.append("duplicate flow ids")
    for f in atom.flows:
        if f.src == f.dst:
            v.append(f"flow {f.id}: source equals destination")
        for end in (f.src, f.dst):
            if end not in names:
                v.append(f"flow {f.id}: unknown node {end}")
        if atom.role(f.src) not in (None, "source"):
            v.append(f"flow {f.id}: {f.src} is not a source node")
        if atom.role(f.dst) not in (None, "destination"):
            v.append(f"flow {f.id}: {f.dst} is not a destination node")
    if v:
        return v

    relays = {n for n, r in atom.nodes if r == "relay"}
    for slot in atom.slots:
        txers = [tx.node for tx in slot.transmissions]
        if len(set(txers)) != len(txers):
            v.append(f"slot {slot.index}: node transmits twice")
        rxers = {rx.node for rx in slot.receptions}
        both = set(txers) & rxers
        if both:
            v.append(f"slot {slot.index}: {', '.join(sorted(both))} transmits and receives in the same slot")
        for tx in slot.transmissions:
            if tx.node not in names:
                v.append(f"slot {slot.index}: unknown transmitter {tx.node}")
                continue
            role = atom.role(tx.node)
            if role == "source":
                own = [f.id for f in atom.flows if f.src == tx.node]
                if list(tx.rule) != own[:1] or len(tx.rule) != 1:
                    v.append(f"slot {slot.index}: source {tx.node} must send its own flow's packet")
            elif role != "relay":
                v.append(f"slot {slot.index}: {tx.node} ({role}) cannot transmit data")
            for tok in tx.rule:
                if tok not in flow_ids:
                    v.append(f"slot {slot.index}: unknown flow {tok} in transmit rule")
        for rx in slot.receptions:
            if not atom.has_link(rx.link):
                v.append(f"slot {slot.index}: unknown link {rx.link}")
                continue
            if rx.node not in names:
                v.append(f"slot {slot.index}: unknown receiver {rx.node}")
            try:
                carried = atom.resolve(slot, rx.rule)
            except KeyError as exc:
                v.append(f"slot {slot.index}: rule token {exc.args[0]} not transmitted")
                continue
            for tok in rx.rule:
                if tok in flow_ids and atom.flow(tok).src not in txers:
                    v.append(f"slot {slot.index}: flow {tok} is not transmitted in this slot")
            for f in atom.flows:
                if rx.node == f.dst and carried == {f.id} and atom.link(rx.link).kind != "downlink":
                    v.append(f"flow {f.id}: destination hears its source directly")
        simultaneous = [tx for tx in slot.transmissions if atom.role(tx.node) == "source"]
        decodes = [rx for rx in slot.receptions if atom.has_link(rx.link)
                   and atom.link(rx.link).kind == "relay-decode"]
        if len(simultaneous) > 1 and len(decodes) != 1:
            v.append(f"slot {slot.index}: need exactly one relay-decode link, found {len(decodes)}")
    if v:
        return v

    sent = _relay_items(atom, relays)
    for key, item in sent.items():
        if item is None:
            v.append(f"slot {key[0]}: relay {key[1]} forwards an item it never decodes")
    broadcast = set().union(*[i for i in sent.values() if i]) if sent else set()
    for f in atom.flows:
        if f.id not in broadcast:
            v.append(f"flow {f.id}: packet never embedded in a relay broadcast")

    # perfect-channel decodability
    heard: dict[str, list[frozenset]] = {n: [] for n in names}
    for slot in atom.slots:
        for rx in slot.receptions:
            if atom.role(rx.node) == "relay":
                continue
            from_relay = [tx for tx in slot.transmissions if tx.node in relays
                          and tx.node in rx.rule]
            if from_relay and sent.get((slot.index, from_relay[0].node)) is None:
                continue
            heard[rx.node].append(atom.resolve(slot, rx.rule))
    for f in atom.flows:
        if not _gf2_span_contains(heard[f.dst], frozenset({f.id})):
            v.append(f"flow {f.src}->{f.dst} not decodable under perfect channels")
    return v


def check_atom(atom: AtomSpec) -> AtomSpec:
    violations = validate_atom(atom)
    if violations:
        raise AtomValidationError(violations)
    return atom


# --------------------------------------------------------------------------
# text format

def _fmt_rule(rule: tuple[str, ...]) -> str:
    return "+".join(rule)


def dump_pattern(atom: AtomSpec) -> str:
    lines = ["# pncarq transmission pattern", "[atom]", f"name {atom.name}", "[nodes]"]
    lines += [f"{n} {r}" for n, r in atom.nodes]
    lines.append("[links]")
    lines += [f"{l.id} {l.kind} {l.lsp!r}" for l in atom.links]
    lines.append("[flows]")
    lines += [f"{f.id} {f.src} {f.dst}" for f in atom.flows]
    lines.append("[slots]")
    for slot in atom.slots:
        parts = [f"{tx.node}->{_fmt_rule(tx.rule)}" for tx in slot.transmissions]
        parts += [f"{rx.node}<-{rx.link}:{_fmt_rule(rx.rule)}" for rx in slot.receptions]
        lines.append(f"{slot.index}: " + "; ".join(parts))
    return "\n".join(lines) + "\n"


def _ident(tok: str, lineno: int, what: str) -> str:
    if not _IDENT.match(tok):
        raise PatternError(f"bad identifier {tok!r}", lineno, what)
    return tok


def _parse_rule(text: str, lineno: int) -> tuple[str, ...]:
    toks = tuple(t.strip() for t in text.split("+"))
    for t in toks:
        _ident(t, lineno, "rule")
    return toks


def load_pattern(text: str) -> AtomSpec:
    """Parse and validate a pattern document."""
    try:
        text.encode("ascii")
    except UnicodeEncodeError as exc:
        raise PatternError("pattern files must be ASCII") from exc
    section = None
    name = "custom"
    nodes, links, flows, slots = [], [], [], []
    node_lines: dict[str, int] = {}
    link_lines: dict[str, int] = {}
    slot_lines: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("atom", "nodes", "links", "flows", "slots"):
                raise PatternError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise PatternError("content before first section", lineno)
        fields = line.split()
        if section == "atom":
            if len(fields) != 2 or fields[0] != "name":
                raise PatternError("expected 'name <identifier>'", lineno, "atom")
            name = _ident(fields[1], lineno, "atom name")
        elif section == "nodes":
            if len(fields) != 2:
                raise PatternError("expected '<node> <role>'", lineno, "nodes")
            node = _ident(fields[0], lineno, "node")
            if fields[1] not in NODE_ROLES:
                raise PatternError(f"unknown role {fields[1]!r}", lineno, "nodes.role")
            nodes.append((node, fields[1]))
            node_lines[node] = lineno
        elif section == "links":
            if len(fields) != 3:
                raise PatternError("expected '<id> <kind> <lsp>'", lineno, "links")
            lid = _ident(fields[0], lineno, "link id")
            if fields[1] not in LINK_KINDS:
                raise PatternError(f"unknown link kind {fields[1]!r}", lineno, "links.kind")
            try:
                lsp = float(fields[2])
            except ValueError:
                raise PatternError(f"bad lsp {fields[2]!r}", lineno, "links.lsp") from None
            links.append(LinkSpec(lid, fields[1], lsp))
            link_lines[lid] = lineno
        elif section == "flows":
            if len(fields) != 3:
                raise PatternError("expected '<id> <src> <dst>'", lineno, "flows")
            fid = _ident(fields[0], lineno, "flow id")
            for node in fields[1:]:
                if node not in node_lines:
                    raise PatternError(f"unknown node {node!r}", lineno, "flows")
            flows.append(FlowSpec(fid, fields[1], fields[2]))
        else:
            head, sep, body = line.partition(":")
            if not sep:
                raise PatternError("expected '<index>: ...'", lineno, "slots")
            try:
                index = int(head)
            except ValueError:
                raise PatternError(f"bad slot index {head!r}", lineno, "slots.index") from None
            txs, rxs = [], []
            for part in body.split(";"):
                part = part.strip()
                if not part:
                    continue
                if "->" in part:
                    node, rule = part.split("->", 1)
                    node = _ident(node.strip(), lineno, "slots.transmitter")
                    if node not in node_lines:
                        raise PatternError(f"unknown node {node!r}", lineno, "slots.transmitter")
                    txs.append(Transmission(node, _parse_rule(rule, lineno)))
                elif "<-" in part:
                    node, rest = part.split("<-", 1)
                    node = _ident(node.strip(), lineno, "slots.receiver")
                    if node not in node_lines:
                        raise PatternError(f"unknown node {node!r}", lineno, "slots.receiver")
                    link, sep2, rule = rest.partition(":")
                    if not sep2:
                        raise PatternError("expected '<node><-<link>:<rule>'", lineno, "slots.reception")
                    link = link.strip()
                    if link not in link_lines:
                        raise PatternError(f"unknown link {link!r}", lineno, "slots.link")
                    rxs.append(Reception(node, link, _parse_rule(rule, lineno)))
                else:
                    raise PatternError(f"cannot parse {part!r}", lineno, "slots")
            slots.append(Slot(index, tuple(txs), tuple(rxs)))
            slot_lines[index] = lineno
    if not slots:
        raise PatternError("no [slots] defined")
    flow_ids = {f.id for f in flows}
    for s in slots:
        tx_nodes = {tx.node for tx in s.transmissions}
        for tok in [t for tx in s.transmissions for t in tx.rule] + \
                   [t for rx in s.receptions for t in rx.rule]:
            if tok not in flow_ids and tok not in tx_nodes:
                raise PatternError(f"rule token {tok!r} is neither a flow nor a transmitter",
                                   slot_lines[s.index], "slots.rule")
    slots.sort(key=lambda s: s.index)
    atom = build_atom(name, nodes, links, flows, slots)
    return check_atom(atom)
