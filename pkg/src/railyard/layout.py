"""Clock-register geometries and the legal computational-path graph.

Three layout models are supported:

``pulse``
    plain pulse clock, one site per gate boundary (every gate, CNOT included,
    is a single clock hop);
``3local``
    pulse clock with a four-site railroad switch (``u1 u2`` / ``l1 l2``)
    inserted for every CNOT;
``qutrit``
    2-local variant: every CNOT gadget uses three qutrits and two qubits per
    track, and non-identity single-qubit gates sit on a qutrit whose
    ``L -> R`` flip applies the gate.

Site ids follow walk order.  Inside a gadget the upper track comes first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .circuit import GateSpec, QuantumCircuit, space_gadgets

LINE, CYCLE = "line", "cycle"
LEFT, RIGHT = 1, 2  # qutrit active states; qubits use state 1

UPPER_3 = ("u1", "u2")
LOWER_3 = ("l1", "l2")
UPPER_23 = ("u1", "u2", "u3", "u4", "u5")
LOWER_23 = ("l1", "l2", "l3", "l4", "l5")
_QUTRIT_SLOTS = {"u1", "u3", "u5", "l1", "l3", "l5"}


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class ClockSite:
    id: int
    kind: str  # backbone_qubit | gadget_qubit | qutrit
    label: str
    backbone: bool = True

    @property
    def dim(self) -> int:
        return 3 if self.kind == "qutrit" else 2

    @property
    def active_states(self) -> tuple[int, ...]:
        return (LEFT, RIGHT) if self.kind == "qutrit" else (1,)

    @property
    def entry_state(self) -> int:
        return LEFT if self.kind == "qutrit" else 1

    @property
    def exit_state(self) -> int:
        return RIGHT if self.kind == "qutrit" else 1


@dataclass(frozen=True)
class Step:
    """One gate lowered onto the clock: the train goes ``src`` -> ``dst``."""

    gate_index: int
    gate: GateSpec = field(compare=False)
    half: int
    src: int
    dst: int
    gadget: tuple[tuple[str, int], ...] = ()

    @property
    def sites(self) -> dict[str, int]:
        return dict(self.gadget)


@dataclass(frozen=True, eq=False)
class ClockLayout:
    model: str
    topology: str
    n: int
    circuit: QuantumCircuit
    sites: tuple[ClockSite, ...]
    steps: tuple[Step, ...]
    origin: int
    terminus: int

    @cached_property
    def positions(self) -> tuple[tuple[int, int], ...]:
        return tuple((s.id, a) for s in self.sites for a in s.active_states)

    @cached_property
    def position_index(self) -> dict[tuple[int, int], int]:
        return {p: i for i, p in enumerate(self.positions)}

    @property
    def train_positions(self) -> int:
        return len(self.positions)

    @cached_property
    def adjacent_pairs(self) -> tuple[tuple[int, int], ...]:
        """Distinct site pairs joined by some hop, in first-seen order."""
        seen: dict[frozenset, tuple[int, int]] = {}
        for st in self.steps:
            for a, b in _step_links(self.model, st):
                key = frozenset((a, b))
                if a != b and key not in seen:
                    seen[key] = (a, b)
        return tuple(seen.values())

    @property
    def gadgets(self) -> list[dict]:
        out = []
        for st in self.steps:
            if st.gate.is_cnot and st.gadget:
                out.append({
                    "step": st.gate_index + 1,
                    "half": st.half,
                    "control": st.gate.control,
                    "target": st.gate.target,
                    "entry": st.src,
                    "exit": st.dst,
                    "sites": st.sites,
                })
        return out

    def steps_of_half(self, half: int) -> list[Step]:
        return [s for s in self.steps if s.half == half]

    def site(self, label: str) -> ClockSite:
        for s in self.sites:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "topology": self.topology,
            "n_work": self.n,
            "train_positions": self.train_positions,
            "sites": [{"id": s.id, "kind": s.kind, "label": s.label, "dim": s.dim}
                      for s in self.sites],
            "gadgets": self.gadgets,
            "origin": self.origin,
            "terminus": self.terminus,
        }


def _step_links(model: str, st: Step) -> list[tuple[int, int]]:
    g = st.sites
    if not st.gadget:
        return [(st.src, st.dst)]
    if model == "3local":
        return [(st.src, g["u1"]), (g["u1"], g["u2"]), (g["u2"], st.dst),
                (st.src, g["l1"]), (g["l1"], g["l2"]), (g["l2"], st.dst)]
    links = []
    for track in (UPPER_23, LOWER_23):
        chain = [st.src, *(g[k] for k in track), st.dst]
        links.extend(zip(chain, chain[1:]))
    return links


class _Builder:
    def __init__(self):
        self.sites: list[ClockSite] = []

    def add(self, kind: str, label: str, backbone: bool = True) -> int:
        sid = len(self.sites)
        self.sites.append(ClockSite(sid, kind, label, backbone))
        return sid


def build_pulse_layout(circuit: QuantumCircuit) -> ClockLayout:
    """Plain pulse clock ``c_0 .. c_L``; gates (CNOTs too) act on single hops."""
    b = _Builder()
    prev = b.add("backbone_qubit", "c0")
    steps = []
    for t, g in enumerate(circuit.gates, start=1):
        cur = b.add("backbone_qubit", f"c{t}")
        steps.append(Step(t - 1, g, 0, prev, cur))
        prev = cur
    return ClockLayout("pulse", LINE, circuit.n, circuit, tuple(b.sites), tuple(steps), 0, prev)


def build_layout_3local(circuit: QuantumCircuit) -> ClockLayout:
    b = _Builder()
    prev = b.add("backbone_qubit", "c0")
    steps = []
    for t, g in enumerate(circuit.gates, start=1):
        gadget: tuple = ()
        if g.is_cnot:
            gadget = tuple((k, b.add("gadget_qubit", f"{k}@{t}", backbone=False))
                           for k in UPPER_3 + LOWER_3)
        cur = b.add("backbone_qubit", f"c{t}")
        steps.append(Step(t - 1, g, 0, prev, cur, gadget))
        prev = cur
    return ClockLayout("3local", LINE, circuit.n, circuit, tuple(b.sites), tuple(steps), 0, prev)


def build_layout_qutrit(circuit: QuantumCircuit, cycle: bool = True) -> ClockLayout:
    """Qubit-qutrit layout; CNOTs are first spaced 9 clock edges apart.

    The returned layout carries the (possibly identity-augmented) circuit it
    was built for in ``layout.circuit``.
    """
    circuit = space_gadgets(circuit)
    b = _Builder()
    prev = b.add("backbone_qubit", "c0")
    steps = []
    for t, g in enumerate(circuit.gates, start=1):
        gadget: tuple = ()
        if g.is_cnot:
            gadget = tuple(
                (k, b.add("qutrit" if k in _QUTRIT_SLOTS else "gadget_qubit", f"{k}@{t}",
                          backbone=False))
                for k in UPPER_23 + LOWER_23)
        kind = "qutrit" if (not g.is_cnot and not g.is_identity) else "backbone_qubit"
        cur = b.add(kind, f"c{t}")
        steps.append(Step(t - 1, g, 0, prev, cur, gadget))
        prev = cur
    line = ClockLayout("qutrit", LINE, circuit.n, circuit, tuple(b.sites), tuple(steps), 0, prev)
    return close_cycle(line) if cycle else line


def close_cycle(layout: ClockLayout) -> ClockLayout:
    """Double the clock register and identify the two endpoint sites."""
    if layout.topology != LINE:
        raise LayoutError("layout is already a cycle")
    if len(layout.sites) < 3:
        raise LayoutError("cycle closure needs a line of at least 3 sites")
    sites = list(layout.sites)
    remap = {layout.origin: layout.origin, layout.terminus: layout.terminus}
    for s in layout.sites:
        if s.id in remap:
            continue
        nid = len(sites)
        remap[s.id] = nid
        sites.append(ClockSite(nid, s.kind, s.label + "'", s.backbone))
    mirrored = [
        Step(st.gate_index, st.gate, 1, remap[st.src], remap[st.dst],
             tuple((k, remap[v]) for k, v in st.gadget))
        for st in layout.steps
    ]
    return ClockLayout(layout.model, CYCLE, layout.n, layout.circuit, tuple(sites),
                       layout.steps + tuple(mirrored), layout.origin, layout.terminus)


# ---------------------------------------------------------------------------
# legal graph

@dataclass(frozen=True)
class Component:
    """One train placement inside a legal node.

    ``branch`` says which part of the work state lives there: ``all``, the
    control-0 part ``q0``, the control-1 part ``q1``, or the control-1 part
    with the target flipped ``q1x``.
    """

    site: int
    state: int
    branch: str = "all"


@dataclass(frozen=True)
class LegalNode:
    step: int
    prefix: int  # gates applied to phi0 before the branch map
    components: tuple[Component, ...]
    kind: str  # backbone | gadget | pendant
    half: int
    gadget: tuple[int, int] | None = None  # (control, target)
    label: str = ""


@dataclass(frozen=True, eq=False)
class LegalGraph:
    layout: ClockLayout
    nodes: tuple[LegalNode, ...]
    edges: tuple[tuple[int, int, str], ...]
    start: int
    success: frozenset[int]

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((len(self.nodes), len(self.nodes)))
        for i, j, _ in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def pendants(self) -> list[int]:
        return [i for i, nd in enumerate(self.nodes) if nd.kind == "pendant"]

    @property
    def ring_length(self) -> int:
        return len(self.nodes) - len(self.pendants)

    def distances(self) -> np.ndarray:
        """Graph distance of every node from ``start`` (BFS)."""
        nbr: dict[int, list[int]] = {i: [] for i in range(len(self.nodes))}
        for i, j, _ in self.edges:
            nbr[i].append(j)
            nbr[j].append(i)
        dist = np.full(len(self.nodes), -1)
        dist[self.start] = 0
        frontier = [self.start]
        while frontier:
            nxt = []
            for i in frontier:
                for j in nbr[i]:
                    if dist[j] < 0:
                        dist[j] = dist[i] + 1
                        nxt.append(j)
            frontier = nxt
        return dist

    def is_connected(self) -> bool:
        return bool(np.all(self.distances() >= 0))

    def is_path(self) -> bool:
        d = self.degrees
        return (len(self.edges) == len(self.nodes) - 1 and self.is_connected()
                and sorted(d)[:2] == [1, 1] and d.max() <= 2) or len(self.nodes) == 1

    def is_cycle(self) -> bool:
        d = self.degrees
        return len(self.edges) == len(self.nodes) and self.is_connected() and np.all(d == 2)

    def is_necklace(self) -> bool:
        """Cycle with degree-1 pendants, each hanging off a degree-3 ring node."""
        d = self.degrees
        pend = set(self.pendants)
        if not self.is_connected() or len(self.edges) != len(self.nodes):
            return False
        for i, nd in enumerate(self.nodes):
            if i in pend:
                if d[i] != 1:
                    return False
            else:
                hangs = sum(1 for a, b, _ in self.edges
                            if (a == i and b in pend) or (b == i and a in pend))
                if d[i] != 2 + hangs:
                    return False
        return True


def _edge_tag(g: GateSpec) -> str:
    return "identity" if (not g.is_cnot and g.is_identity) else "unitary"


def enumerate_legal_graph(layout: ClockLayout, circuit: QuantumCircuit | None = None) -> LegalGraph:
    """Walk both halves of the layout and list the legal basis states.

    Nodes carry enough structure (prefix length, train placements, branch
    tags) for :func:`railyard.verify.embed_legal_basis` to build the explicit
    vectors for any initial work state.
    """
    if circuit is not None:
        check_consistent(layout, circuit)
    nodes: list[LegalNode] = []
    edges: list[tuple[int, int, str]] = []

    def add(node: LegalNode) -> int:
        nodes.append(node)
        return len(nodes) - 1

    start = add(LegalNode(0, 0, (Component(layout.origin, 1),), "backbone", 0, label="psi_0"))
    terminus_node: int | None = None
    for half in sorted({st.half for st in layout.steps}):
        cur, step = start, 0
        for st in layout.steps_of_half(half):
            g, t = st.gate, st.gate_index
            dst_site = layout.sites[st.dst]
            hang: list[LegalNode] = []
            if g.is_cnot and layout.model == "3local":
                cur, step = _gadget_3local(st, cur, step, half, add, edges)
                tag = "controlled-route"
            elif g.is_cnot and layout.model == "qutrit":
                cur, step, hang = _gadget_qutrit(st, cur, step, half, add, edges)
                tag = "identity"
            elif dst_site.kind == "qutrit":
                nl = add(LegalNode(step + 1, t, (Component(st.dst, LEFT),), "backbone", half,
                                   label=f"psi_{t}L"))
                edges.append((cur, nl, "identity"))
                cur, step, tag = nl, step + 1, "unitary"
            else:
                tag = _edge_tag(g)
            if st.dst == layout.terminus and terminus_node is not None:
                nxt = terminus_node
            else:
                nxt = add(LegalNode(step + 1, t + 1, (Component(st.dst, dst_site.exit_state),),
                                    "backbone", half, label=f"psi_{t + 1}"))
                if st.dst == layout.terminus:
                    terminus_node = nxt
            edges.append((cur, nxt, tag))
            for nd in hang:
                edges.append((nxt, add(nd), "identity"))
            cur, step = nxt, step + 1
    success = frozenset(
        i for i, nd in enumerate(nodes)
        if nd.kind == "backbone" and nd.prefix >= layout.circuit.n_payload
        and nd.components[0].state == layout.sites[nd.components[0].site].exit_state
    )
    return LegalGraph(layout, tuple(nodes), tuple(edges), start, success)


def _gadget_3local(st, cur, step, half, add, edges):
    g, t, gs = st.gate, st.gate_index, st.sites
    q = (g.control, g.target)
    n1 = add(LegalNode(step + 1, t, (Component(gs["l1"], 1, "q0"), Component(gs["u1"], 1, "q1")),
                       "gadget", half, q, f"psi^(1)_{t}"))
    n2 = add(LegalNode(step + 2, t, (Component(gs["l2"], 1, "q0"), Component(gs["u2"], 1, "q1x")),
                       "gadget", half, q, f"psi^(2)_{t}"))
    edges.extend([(cur, n1, "controlled-route"), (n1, n2, "target-flip")])
    return n2, step + 2


_SPINE_23 = (
    ((("l1", LEFT, "q0"), ("u1", LEFT, "q1")), "identity"),
    ((("l1", RIGHT, "q0"), ("u1", RIGHT, "q1")), "controlled-route"),
    ((("l2", 1, "q0"), ("u2", 1, "q1")), "identity"),
    ((("l3", LEFT, "q0"), ("u3", LEFT, "q1")), "identity"),
    ((("l3", RIGHT, "q0"), ("u3", RIGHT, "q1x")), "target-flip"),
    ((("l4", 1, "q0"), ("u4", 1, "q1x")), "identity"),
    ((("l5", LEFT, "q0"), ("u5", LEFT, "q1x")), "identity"),
    ((("l5", RIGHT, "q0"), ("u5", RIGHT, "q1x")), "controlled-route"),
)


def _gadget_qutrit(st, cur, step, half, add, edges):
    g, t, gs = st.gate, st.gate_index, st.sites
    q = (g.control, g.target)
    # blind alley at the entry: train on the track its control does not select
    alley = add(LegalNode(step + 1, t, (Component(gs["u1"], LEFT, "q0"),
                                        Component(gs["l1"], LEFT, "q1")),
                          "pendant", half, q, f"psi^(1*)_{t}"))
    edges.append((cur, alley, "identity"))
    for k, (comps, tag) in enumerate(_SPINE_23, start=1):
        nd = add(LegalNode(step + k, t, tuple(Component(gs[s], a, br) for s, a, br in comps),
                           "gadget", half, q, f"psi^({k})_{t}"))
        edges.append((cur, nd, tag))
        cur = nd
    exit_alley = LegalNode(step + 8, t, (Component(gs["u5"], RIGHT, "q0"),
                                         Component(gs["l5"], RIGHT, "q1x")),
                           "pendant", half, q, f"psi^(8*)_{t}")
    return cur, step + 8, [exit_alley]


def check_consistent(layout: ClockLayout, circuit: QuantumCircuit) -> None:
    """Raise unless ``layout`` was built for exactly this gate sequence."""
    ref = layout.circuit.gates
    if circuit.n != layout.n or len(circuit.gates) != len(ref) or any(
            a.kind != b.kind or a.target != b.target or a.control != b.control
            or (a.matrix is not None and not np.array_equal(a.matrix, b.matrix))
            for a, b in zip(circuit.gates, ref)):
        raise LayoutError("layout was built for a different circuit "
                          "(qutrit layouts insert spacing identities; use layout.circuit)")
