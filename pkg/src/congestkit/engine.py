"""Synchronous message-passing simulator.

The model: rounds proceed in lockstep; in each round every non-halted node
program runs once, reading the messages sent to it in the previous round
and emitting at most one message per incident edge direction. With a finite
bandwidth budget the sum of bits sent over one edge in one direction in one
round must stay within the budget; with no budget the model is the
unbounded-message one.

Determinism contract: node programs run in node-index order and may touch
only their own state, so a run is a pure function of (graph, program
factory, config, tapes). Two runs with equal inputs produce bit-identical
outputs, metrics, and traces. A concurrent scheduler would have to be
observationally equivalent to this sequential order.

Randomness: every draw is a pure function of (seed, node index, draw
index), so any single draw can be replayed without replaying the run.
Programs may draw sequentially (draw) or by explicit position (draw_at);
positional draws exist for programs whose consumption pattern must not
depend on the values drawn so far. Supplied tapes replace the generator
value-for-value.

Programs distinguish "finished" (output ready, still relays messages) from
"halted" (out of the protocol entirely). The run ends when every program
reports finished.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BandwidthExceeded, RoundLimit, TapeExhausted
from .graphs import Graph

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    # splitmix64 finalizer
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def tape_value(seed: int, node: int, index: int, range_size: int) -> int:
    """Uniform value in [0, range_size) as a pure function of its arguments.

    Uniformity is exact: 64-bit blocks are rejection-sampled, with the block
    counter folded into the hash.
    """
    if range_size < 1:
        raise ValueError(f"range_size must be positive, got {range_size}")
    if range_size == 1:
        return 0
    base = _mix((seed & _MASK64) ^ _GOLDEN)
    base = _mix(base ^ ((node & _MASK64) * 0xC2B2AE3D27D4EB4F))
    base = _mix(base ^ ((index & _MASK64) * 0x165667B19E3779F9))
    limit = ((1 << 64) // range_size) * range_size
    attempt = 0
    while True:
        z = _mix(base ^ attempt)
        if z < limit:
            return z % range_size
        attempt += 1


@dataclass(frozen=True)
class Message:
    """A payload of `bits` bits carried as an integer below 2**bits."""

    value: int
    bits: int

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError("a message carries at least one bit")
        if self.value < 0 or self.value.bit_length() > self.bits:
            raise ValueError(f"value {self.value} does not fit in {self.bits} bits")


@dataclass
class SimConfig:
    """Run parameters.

    mode "congest" enforces bandwidth_bits per edge direction per round
    (bandwidth_bits=None means unbounded, which makes congest identical to
    local). mode "local" ignores the budget entirely.
    """

    bandwidth_bits: int | None = None
    mode: str = "congest"
    max_rounds: int = 10**6
    seed: int = 0
    tape_limit: int = 2**20
    trace: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("congest", "local"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.bandwidth_bits is not None and self.bandwidth_bits < 1:
            raise ValueError("bandwidth_bits must be at least 1 when finite")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be non-negative")

    @property
    def effective_bandwidth(self) -> int | None:
        if self.mode == "local":
            return None
        return self.bandwidth_bits


class NodeContext:
    """What a single node is allowed to see: its index, identifier, degree,
    neighbor list, the global size bound n, and its private randomness."""

    def __init__(self, sim: "Simulation", node: int):
        self._sim = sim
        self.node = node
        self.n = sim.graph.n
        self.node_id = sim.graph.ids[node]
        self.id_bits = sim.graph.id_bits
        self.neighbors = sim.graph.adj[node]
        self.degree = len(self.neighbors)
        self._draw_count = 0

    def draw(self, range_size: int) -> int:
        index = self._draw_count
        self._draw_count += 1
        return self._sim._draw(self.node, index, range_size)

    def draw_at(self, index: int, range_size: int) -> int:
        if index < 0:
            raise ValueError("negative tape position")
        return self._sim._draw(self.node, index, range_size)


class NodeProgram:
    """Base class for node-local protocol logic."""

    def init(self, ctx: NodeContext) -> None:
        self.ctx = ctx

    def on_round(self, rnd: int, inbox: dict[int, Message]) -> dict[int, Message]:
        raise NotImplementedError

    def finished(self) -> bool:
        raise NotImplementedError

    def halted(self) -> bool:
        return False

    def output(self) -> object:
        return None


@dataclass
class RoundMetrics:
    """Aggregate accounting for one run.

    rounds_elapsed counts communication rounds: the index one past the last
    round in which any message was sent. A trailing callback that only
    absorbs its inbox is local post-processing, not a round.
    """

    rounds_elapsed: int = 0
    total_bits: int = 0
    edge_bits: dict[tuple[int, int], int] = field(default_factory=dict)
    max_direction_bits: int = 0
    messages_per_round: list[int] = field(default_factory=list)
    trace: list[tuple[int, int, int, int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "rounds_elapsed": self.rounds_elapsed,
            "total_bits": self.total_bits,
            "max_direction_bits": self.max_direction_bits,
            "messages_per_round": list(self.messages_per_round),
        }


class Simulation:
    """Drives a set of node programs over a graph, one round per step()."""

    def __init__(
        self,
        graph: Graph,
        programs: list[NodeProgram],
        cfg: SimConfig,
        tapes: dict[int, list[int]] | None = None,
    ):
        if len(programs) != graph.n:
            raise ValueError(f"need one program per node, got {len(programs)} for n={graph.n}")
        self.graph = graph
        self.cfg = cfg
        self.programs = programs
        self.tapes = tapes
        self.metrics = RoundMetrics()
        self.round_index = 0
        self._neighbor_sets = [set(a) for a in graph.adj]
        self._pending: list[dict[int, Message]] = [{} for _ in range(graph.n)]
        self._contexts = []
        for v in range(graph.n):
            ctx = NodeContext(self, v)
            self._contexts.append(ctx)
            programs[v].init(ctx)

    def _draw(self, node: int, index: int, range_size: int) -> int:
        if self.tapes is not None:
            tape = self.tapes.get(node, [])
            if index >= len(tape):
                raise TapeExhausted(node, index, len(tape))
            value = tape[index]
            if not 0 <= value < range_size:
                raise ValueError(
                    f"tape value {value} for node {node} position {index} "
                    f"outside range {range_size}"
                )
            return value
        if index >= self.cfg.tape_limit:
            raise TapeExhausted(node, index, self.cfg.tape_limit)
        return tape_value(self.cfg.seed, node, index, range_size)

    @property
    def all_finished(self) -> bool:
        return all(p.finished() for p in self.programs)

    def step(self) -> None:
        """Run one synchronous round."""
        rnd = self.round_index
        budget = self.cfg.effective_bandwidth
        delivery: list[dict[int, Message]] = [{} for _ in range(self.graph.n)]
        count = 0
        for v in range(self.graph.n):
            prog = self.programs[v]
            if prog.halted():
                continue
            outbox = prog.on_round(rnd, self._pending[v])
            if not outbox:
                continue
            for target, msg in outbox.items():
                if target not in self._neighbor_sets[v]:
                    raise ValueError(f"node {v} addressed non-neighbor {target}")
                if not isinstance(msg, Message):
                    raise TypeError(f"node {v} sent a non-Message object")
                if budget is not None and msg.bits > budget:
                    raise BandwidthExceeded((v, target), rnd, msg.bits, budget)
                if not self.programs[target].halted():
                    delivery[target][v] = msg
                count += 1
                self.metrics.total_bits += msg.bits
                ekey = (v, target) if v < target else (target, v)
                self.metrics.edge_bits[ekey] = self.metrics.edge_bits.get(ekey, 0) + msg.bits
                if msg.bits > self.metrics.max_direction_bits:
                    self.metrics.max_direction_bits = msg.bits
                if self.cfg.trace:
                    self.metrics.trace.append((rnd, v, target, msg.bits))
        self._pending = delivery
        self.metrics.messages_per_round.append(count)
        self.round_index += 1
        if count > 0:
            self.metrics.rounds_elapsed = self.round_index

    def run(self) -> None:
        """Step until every program is finished; RoundLimit on overrun."""
        while not self.all_finished:
            if self.round_index >= self.cfg.max_rounds:
                raise RoundLimit(self.round_index)
            self.step()

    def outputs(self) -> list[object]:
        return [p.output() for p in self.programs]


def run(
    graph: Graph,
    factory,
    cfg: SimConfig,
    tapes: dict[int, list[int]] | None = None,
) -> tuple[list[object], RoundMetrics]:
    """Build one program per node with factory(node), run to completion."""
    programs = [factory(v) for v in range(graph.n)]
    sim = Simulation(graph, programs, cfg, tapes=tapes)
    sim.run()
    return sim.outputs(), sim.metrics


def run_with_tape(
    graph: Graph,
    factory,
    cfg: SimConfig,
    tapes: dict[int, list[int]],
) -> tuple[list[object], RoundMetrics]:
    """Like run(), but all randomness is read from the supplied tapes."""
    return run(graph, factory, cfg, tapes=tapes)
