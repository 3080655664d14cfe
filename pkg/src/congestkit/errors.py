"""Exception types shared across the toolkit."""

from __future__ import annotations


class CongestKitError(Exception):
    """Base class for every error raised by this package."""


class GraphFormatError(CongestKitError, ValueError):
    """Malformed edge-list input or an inconsistent graph description."""


class BandwidthExceeded(CongestKitError, RuntimeError):
    """A node tried to push more bits over one edge direction in one round
    than the configured budget allows."""

    def __init__(self, edge: tuple[int, int], round_index: int, bits: int, budget: int):
        self.edge = edge
        self.round_index = round_index
        self.bits = bits
        self.budget = budget
        super().__init__(
            f"edge {edge} carried {bits} bits in round {round_index}, budget is {budget}"
        )


class TapeExhausted(CongestKitError, RuntimeError):
    """A node drew more random values than its tape holds."""

    def __init__(self, node: int, index: int, limit: int):
        self.node = node
        self.index = index
        self.limit = limit
        super().__init__(f"node {node} requested tape position {index}, limit is {limit}")


class RoundLimit(CongestKitError, RuntimeError):
    """The simulation hit max_rounds before every program finished."""

    def __init__(self, rounds: int):
        self.rounds = rounds
        super().__init__(f"round limit of {rounds} reached before completion")


class CollectionError(CongestKitError, ValueError):
    """A cluster collection violates one of its structural invariants.

    kind names the violated invariant; offender carries the witnessing
    cluster / node / edge so callers can report it.
    """

    def __init__(self, kind: str, offender: object, detail: str):
        self.kind = kind
        self.offender = offender
        super().__init__(f"{kind}: {detail}")


class AggregationError(CongestKitError, ValueError):
    """A tree-aggregation call violates its preconditions (payload too wide,
    missing member input, too many special nodes)."""


class StructureError(CongestKitError, ValueError):
    """A connecting structure or coloring violates its contract."""


class CarveError(CongestKitError, RuntimeError):
    """A carving run broke one of its proven guarantees."""


class DecompositionError(CongestKitError, RuntimeError):
    """A decomposition driver observed a contract violation upstream."""


class InstanceError(CongestKitError, ValueError):
    """A constraint-system description is malformed or unsupported."""


class BudgetExceeded(CongestKitError, RuntimeError):
    """An exact enumeration would exceed the configured work budget."""

    def __init__(self, needed: object, budget: int, what: str):
        self.needed = needed
        self.budget = budget
        super().__init__(f"{what} needs about {needed} weighted branches, budget is {budget}")


class AuditError(CongestKitError, RuntimeError):
    """An exact expectation audit failed (bound reached 1, or a certified
    run still produced a failure)."""


class ConfigError(CongestKitError, ValueError):
    """Bad experiment configuration or command-line usage."""
