"""Bit-level packing for simulated messages.

Streams are little-endian: the first appended field occupies the lowest
bits. That choice is arbitrary but must match between writer and reader,
and it is the same convention the constraint-table encoding uses.
"""

from __future__ import annotations


def width_for(count: int) -> int:
    """Bits needed to address `count` distinct values (at least 1)."""
    return max(1, (max(count, 1) - 1).bit_length())


class BitWriter:
    def __init__(self) -> None:
        self.value = 0
        self.bits = 0

    def append(self, value: int, bits: int) -> "BitWriter":
        if bits < 0:
            raise ValueError("negative field width")
        if value < 0 or (bits < value.bit_length()):
            raise ValueError(f"value {value} does not fit in {bits} bits")
        self.value |= value << self.bits
        self.bits += bits
        return self


class BitReader:
    def __init__(self, value: int, bits: int) -> None:
        self.value = value
        self.bits = bits
        self.pos = 0

    @property
    def remaining(self) -> int:
        return self.bits - self.pos

    def read(self, bits: int) -> int:
        if bits > self.remaining:
            raise ValueError("read past end of bit stream")
        out = (self.value >> self.pos) & ((1 << bits) - 1)
        self.pos += bits
        return out


class BitQueue:
    """FIFO of bits. Writers append framed fields; take() removes up to a
    budget of bits per call, preserving order, so frames may straddle round
    boundaries."""

    def __init__(self) -> None:
        self.value = 0
        self.bits = 0

    def append(self, value: int, bits: int) -> None:
        if value < 0 or bits < value.bit_length():
            raise ValueError(f"value {value} does not fit in {bits} bits")
        self.value |= value << self.bits
        self.bits += bits

    def take(self, max_bits: int) -> tuple[int, int]:
        k = min(self.bits, max_bits)
        out = self.value & ((1 << k) - 1)
        self.value >>= k
        self.bits -= k
        return out, k

    def __len__(self) -> int:
        return self.bits


class FrameBuffer:
    """Receiving side of a BitQueue stream: accumulates arriving chunks and
    yields complete fixed-layout frames as soon as they are whole."""

    def __init__(self, field_widths_fn) -> None:
        # field_widths_fn(first_field_value | None) -> list of remaining widths;
        # called with None to get the width of the leading field, then with the
        # leading value to get the rest of the frame layout.
        self._widths_fn = field_widths_fn
        self.value = 0
        self.bits = 0

    def feed(self, value: int, bits: int) -> list[tuple[int, ...]]:
        self.value |= value << self.bits
        self.bits += bits
        frames: list[tuple[int, ...]] = []
        while True:
            head_w = self._widths_fn(None)
            if self.bits < head_w:
                break
            head = self.value & ((1 << head_w) - 1)
            rest = self._widths_fn(head)
            total = head_w + sum(rest)
            if self.bits < total:
                break
            fields = [head]
            pos = head_w
            for w in rest:
                fields.append((self.value >> pos) & ((1 << w) - 1))
                pos += w
            self.value >>= total
            self.bits -= total
            frames.append(tuple(fields))
        return frames
