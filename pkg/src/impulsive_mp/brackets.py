"""Formal iterated brackets over abstract variables X1, X2, ...

A formal bracket is either a single variable Xj or a pair [B1,B2] of formal
brackets.  Reading the leaves left to right must give consecutive increasing
indices (X3, X4, X5, ...); reuse of one concrete vector field at several
leaves is expressed later through an assignment, never through the indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import LengthOne, MalformedBracket, NonConsecutiveSeq, NotASubbracket

# Paths address subbrackets: a tuple of 'L'/'R' steps from the root.
ROOT = ()


@dataclass(frozen=True)
class FormalBracket:
    """One node of a formal bracket; a leaf iff ``index`` is set."""

    index: int | None = None
    left: FormalBracket | None = None
    right: FormalBracket | None = None

    @staticmethod
    def leaf(j: int) -> "FormalBracket":
        if j < 1:
            raise MalformedBracket(f"leaf index must be >= 1, got {j}")
        return FormalBracket(index=j)

    @staticmethod
    def pair(b1: "FormalBracket", b2: "FormalBracket") -> "FormalBracket":
        # consecutiveness only needs checking at the seam: both factors are
        # already valid, so their own sequences are consecutive runs
        if b2.seq[0] != b1.seq[-1] + 1:
            raise NonConsecutiveSeq(
                f"left factor ends at X{b1.seq[-1]}, right factor starts at X{b2.seq[0]}"
            )
        return FormalBracket(left=b1, right=b2)

    @property
    def is_leaf(self) -> bool:
        return self.index is not None

    @property
    def seq(self) -> tuple[int, ...]:
        """Leaf indices, left to right."""
        if self.is_leaf:
            return (self.index,)
        return self.left.seq + self.right.seq

    @property
    def length(self) -> int:
        return len(self.seq)

    @property
    def switch_number(self) -> int:
        """Number of constant pieces of the control word realizing the bracket."""
        if self.is_leaf:
            return 1
        return 2 * (self.left.switch_number + self.right.switch_number)

    def factorize(self) -> tuple["FormalBracket", "FormalBracket"]:
        """Unique factorization [B1,B2] -> (B1, B2)."""
        if self.is_leaf:
            raise LengthOne(f"{self} has no factors")
        return self.left, self.right

    def subbracket_at(self, path: tuple[str, ...]) -> "FormalBracket":
        node = self
        for step_no, step in enumerate(path):
            if node.is_leaf:
                raise NotASubbracket(f"path {path!r} descends below a leaf at step {step_no}")
            if step == "L":
                node = node.left
            elif step == "R":
                node = node.right
            else:
                raise NotASubbracket(f"path step must be 'L' or 'R', got {step!r}")
        return node

    def subbracket_paths(self):
        """Yield (path, subbracket) pairs in preorder."""
        stack = [(ROOT, self)]
        while stack:
            path, node = stack.pop()
            yield path, node
            if not node.is_leaf:
                stack.append((path + ("R",), node.right))
                stack.append((path + ("L",), node.left))

    def leaf_paths(self) -> dict[int, tuple[str, ...]]:
        """Map each leaf index to its path."""
        return {node.index: path for path, node in self.subbracket_paths() if node.is_leaf}

    def __str__(self) -> str:
        if self.is_leaf:
            return f"X{self.index}"
        return f"[{self.left},{self.right}]"


def differentiation_count(b: FormalBracket, path: tuple[str, ...]) -> int:
    """Number of differentiations the subbracket at ``path`` undergoes inside b.

    The count is 0 at the root and grows by one each time a factor is wrapped in
    a further pairing, so it equals the nesting depth of the occurrence.
    """
    b.subbracket_at(path)  # validates the path
    count = 0
    node = b
    for step in path:
        count += 1  # both factors of [B1,B2] pick up one differentiation
        node = node.left if step == "L" else node.right
    return count


def required_smoothness(b: FormalBracket, k: int = 0) -> dict[int, int]:
    """Differentiability order each leaf variable needs for the bracket to be C^k.

    Returns a map leaf index -> order; a field bound to Xj must be of class
    C^(order) or better.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return {j: len(path) + k for j, path in b.leaf_paths().items()}


def parse_bracket(text: str) -> FormalBracket:
    """Parse bracket text like ``[[X3,X4],[[X5,X6],X7]]``.

    Whitespace is ignored.  Raises MalformedBracket on grammar violations and
    NonConsecutiveSeq when the leaf sequence breaks the consecutive-index rule.
    """
    s = "".join(text.split())
    pos = 0

    def fail(msg, at):
        raise MalformedBracket(f"{msg} at position {at} in {text!r}")

    def parse_node():
        nonlocal pos
        if pos >= len(s):
            fail("unexpected end of input", pos)
        if s[pos] == "X":
            start = pos + 1
            end = start
            while end < len(s) and s[end].isdigit():
                end += 1
            if end == start:
                fail("expected an integer after 'X'", start)
            pos = end
            return FormalBracket.leaf(int(s[start:end]))
        if s[pos] == "[":
            pos += 1
            left = parse_node()
            if pos >= len(s) or s[pos] != ",":
                fail("expected ','", pos)
            pos += 1
            right = parse_node()
            if pos >= len(s) or s[pos] != "]":
                fail("expected ']'", pos)
            pos += 1
            return FormalBracket.pair(left, right)
        fail(f"expected 'X' or '[', got {s[pos]!r}", pos)

    node = parse_node()
    if pos != len(s):
        fail(f"trailing text {s[pos:]!r}", pos)
    return node


@lru_cache(maxsize=None)
def bracket_shapes(length: int) -> tuple[FormalBracket, ...]:
    """All formal brackets of the given length with leaves X1..Xlength."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")

    def build(lo: int, hi: int):
        # brackets over leaves Xlo..Xhi inclusive
        if lo == hi:
            return [FormalBracket.leaf(lo)]
        out = []
        for split in range(lo, hi):
            for b1 in build(lo, split):
                for b2 in build(split + 1, hi):
                    out.append(FormalBracket.pair(b1, b2))
        return out

    return tuple(build(1, length))
