"""Reverse-mode computation tape over float64 numpy arrays.

Nodes are recorded in creation order, which is a topological order by
construction; one reverse sweep visits each recorded node exactly once and
accumulates cotangents additively over fan-out.  A tape is single-owner:
it must not be shared across threads (separate tapes on disjoint batches
are safe).
"""

import numpy as np


class Node:
    """One recorded value. ``vjp(g)`` returns cotangents aligned with parents."""

    __slots__ = ("value", "parents", "vjp", "requires_grad", "grad", "index", "tape")

    def __init__(self, value, parents, vjp, requires_grad, index, tape):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.grad = None
        self.index = index
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(idx={self.index}, shape={self.value.shape}, rg={self.requires_grad})"


class Tape:
    def __init__(self):
        self.nodes = []

    def _push(self, node):
        self.nodes.append(node)
        return node

    def constant(self, value):
        value = np.asarray(value, dtype=np.float64)
        return self._push(Node(value, (), None, False, len(self.nodes), self))

    def leaf(self, value):
        """A differentiable leaf (parameter or input)."""
        value = np.asarray(value, dtype=np.float64)
        return self._push(Node(value, (), None, True, len(self.nodes), self))

    def record(self, value, parents, vjp):
        value = np.asarray(value, dtype=np.float64)
        rg = any(p.requires_grad for p in parents)
        if not rg:
            # dead branch for differentiation; keep only the value
            return self._push(Node(value, (), None, False, len(self.nodes), self))
        return self._push(Node(value, tuple(parents), vjp, True, len(self.nodes), self))

    def backward(self, seed):
        """Accumulate d(seed)/d(node) into node.grad for every reachable node.

        seed must be a scalar (shape ()) node on this tape.
        """
        if seed.value.shape != ():
            raise ValueError(f"backward seed must be scalar, got shape {seed.value.shape}")
        for n in self.nodes:
            n.grad = None
        seed.grad = np.ones(())
        for node in reversed(self.nodes[: seed.index + 1]):
            if node.grad is None or node.vjp is None:
                continue
            gs = node.vjp(node.grad)
            for parent, g in zip(node.parents, gs):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    def grad_of(self, node):
        """Gradient w.r.t. a leaf after backward() (zeros if unreached)."""
        if node.grad is None:
            return np.zeros_like(node.value)
        return node.grad
