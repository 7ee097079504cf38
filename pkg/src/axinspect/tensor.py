"""Dense tensor values plus a reverse-mode gradient tape.

Tensors wrap contiguous numpy arrays (row-major, last axis fastest) and are
treated as immutable once created.  Differentiable operations live in
:mod:`axinspect.layers`; they call :func:`record` so that an active
:class:`GradTape` can replay them in exact reverse execution order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class TapeError(RuntimeError):
    """Raised on gradient-tape misuse (e.g. backward called twice)."""


class Tensor:
    """N-dimensional float value, optionally tracked for gradients.

    ``grad`` is populated (as a plain ndarray of identical shape) by
    ``GradTape.backward`` for every leaf with ``requires_grad=True``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if arr.ndim > 0 and min(arr.shape) < 1:
            raise ShapeError(f"tensor extents must all be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


# Stack of enabled tapes; ops record onto the innermost one.
_tape_stack: list["GradTape"] = []


class GradTape:
    """Ordered record of executed differentiable operations.

    Entries are appended in forward execution order and replayed strictly in
    reverse by :meth:`backward`.  A tape can be consumed exactly once; a second
    ``backward`` without a fresh forward pass is an error.
    """

    def __init__(self):
        # (output, inputs, backward_fn); backward_fn maps the output gradient
        # to one gradient array (or None) per input.
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False

    def __enter__(self) -> "GradTape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack.pop()
        assert popped is self, "gradient tapes must be exited in LIFO order"

    def __len__(self) -> int:
        return len(self._entries)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Propagate d(loss)=1 back through the tape.

        Sets ``t.grad`` on every participating leaf with ``requires_grad``;
        intermediate gradients are discarded once consumed.  Returns the leaf
        gradients keyed by ``id(tensor)`` (mainly for tests).
        """
        if self._consumed:
            raise TapeError("backward already called on this tape; run a new forward pass first")
        self._consumed = True
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

        produced = {id(out) for out, _, _ in self._entries}
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}

        for out, inputs, backward_fn in reversed(self._entries):
            gout = grads.pop(id(out), None)
            if gout is None:
                continue  # not on the path from loss
            gins = backward_fn(gout)
            for t, g in zip(inputs, gins):
                if g is None or not t.requires_grad:
                    continue
                if g.shape != t.data.shape:
                    raise ShapeError(
                        f"backward produced gradient of shape {g.shape} for tensor of shape {t.data.shape}"
                    )
                acc = grads.get(id(t))
                grads[id(t)] = g if acc is None else acc + g
                if id(t) not in produced:
                    leaves[id(t)] = t

        if id(loss) in grads and id(loss) not in produced:
            leaves[id(loss)] = loss

        leaf_grads = {}
        for key, t in leaves.items():
            t.grad = grads[key]
            leaf_grads[key] = grads[key]
        return leaf_grads


def active_tape() -> GradTape | None:
    return _tape_stack[-1] if _tape_stack else None


def record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Register one executed op with the active tape (if any, and if needed)."""
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape._entries.append((out, tuple(inputs), backward_fn))
    return out


def as_tensor(value, dtype=None) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)
