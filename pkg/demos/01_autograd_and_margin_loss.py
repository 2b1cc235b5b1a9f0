"""A walking tour of the tape: from scalar gradients to the ranking loss.

Run with ``python3 demos/01_autograd_and_margin_loss.py``. No files are
written; everything prints to stdout.
"""

import numpy as np

from speechground import autograd as ag
from speechground.autograd import Tensor, backward, grad_check
from speechground.training import margin_loss

rng = np.random.default_rng(0)

# --- 1. the tape records, backward() replays -------------------------------
#
# Every op appends a node; backward() walks the graph in reverse topological
# order and accumulates adjoints into .grad.

x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
loss = ag.sum_(ag.mul(x, x))  # sum of squares
backward(loss)
print("d/dx sum(x^2) =", x.grad, "(expected 2x =", 2 * x.values, ")")

# --- 2. trust, but verify with finite differences --------------------------

w = Tensor(rng.standard_normal((4, 3)))
proj = Tensor(rng.standard_normal((3, 2)))  # frozen so f is deterministic
err = grad_check(lambda t: ag.sum_(ag.tanh(ag.matmul(t, proj))), w)
print(f"max relative error vs central differences: {err:.2e}")

# --- 3. the margin ranking loss on a similarity matrix ---------------------
#
# Rows are encoded utterances, columns are target sentence embeddings. The
# diagonal holds the true pairs; every off-diagonal entry is a within-batch
# negative and is pushed at least `margin` below its diagonal in both the
# row and the column direction.

perfect = Tensor(np.eye(4))
print("\nloss on an identity similarity matrix:", float(margin_loss(perfect, 0.2).values))

noisy = Tensor(np.eye(4) * 0.8 + rng.uniform(0.5, 0.75, (4, 4)) * (1 - np.eye(4)),
               requires_grad=True)
loss = margin_loss(noisy, 0.2)
backward(loss)
print("loss on a noisy matrix:", float(loss.values))
print("gradient pattern (negative on the diagonal, positive off it):")
with np.printoptions(precision=2, suppress=True):
    print(noisy.grad)
