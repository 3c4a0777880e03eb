"""
The autodiff core
=================

Everything learned in this package runs on a small reverse-mode tape over
numpy arrays. Here we differentiate a few expressions, compare against
central differences and take two Adam steps by hand.
"""

# %%
import numpy as np

from hybridplan.tensor_core import AdamState, Tape, Tensor, adam_step, backward, finite_diff_check
from hybridplan.tensor_core import tensor as T

# %%
# d/dx sum(x*x + x) = 2x + 1
x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
with Tape() as tape:
    y = T.sum_all(T.add(T.mul(x, x), x))
    backward(y, tape)
print("value", y.item(), "grad", x.grad)

# %%
# The gradient checker compares the tape with central differences and
# returns the worst relative error.
rng = np.random.default_rng(0)
theta = Tensor(rng.normal(size=(4, 5)))
weights = Tensor(rng.normal(size=(4, 5)))


def f(th):
    return T.sum_all(T.mul(T.softmax_rows(th), weights))


print("softmax gradcheck error", finite_diff_check(f, theta))

# %%
# Adam with a constant gradient of 1: both moment estimates are exactly 1
# after bias correction, so each step moves by alpha / (1 + delta).
p = Tensor(np.array([0.0]))
state = AdamState.for_shape(1, alpha=1e-3)
for k in range(2):
    adam_step(state, p, np.array([1.0]))
    print(f"step {k + 1}: p = {p.data[0]:.12f}")
