"""A tour of the tensor engine: taped ops, backward, and gradient checking.

Everything in the library runs on these primitives -- there is no
framework underneath, just numpy arrays plus a tape of backward
closures.
"""

import numpy as np

from ringdepth import (GradTape, Tensor, gradcheck, matmul, sigmoid,
                       softmax_lastdim, tensor_mean)

# --- forward math is plain numpy unless a tape is listening -------------
x = Tensor([[1.0, -2.0], [0.5, 3.0]])
w = Tensor(np.full((2, 2), 0.1, dtype=np.float32), requires_grad=True)
y = tensor_mean(sigmoid(matmul(x, w)))
print("untaped mean:", float(y.data))
print("tape recorded anything?", w.grad is not None)

# --- the same computation under a tape yields gradients -----------------
with GradTape() as tape:
    y = tensor_mean(sigmoid(matmul(x, w)))
tape.backward(y)
print("dL/dw:\n", w.grad)

# repeated backward calls accumulate, which is how batches are summed
with GradTape() as tape:
    y = tensor_mean(sigmoid(matmul(x, w)))
first = w.grad.copy()
tape.backward(y)
np.testing.assert_allclose(w.grad, 2 * first)
print("second backward doubled the gradient, as expected")

# --- never trust a hand-written backward: check it ----------------------
def f(a, b):
    return tensor_mean(softmax_lastdim(matmul(a, b)))

report = gradcheck(f, [np.random.default_rng(0).normal(size=(3, 4)),
                       np.random.default_rng(1).normal(size=(4, 5))])
print(report)
