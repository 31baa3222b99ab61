"""
Checking a backward pass with central differences
=================================================

The reverse-mode engine is verified the same way everywhere in the test
suite: project the output onto a fixed random tensor and compare the
analytic gradient against central differences.
"""

import numpy as np

from hybridpred import autodiff as ad
from hybridpred.autodiff import Tensor, grad_check

rng = np.random.default_rng(0)
cell = ad.GRUCell(3, 4, rng)
h = Tensor(rng.normal(size=(2, 4)))
probe = rng.normal(size=(2, 4))

x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
err = grad_check(lambda x: ad.sum_(ad.mul(cell(x, h), probe)), x, rng=rng)
print(f"GRU cell, input gradient: relative error {err:.1e}")

# the same check against a parameter of the cell
w = cell.parameters()[0]
err = grad_check(lambda _: ad.sum_(ad.mul(cell(x, h), probe)), w, rng=rng)
print(f"GRU cell, first weight matrix: relative error {err:.1e}")

# a convolution followed by a leaky ReLU, kinks included
img = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
kernel = rng.normal(size=(3, 2, 3, 3))
probe = rng.normal(size=(1, 3, 6, 6))
f = lambda t: ad.sum_(ad.mul(ad.leaky_relu(ad.conv2d(t, kernel, padding=1), 0.01), probe))
print(f"conv + leaky ReLU: relative error {grad_check(f, img, rng=rng):.1e}")
