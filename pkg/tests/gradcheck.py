"""Central-finite-difference gradient checking for the loss operations."""

from __future__ import annotations

import numpy as np
import torch


def finite_difference_grad(fn, x: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Central differences of a scalar function w.r.t. every element of x."""
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = float(fn(x))
        flat[i] = orig - h
        down = float(fn(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-7) -> float:
    denom = torch.maximum(
        torch.maximum(analytic.abs(), numeric.abs()), torch.full_like(analytic, floor)
    )
    return float(((analytic - numeric).abs() / denom).max())


def check_grad(fn, x: torch.Tensor, h: float = 1e-6) -> float:
    """Returns the max relative error between autograd and central FD."""
    xg = x.clone().detach().requires_grad_(True)
    value = fn(xg)
    (grad,) = torch.autograd.grad(value, xg)
    numeric = finite_difference_grad(fn, x.clone().detach(), h=h)
    return max_relative_error(grad, numeric)


def random_tensor(shape, seed: int, scale: float = 1.0, offset: float = 0.0) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.normal(offset, scale, size=shape)).to(torch.float64)
