"""Discrete total variation, its Huber smoothing, and reweighted models.

Per-pixel forward differences (vertical, horizontal) with periodic wrap
are realized as shift-subtract passes.  The smoothed functional replaces
each gradient magnitude by a Huber value; its reweighted quadratic model
freezes the per-pixel weights at an anchor image.
"""

import numpy as np


def forward_diff(x):
    """Per-pixel (vertical, horizontal) forward differences, periodic wrap."""
    x = np.asarray(x, dtype=np.float64)
    dv = np.roll(x, -1, axis=0) - x
    dh = np.roll(x, -1, axis=1) - x
    return dv, dh


def diff_adjoint(pv, ph):
    """Adjoint of forward_diff: sum of per-pixel stencil transposes."""
    return (np.roll(pv, 1, axis=0) - pv) + (np.roll(ph, 1, axis=1) - ph)


def grad_norms(x):
    dv, dh = forward_diff(x)
    return np.sqrt(dv * dv + dh * dh)


def tv_value(x):
    """Sum of per-pixel gradient magnitudes (isotropic, periodic)."""
    return float(grad_norms(x).sum())


def huber(z, mu):
    """|z| outside [-mu, mu], quadratic (z^2/mu + mu)/2 inside."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    z = np.asarray(z, dtype=np.float64)
    return np.where(np.abs(z) > mu, np.abs(z), 0.5 * (z * z / mu + mu))


def huber_derivative_factor(norm, mu):
    """Per-pixel factor 1/max(norm, mu) multiplying the stencil term."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return 1.0 / np.maximum(norm, mu)


def tv_mu_value(x, mu):
    return float(huber(grad_norms(x), mu).sum())


def tv_mu_gradient(x, mu):
    dv, dh = forward_diff(x)
    f = huber_derivative_factor(np.sqrt(dv * dv + dh * dh), mu)
    return diff_adjoint(f * dv, f * dh)


class TvQuadraticModel:
    """Weighted quadratic surrogate of the smoothed TV, anchored at x_k.

    Weights are 1/norm where the anchor's gradient magnitude exceeds mu
    and 1/mu otherwise (ties take the capped branch).  The gradient of
    the model at the anchor matches the smoothed-TV gradient exactly;
    the curvature operator is constant and positive semidefinite.
    """

    def __init__(self, x_k, mu):
        if mu <= 0:
            raise ValueError("mu must be positive")
        x_k = np.asarray(x_k, dtype=np.float64)
        norms = grad_norms(x_k)
        self.mu = mu
        self.weights = np.where(norms > mu, 1.0 / np.maximum(norms, mu), 1.0 / mu)
        self.constant = 0.5 * tv_mu_value(x_k, mu)

    def value(self, x):
        dv, dh = forward_diff(x)
        return float(0.5 * (self.weights * (dv * dv + dh * dh)).sum() + self.constant)

    def gradient(self, x):
        dv, dh = forward_diff(x)
        return diff_adjoint(self.weights * dv, self.weights * dh)

    # The model is quadratic: its Hessian action equals the gradient map.
    hessian_vec = gradient
