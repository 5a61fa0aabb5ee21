"""Synthetic test-problem generation and image quality metrics.

Builds blurred, Poisson-noisy observations at a target signal-to-noise
ratio from a reference image, with full determinism from the recorded
seed, and provides the relative error and mean structural similarity
metrics used to score restorations.
"""

from dataclasses import dataclass
import json
import os

import numpy as np
from scipy.signal import fftconvolve

from .blur import BlurOperator, Psf
from .image import load_f64img, save_f64img
from .kl import PoissonData

# MATLAB-convention ellipse tables: intensity, half-axes a (x) and b (y),
# center (x0, y0), rotation in degrees.  The "original" intensities follow
# the 1974 head phantom; "modified" is the common high-contrast variant.
_ELLIPSE_GEOMETRY = (
    (0.69, 0.92, 0.0, 0.0, 0.0),
    (0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (0.1100, 0.3100, 0.22, 0.0, -18.0),
    (0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.0230, 0.0460, 0.06, -0.605, 0.0),
)
_INTENSITIES = {
    "original": (1.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01),
    "modified": (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
}


def shepp_logan_ellipses(variant="modified"):
    """(intensity, a, b, x0, y0, phi_deg) rows of the head phantom."""
    if variant not in _INTENSITIES:
        raise ValueError(f"unknown phantom variant {variant!r}")
    return tuple((A, *geom) for A, geom in
                 zip(_INTENSITIES[variant], _ELLIPSE_GEOMETRY))


def render_ellipses(ellipses, n):
    """Sum of constant-intensity ellipses rasterized on an n x n grid."""
    half = (n - 1) / 2.0
    coords = (np.arange(n) - half) / half
    xg = coords[None, :]          # columns: x increases rightward
    yg = -coords[:, None]         # rows: y decreases downward
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, phi_deg in ellipses:
        phi = np.deg2rad(phi_deg)
        xr = (xg - x0) * np.cos(phi) + (yg - y0) * np.sin(phi)
        yr = -(xg - x0) * np.sin(phi) + (yg - y0) * np.cos(phi)
        img += amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return img


def shepp_logan(n, variant="modified"):
    """Deterministic head phantom on an n x n grid, intensities in [0, 1]."""
    if n < 32:
        raise ValueError("phantom size must be at least 32")
    # Summed intensities can dip a few ulp below zero where ellipse
    # contributions cancel exactly; clamp to keep the range contract.
    return np.maximum(render_ellipses(shepp_logan_ellipses(variant), n), 0.0)


def snr_scale_factor(x_ref, b_total, target_snr_db):
    """Scale factor beta so the total exact flux t = beta*sum(x_ref)
    satisfies 10 log10(t / sqrt(t + b_total)) = target_snr_db.

    Closed form: with r = 10^(snr/10), t solves t^2 = r^2 (t + b_total).
    """
    n0 = float(np.sum(x_ref))
    if n0 <= 0:
        raise ValueError("reference image must have positive total flux")
    r = 10.0 ** (target_snr_db / 10.0)
    t = 0.5 * (r * r + r * np.sqrt(r * r + 4.0 * b_total))
    return t / n0


def poisson_sample(mean, seed):
    """Independent per-pixel Poisson draws, reproducible from the seed.

    Uses a counter-based (Philox) generator so streams are stable across
    platforms.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if np.any(mean < 0):
        raise ValueError("Poisson means must be nonnegative")
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.poisson(mean).astype(np.float64)


@dataclass
class TestProblem:
    ground_truth: np.ndarray      # scaled to the observation's units
    op: BlurOperator
    psf: Psf
    background: float
    observed: np.ndarray          # counts divided by their maximum
    counts: np.ndarray            # raw Poisson counts
    snr_db: float
    seed: int
    scale: float                  # the unit-max divisor

    @property
    def scaled_background(self):
        """Background in the observation's (unit-max scaled) units."""
        return self.background / self.scale

    @property
    def flux(self):
        """Total intensity constant for the flux-constrained feasible set."""
        return float((self.observed - self.scaled_background).sum())

    def data(self):
        """The Poisson fidelity term for this observation."""
        return PoissonData(self.observed, self.scaled_background, self.op)


def make_problem(reference, psf, snr_db, seed, background=1e-10,
                 sample_noise=True):
    """Blur, add background, Poisson-sample and unit-max scale.

    With sample_noise=False the observation is the exact blurred image
    plus background (a noiseless surrogate for sanity runs).
    """
    reference = np.asarray(reference, dtype=np.float64)
    r, s = reference.shape
    op = BlurOperator(psf, r, s)
    b_total = background * r * s
    beta = snr_scale_factor(reference, b_total, snr_db)
    x_star = beta * reference
    mean = np.maximum(op.apply(x_star), 0.0) + background
    counts = poisson_sample(mean, seed) if sample_noise else mean
    scale = float(counts.max())
    return TestProblem(
        ground_truth=x_star / scale,
        op=op,
        psf=psf,
        background=background,
        observed=counts / scale,
        counts=counts,
        snr_db=snr_db,
        seed=seed,
        scale=scale,
    )


def measured_snr(problem):
    """SNR recomputed from the drawn counts."""
    n_pixels = problem.counts.size
    b_total = problem.background * n_pixels
    n_exact = float(problem.counts.sum()) - b_total
    return 10.0 * np.log10(n_exact / np.sqrt(n_exact + b_total))


def relative_error(x, x_star):
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_star.shape != np.shape(x):
        raise ValueError("image dimensions do not match")
    denom = float(np.linalg.norm(x_star))
    if denom == 0:
        raise ValueError("reference image has zero norm")
    return float(np.linalg.norm(x - x_star)) / denom


def _gaussian_window(size=11, sigma=1.5):
    u = np.arange(size) - size // 2
    g = np.exp(-(u * u) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def mssim(x, x_star, window_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity with a Gaussian-weighted local window.

    The dynamic range is taken from the reference image; local statistics
    are computed on the valid (fully overlapping) window positions.
    """
    x = np.asarray(x, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x.shape != x_star.shape:
        raise ValueError("image dimensions do not match")
    data_range = float(x_star.max() - x_star.min())
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    w = _gaussian_window(window_size, sigma)
    filt = lambda img: fftconvolve(img, w, mode="valid")
    mu1 = filt(x)
    mu2 = filt(x_star)
    var1 = filt(x * x) - mu1 * mu1
    var2 = filt(x_star * x_star) - mu2 * mu2
    cov = filt(x * x_star) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * cov + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))


def save_problem(problem, directory, extra_meta=None):
    """Persist a problem bundle: images as F64IMG plus a meta.json."""
    os.makedirs(directory, exist_ok=True)
    save_f64img(os.path.join(directory, "ground_truth.f64img"),
                problem.ground_truth)
    save_f64img(os.path.join(directory, "observed.f64img"), problem.observed)
    problem.psf.save(os.path.join(directory, "psf.f64img"))
    meta = {
        "snr_db": problem.snr_db,
        "seed": problem.seed,
        "background": problem.background,
        "flux": problem.flux,
        "scale": problem.scale,
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_problem(directory):
    ground_truth = load_f64img(os.path.join(directory, "ground_truth.f64img"))
    observed = load_f64img(os.path.join(directory, "observed.f64img"))
    psf = Psf.load(os.path.join(directory, "psf.f64img"))
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    r, s = observed.shape
    return TestProblem(
        ground_truth=ground_truth,
        op=BlurOperator(psf, r, s),
        psf=psf,
        background=meta["background"],
        observed=observed,
        counts=observed * meta["scale"],
        snr_db=meta["snr_db"],
        seed=meta["seed"],
        scale=meta["scale"],
    )
