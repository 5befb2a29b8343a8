"""Box-seeded foreground extraction with color mixture models and graph cuts.

Pixels outside the box are fixed background; inside the box, foreground and
background are modelled by full-covariance Gaussian color mixtures that are
re-assigned, refitted, and re-cut for a fixed number of rounds.  The cut runs
on the box subgraph only: background-fixed neighbors are folded into each
border pixel's sink link, which leaves the result identical to cutting the
full grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateBoxError
from .geometry import BoundingBox
from .maxflow import GRID_OFFSETS, GridGraph, mincut_maxflow

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GrabCutParams:
    n_components: int = 5
    iters: int = 5
    gamma: float = 50.0
    cov_reg: float = 1e-6
    seed: int = 0


def _kmeans_assign(points: np.ndarray, k: int, rng: np.random.Generator,
                   n_iter: int = 10) -> np.ndarray:
    """Seeded k-means++ with Lloyd refinement; returns cluster labels."""
    n = points.shape[0]
    k = min(k, n)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[c:] = centers[0]
            break
        centers[c] = points[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if (new_labels == labels).all():
            labels = new_labels
            break
        labels = new_labels
        for c in range(k):
            sel = labels == c
            if sel.any():
                centers[c] = points[sel].mean(axis=0)
    return labels


class _ColorMixture:
    """Full-covariance Gaussian mixture over RGB, weights may be zero."""

    def __init__(self, weights: np.ndarray, means: np.ndarray, covs: np.ndarray):
        self.weights = weights
        self.means = means
        self.covs = covs
        k = weights.shape[0]
        self._inv = np.empty_like(covs)
        self._log_norm = np.full(k, -np.inf)
        with np.errstate(divide="ignore"):
            log_w = np.log(weights)
        for c in range(k):
            if weights[c] <= 0.0:
                self._inv[c] = np.eye(covs.shape[1])
                continue
            sign, logdet = np.linalg.slogdet(covs[c])
            if sign <= 0:
                raise ValueError("mixture covariance not positive definite")
            self._inv[c] = np.linalg.inv(covs[c])
            self._log_norm[c] = log_w[c] - 0.5 * (covs.shape[1] * _LOG_2PI + logdet)

    def component_scores(self, points: np.ndarray) -> np.ndarray:
        """log(weight_k * N_k(z)) per point and component, -inf for empty comps."""
        diff = points[:, None, :] - self.means[None, :, :]
        maha = np.einsum("nki,kij,nkj->nk", diff, self._inv, diff)
        return self._log_norm[None, :] - 0.5 * maha

    def assign(self, points: np.ndarray) -> np.ndarray:
        return self.component_scores(points).argmax(axis=1)

    def log_likelihood(self, points: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_scores(points), axis=1)


def _fit_mixture(points: np.ndarray, labels: np.ndarray, k: int, reg: float) -> _ColorMixture:
    dim = points.shape[1]
    weights = np.zeros(k)
    means = np.zeros((k, dim))
    covs = np.tile(np.eye(dim) * reg, (k, 1, 1))
    n = points.shape[0]
    for c in range(k):
        sel = labels == c
        count = int(sel.sum())
        if count == 0:
            continue
        pts = points[sel]
        weights[c] = count / n
        means[c] = pts.mean(axis=0)
        centered = pts - means[c]
        covs[c] = centered.T @ centered / count + np.eye(dim) * reg
    return _ColorMixture(weights, means, covs)


def _contrast_weights(z: np.ndarray, gamma: float):
    """Forward-offset n-link capacities with the local contrast term."""
    sq_sum = 0.0
    count = 0
    diffs = []
    h, w = z.shape[:2]
    for dy, dx in GRID_OFFSETS:
        a = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
        b = (slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
        d2 = ((z[a] - z[b]) ** 2).sum(axis=2)
        diffs.append((a, d2))
        sq_sum += d2.sum()
        count += d2.size
    mean_sq = sq_sum / count if count else 0.0
    beta = 1.0 / (2.0 * mean_sq) if mean_sq > 0 else 0.0
    caps = []
    for (dy, dx), (a, d2) in zip(GRID_OFFSETS, diffs):
        dist = float(np.hypot(dy, dx))
        cap = np.zeros((h, w))
        cap[a] = (gamma / dist) * np.exp(-beta * d2)
        caps.append(cap)
    return tuple(caps), beta


def _border_sink_caps(caps, inside: np.ndarray) -> np.ndarray:
    """Per-pixel n-link mass crossing from inside the box to fixed background."""
    h, w = inside.shape
    outside = ~inside
    out = np.zeros((h, w))
    for (dy, dx), cap in zip(GRID_OFFSETS, caps):
        a = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
        b = (slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
        wv = cap[a]
        out[a] += wv * (inside[a] & outside[b])
        out[b] += wv * (outside[a] & inside[b])
    return out


def grabcut(image: np.ndarray, box: BoundingBox, params: GrabCutParams | None = None) -> np.ndarray:
    """Extract a foreground mask for one box.

    Parameters
    ----------
    image : uint8 RGB array (H, W, 3).
    box : the annotation box; everything outside is definite background.
    params : mixture size, round count, contrast weight, and seed.

    Returns
    -------
    Boolean mask of the foreground, always a subset of the box.
    """
    params = params or GrabCutParams()
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("grabcut expects an RGB image")
    h, w = image.shape[:2]
    box.validate_within(h, w)
    if box.covers(h, w):
        raise DegenerateBoxError("box covers the whole image; no background sample")

    z = image.astype(np.float64) / 255.0
    caps, _ = _contrast_weights(z, params.gamma)
    inside = box.as_mask(h, w)
    border_snk = _border_sink_caps(caps, inside)

    ys, xs = box.slices()
    z_box = z[ys, xs].reshape(-1, 3)
    caps_box = tuple(c[ys, xs] for c in caps)
    border_box = border_snk[ys, xs]

    rng = np.random.default_rng(params.seed)
    fg = inside.copy()
    k = params.n_components
    fg_mix = _fit_mixture(z[fg], _kmeans_assign(z[fg], k, rng), k, params.cov_reg)
    bg_mix = _fit_mixture(z[~fg], _kmeans_assign(z[~fg], k, rng), k, params.cov_reg)

    for _ in range(params.iters):
        fg_pts = z[fg]
        bg_pts = z[~fg]
        if fg_pts.shape[0] == 0:
            break
        fg_mix = _fit_mixture(fg_pts, fg_mix.assign(fg_pts), k, params.cov_reg)
        bg_mix = _fit_mixture(bg_pts, bg_mix.assign(bg_pts), k, params.cov_reg)

        d_fg = -fg_mix.log_likelihood(z_box).reshape(box.height, box.width)
        d_bg = -bg_mix.log_likelihood(z_box).reshape(box.height, box.width)
        shift = np.minimum(d_fg, d_bg)  # per-pixel shift keeps capacities >= 0
        sub = GridGraph(
            cap_source=d_bg - shift,
            cap_sink=d_fg - shift + border_box,
            n_caps=caps_box,
        )
        cut_fg, _ = mincut_maxflow(sub)
        fg = np.zeros((h, w), dtype=bool)
        fg[ys, xs] = cut_fg

    return fg
