"""Downlink pixel-overlap correlation, uplink spatial covariance and effective loads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ContentParams, NetworkConfig
from .network import UNCOVERED, Topology


@dataclass(frozen=True)
class ContentModel:
    base_dl_bits: np.ndarray  # (U,) L_i(0)
    base_ul_bits: np.ndarray  # (U,) K_i(0)
    pixel_count: np.ndarray  # (U,) N_i
    overlap: np.ndarray  # (U, U) shared pixels N_ik, symmetric, zero diagonal
    content_id: np.ndarray  # (U,)

    def phi(self) -> np.ndarray:
        """Pairwise downlink correlation matrix (zero diagonal)."""
        n = self.pixel_count.astype(float)
        out = self.overlap / (n[:, None] + n[None, :])
        np.fill_diagonal(out, 0.0)
        return out


@dataclass(frozen=True)
class CorrelationState:
    phi_max: np.ndarray  # (U,)
    rho_max: np.ndarray  # (U,)
    covariance: np.ndarray  # (U, U)


def downlink_correlation(n_i: float, n_k: float, n_ik: float) -> float:
    """Shared-pixel fraction ``n_ik / (n_i + n_k)``, at most 1/2."""
    total = n_i + n_k
    if total <= 0:
        raise ValueError("degenerate content: N_i + N_k must be positive")
    return n_ik / total


def uplink_covariance(sigma_i, sigma_j, distance, alpha: float, kappa: float):
    """Power-exponential covariance of two users' tracking data."""
    return sigma_i * sigma_j * np.exp(-np.power(distance, alpha) / kappa)


def uplink_correlation_factor(distance, alpha: float, kappa: float):
    """Distance-only part of the covariance, in (0, 1]."""
    return np.exp(-np.power(distance, alpha) / kappa)


def synthesize_overlap(content_id: np.ndarray, params: ContentParams, config: NetworkConfig,
                       seed) -> ContentModel:
    """Stand-in for image-based overlap estimation.

    Same-content pairs share ``round(w * min(N_i, N_k))`` pixels with
    ``w ~ U[overlap_low, overlap_high]``; other pairs share nothing.
    """
    rng = np.random.default_rng(seed)
    content_id = np.asarray(content_id)
    n_u = len(content_id)
    pixels = np.full(n_u, params.pixels_per_user, dtype=np.int64)
    iu, ju = np.triu_indices(n_u, k=1)
    w = rng.uniform(params.overlap_low, params.overlap_high, size=len(iu))
    shared = np.rint(w * np.minimum(pixels[iu], pixels[ju]))
    shared[content_id[iu] != content_id[ju]] = 0.0
    overlap = np.zeros((n_u, n_u))
    overlap[iu, ju] = shared
    overlap[ju, iu] = shared
    return ContentModel(
        base_dl_bits=np.full(n_u, config.base_dl_bits),
        base_ul_bits=np.full(n_u, config.base_ul_bits),
        pixel_count=pixels,
        overlap=overlap,
        content_id=content_id.copy(),
    )


def max_correlations(topology: Topology, content: ContentModel, config: NetworkConfig
                     ) -> CorrelationState:
    """Per-user maximum correlation over the other users of the same SBS."""
    assoc = topology.association
    same_cell = (assoc[:, None] == assoc[None, :]) & (assoc[:, None] != UNCOVERED)
    np.fill_diagonal(same_cell, False)

    phi = content.phi()
    d = topology.user_distances()
    rho = uplink_correlation_factor(d, config.corr_dist_exponent, config.corr_dist_scale)
    cov = uplink_covariance(topology.tracking_std[:, None], topology.tracking_std[None, :], d,
                            config.corr_dist_exponent, config.corr_dist_scale)

    phi_max = np.where(same_cell, phi, 0.0).max(axis=1, initial=0.0)
    rho_max = np.where(same_cell, rho, 0.0).max(axis=1, initial=0.0)
    return CorrelationState(phi_max=phi_max, rho_max=rho_max, covariance=cov)


def effective_dl_load(base_bits, phi_max):
    return np.asarray(base_bits) * (1.0 - np.asarray(phi_max))


def effective_ul_load(base_bits, rho_max):
    return np.asarray(base_bits) * (1.0 - np.asarray(rho_max))


def redraw_content(topology: Topology, params: ContentParams, seed) -> Topology:
    """New content labels and tracking deviations on an unchanged topology."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, params.num_contents, topology.num_users)
    # tracking deviation varies around the configured level
    stds = params.tracking_std * rng.uniform(0.5, 1.5, topology.num_users)
    return Topology(
        sbs_positions=topology.sbs_positions,
        user_positions=topology.user_positions,
        association=topology.association,
        content_id=labels,
        tracking_std=stds,
    )
