"""Projecting 3D Gaussians to image-plane ellipses.

Two back ends: EWA linearizes the camera model at the mean, the unscented
transform pushes 7 sigma points through the full nonlinear model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussians import GaussianPrimitive, GaussianSet

__all__ = ["UtParams", "Projected", "project_ewa", "project_ut", "project_gaussians", "ut_weights"]

DEFAULT_ALPHA_MIN = 1.0 / 255.0


@dataclass(frozen=True)
class UtParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if 3.0 + self.lam <= 0:
            raise ValueError(f"3 + lambda must be positive, got {3.0 + self.lam}")

    @property
    def lam(self) -> float:
        return self.alpha ** 2 * (3.0 + self.kappa) - 3.0


def ut_weights(ut: UtParams) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance weights for the 7 sigma points."""
    lam = ut.lam
    w_mu = np.full(7, 1.0 / (2.0 * (3.0 + lam)))
    w_cov = w_mu.copy()
    w_mu[0] = lam / (lam + 3.0)
    w_cov[0] = w_mu[0] + (1.0 - ut.alpha ** 2 + ut.beta)
    return w_mu, w_cov


@dataclass
class Projected:
    """Batched projection result; rows with ``valid`` False are culled."""

    mean2d: np.ndarray   # (N, 2) px
    cov2d: np.ndarray    # (N, 2, 2) px^2
    depth: np.ndarray    # (N,) camera z of the 3D mean
    valid: np.ndarray    # (N,) bool

    def __len__(self) -> int:
        return len(self.depth)


def _off_image(mean2d, cov2d, opacities, width, height, alpha_min):
    # the splat reaches a pixel only where alpha * exp(-q/2) >= alpha_min
    cut = 2.0 * np.log(np.maximum(opacities, 1e-300) / alpha_min)
    with np.errstate(invalid="ignore"):
        rx = np.sqrt(np.maximum(cut, 0.0) * np.maximum(cov2d[:, 0, 0], 0.0))
        ry = np.sqrt(np.maximum(cut, 0.0) * np.maximum(cov2d[:, 1, 1], 0.0))
    return ((mean2d[:, 0] + rx < 0) | (mean2d[:, 0] - rx > width - 1)
            | (mean2d[:, 1] + ry < 0) | (mean2d[:, 1] - ry > height - 1) | (cut < 0))


def _as_set(g) -> GaussianSet:
    if isinstance(g, GaussianPrimitive):
        return GaussianSet(g.mean[None], g.cov[None], g.opacity, g.label, validate=False)
    return g


def _finish(gs, camera, mean2d, cov2d, depth, valid, alpha_min, cull_offscreen):
    valid = valid & np.all(np.isfinite(mean2d), axis=1) & np.all(np.isfinite(cov2d), axis=(1, 2))
    if cull_offscreen and len(gs):
        valid &= ~_off_image(np.nan_to_num(mean2d), np.nan_to_num(cov2d), gs.opacities,
                             camera.width, camera.height, alpha_min)
    return Projected(mean2d, cov2d, depth, valid)


def project_ewa(gaussians, camera, alpha_min: float = DEFAULT_ALPHA_MIN,
                cull_offscreen: bool = True) -> Projected:
    """Linearized projection: ``cov2d = J cov J^T`` with J the full model Jacobian at the mean."""
    gs = _as_set(gaussians)
    uv, z, valid = camera.project_points(gs.means)
    J = camera.jacobian(gs.means)
    cov2d = J @ gs.covs @ np.swapaxes(J, 1, 2)
    cov2d = 0.5 * (cov2d + np.swapaxes(cov2d, 1, 2))
    return _finish(gs, camera, uv, cov2d, z, valid, alpha_min, cull_offscreen)


def sigma_points(means: np.ndarray, covs: np.ndarray, ut: UtParams) -> np.ndarray:
    """(N, 7, 3) sigma points; raises ValueError if a covariance has no Cholesky factor."""
    try:
        L = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as err:
        raise ValueError("covariance is not positive definite") from err
    spread = np.sqrt(3.0 + ut.lam) * np.swapaxes(L, 1, 2)   # rows are scaled columns of L
    return np.concatenate([means[:, None], means[:, None] + spread, means[:, None] - spread], axis=1)


def project_ut(gaussians, camera, ut: UtParams | None = None, alpha_min: float = DEFAULT_ALPHA_MIN,
               cull_offscreen: bool = True) -> Projected:
    """Unscented projection through the full (distorted) camera model.

    A Gaussian is culled if any of its sigma points falls behind the near plane.
    """
    ut = ut or UtParams()
    gs = _as_set(gaussians)
    n = len(gs)
    pts = sigma_points(gs.means, gs.covs, ut)
    uv, z, ok = camera.project_points(pts.reshape(-1, 3))
    uv = uv.reshape(n, 7, 2)
    ok = ok.reshape(n, 7).all(axis=1)
    w_mu, w_cov = ut_weights(ut)
    uv_safe = np.where(ok[:, None, None], uv, 0.0)
    mean2d = np.einsum("k,nkc->nc", w_mu, uv_safe)
    d = uv_safe - mean2d[:, None]
    cov2d = np.einsum("k,nki,nkj->nij", w_cov, d, d)
    mean2d[~ok] = np.nan
    depth = z.reshape(n, 7)[:, 0]
    return _finish(gs, camera, mean2d, cov2d, depth, ok, alpha_min, cull_offscreen)


def project_gaussians(gaussians, camera, backend: str = "ut", ut: UtParams | None = None,
                      alpha_min: float = DEFAULT_ALPHA_MIN) -> Projected:
    if backend == "ewa":
        return project_ewa(gaussians, camera, alpha_min)
    if backend == "ut":
        return project_ut(gaussians, camera, ut, alpha_min)
    raise ValueError(f"unknown projection backend {backend!r} (expected 'ewa' or 'ut')")
