"""Scikit-learn style wrappers around the fusers.

Each estimator takes a list of :class:`~sacfuse.scene_io.CameraView` as
``X``. ``fit`` runs the fusion and stores the result in ``cloud_``;
``transform`` returns the fused ``(n, 3)`` points and ``predict`` their view
labels. Fusion is deterministic, so ``transform(X)`` after ``fit(X)``
reproduces ``cloud_.points``. Hyper-parameters are plain constructor arguments, so
``get_params``/``set_params`` and ``sklearn.base.clone`` work as usual.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .baselines import ConsistencyConfig, concat_fuse, consistency_fuse, multiray_fuse
from .correspond import GroupingConfig, build_groups
from .netlet import SacConfig, fuse
from .validation import check_views


class _FusionEstimator(TransformerMixin, BaseEstimator):
    min_views = 1

    def fit(self, X, y=None):
        views = check_views(X, self.min_views)
        self.cloud_ = self._fuse(views)
        self.n_views_in_ = len(views)
        return self

    def fused_cloud(self):
        """The :class:`~sacfuse.netlet.FusedCloud` computed by ``fit``."""
        if not hasattr(self, "cloud_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")
        return self.cloud_

    def transform(self, X):
        """Fused ``(n, 3)`` points of the views ``X``."""
        return self._fuse(check_views(X, self.min_views)).points

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).cloud_.points

    def predict(self, X):
        """Selected view label of every fused point of ``X``."""
        return self._fuse(check_views(X, self.min_views)).labels

    def _grouping(self) -> GroupingConfig:
        return GroupingConfig(
            strategy=self.strategy,
            reprojection_relative_depth_tol=self.reprojection_relative_depth_tol,
            proximity_radius=self.proximity_radius,
            max_group_size=self.max_group_size,
            correspondence_file=self.correspondence_file,
        )


class SelectAndCombine(_FusionEstimator):
    """Netlet-based select-and-combine fusion."""

    def __init__(self, tau=2.0, use_superpixels=False, exact_solver_limit=4096, icm_max_sweeps=20,
                 superpixel_size=64, strategy="reprojection", reprojection_relative_depth_tol=0.01,
                 proximity_radius=0.10, max_group_size=8, correspondence_file=None, n_jobs=1):
        self.tau = tau
        self.use_superpixels = use_superpixels
        self.exact_solver_limit = exact_solver_limit
        self.icm_max_sweeps = icm_max_sweeps
        self.superpixel_size = superpixel_size
        self.strategy = strategy
        self.reprojection_relative_depth_tol = reprojection_relative_depth_tol
        self.proximity_radius = proximity_radius
        self.max_group_size = max_group_size
        self.correspondence_file = correspondence_file
        self.n_jobs = n_jobs

    def _fuse(self, views):
        cfg = SacConfig(tau=self.tau, use_superpixels=self.use_superpixels,
                        exact_solver_limit=self.exact_solver_limit, icm_max_sweeps=self.icm_max_sweeps,
                        superpixel_size=self.superpixel_size)
        return fuse(views, cfg, self._grouping(), n_jobs=self.n_jobs)


class ConsistencyFusion(_FusionEstimator):
    """Geometric-consistency filtering baseline."""

    min_views = 2

    def __init__(self, relative_depth_tol=0.01, occlusion_margin=0.01):
        self.relative_depth_tol = relative_depth_tol
        self.occlusion_margin = occlusion_margin

    def _fuse(self, views):
        return consistency_fuse(views, ConsistencyConfig(self.relative_depth_tol, self.occlusion_margin))


class MultiRayFusion(_FusionEstimator):
    """Triangulate every point group into one point."""

    def __init__(self, min_rays=2, strategy="reprojection", reprojection_relative_depth_tol=0.01,
                 proximity_radius=0.10, max_group_size=8, correspondence_file=None):
        self.min_rays = min_rays
        self.strategy = strategy
        self.reprojection_relative_depth_tol = reprojection_relative_depth_tol
        self.proximity_radius = proximity_radius
        self.max_group_size = max_group_size
        self.correspondence_file = correspondence_file

    def _fuse(self, views):
        return multiray_fuse(build_groups(views, self._grouping()), views, self.min_rays)


class ConcatFusion(_FusionEstimator):
    """Every valid pixel of every view, unfused."""

    def _fuse(self, views):
        return concat_fuse(views)
