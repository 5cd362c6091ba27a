"""scikit-learn style wrappers so the solver and the hypergraph features
compose with pipelines, ``clone`` and ``get_params``/``set_params``."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dmk import SolverConfig, TransportProblem, run_dmk
from .extract import active_triangles, graph_from_mask, hypergraph_from_graph
from .image import GrayImage, analyze_images
from .temporal import DEFAULT_P, analyze_run, step_metrics


def feature_names(s_values) -> list:
    names = ["E_H", "T", "S"]
    names += [f"d_{s}" for s in s_values]
    names += [f"c_{s}" for s in s_values]
    return names + ["E_G", "d_G", "c_G"]


def _check_s_values(s_values):
    s_values = tuple(s_values)
    if not s_values or any(int(s) != s or s < 1 for s in s_values):
        raise ValueError(f"s_values must be positive integers, got {s_values!r}")
    return s_values


def check_conductivity_array(X, n_triangles=None) -> np.ndarray:
    """Validate a stack of per-triangle conductivities, shape (n_steps, n_triangles)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array of conductivities, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("conductivities contain NaN or infinity")
    if np.any(X < 0):
        raise ValueError("conductivities must be nonnegative")
    if n_triangles is not None and X.shape[1] != n_triangles:
        raise ValueError(f"expected {n_triangles} triangles per row, got {X.shape[1]}")
    return X


class DMKSolver(BaseEstimator):
    """Run the transport dynamics on a :class:`TransportProblem`.

    After ``fit`` the solver exposes ``run_`` (the full step sequence),
    ``mu_`` (final conductivity), ``n_iter_``, ``converged_`` and
    ``cost_`` (rows of L, E, M).
    """

    def __init__(self, beta=1.5, dt=0.1, max_iter=300, tau=1e-12, mu_floor=1e-10, linear_tol=1e-10, mu0=1.0,
                 linear_solver="cg"):
        self.beta = beta
        self.dt = dt
        self.max_iter = max_iter
        self.tau = tau
        self.mu_floor = mu_floor
        self.linear_tol = linear_tol
        self.mu0 = mu0
        self.linear_solver = linear_solver

    def _config(self) -> SolverConfig:
        return SolverConfig(**self.get_params())

    def fit(self, X, y=None):
        if not isinstance(X, TransportProblem):
            raise TypeError(f"DMKSolver.fit expects a TransportProblem, got {type(X).__name__}")
        self.run_ = run_dmk(X, self._config())
        self.mu_ = self.run_.steps[-1].conductivity.mu
        self.n_iter_ = self.run_.n_updates
        self.converged_ = self.run_.converged
        self.cost_ = self.run_.cost_trace()
        return self

    def conductivity_history(self) -> np.ndarray:
        check_is_fitted(self, "run_")
        return np.array([s.conductivity.mu for s in self.run_.steps])

    def analyze(self, s_values=(1, 2), threshold_ratio=0.01, p=DEFAULT_P):
        check_is_fitted(self, "run_")
        return analyze_run(self.run_, s_values, threshold_ratio, p)


class HypernetworkFeatures(TransformerMixin, BaseEstimator):
    """Map conductivity snapshots on a fixed mesh to hypergraph metrics.

    Each row of ``X`` is one per-triangle conductivity field; each output
    row holds the columns listed by :meth:`get_feature_names_out`.
    """

    def __init__(self, mesh=None, threshold_ratio=0.01, s_values=(1, 2)):
        self.mesh = mesh
        self.threshold_ratio = threshold_ratio
        self.s_values = s_values

    def fit(self, X, y=None):
        if self.mesh is None:
            raise ValueError("HypernetworkFeatures needs a mesh")
        if not 0 < self.threshold_ratio < 1:
            raise ValueError(f"threshold_ratio must lie in (0, 1), got {self.threshold_ratio}")
        self.s_values_ = _check_s_values(self.s_values)
        X = check_conductivity_array(X, self.mesh.n_triangles)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "s_values_")
        X = check_conductivity_array(X, self.n_features_in_)
        names = feature_names(self.s_values_)
        out = np.empty((len(X), len(names)))
        for i, mu in enumerate(X):
            g = graph_from_mask(self.mesh, active_triangles(mu, self.threshold_ratio))
            m = step_metrics(hypergraph_from_graph(g), g, self.s_values_)
            out[i] = [m[k] for k in names]
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array(feature_names(_check_s_values(self.s_values)), dtype=object)


class ImageHypernetwork(TransformerMixin, BaseEstimator):
    """Hypergraph metrics for a sequence of :class:`GrayImage` frames (or 2-D arrays)."""

    def __init__(self, intensity_threshold=128, downsample=1, s_values=(1, 2), max_val=255):
        self.intensity_threshold = intensity_threshold
        self.downsample = downsample
        self.s_values = s_values
        self.max_val = max_val

    def _frames(self, X):
        frames = [x if isinstance(x, GrayImage) else GrayImage.from_array(x, self.max_val) for x in X]
        if not frames:
            raise ValueError("no frames given")
        return frames

    def fit(self, X, y=None):
        self.s_values_ = _check_s_values(self.s_values)
        frames = self._frames(X)
        self.frame_shape_ = (frames[0].height, frames[0].width)
        return self

    def transform(self, X):
        check_is_fitted(self, "frame_shape_")
        frames = self._frames(X)
        for i, f in enumerate(frames):
            if (f.height, f.width) != self.frame_shape_:
                raise ValueError(f"frame {i} has shape {(f.height, f.width)}, fitted on {self.frame_shape_}")
        result = analyze_images(frames, self.intensity_threshold, self.downsample, self.s_values_)
        names = feature_names(self.s_values_)
        return np.column_stack([result.traces[k].values for k in names])

    def get_feature_names_out(self, input_features=None):
        return np.array(feature_names(_check_s_values(self.s_values)), dtype=object)
