"""Vector Gaussian process regression in tangent frames.

Gram matrices are assembled in per-point orthonormal tangent frames, giving
full-rank 2x2 blocks on the sphere (d x d global-frame blocks on tori).
Conditioning is exact via Cholesky with a documented jitter-escalation
fallback; sampling uses the truncated eigenfield expansion for priors and an
exact joint Gaussian factorization for posteriors.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import InvalidInputError, NumericalError
from .kernels import (CURL, DIV, HODGE_COMPOSITIONAL, HODGE_CURL, HODGE_DIV, HODGE_FULL, NOISE,
                      PROJECTED, KernelSpec, MaternParams, class_weights, compositional_spec,
                      hodge_pair_sums, kernel_matrix, noise_spec, scalar_pair_sums,
                      stable_phi_ratios)
from .manifold import SPHERE, ManifoldPoint, TangentVector, frames_at, points_array
from .spectrum import torus_spectrum


@dataclass
class Dataset:
    """Aligned manifold points and tangent observations.

    ``scale`` records the factor applied to the raw observations when the
    dataset was normalized (1.0 when untouched).
    """

    points: list
    observations: list
    scale: float = 1.0

    def __post_init__(self):
        if len(self.points) != len(self.observations):
            raise InvalidInputError("points and observations must align")
        for p, v in zip(self.points, self.observations):
            if not isinstance(v, TangentVector):
                raise InvalidInputError("observations must be tangent vectors")
            if v.base.manifold != p.manifold or not np.array_equal(v.base.coords, p.coords):
                raise InvalidInputError("observation base point mismatch")

    def __len__(self):
        return len(self.points)

    @property
    def manifold(self):
        return self.points[0].manifold if self.points else SPHERE

    def coords(self):
        return points_array(self.points)

    def values(self):
        if not self.observations:
            return np.zeros((0, 3))
        return np.stack([v.components for v in self.observations])

    @classmethod
    def from_arrays(cls, manifold, coords, values, scale=1.0):
        pts = [ManifoldPoint(manifold, c) for c in np.asarray(coords, dtype=np.float64)]
        obs = [TangentVector(p, v) for p, v in zip(pts, np.asarray(values, dtype=np.float64))]
        return cls(pts, obs, scale=scale)


# ---------------------------------------------------------------------------
# Frame-coordinate Gram assembly
# ---------------------------------------------------------------------------

def _rotate_frame_blocks(blocks):
    """Conjugate 2x2 blocks by the in-plane 90-degree rotation J.

    Turns divergence-class blocks into curl-class blocks (the curl kernel is
    the div kernel conjugated by the Hodge star at both arguments).
    """
    out = np.empty_like(blocks)
    out[..., 0, 0] = blocks[..., 1, 1]
    out[..., 0, 1] = -blocks[..., 1, 0]
    out[..., 1, 0] = -blocks[..., 0, 1]
    out[..., 1, 1] = blocks[..., 0, 0]
    return out


def _sphere_div_blocks(nu, kappa, variance, lmax, X, BX, Y, BY):
    t = X @ Y.T
    s1, s2 = hodge_pair_sums(nu, kappa, lmax, t)
    u = np.einsum("nka,ma->nmk", BX, Y)   # B_x^T P_x y  (P drops in the frame)
    v = np.einsum("mka,na->nmk", BY, X)   # B_y^T P_y x
    w = np.einsum("nka,mla->nmkl", BX, BY)
    return variance * (s2[:, :, None, None] * u[:, :, :, None] * v[:, :, None, :]
                       + s1[:, :, None, None] * w)


def _sphere_frame_blocks(spec, X, BX, Y, BY):
    if spec.kind == NOISE:
        return np.zeros((X.shape[0], Y.shape[0], 2, 2))
    if spec.kind == PROJECTED:
        ks = scalar_pair_sums(spec.params, spec.lmax, X @ Y.T)
        a = spec.coreg if spec.coreg is not None else np.eye(3)
        geom = np.einsum("nka,ab,mlb->nmkl", BX, a @ a.T, BY)
        return 0.5 * ks[:, :, None, None] * geom
    if spec.kind == HODGE_DIV:
        p = spec.params
        return _sphere_div_blocks(p.nu, p.kappa, p.variance, spec.lmax, X, BX, Y, BY)
    if spec.kind == HODGE_CURL:
        p = spec.params
        d = _sphere_div_blocks(p.nu, p.kappa, p.variance, spec.lmax, X, BX, Y, BY)
        return _rotate_frame_blocks(d)
    if spec.kind == HODGE_FULL:
        p = spec.params
        d = _sphere_div_blocks(p.nu, p.kappa, p.variance, spec.lmax, X, BX, Y, BY)
        return 0.5 * (d + _rotate_frame_blocks(d))
    if spec.kind == HODGE_COMPOSITIONAL:
        pd, pc = spec.parts[DIV], spec.parts[CURL]
        d = _sphere_div_blocks(pd.nu, pd.kappa, pd.variance, spec.lmax, X, BX, Y, BY)
        c = _sphere_div_blocks(pc.nu, pc.kappa, pc.variance, spec.lmax, X, BX, Y, BY)
        return d + _rotate_frame_blocks(c)
    raise InvalidInputError(f"kernel kind {spec.kind!r} not supported on the sphere")


def _frame_blocks(spec, X, BX, Y, BY):
    if spec.manifold == SPHERE:
        return _sphere_frame_blocks(spec, X, BX, Y, BY)
    return kernel_matrix(spec, X, Y)  # tori work in the global frame


def _blocks_to_matrix(blocks):
    n, m, d, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(n * d, m * d)


def gram(spec, points, frames=None):
    """Gram matrix in frame coordinates: block (i, j) = B_i^T k(x_i, x_j) B_j.

    ``points`` is a list of ManifoldPoint or a coordinate array; sphere
    frames default to the deterministic east/north frames.
    """
    X = points_array(points) if isinstance(points, list) else np.atleast_2d(points)
    if spec.manifold == SPHERE and frames is None:
        frames = frames_at(X)
    blocks = _frame_blocks(spec, X, frames, X, frames)
    return _blocks_to_matrix(blocks)


def _chol_with_jitter(mat, scale):
    """Lower Cholesky factor with escalating diagonal jitter.

    Starts at 1e-10 * scale and multiplies by 10 up to 1e-4 * scale; raises
    NumericalError with diagnostics if the matrix is still not positive
    definite. Returns (factor, jitter_used).
    """
    if mat.shape[0] == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return cholesky(mat, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * scale
    while jitter <= 1e-4 * scale:
        try:
            l = cholesky(mat + jitter * np.eye(mat.shape[0]), lower=True)
            return l, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    eigs = np.linalg.eigvalsh(mat)
    raise NumericalError(
        f"matrix not positive definite after jitter up to {1e-4 * scale:.3e}; "
        f"eigenvalue range [{eigs.min():.3e}, {eigs.max():.3e}]")


def _total_variance(spec):
    if spec.kind == HODGE_COMPOSITIONAL:
        return sum(p.variance for p in spec.parts.values())
    return spec.params.variance if spec.params is not None else 1.0


class PosteriorModel:
    """Conditioned GP state: training data, Gram factor, solved coefficients."""

    def __init__(self, spec, dataset, frames, chol, alpha, y_frame, jitter):
        self.spec = spec
        self.dataset = dataset
        self.frames = frames
        self.chol = chol
        self.alpha = alpha
        self.y_frame = y_frame
        self.jitter = jitter

    @property
    def block_dim(self):
        return 2 if self.spec.manifold == SPHERE else self.spec.dim


def _frame_components(values, frames):
    if frames is None:
        return np.asarray(values)
    return np.einsum("nka,na->nk", frames, values)


def condition(spec, dataset) -> PosteriorModel:
    """Condition the GP prior on a dataset.

    Factors K + sigma_eps^2 I in frame coordinates. When the bare
    factorization fails (typical for sigma_eps^2 = 0, where truncated
    spectral Gram matrices are barely positive definite) a diagonal jitter is
    added, escalating from 1e-10 * sigma^2 by factors of 10 up to
    1e-4 * sigma^2 before raising NumericalError.
    """
    X = dataset.coords()
    frames = frames_at(X) if (spec.manifold == SPHERE and len(dataset)) else None
    if len(dataset) == 0:
        return PosteriorModel(spec, dataset, None, np.zeros((0, 0)), np.zeros(0),
                              np.zeros(0), 0.0)
    blocks = _frame_blocks(spec, X, frames, X, frames)
    k = _blocks_to_matrix(blocks)
    k[np.diag_indices_from(k)] += spec.noise_variance
    chol, jitter = _chol_with_jitter(k, _total_variance(spec))
    y_frame = _frame_components(dataset.values(), frames).reshape(-1)
    alpha = cho_solve((chol, True), y_frame)
    return PosteriorModel(spec, dataset, frames, chol, alpha, y_frame, jitter)


def _prior_marginal_blocks(spec, Q, BQ):
    """(m, dd, dd) frame-coordinate prior covariance at each query point."""
    m = Q.shape[0]
    if spec.kind == NOISE:
        d = 2 if spec.manifold == SPHERE else spec.dim
        return np.zeros((m, d, d))
    if spec.manifold == SPHERE:
        if spec.kind == PROJECTED:
            ks = scalar_pair_sums(spec.params, spec.lmax, np.ones(m))
            a = spec.coreg if spec.coreg is not None else np.eye(3)
            geom = np.einsum("nka,ab,nlb->nkl", BQ, a @ a.T, BQ)
            return 0.5 * ks[:, None, None] * geom
        if spec.kind == HODGE_COMPOSITIONAL:
            c = 0.0
            for p in spec.parts.values():
                s1, _ = hodge_pair_sums(p.nu, p.kappa, spec.lmax, np.array([1.0]))
                c += p.variance * float(s1[0])
            return np.repeat(c * np.eye(2)[None], m, axis=0)
        p = spec.params
        s1, _ = hodge_pair_sums(p.nu, p.kappa, spec.lmax, np.array([1.0]))
        return np.repeat(p.variance * float(s1[0]) * np.eye(2)[None], m, axis=0)
    spectrum = torus_spectrum(spec.dim, spec.lambda_cap)
    if spec.kind == HODGE_FULL:
        from .kernels import _scalar_torus_matrix
        ks = _scalar_torus_matrix(spec.params, spectrum, Q[:1], Q[:1])[0, 0]
        return np.repeat(ks / spec.dim * np.eye(spec.dim)[None], m, axis=0)
    w = class_weights(spec, spectrum)
    e = spectrum.eigenfield_values(Q)
    return np.einsum("f,fma,fmb->mab", w, e, e)


@dataclass
class Prediction:
    """Posterior mean (ambient components) and marginal covariance per query.

    Covariances are 2x2 in the query frames on the sphere and d x d in the
    global frame on tori.
    """

    mean: np.ndarray
    cov: np.ndarray
    frames: np.ndarray


def predict(model, points) -> Prediction:
    """Exact GP posterior mean and per-point marginal covariance."""
    spec = model.spec
    Q = points_array(points) if isinstance(points, list) else np.atleast_2d(points)
    BQ = frames_at(Q) if spec.manifold == SPHERE else None
    prior = _prior_marginal_blocks(spec, Q, BQ)
    m = Q.shape[0]
    if len(model.dataset) == 0:
        mean_f = np.zeros((m, prior.shape[1]))
    else:
        X = model.dataset.coords()
        cross = _blocks_to_matrix(_frame_blocks(spec, Q, BQ, X, model.frames))
        mean_f = (cross @ model.alpha).reshape(m, -1)
        r = solve_triangular(model.chol, cross.T, lower=True)
        r = r.reshape(r.shape[0], m, -1)
        prior = prior - np.einsum("nmk,nml->mkl", r, r)
    cov = 0.5 * (prior + prior.transpose(0, 2, 1))
    if BQ is not None:
        mean = np.einsum("mk,mka->ma", mean_f, BQ)
    else:
        mean = mean_f
    return Prediction(mean=mean, cov=cov, frames=BQ)


def log_marginal_likelihood(spec, dataset):
    """Gaussian log evidence of the dataset under the spec, frame coordinates."""
    if len(dataset) == 0:
        raise InvalidInputError("log marginal likelihood needs a nonempty dataset")
    model = condition(spec, dataset)
    n = model.y_frame.shape[0]
    return float(-0.5 * model.y_frame @ model.alpha
                 - np.log(np.diag(model.chol)).sum()
                 - 0.5 * n * math.log(2.0 * math.pi))


# ---------------------------------------------------------------------------
# Hyperparameter fitting
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    """Optimizer settings for marginal-likelihood fitting.

    Parameters are optimized in natural-log space within the given bounds by
    a derivative-free simplex search, restarted from ``restarts`` seeded
    initial points; ``fixed_kappa`` freezes the length scale(s).
    """

    restarts: int = 5
    max_iter: int = 250
    tol: float = 1e-6
    seed: int = 0
    log_kappa_bounds: tuple = (math.log(0.01), math.log(10.0))
    log_variance_bounds: tuple = (-6.0, 6.0)
    log_noise_bounds: tuple = (-10.0, 2.0)
    fixed_kappa: float = None

    def __post_init__(self):
        if self.restarts < 1:
            raise InvalidInputError("at least one restart is required")


def _spec_builder(kind, nu, manifold, lmax, lambda_cap, torus_dim, config):
    """Returns (names, bounds, build) mapping a log-parameter vector to a spec."""
    kb, vb, nb = (config.log_kappa_bounds, config.log_variance_bounds,
                  config.log_noise_bounds)
    fixed = config.fixed_kappa

    def common(**kw):
        return dict(manifold=manifold, lmax=lmax, lambda_cap=lambda_cap,
                    torus_dim=torus_dim, **kw)

    if kind in (HODGE_FULL, HODGE_DIV, HODGE_CURL, PROJECTED):
        if fixed is None:
            names = ["log_kappa", "log_variance", "log_noise"]
            bounds = [kb, vb, nb]

            def build(th):
                p = MaternParams(nu, math.exp(th[0]), math.exp(th[1]), math.exp(th[2]))
                return KernelSpec(kind, p, **common())
        else:
            names = ["log_variance", "log_noise"]
            bounds = [vb, nb]

            def build(th):
                p = MaternParams(nu, fixed, math.exp(th[0]), math.exp(th[1]))
                return KernelSpec(kind, p, **common())
        return names, bounds, build

    if kind == HODGE_COMPOSITIONAL:
        if fixed is None:
            names = ["log_kappa_div", "log_variance_div",
                     "log_kappa_curl", "log_variance_curl", "log_noise"]
            bounds = [kb, vb, kb, vb, nb]

            def build(th):
                return compositional_spec(
                    nu, (math.exp(th[0]), math.exp(th[1])),
                    (math.exp(th[2]), math.exp(th[3])), noise=math.exp(th[4]),
                    **common())
        else:
            names = ["log_variance_div", "log_variance_curl", "log_noise"]
            bounds = [vb, vb, nb]

            def build(th):
                return compositional_spec(
                    nu, (fixed, math.exp(th[0])), (fixed, math.exp(th[1])),
                    noise=math.exp(th[2]), **common())
        return names, bounds, build

    raise InvalidInputError(f"cannot fit kernel kind {kind!r}")


def fit(dataset, kind, config=None, nu=0.5, lmax=30, lambda_cap=900.0) -> KernelSpec:
    """Fit kernel hyperparameters by maximizing the marginal log-likelihood.

    Runs a bounded Nelder-Mead search in log-parameter space from
    ``config.restarts`` seeded starting points and keeps the best optimum
    (ties broken by the lowest restart index). Deterministic given
    ``config.seed``. The pure-noise kernel has the closed-form maximum
    sigma_eps^2 = mean squared frame component and skips the search.
    """
    if len(dataset) == 0:
        raise InvalidInputError("cannot fit an empty dataset")
    config = config or FitConfig()
    manifold = dataset.manifold
    torus_dim = dataset.points[0].dim if manifold != SPHERE else 2

    if kind == NOISE:
        X = dataset.coords()
        frames = frames_at(X) if manifold == SPHERE else None
        yf = _frame_components(dataset.values(), frames)
        return noise_spec(float(np.mean(yf ** 2)), manifold=manifold, torus_dim=torus_dim)

    names, bounds, build = _spec_builder(kind, nu, manifold, lmax, lambda_cap,
                                         torus_dim, config)
    mean_sq = float(np.mean(np.sum(dataset.values() ** 2, axis=1)))

    def objective(theta):
        try:
            return -log_marginal_likelihood(build(theta), dataset)
        except (NumericalError, FloatingPointError):
            return 1e30

    def center_start():
        start = []
        for name, (lo, hi) in zip(names, bounds):
            if name.startswith("log_kappa"):
                start.append(math.log(0.5))
            elif name.startswith("log_variance"):
                start.append(np.clip(math.log(max(mean_sq, 1e-8)), lo, hi))
            else:
                start.append(np.clip(math.log(max(0.01 * mean_sq, 1e-8)), lo, hi))
        return np.array(start)

    rng = np.random.default_rng(config.seed)
    best = None
    for restart in range(config.restarts):
        if restart == 0:
            x0 = center_start()
        else:
            x0 = np.array([rng.uniform(lo, hi) for lo, hi in bounds])
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                       options={"maxiter": config.max_iter, "fatol": config.tol,
                                "xatol": 1e-4})
        value = res.fun if np.isfinite(res.fun) else 1e30
        if best is None or value < best[0]:
            best = (value, restart, res.x)
    if best is None or best[0] >= 1e30:
        raise NumericalError("every fitting restart failed to evaluate")
    return build(best[2])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

class PriorSample:
    """A frozen draw from a truncated prior, evaluable at arbitrary points.

    Built as f(x) = sum_n c_n s_n(x) with c_n = z_n sqrt(w_n) for i.i.d.
    standard normal z_n and the spec's per-eigenfield weights w_n; the
    projected kernel stacks three scalar draws and projects pointwise.
    """

    def __init__(self, spec, spectrum, rng):
        self.spec = spec
        self.spectrum = spectrum
        if spec.kind == PROJECTED:
            scale = _projected_coeff_scale(spec, spectrum)
            self._scalar_coeffs = scale[:, None] * rng.standard_normal((len(scale), 3))
            self._coeffs = None
        elif spec.kind == NOISE:
            self._coeffs = None
            self._scalar_coeffs = None
        else:
            w = class_weights(spec, spectrum)
            self._coeffs = np.sqrt(w) * rng.standard_normal(len(w))
            self._scalar_coeffs = None

    def at(self, points):
        """Field values at an (m, k)-coordinate array (ambient on the sphere)."""
        pts = points_array(points) if isinstance(points, list) else np.atleast_2d(points)
        if self.spec.kind == NOISE:
            d = 3 if self.spec.manifold == SPHERE else self.spec.dim
            return np.zeros((pts.shape[0], d))
        if self.spec.kind == PROJECTED:
            vals = self.spectrum.scalar_values(pts)
            g = np.einsum("fj,fm->mj", self._scalar_coeffs, vals)
            a = self.spec.coreg if self.spec.coreg is not None else np.eye(3)
            g = g @ a.T
            g = g - np.sum(pts * g, axis=1, keepdims=True) * pts
            return g / math.sqrt(2.0)
        e = self.spectrum.eigenfield_values(pts)
        return np.einsum("f,fma->ma", self._coeffs, e)

    __call__ = at


def _projected_coeff_scale(spec, spectrum):
    """Per-scalar-mode amplitudes of the stacked fields behind a projected GP.

    The scalar kernel has unit-trace normalization sigma^2 Phi / C0; the
    pointwise 1/sqrt(2) projection factor is applied at evaluation time.
    """
    lam = spectrum.scalar_eigenvalues()
    w = stable_phi_ratios(spec.params.nu, spec.params.kappa, lam, spectrum.dim)
    return np.sqrt(spec.params.variance * spectrum.volume * w / w.sum())


def sample_prior(spec, spectrum, rng) -> PriorSample:
    """Draw one prior field; the returned object evaluates it anywhere."""
    return PriorSample(spec, spectrum, rng)


def sample_prior_batch(spec, spectrum, points, n_draws, rng):
    """(n_draws, m, D) values of independent prior draws at fixed points."""
    pts = points_array(points) if isinstance(points, list) else np.atleast_2d(points)
    if spec.kind == PROJECTED:
        scale = _projected_coeff_scale(spec, spectrum)
        z = rng.standard_normal((n_draws, len(scale), 3))
        vals = spectrum.scalar_values(pts)
        g = np.einsum("dfj,fm->dmj", scale[None, :, None] * z, vals)
        a = spec.coreg if spec.coreg is not None else np.eye(3)
        g = g @ a.T
        g = g - np.sum(pts[None] * g, axis=2, keepdims=True) * pts[None]
        return g / math.sqrt(2.0)
    w = class_weights(spec, spectrum)
    z = rng.standard_normal((n_draws, len(w)))
    e = spectrum.eigenfield_values(pts)
    return np.einsum("df,fma->dma", np.sqrt(w) * z, e)


def sample_posterior(model, points, rng, n_draws=1):
    """Exact draws from the joint posterior at the query points.

    Factors the full joint posterior covariance (with the conditioning jitter
    policy) and returns (n_draws, m, D) ambient components.
    """
    spec = model.spec
    Q = points_array(points) if isinstance(points, list) else np.atleast_2d(points)
    BQ = frames_at(Q) if spec.manifold == SPHERE else None
    m = Q.shape[0]
    prior = _blocks_to_matrix(_frame_blocks(spec, Q, BQ, Q, BQ))
    if len(model.dataset) == 0:
        mean = np.zeros(prior.shape[0])
        cov = prior
    else:
        X = model.dataset.coords()
        cross = _blocks_to_matrix(_frame_blocks(spec, Q, BQ, X, model.frames))
        mean = cross @ model.alpha
        r = solve_triangular(model.chol, cross.T, lower=True)
        cov = prior - r.T @ r
    cov = 0.5 * (cov + cov.T)
    scale = max(_total_variance(spec), 1e-12)
    chol, _ = _chol_with_jitter(cov + 1e-12 * scale * np.eye(cov.shape[0]), scale)
    z = rng.standard_normal((n_draws, cov.shape[0]))
    draws_f = mean[None, :] + z @ chol.T
    draws_f = draws_f.reshape(n_draws, m, -1)
    if BQ is not None:
        return np.einsum("dmk,mka->dma", draws_f, BQ)
    return draws_f


# ---------------------------------------------------------------------------
# Evaluation metrics
# ---------------------------------------------------------------------------

def metrics(means, covs, truths, noise_variance, frames=None):
    """(MSE, PNLL) of predictions against held-out observations.

    MSE is the mean squared Euclidean norm of the mean error. PNLL is the
    mean negative log-density of the truth under the per-point Gaussian
    N(mean, cov + noise * I) expressed in the query frame, each test point
    scored independently.
    """
    means = np.atleast_2d(means)
    truths = np.atleast_2d(truths)
    covs = np.asarray(covs)
    if means.shape != truths.shape or covs.shape[0] != means.shape[0]:
        raise InvalidInputError("prediction and truth lists must align")
    diff = means - truths
    mse = float(np.mean(np.sum(diff ** 2, axis=1)))
    r = _frame_components(diff, frames)
    d = r.shape[1]
    sigma = covs + noise_variance * np.eye(d)[None]
    sign, logdet = np.linalg.slogdet(sigma)
    if np.any(sign <= 0):
        raise NumericalError("singular predictive covariance after noise addition")
    sol = np.linalg.solve(sigma, r[:, :, None])[:, :, 0]
    quad = np.sum(r * sol, axis=1)
    pnll = float(np.mean(0.5 * quad + 0.5 * logdet + 0.5 * d * math.log(2.0 * math.pi)))
    return mse, pnll
