"""Covariance matrix adaptation evolution strategy (CMA-ES).

Plain ask/tell implementation with the standard strategy constants: rank-one
plus rank-mu covariance updates, cumulative step-size adaptation, and
weighted recombination of the best half of the population.  The class
minimizes; :func:`cmaes_optimize` is the maximization front end used for
fitness-style objectives.  Dimensions here are small (around ten), so the
covariance is eigendecomposed every generation instead of lazily.
"""

import math

import numpy as np


class CmaesError(ValueError):
    pass


# relative floor applied to covariance eigenvalues that collapse or go
# negative through accumulated floating-point error
EIGENVALUE_FLOOR = 1e-14


def default_popsize(dimension: int) -> int:
    return 4 + int(3 * math.log(dimension))


class CMAES:
    """Minimizing ask/tell optimizer.

    State follows the usual formulation: distribution mean, global step
    size sigma, covariance ``cov``, and the two evolution paths ``p_sigma``
    (step-size control) and ``p_c`` (rank-one cumulation).
    """

    def __init__(self, x0, sigma0: float, popsize: int | None = None, seed: int = 0):
        x0 = np.asarray(x0, dtype=np.float64).ravel()
        if x0.size < 1:
            raise CmaesError("x0 must be non-empty")
        if not sigma0 > 0:
            raise CmaesError(f"sigma0 must be positive, got {sigma0}")
        d = x0.size
        self.dim = d
        self.mean = x0.copy()
        self.sigma = float(sigma0)
        self.cov = np.eye(d)
        self.p_sigma = np.zeros(d)
        self.p_c = np.zeros(d)
        self.generation = 0
        self.evaluations = 0
        self.rng = np.random.default_rng(seed)
        self.events: list[str] = []

        self.lam = default_popsize(d) if popsize is None else int(popsize)
        if self.lam < 4:
            raise CmaesError(f"population size must be >= 4, got {self.lam}")
        self.mu = self.lam // 2
        w = np.log(self.lam / 2 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)

        self.c_c = (4 + self.mueff / d) / (d + 4 + 2 * self.mueff / d)
        self.c_sigma = (self.mueff + 2) / (d + self.mueff + 5)
        self.c_1 = 2 / ((d + 1.3) ** 2 + self.mueff)
        self.c_mu = min(1 - self.c_1,
                        2 * (self.mueff - 2 + 1 / self.mueff) / ((d + 2) ** 2 + self.mueff))
        self.d_sigma = 2 * self.mueff / self.lam + 0.3 + self.c_sigma

        self.best_x = None
        self.best_f = math.inf
        self._decompose()

    def _decompose(self):
        self.cov = 0.5 * (self.cov + self.cov.T)
        vals, vecs = np.linalg.eigh(self.cov)
        floor = EIGENVALUE_FLOOR * max(float(vals.max()), EIGENVALUE_FLOOR)
        if vals.min() < floor:
            self.events.append(
                f"generation {self.generation}: covariance eigenvalue "
                f"{vals.min():.3e} floored to {floor:.3e}")
            vals = np.maximum(vals, floor)
            self.cov = (vecs * vals) @ vecs.T
        self._eigvals = vals
        self._eigvecs = vecs
        self._sqrt = vecs * np.sqrt(vals)          # B diag(D)
        self._invsqrt = (vecs / np.sqrt(vals)) @ vecs.T

    def ask(self) -> np.ndarray:
        """Sample lam candidates from N(mean, sigma^2 cov); shape (lam, dim)."""
        z = self.rng.standard_normal((self.lam, self.dim))
        return self.mean + self.sigma * z @ self._sqrt.T

    def tell(self, xs, fitvals):
        """Update the distribution from candidates and their fitness values."""
        xs = np.asarray(xs, dtype=np.float64)
        fit = np.asarray(fitvals, dtype=np.float64)
        if xs.shape != (self.lam, self.dim) or fit.shape != (self.lam,):
            raise CmaesError(
                f"expected {(self.lam, self.dim)} candidates with {self.lam} "
                f"fitness values, got {xs.shape} and {fit.shape}")
        if not np.all(np.isfinite(fit)):
            raise CmaesError("non-finite fitness values")
        self.evaluations += self.lam
        self.generation += 1

        idx = np.argsort(fit)
        xs = xs[idx]
        if fit[idx[0]] < self.best_f:
            self.best_f = float(fit[idx[0]])
            self.best_x = xs[0].copy()

        d = self.dim
        old_mean = self.mean
        self.mean = self.weights @ xs[: self.mu]
        y = self.mean - old_mean
        z = self._invsqrt @ y
        csn = math.sqrt(self.c_sigma * (2 - self.c_sigma) * self.mueff) / self.sigma
        self.p_sigma = (1 - self.c_sigma) * self.p_sigma + csn * z
        # discount rank-one cumulation while sigma is still adapting fast
        ps_norm2 = float(self.p_sigma @ self.p_sigma)
        decay = 1 - (1 - self.c_sigma) ** (2 * self.evaluations / self.lam)
        hsig = ps_norm2 / d / decay < 2 + 4.0 / (d + 1)
        ccn = math.sqrt(self.c_c * (2 - self.c_c) * self.mueff) / self.sigma
        self.p_c = (1 - self.c_c) * self.p_c + (ccn if hsig else 0.0) * y

        c1a = self.c_1 * (1 - (1 - hsig**2) * self.c_c * (2 - self.c_c))
        dx = (xs[: self.mu] - old_mean) / self.sigma
        self.cov = ((1 - c1a - self.c_mu) * self.cov
                    + self.c_1 * np.outer(self.p_c, self.p_c)
                    + self.c_mu * (dx.T * self.weights) @ dx)
        self.sigma *= math.exp(
            min(1.0, self.c_sigma / self.d_sigma * (ps_norm2 / d - 1) / 2))
        self._decompose()

    @property
    def condition_number(self) -> float:
        return float(self._eigvals.max() / self._eigvals.min())


def cmaes_optimize(objective, d: int, sigma0: float = 0.5, generations: int = 100,
                   lam: int | None = None, seed: int = 0, x0=None,
                   batch_objective=None, callback=None):
    """Maximize an objective over R^d; returns (best_weights, history).

    ``objective`` maps a d-vector to a real to maximize.  Alternatively
    ``batch_objective`` maps a (lam, d) candidate matrix to lam reals, which
    lets callers share work (or seeds) across one generation's candidates.
    History holds per-generation best/mean fitness plus the running best.
    """
    if generations < 1:
        raise CmaesError(f"generations must be >= 1, got {generations}")
    if objective is None and batch_objective is None:
        raise CmaesError("need an objective")
    if x0 is None:
        x0 = np.zeros(d)
    es = CMAES(x0, sigma0, popsize=lam, seed=seed)
    hist_best = np.empty(generations)
    hist_mean = np.empty(generations)
    hist_ever = np.empty(generations)
    for gen in range(generations):
        xs = es.ask()
        if batch_objective is not None:
            values = np.asarray(batch_objective(xs), dtype=np.float64)
        else:
            values = np.array([objective(x) for x in xs], dtype=np.float64)
        es.tell(xs, -values)
        hist_best[gen] = values.max()
        hist_mean[gen] = values.mean()
        hist_ever[gen] = -es.best_f
        if callback is not None:
            callback(gen, es, values)
    history = {
        "generation": np.arange(generations),
        "best": hist_best,
        "mean": hist_mean,
        "best_ever": hist_ever,
        "events": list(es.events),
    }
    return es.best_x.copy(), history
