"""Covariance Matrix Adaptation Evolution Strategy with an ask/tell interface.

Self-contained implementation following the standard strategy-parameter
defaults (log-rank recombination weights, cumulative step-size adaptation,
rank-one plus rank-mu covariance update).  The interface maximizes: fitness
values are negated internally because every fitness in this toolkit is a
score to maximize.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, LengthMismatch, NonFiniteFitness

MAX_CONDITION = 1e14


@dataclass
class CmaesConfig:
    dimension: int
    population_size: int = 32
    init_sigma: float = 0.1
    initial_mean: np.ndarray | None = None
    max_evaluations: int | None = None
    target_fitness: float | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise BadConfig("dimension must be >= 1")
        if self.population_size < 2:
            raise BadConfig("population_size must be >= 2")
        if self.init_sigma <= 0:
            raise BadConfig("init_sigma must be > 0")
        if self.initial_mean is not None:
            self.initial_mean = np.asarray(self.initial_mean, dtype=np.float64)
            if self.initial_mean.shape != (self.dimension,):
                raise BadConfig("initial_mean has wrong length")


class CmaEs:
    """Ask/tell CMA-ES state.  Single-owner; updates are serial."""

    def __init__(self, cfg):
        n = cfg.dimension
        lam = cfg.population_size
        self.cfg = cfg
        self.n = n
        self.lam = lam
        self.mean = (np.zeros(n) if cfg.initial_mean is None
                     else cfg.initial_mean.copy())
        self.sigma = float(cfg.init_sigma)
        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self.evaluations = 0
        self.best_fitness = float("-inf")
        self.best_x = self.mean.copy()

        # standard strategy parameters
        self.mu = lam // 2
        w = np.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.c_sigma = (self.mueff + 2) / (n + self.mueff + 5)
        self.d_sigma = (1 + 2 * max(0.0, np.sqrt((self.mueff - 1) / (n + 1)) - 1)
                        + self.c_sigma)
        self.c_c = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.c_mu = min(1 - self.c_1,
                        2 * (self.mueff - 2 + 1 / self.mueff)
                        / ((n + 2) ** 2 + self.mueff))
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))
        # eigendecomposition refresh cadence (lazy update, standard practice)
        self.eig_gap = max(1, int(1 / (10 * n * (self.c_1 + self.c_mu))))
        self._refresh_eigen()

    def _refresh_eigen(self):
        self.cov = (self.cov + self.cov.T) / 2.0
        vals, vecs = np.linalg.eigh(self.cov)
        vals = np.maximum(vals, 1e-300)
        self.eigvals = vals
        self.eigvecs = vecs
        self._sqrt_d = np.sqrt(vals)
        self._eig_generation = self.generation

    def condition_number(self):
        return float(self.eigvals.max() / self.eigvals.min())

    def axis_ratio(self):
        return float(np.sqrt(self.eigvals.max() / self.eigvals.min()))

    def ask(self, rng):
        """Sample lam candidates from N(mean, sigma^2 C)."""
        if self.generation - self._eig_generation >= self.eig_gap:
            self._refresh_eigen()
        z = rng.standard_normal((self.lam, self.n))
        y = (z * self._sqrt_d) @ self.eigvecs.T
        return [self.mean + self.sigma * yi for yi in y]

    def tell(self, candidates, fitnesses):
        """Rank-based update.  `fitnesses` are scores to maximize.

        Ties keep the submitted candidate order (stable sort), so degenerate
        rankings are deterministic.
        """
        if len(candidates) != self.lam or len(fitnesses) != self.lam:
            raise LengthMismatch(
                f"expected {self.lam} candidates and fitnesses, "
                f"got {len(candidates)}/{len(fitnesses)}")
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        if not np.isfinite(fitnesses).all():
            raise NonFiniteFitness("non-finite fitness passed to tell()")

        order = np.argsort(-fitnesses, kind="stable")
        xs = np.array([candidates[i] for i in order[: self.mu]])
        best_i = order[0]
        if fitnesses[best_i] > self.best_fitness:
            self.best_fitness = float(fitnesses[best_i])
            self.best_x = np.array(candidates[best_i], dtype=np.float64)

        old_mean = self.mean
        y = (xs - old_mean) / self.sigma
        y_w = self.weights @ y
        self.mean = old_mean + self.sigma * y_w

        # cumulative step-size adaptation
        inv_sqrt_y = (self.eigvecs * (1.0 / self._sqrt_d)) @ (self.eigvecs.T @ y_w)
        self.p_sigma = ((1 - self.c_sigma) * self.p_sigma
                        + np.sqrt(self.c_sigma * (2 - self.c_sigma) * self.mueff)
                        * inv_sqrt_y)
        ps_norm = np.linalg.norm(self.p_sigma)
        hsig = (ps_norm / np.sqrt(1 - (1 - self.c_sigma) ** (2 * (self.generation + 1)))
                < (1.4 + 2 / (self.n + 1)) * self.chi_n)

        self.p_c = ((1 - self.c_c) * self.p_c
                    + hsig * np.sqrt(self.c_c * (2 - self.c_c) * self.mueff) * y_w)

        # rank-one + rank-mu covariance update
        delta_h = (1 - hsig) * self.c_c * (2 - self.c_c)
        rank_mu = (y * self.weights[:, None]).T @ y
        self.cov = ((1 - self.c_1 - self.c_mu + self.c_1 * delta_h) * self.cov
                    + self.c_1 * np.outer(self.p_c, self.p_c)
                    + self.c_mu * rank_mu)
        self.cov = (self.cov + self.cov.T) / 2.0

        self.sigma *= float(np.exp((self.c_sigma / self.d_sigma)
                                   * (ps_norm / self.chi_n - 1)))
        self.generation += 1
        self.evaluations += self.lam
        if self.generation - self._eig_generation >= self.eig_gap:
            self._refresh_eigen()

    def should_stop(self):
        """Return a stop reason string, or None to keep going."""
        cfg = self.cfg
        if cfg.max_evaluations is not None and self.evaluations >= cfg.max_evaluations:
            return "max_evaluations"
        if cfg.target_fitness is not None and self.best_fitness >= cfg.target_fitness:
            return "target_fitness"
        # condition check uses the cached (possibly slightly stale) spectrum
        if self.condition_number() > MAX_CONDITION:
            return "ill_conditioned"
        return None

    # -- checkpoint support ----------------------------------------------------

    def state_dict(self):
        return {
            "mean": self.mean.tolist(),
            "sigma": self.sigma,
            "cov": self.cov.tolist(),
            "p_sigma": self.p_sigma.tolist(),
            "p_c": self.p_c.tolist(),
            "generation": self.generation,
            "evaluations": self.evaluations,
            "best_fitness": self.best_fitness,
            "best_x": self.best_x.tolist(),
            "eigvals": self.eigvals.tolist(),
            "eigvecs": self.eigvecs.tolist(),
            "eig_generation": self._eig_generation,
        }

    def load_state_dict(self, d):
        self.mean = np.array(d["mean"])
        self.sigma = d["sigma"]
        self.cov = np.array(d["cov"])
        self.p_sigma = np.array(d["p_sigma"])
        self.p_c = np.array(d["p_c"])
        self.generation = d["generation"]
        self.evaluations = d["evaluations"]
        self.best_fitness = d["best_fitness"]
        self.best_x = np.array(d["best_x"])
        # restore the sampling basis as-is: the lazily refreshed
        # eigendecomposition may be older than cov, and resuming must
        # reproduce the exact candidate stream of an uninterrupted run
        self.eigvals = np.array(d["eigvals"])
        self.eigvecs = np.array(d["eigvecs"])
        self._sqrt_d = np.sqrt(self.eigvals)
        self._eig_generation = d["eig_generation"]


# functional aliases matching the ask/tell vocabulary
def init(cfg):
    return CmaEs(cfg)


def ask(state, rng):
    return state.ask(rng)


def tell(state, candidates, fitnesses):
    state.tell(candidates, fitnesses)
    return state


def should_stop(state, cfg=None):
    return state.should_stop()


class TraceWriter:
    """Delimited-text optimizer trace: generation, best, mean fitness, sigma, axis ratio."""

    FIELDS = ["generation", "best", "mean", "sigma", "axis_ratio"]

    def __init__(self, path):
        self._file = open(path, "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(self.FIELDS)

    def record(self, state, fitnesses):
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        self._writer.writerow([state.generation, repr(float(fitnesses.max())),
                               repr(float(fitnesses.mean())), repr(state.sigma),
                               repr(state.axis_ratio())])
        self._file.flush()

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
