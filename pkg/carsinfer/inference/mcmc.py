"""Random-walk Metropolis on the tempered posterior, in a space where the
positive line parameters (a, sigma, gamma) are log-transformed."""
import numpy as np

from .priors import log_prior_matrix


def log_columns(dim):
    """Columns of the flat layout holding a, sigma and gamma."""
    assert (dim - 1) % 4 == 0
    lines = np.arange(1, dim).reshape(-1, 4)
    return np.sort(np.concatenate([lines[:, 0], lines[:, 2], lines[:, 3]]))


def to_unconstrained(theta):
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    u = theta.copy()
    cols = log_columns(theta.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        u[:, cols] = np.log(theta[:, cols])
    return u


def to_constrained(u):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    theta = u.copy()
    cols = log_columns(u.shape[1])
    with np.errstate(over="ignore"):
        theta[:, cols] = np.exp(u[:, cols])
    return theta


def log_jacobian(u):
    """log |d theta / d u| per row."""
    u = np.atleast_2d(u)
    return np.sum(u[:, log_columns(u.shape[1])], axis=1)


class TemperedTarget(object):
    """log pi_kappa(u) = kappa log L(theta) + log pi_0(theta) + log |J(u)|.

    The likelihood is only evaluated where the prior is finite, so proposals
    outside the background range or with unsorted locations never reach
    the forward model.
    """

    def __init__(self, model, spec, kappa):
        assert 0.0 <= kappa <= 1.0
        self.model = model
        self.spec = spec
        self.kappa = kappa

    def evaluate(self, theta):
        """(log-likelihood, log-prior) per row; -inf likelihood outside the support."""
        log_prior = log_prior_matrix(self.spec, theta)
        loglik = np.full(log_prior.shape, -np.inf)
        inside = np.isfinite(log_prior)
        if np.any(inside):
            loglik[inside] = self.model.loglik(theta[inside])
        return loglik, log_prior

    def combine(self, loglik, log_prior, u):
        if self.kappa == 0.0:
            tempered = np.where(np.isfinite(log_prior), 0.0, -np.inf)
        else:
            tempered = self.kappa * loglik
        return tempered + log_prior + log_jacobian(u)

    def __call__(self, u):
        theta = to_constrained(u)
        loglik, log_prior = self.evaluate(theta)
        return self.combine(loglik, log_prior, u), np.column_stack([loglik, log_prior, theta])


def random_walk_metropolis(log_target, u, logp, cache, scales, n_moves, rngs):
    """``n_moves`` Gaussian random-walk Metropolis steps for a block of particles.

    ``log_target(u)`` returns the log density and a per-row cache that is
    carried along with accepted states. Row ``i`` draws only from ``rngs[i]``,
    so the result of a row does not depend on how particles are blocked.
    Returns the moved states, their log densities and caches, and the number
    of accepted moves per row.
    """
    u = np.array(u, dtype=float)
    logp = np.array(logp, dtype=float)
    cache = np.array(cache, dtype=float)
    n, dim = u.shape
    assert len(rngs) == n
    scales = np.broadcast_to(np.asarray(scales, dtype=float), (dim,))

    noise = np.stack([g.standard_normal((n_moves, dim)) for g in rngs], axis=1)
    log_unif = np.log(np.stack([g.random(n_moves) for g in rngs], axis=1))
    accepted = np.zeros(n, dtype=int)
    for m in range(n_moves):
        prop = u + scales * noise[m]
        lp, prop_cache = log_target(prop)
        with np.errstate(invalid="ignore"):
            acc = log_unif[m] < lp - logp
        u[acc] = prop[acc]
        logp[acc] = lp[acc]
        cache[acc] = prop_cache[acc]
        accepted += acc
    return u, logp, cache, accepted
