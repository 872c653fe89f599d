"""Sequential Monte Carlo with adaptive likelihood tempering.

Particles are rows of a flat parameter matrix (``ModelParams.to_vector``
layout). Weights, likelihoods and the tempering arithmetic stay in log
space throughout.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from ..utils.parallel_helper import chunk_bounds, parallel_map
from ..utils.scale_helper import get_scaler
from ..utils.utils import AverageMeter, NumericalError, named_rng
from .mcmc import TemperedTarget, random_walk_metropolis, to_unconstrained
from .predictive import PosteriorSummary, predictive_bands
from .priors import log_prior_matrix, prior_sd, sample_prior_matrix

logger = logging.getLogger("global")

KAPPA_TOL = 1e-10
KAPPA_MAX_BISECTIONS = 60


@dataclass(eq=False)
class ParticleEnsemble:
    theta: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)
    loglik: np.ndarray = field(repr=False)
    log_prior: np.ndarray = field(repr=False)
    kappa: float = 0.0
    t: int = 0
    log_evidence: float = 0.0
    resample_threshold: int = 0
    learning_rate: float = 0.9
    seed: int = 0

    @property
    def size(self):
        return self.theta.shape[0]

    @property
    def weights(self):
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self):
        return ess_from_log(self.log_weights)


def ess(weights):
    """Effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w) ** 2 / np.sum(w ** 2))


def ess_from_log(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def evaluate_target(target, theta, threads=1, chunk_size=64):
    """(log-likelihood, log-prior) for every row of ``theta``, chunked over threads."""
    parts = parallel_map(
        lambda b: target.evaluate(theta[b[0] : b[1]]),
        chunk_bounds(theta.shape[0], chunk_size),
        threads,
    )
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def init_ensemble(
    spec,
    num_particles,
    seed,
    model=None,
    threads=1,
    chunk_size=64,
    resample_threshold=None,
    learning_rate=0.9,
):
    """Prior draws with uniform weights at kappa = 0.

    Likelihoods are cached when ``model`` is given, otherwise left as NaN.
    The resample threshold defaults to half the particle count.
    """
    if num_particles < 2:
        raise ValueError("need at least two particles")
    if resample_threshold is None:
        resample_threshold = num_particles // 2
    if not 0 <= resample_threshold <= num_particles:
        raise ValueError("resample threshold must lie in [0, {}]".format(num_particles))
    if not 0.0 < learning_rate < 1.0:
        raise ValueError("learning rate must lie in (0, 1)")
    theta = sample_prior_matrix(spec, named_rng(seed, "prior"), num_particles)
    if model is None:
        loglik = np.full(num_particles, np.nan)
        log_prior = log_prior_matrix(spec, theta)
    else:
        loglik, log_prior = evaluate_target(
            TemperedTarget(model, spec, 0.0), theta, threads, chunk_size
        )
    return ParticleEnsemble(
        theta=theta,
        log_weights=np.full(num_particles, -math.log(num_particles)),
        loglik=loglik,
        log_prior=log_prior,
        resample_threshold=int(resample_threshold),
        learning_rate=float(learning_rate),
        seed=int(seed),
    )


def next_kappa(ensemble, learning_rate=None):
    """Largest step whose reweighting keeps ESS >= learning_rate * current ESS.

    Bisection on (kappa, 1]; returns 1 when even the full step keeps the ESS
    above the target. ``learning_rate`` defaults to the ensemble's own.
    """
    if learning_rate is None:
        learning_rate = ensemble.learning_rate
    kappa = ensemble.kappa
    if kappa >= 1.0:
        raise ValueError("tempering already reached kappa = 1")
    lw = ensemble.log_weights
    ll = ensemble.loglik
    target = learning_rate * ess_from_log(lw)

    def ess_at(k):
        with np.errstate(invalid="ignore"):
            return ess_from_log(lw + (k - kappa) * ll)

    if ess_at(1.0) >= target:
        return 1.0
    lo, hi = kappa, 1.0
    for _ in range(KAPPA_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if ess_at(mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo < KAPPA_TOL:
            break
    return hi


def reweight(ensemble, delta):
    """log w += delta * log L, then renormalise; the log normaliser adds to the evidence."""
    if delta < 0:
        raise ValueError("tempering step must be >= 0")
    if delta == 0:
        return ensemble
    new = ensemble.log_weights + delta * ensemble.loglik
    norm = logsumexp(new)
    if not np.isfinite(norm):
        raise NumericalError(
            "all particle weights underflowed at kappa {:.6g}".format(ensemble.kappa + delta)
        )
    ensemble.log_weights = new - norm
    ensemble.log_evidence += float(norm)
    return ensemble


def residual_counts(weights, rng, num=None):
    """Offspring counts: floor(Q w) copies plus a multinomial draw on the residuals.

    ``num`` is the number of offspring Q, by default the number of weights.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    n = w.size if num is None else int(num)
    expected = n * w
    counts = np.floor(expected + 1e-10).astype(int)
    remaining = n - int(counts.sum())
    if remaining > 0:
        resid = np.clip(expected - counts, 0.0, None)
        counts += rng.multinomial(remaining, resid / resid.sum())
    return counts


def residual_resample(ensemble, rng):
    counts = residual_counts(ensemble.weights, rng)
    idx = np.repeat(np.arange(ensemble.size), counts)
    return replace(
        ensemble,
        theta=ensemble.theta[idx],
        log_weights=np.full(ensemble.size, -math.log(ensemble.size)),
        loglik=ensemble.loglik[idx],
        log_prior=ensemble.log_prior[idx],
    )


def particle_spread(ensemble, spec):
    """Weighted per-component sd of the particles in the transformed space."""
    u = to_unconstrained(ensemble.theta)
    w = ensemble.weights[:, None]
    mean = np.sum(w * u, axis=0)
    sd = np.sqrt(np.sum(w * (u - mean) ** 2, axis=0))
    return np.where(sd > 0, sd, prior_sd(spec))


def mcmc_rejuvenate(ensemble, model, spec, scales, n_moves, seed, threads=1, chunk_size=64):
    """``n_moves`` Metropolis steps per particle at fixed kappa.

    Particle q at iteration t draws from the stream (seed, "smc", t, q).
    Returns the moved ensemble (weights untouched) and the acceptance rate.
    """
    target = TemperedTarget(model, spec, ensemble.kappa)
    u = to_unconstrained(ensemble.theta)
    logp = target.combine(ensemble.loglik, ensemble.log_prior, u)
    cache = np.column_stack([ensemble.loglik, ensemble.log_prior, ensemble.theta])

    def work(bounds):
        beg, end = bounds
        rngs = [named_rng(seed, "smc", ensemble.t, q) for q in range(beg, end)]
        _, _, cache_new, accepted = random_walk_metropolis(
            target, u[beg:end], logp[beg:end], cache[beg:end], scales, n_moves, rngs
        )
        return cache_new, accepted

    parts = parallel_map(work, chunk_bounds(ensemble.size, chunk_size), threads)
    cache_new = np.concatenate([p[0] for p in parts])
    accepted = np.concatenate([p[1] for p in parts])

    moved = replace(
        ensemble,
        theta=cache_new[:, 2:],
        loglik=cache_new[:, 0],
        log_prior=cache_new[:, 1],
    )
    return moved, float(accepted.sum()) / (ensemble.size * max(n_moves, 1))


def run(model, spec, cfg, seed=0, threads=1, tb_logger=None, progress=True, with_bands=True):
    """Tempered SMC from the prior to the posterior, then predictive bands.

    ``cfg`` is the full configuration; the sampler reads ``cfg["smc"]``.
    """
    cfg_smc = cfg["smc"]
    Q = cfg_smc["num_particles"]
    chunk = cfg_smc["chunk_size"]
    if model.measured.grid != model.errfun.grid:
        raise ValueError("error-function grid does not match the measurement grid")

    ensemble = init_ensemble(
        spec,
        Q,
        seed,
        model,
        threads,
        chunk,
        resample_threshold=cfg_smc["resample_threshold"],
        learning_rate=cfg_smc["learning_rate"],
    )
    scaler = get_scaler(cfg_smc, prior_sd(spec))
    acc_meter = AverageMeter()
    iter_time = AverageMeter()
    diagnostics = []

    while ensemble.kappa < 1.0:
        if ensemble.t >= cfg_smc["max_iterations"]:
            raise NumericalError(
                "tempering stalled at kappa {:.6g} after {} iterations".format(
                    ensemble.kappa, ensemble.t
                )
            )
        start = time.time()
        kappa = next_kappa(ensemble)
        reweight(ensemble, kappa - ensemble.kappa)
        ensemble.kappa = kappa
        ensemble.t += 1

        ess_before = ensemble.ess
        resampled = ess_before < ensemble.resample_threshold
        if resampled:
            ensemble = residual_resample(
                ensemble, named_rng(ensemble.seed, "resample", ensemble.t)
            )

        ensemble, acc = mcmc_rejuvenate(
            ensemble, model, spec, scaler.scales(), cfg_smc["mcmc_moves"], ensemble.seed,
            threads, chunk
        )
        log_scale = scaler.log_scale
        scaler.step(acc, particle_spread(ensemble, spec))
        acc_meter.update(acc)
        iter_time.update(time.time() - start)

        diagnostics.append(
            {
                "t": ensemble.t,
                "kappa": ensemble.kappa,
                "ess_before_resample": ess_before,
                "resampled": int(resampled),
                "acceptance": acc,
                "log_scale": log_scale,
                "log_evidence": ensemble.log_evidence,
            }
        )
        if progress:
            logger.info(
                "Iter [{}]\t"
                "kappa {:.6f}\t"
                "ESS {:.1f}{}\t"
                "Acc {:.3f} ({:.3f})\t"
                "Scale {:.4f}\t"
                "Time {:.2f} ({:.2f})".format(
                    ensemble.t,
                    ensemble.kappa,
                    ess_before,
                    " R" if resampled else "",
                    acc,
                    acc_meter.avg,
                    math.exp(log_scale),
                    iter_time.val,
                    iter_time.avg,
                )
            )
        if tb_logger is not None:
            tb_logger.add_scalar("kappa", ensemble.kappa, ensemble.t)
            tb_logger.add_scalar("ESS", ess_before, ensemble.t)
            tb_logger.add_scalar("acceptance", acc, ensemble.t)
            tb_logger.add_scalar("log_scale", log_scale, ensemble.t)
            tb_logger.add_scalar("log_evidence", ensemble.log_evidence, ensemble.t)

    # equal-weight draws
    if not np.allclose(ensemble.log_weights, -math.log(Q), rtol=0.0, atol=1e-12):
        ensemble = residual_resample(
            ensemble, named_rng(ensemble.seed, "resample", ensemble.t + 1)
        )

    logger.info(
        " * SMC done: {} iterations, mean acceptance {:.3f}, log evidence {:.4f}".format(
            ensemble.t, acc_meter.avg, ensemble.log_evidence
        )
    )
    bands = {}
    if with_bands:
        bands = predictive_bands(
            model,
            ensemble.theta,
            seed,
            level=cfg_smc["band_level"],
            threads=threads,
            chunk_size=chunk,
        )
    return PosteriorSummary(
        draws=ensemble.theta,
        loglik=ensemble.loglik,
        bands=bands,
        diagnostics=diagnostics,
        log_evidence=ensemble.log_evidence,
    )
