"""Expected improvement and proposal of the next evaluation point.

For maximization with incumbent best f+, expected improvement at a point
with posterior (mu, sigma) is

    EI = sigma * (z * Phi(z) + phi(z)),   z = (mu - f+) / sigma

and collapses to max(0, mu - f+) when sigma is zero.  Proposals maximize
EI over a seeded quasi-random candidate batch plus a cloud around the
incumbent, then polish the winner with a bounded quasi-Newton step.  The
whole path is deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .gp import GPModel, gp_predict


def expected_improvement(mu, sigma, best: float) -> np.ndarray:
    """EI for maximization; non-negative everywhere, 1-d output."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    safe = np.where(sigma > 0, sigma, 1.0)
    z = (mu - best) / safe
    smooth = sigma * (z * norm.cdf(z) + norm.pdf(z))
    ei = np.where(sigma > 0, smooth, np.maximum(mu - best, 0.0))
    return np.maximum(ei, 0.0)


def propose_next(model: GPModel, best: float, seed: int,
                 candidates: int = 256, refine: bool = True,
                 exclude: np.ndarray | None = None) -> np.ndarray:
    """Next unit-cube point by EI argmax over candidates plus refinement.

    `exclude` rows (typically the training inputs) are barred from being
    returned exactly; ties fall back to the next-best candidate.
    """
    d = model.X.shape[1]
    ss = np.random.SeedSequence(seed)
    sob = qmc.Sobol(d=d, scramble=True, seed=np.random.default_rng(ss))
    batch = sob.random(max(candidates, 2))
    # local cloud around the incumbent training point
    rng = np.random.default_rng(ss.spawn(1)[0])
    inc = model.X[int(np.argmax(model.y))]
    cloud = np.clip(inc + rng.normal(scale=0.05, size=(16, d)), 0.0, 1.0)
    points = np.vstack([batch, cloud])

    mu, var = gp_predict(model, points)
    ei = expected_improvement(mu, np.sqrt(var), best)
    order = np.argsort(-ei)

    def neg_ei(x):
        m, v = gp_predict(model, x[None, :])
        return -float(expected_improvement(m, np.sqrt(v), best)[0])

    start = points[order[0]]
    proposal = start
    if refine:
        res = minimize(neg_ei, start, method="L-BFGS-B",
                       bounds=[(0.0, 1.0)] * d,
                       options={"maxiter": 60})
        if np.all(np.isfinite(res.x)) and -res.fun >= ei[order[0]]:
            proposal = np.clip(res.x, 0.0, 1.0)

    if exclude is not None and len(exclude):
        taken = np.asarray(exclude)
        if np.any(np.all(taken == proposal, axis=1)):
            for idx in order:
                cand = points[idx]
                if not np.any(np.all(taken == cand, axis=1)):
                    return cand
            # every candidate collides; nudge deterministically
            return np.clip(proposal + 1.0 / 4096.0, 0.0, 1.0)
    return proposal
