"""Ready-made configurations for the two reference experiments."""

from __future__ import annotations

import numpy as np

REFERENCE_SOURCES = (-66.9, -61.64, -42.84, -41.3, -5.74, -2.3, 6.89, 8.05, 19.88, 42.84)


def phase_transition_prior(q: int = 50) -> np.ndarray:
    """Block probabilities for the phase-transition experiment.

    Two tiers, a common one and a rare one at probability 0.05. For ``q=50``
    the common tier is 30 blocks at 0.6, for ``q=20`` it is 6 blocks at 0.5;
    other ``q`` reuse the ``q=50`` proportions. Each was picked from a coarse
    grid of two- and three-tier priors to maximize the smaller predicted gap
    between the 50% crossovers of the optimal, heuristic and equal schemes,
    where a crossover is predicted by the median over random supports of the
    statdim bound.
    """
    if q == 20:
        n_hi, p_hi = 6, 0.5
    else:
        n_hi, p_hi = round(0.6 * q), 0.6
    return np.array([p_hi] * n_hi + [0.05] * (q - n_hi))


def phase_transition(scale: str = "full") -> dict:
    """Model + experiment settings: ``"full"`` (n=250, 100 trials) or ``"small"`` (n=100, 30 trials)."""
    if scale == "full":
        q, k, trials, m_grid = 50, 5, 100, list(range(90, 211, 5))
    elif scale == "small":
        q, k, trials, m_grid = 20, 5, 30, list(range(15, 76, 5))
    else:
        raise ValueError(f"unknown scale {scale!r}")
    return {
        "kind": "phase_transition",
        "model": {"n": q * k, "block_sizes": [k] * q, "p": phase_transition_prior(q).tolist()},
        "m_grid": m_grid,
        "trials": trials,
        "seed": 2024,
        "schemes": ["optimal", "heuristic", "equal"],
        "eps": 0.01,
    }


def reference_doa_sets(q: int = 100):
    """Angular sets and accuracies (4/5, 2/3, 0) around the planted sources.

    The first set holds eight sources plus two empty grid angles, the second
    two sources plus one empty angle; the complement holds no source.
    """
    from .doa import DoaScenario, snap_to_grid

    idx = sorted(snap_to_grid(DoaScenario(q=q), REFERENCE_SOURCES).tolist())
    p1 = idx[:8] + [30, 90]
    p2 = idx[8:] + [75]
    return [p1, p2], [4 / 5, 2 / 3], 0.0


def doa() -> dict:
    sets, alphas, comp = reference_doa_sets()
    return {
        "kind": "doa",
        "scenario": {
            "m": 15, "q": 100, "d": 5.0, "c": 3e8, "k": 10, "sigma": 1.0,
            "sources": list(REFERENCE_SOURCES), "n_bins": 16, "f_lo": 0.0, "f_hi": 5e9,
        },
        "sets": sets,
        "alphas": alphas,
        "complement_alpha": comp,
        "seed": 0,
        "seeds": 20,
        "schemes": ["optimal", "heuristic", "equal"],
        "eps": 0.01,
        "rel_threshold": 0.1,
        "eta_rule": "oracle",
        "solver": {"max_iters": 3000, "rel_tol": 1e-5},
    }
