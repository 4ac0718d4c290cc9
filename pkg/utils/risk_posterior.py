"""
Bayesian bootstrap posterior over sensor readings and its CVaR

Each resample draws flat-Dirichlet weights over the k readings and computes
a weighted statistic; the R statistics form the posterior whose VaR/CVaR
scale the repulsive fields.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
import pandas as pd

from utils.errors import PosteriorError
from utils.export import export_to_json
from utils.semantic_sensor import SampleSet
from utils.validation import require_valid

logger = logging.getLogger(__name__)

STATISTICS = ("weighted_mean", "weighted_quantile")

# cumulative weights are compared with this slack so float sums hit alpha exactly
_CUM_TOL = 1e-12


@dataclass(frozen=True)
class BootstrapConfig:
    R: int = 3000
    alpha: float = 0.1
    seed: int = 7
    statistic: str = "weighted_mean"
    quantile: Optional[float] = None

    def __post_init__(self):
        if self.R < 1:
            raise PosteriorError("invalid_config", "R must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise PosteriorError("invalid_alpha", f"alpha must be in (0, 1), got {self.alpha}")
        if self.statistic not in STATISTICS:
            raise PosteriorError("invalid_config", f"unknown statistic '{self.statistic}'")
        if self.statistic == "weighted_quantile":
            if self.quantile is None or not 0.0 < self.quantile < 1.0:
                raise PosteriorError("invalid_config", "weighted_quantile needs quantile in (0, 1)")


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """
    Posterior of one class's danger statistic

    ``statistic_samples`` is empty for summaries read back from an export
    document, which only keeps the scalars.
    """

    class_name: str
    statistic_samples: np.ndarray = field(repr=False)
    mean: float
    var_alpha: float
    cvar_alpha: float
    config: BootstrapConfig

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "var_alpha": self.var_alpha,
            "cvar_alpha": self.cvar_alpha,
            "R": self.config.R,
            "alpha": self.config.alpha,
            "seed": self.config.seed,
        }


def dirichlet_weights(rng: np.random.Generator, k: int) -> np.ndarray:
    """Flat Dirichlet(1, ..., 1) weights as normalized standard exponentials"""
    if k < 1:
        raise PosteriorError("empty_samples", "cannot draw Dirichlet weights for k = 0")
    draws = rng.standard_exponential(k)
    return draws / draws.sum()


def _check_readings(samples: Sequence[float]) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise PosteriorError("empty_samples", "bootstrap needs a non-empty list of readings")
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise PosteriorError("invalid_samples", "readings must lie in [0, 1]")
    return np.sort(x)


def cvar(
    values: Sequence[float],
    weights: Optional[Sequence[float]] = None,
    alpha: float = 0.1,
) -> Tuple[float, float]:
    """
    VaR and CVaR of a discrete distribution

    VaR is the smallest value whose cumulative weight reaches alpha; CVaR is
    the weighted mean of every value at or above VaR.

    Args:
        values: support points
        weights: probabilities (uniform when omitted)
        alpha: level in (0, 1)

    Returns:
        tuple: (var_alpha, cvar_alpha)
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise PosteriorError("empty_samples", "cvar of an empty value list")
    if not 0.0 < alpha < 1.0:
        raise PosteriorError("invalid_alpha", f"alpha must be in (0, 1), got {alpha}")

    if weights is None:
        w = np.full(v.size, 1.0 / v.size)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != v.shape:
            raise PosteriorError("invalid_weights", "weights and values differ in length")
        if np.any(w < 0):
            raise PosteriorError("invalid_weights", "weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise PosteriorError("invalid_weights", f"weights sum to {w.sum()}, expected 1")

    # merge ties so equal values share one cumulative step
    support, inverse = np.unique(v, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=w, minlength=support.size)
    cumulative = np.cumsum(mass)

    idx = int(np.argmax(cumulative >= alpha - _CUM_TOL))
    var_alpha = float(support[idx])

    tail_mass = mass[idx:]
    tail_total = tail_mass.sum()
    if tail_total <= 0:
        return var_alpha, var_alpha
    cvar_alpha = float(np.dot(support[idx:], tail_mass) / tail_total)
    return var_alpha, cvar_alpha


def _resample_statistics(x: np.ndarray, config: BootstrapConfig, rng: np.random.Generator) -> np.ndarray:
    exponentials = rng.standard_exponential((config.R, x.size))
    weights = exponentials / exponentials.sum(axis=1, keepdims=True)

    if config.statistic == "weighted_mean":
        stats = weights @ x
    else:
        cumulative = np.cumsum(weights, axis=1)
        idx = np.argmax(cumulative >= config.quantile - _CUM_TOL, axis=1)
        stats = x[idx]

    return np.clip(stats, 0.0, 1.0)


def bootstrap_posterior(
    samples: Sequence[float],
    config: BootstrapConfig,
    class_name: str = "",
    rng: Optional[np.random.Generator] = None,
) -> PosteriorSummary:
    """
    Bayesian bootstrap of a danger statistic

    Args:
        samples: k readings in [0, 1]; order does not matter
        config: BootstrapConfig
        class_name: label stored on the summary
        rng: generator override; default is seeded from config.seed

    Returns:
        PosteriorSummary: R statistics with mean, VaR and CVaR at config.alpha
    """
    x = _check_readings(samples)
    rng = rng if rng is not None else np.random.default_rng(config.seed)

    stats = _resample_statistics(x, config, rng)
    stats.setflags(write=False)
    var_alpha, cvar_alpha = cvar(stats, alpha=config.alpha)

    return PosteriorSummary(
        class_name=class_name,
        statistic_samples=stats,
        mean=float(stats.mean()),
        var_alpha=var_alpha,
        cvar_alpha=cvar_alpha,
        config=config,
    )


def class_generator(seed: int, class_index: int) -> np.random.Generator:
    """Independent substream for one class, so adding a class leaves the others untouched"""
    return np.random.default_rng(np.random.SeedSequence([seed, class_index]))


def posterior_for_all_classes(
    sample_set: SampleSet,
    config: BootstrapConfig,
    class_order: Optional[Sequence[str]] = None,
) -> Dict[str, PosteriorSummary]:
    """
    Posterior summary for every class in a SampleSet

    Args:
        sample_set: SampleSet
        config: BootstrapConfig
        class_order: processing order (normally the map's class order);
            defaults to the SampleSet's order

    Returns:
        dict: label -> PosteriorSummary, in processing order
    """
    order = tuple(class_order) if class_order is not None else sample_set.class_names
    if not order:
        raise PosteriorError("empty_samples", "sample set has no classes")

    posteriors = {}
    for index, name in enumerate(order):
        if name not in sample_set.per_class:
            raise PosteriorError("missing_class", f"no readings for class '{name}'")
        posteriors[name] = bootstrap_posterior(
            sample_set.per_class[name], config, class_name=name, rng=class_generator(config.seed, index)
        )
        logger.debug("posterior %s: cvar=%.4f", name, posteriors[name].cvar_alpha)

    logger.info(
        "posterior CVaR(alpha=%.2f): %s",
        config.alpha,
        ", ".join(f"{n}={p.cvar_alpha:.3f}" for n, p in posteriors.items()),
    )
    return posteriors


def posterior_table(posteriors: Dict[str, PosteriorSummary]) -> pd.DataFrame:
    """One row per posterior quantity, one column per class"""
    rows = {
        "Posterior mean": {n: p.mean for n, p in posteriors.items()},
        "Posterior VaR": {n: p.var_alpha for n, p in posteriors.items()},
        "Posterior CVaR": {n: p.cvar_alpha for n, p in posteriors.items()},
    }
    df = pd.DataFrame.from_dict(rows, orient="index", columns=list(posteriors))
    df.index.name = "quantity"
    return df.reset_index()


def posteriors_to_document(posteriors: Dict[str, PosteriorSummary], run_config: Optional[dict] = None) -> dict:
    document = {"posteriors": {name: p.to_record() for name, p in posteriors.items()}}
    if run_config is not None:
        document = {"config": run_config, **document}
    return document


def export_posteriors(
    posteriors: Dict[str, PosteriorSummary],
    path: Union[str, Path],
    run_config: Optional[dict] = None,
) -> Path:
    return export_to_json(posteriors_to_document(posteriors, run_config), path)


def load_posteriors(path: Union[str, Path]) -> Dict[str, PosteriorSummary]:
    """
    Read an exported posterior document

    Accepts both the wrapped ``{"config", "posteriors"}`` form and the bare
    label -> record mapping.
    """
    try:
        document = orjson.loads(Path(path).read_bytes())
    except OSError as e:
        raise PosteriorError("io", f"cannot read posterior file {path}: {e}") from e
    except orjson.JSONDecodeError as e:
        raise PosteriorError("malformed", f"posterior file {path} is not valid JSON: {e}") from e

    records = document.get("posteriors", document) if isinstance(document, dict) else document
    require_valid(records, "posterior", PosteriorError)

    posteriors = {}
    for name, record in records.items():
        config = BootstrapConfig(R=record["R"], alpha=record["alpha"], seed=record["seed"])
        posteriors[name] = PosteriorSummary(
            class_name=name,
            statistic_samples=np.empty(0),
            mean=float(record["mean"]),
            var_alpha=float(record["var_alpha"]),
            cvar_alpha=float(record["cvar_alpha"]),
            config=config,
        )
    return posteriors
