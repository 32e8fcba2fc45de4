"""
Value learning for the neighbor sampler.

Rewards are the negative per-root cross-entropy of each depth's prediction.
Every root of a training batch yields one episode; its discounted return is
credited to each first-hop neighbor it sampled. The table keeps, per
(root, neighbor) pair, the summed return G and the visit count C, and the
value of a pair is G / C. A single-layer regressor

    V(v, u) = -exp(relu(W . (x_v || x_u) + b))

is then fit to the visited values so that unvisited pairs and unseen nodes
can be scored from their features.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Tuple

import numpy as np

from sagerl.models.experiment import FitHistory, ValueSummary
from sagerl.models.training import RewardMode, RLConfig
from sagerl.services.ndmath import Matrix, Param, adam_step, sgd_step
from sagerl.services.samplers import SampleTree, ScoreFn

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class UnvisitedPairError(KeyError):
    """Raised when the value of a (v, u) pair that was never visited is requested."""

    pass


class EmptyValueTableError(Exception):
    """Raised when an operation needs at least one visited pair."""

    pass


class RegressorDimensionError(ValueError):
    """Raised when feature widths do not match the regressor's 2M weight row."""

    pass


# =============================================================================
# Episodes and rewards
# =============================================================================


@dataclass(frozen=True, eq=False)
class EpisodeRecord:
    """
    One root's pass through a training batch.

    Attributes:
        root: Root node v
        first_hop: The N^1 sampled first-hop ids (with multiplicity)
        rewards: R^1..R^K, all <= 0
    """

    root: int
    first_hop: np.ndarray
    rewards: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.rewards > 0):
            raise ValueError(f"episode rewards must be <= 0, got {self.rewards}")

    @property
    def num_hops(self) -> int:
        return len(self.rewards)

    def discounted_return(self, gamma: float) -> float:
        """G = sum_k gamma^k R^(k+1)."""
        total = 0.0
        for k, reward in enumerate(self.rewards):
            total += gamma**k * float(reward)
        return total

    def last_hop(self) -> "EpisodeRecord":
        """Same episode with every reward but the final hop's set to zero."""
        rewards = np.zeros_like(self.rewards)
        rewards[-1] = self.rewards[-1]
        return EpisodeRecord(root=self.root, first_hop=self.first_hop, rewards=rewards)


def per_step_rewards(labels: Matrix, probs: Matrix, label_mode: str = "single") -> np.ndarray:
    """
    Negative cross-entropy per row, with probabilities clamped to [1e-12, 1 - 1e-12].

    Single-label: sum_i y_i log p_i. Multi-label: sum_i y_i log p_i + (1 - y_i) log(1 - p_i).
    """
    clamped = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    rewards = np.sum(labels * np.log(clamped), axis=1)
    if label_mode == "multi":
        rewards += np.sum((1.0 - labels) * np.log1p(-clamped), axis=1)
    return np.minimum(rewards, 0.0)


def per_step_reward(
    label_row: np.ndarray, probs_row: np.ndarray, label_mode: str = "single"
) -> float:
    return float(per_step_rewards(label_row[None, :], probs_row[None, :], label_mode)[0])


def build_episodes(
    tree: SampleTree, rewards: Matrix, reward_mode: RewardMode = "all_hop"
) -> List[EpisodeRecord]:
    """
    One EpisodeRecord per root of a batch.

    Args:
        tree: Sample tree of the batch
        rewards: n_roots x K matrix of per-depth rewards (column k-1 is depth k)
        reward_mode: last_hop zeroes every column but the last

    Returns:
        Episodes in root order
    """
    if reward_mode == "last_hop":
        rewards = rewards.copy()
        rewards[:, :-1] = 0.0
    return [
        EpisodeRecord(root=int(root), first_hop=tree.first_hop(i), rewards=rewards[i])
        for i, root in enumerate(tree.roots)
    ]


# =============================================================================
# Value table
# =============================================================================


def _add_exact(partials: List[float], x: float) -> None:
    # Shewchuk non-overlapping partials; math.fsum(partials) is the exact sum rounded once
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


class ValueTable:
    """
    Sparse (v, u) -> (G_sum, C) accumulator.

    G_sum is held as exact partial sums, so the table does not depend on the
    order in which episodes arrive.
    """

    def __init__(self) -> None:
        self._returns: Dict[Tuple[int, int], List[float]] = {}
        self._counts: Dict[Tuple[int, int], int] = {}

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, key: Tuple[int, int]) -> bool:
        return key in self._counts

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ValueTable):
            return NotImplemented
        return self._counts == other._counts and all(
            self.g_sum(*key) == other.g_sum(*key) for key in self._counts
        )

    def _add(self, key: Tuple[int, int], g: float, count: int) -> None:
        _add_exact(self._returns.setdefault(key, []), g)
        self._counts[key] = self._counts.get(key, 0) + count

    def record_episode(self, episode: EpisodeRecord, gamma: float) -> None:
        """
        Credit the episode's discounted return to each first-hop neighbor.

        A neighbor sampled m times gains m * G_ep in G_sum and m * K visits.
        Self-samples (an isolated root standing in for its own neighbors)
        are not neighbors and are skipped.
        """
        g_ep = episode.discounted_return(gamma)
        ids, multiplicity = np.unique(episode.first_hop, return_counts=True)
        for u, m in zip(ids.tolist(), multiplicity.tolist()):
            if u == episode.root:
                continue
            self._add((episode.root, u), m * g_ep, m * episode.num_hops)

    def merge_batch(self, episodes: Iterable[EpisodeRecord], gamma: float) -> None:
        for episode in episodes:
            self.record_episode(episode, gamma)

    def g_sum(self, v: int, u: int) -> float:
        try:
            return math.fsum(self._returns[(v, u)])
        except KeyError:
            raise UnvisitedPairError((v, u)) from None

    def count(self, v: int, u: int) -> int:
        try:
            return self._counts[(v, u)]
        except KeyError:
            raise UnvisitedPairError((v, u)) from None

    def value(self, v: int, u: int) -> float:
        """
        Expected return G_sum / C of a visited pair.

        Raises:
            UnvisitedPairError: If (v, u) was never visited
        """
        return self.g_sum(v, u) / self.count(v, u)

    def keys(self) -> List[Tuple[int, int]]:
        return sorted(self._counts)

    def items(self) -> Iterator[Tuple[Tuple[int, int], float, int]]:
        """(key, G_sum, C) in key order."""
        for key in self.keys():
            yield key, math.fsum(self._returns[key]), self._counts[key]

    def targets(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        All visited pairs with their values, in key order.

        Returns:
            (pairs as an n x 2 int64 array, values as a length-n float64 array)
        """
        keys = self.keys()
        pairs = np.array(keys, dtype=np.int64).reshape(-1, 2)
        values = np.array([self.value(v, u) for v, u in keys], dtype=np.float64)
        return pairs, values

    def summary(self) -> ValueSummary:
        """
        Distribution of values over visited pairs.

        Raises:
            EmptyValueTableError: If nothing was recorded
        """
        if not self._counts:
            raise EmptyValueTableError("value table is empty")
        _, values = self.targets()
        q10, q50, q90 = np.quantile(values, [0.1, 0.5, 0.9])
        return ValueSummary(
            count=len(values),
            mean=float(values.mean()),
            std=float(values.std()),
            min=float(values.min()),
            max=float(values.max()),
            quantiles={"q10": float(q10), "q50": float(q50), "q90": float(q90)},
        )

    def export(self, path: str | Path) -> None:
        """Write one "v u G_sum C" line per pair, G_sum at 17 significant digits."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for (v, u), g, count in self.items():
                f.write(f"{v} {u} {g:.17g} {count}\n")
        logger.info(f"Exported {len(self)} value-table entries to {path}")

    @classmethod
    def load(cls, path: str | Path) -> "ValueTable":
        table = cls()
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 4:
                    raise ValueError(f"{Path(path).name}:{lineno}: expected 'v u G_sum C'")
                v, u, g, count = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
                table._add((v, u), g, count)
        return table


def record_episode(table: ValueTable, episode: EpisodeRecord, gamma: float) -> None:
    table.record_episode(episode, gamma)


def value(table: ValueTable, v: int, u: int) -> float:
    return table.value(v, u)


# =============================================================================
# Value regressor
# =============================================================================


@dataclass(eq=False)
class ValueRegressor:
    """
    Single-layer value approximator -exp(relu(W . (x_v || x_u) + b)).

    ``weight`` is a 2M x 1 column (root half first), ``bias`` is 1 x 1.
    Predictions are always <= -1.
    """

    weight: Param
    bias: Param
    fitted: bool = False

    @property
    def feature_dim(self) -> int:
        return self.weight.value.shape[0] // 2

    @classmethod
    def initialize(cls, feature_dim: int, rng: np.random.Generator) -> "ValueRegressor":
        weight = rng.normal(0.0, 0.01, size=(2 * feature_dim, 1))
        return cls(weight=Param(weight), bias=Param(np.zeros((1, 1))))

    @classmethod
    def from_weights(cls, weight: np.ndarray, bias: float, fitted: bool = True) -> "ValueRegressor":
        weight = np.asarray(weight, dtype=np.float64).reshape(-1, 1)
        if weight.shape[0] % 2:
            raise RegressorDimensionError(f"weight length {weight.shape[0]} is not 2M")
        return cls(
            weight=Param(weight), bias=Param(np.full((1, 1), float(bias))), fitted=fitted
        )

    def _check(self, x_v: np.ndarray, x_u: np.ndarray) -> None:
        m = self.feature_dim
        if x_v.shape[-1] != m or x_u.shape[-1] != m:
            raise RegressorDimensionError(
                f"feature widths {x_v.shape[-1]} and {x_u.shape[-1]} do not match M={m}"
            )

    def pre_activation(self, x_v: Matrix, x_u: Matrix) -> np.ndarray:
        m = self.feature_dim
        w = self.weight.value[:, 0]
        return x_v @ w[:m] + x_u @ w[m:] + self.bias.value[0, 0]

    def predict_batch(self, x_v: Matrix, x_u: Matrix) -> np.ndarray:
        x_v = np.atleast_2d(x_v)
        x_u = np.atleast_2d(x_u)
        self._check(x_v, x_u)
        return -np.exp(np.maximum(self.pre_activation(x_v, x_u), 0.0))

    def predict(self, x_v: np.ndarray, x_u: np.ndarray) -> float:
        return float(self.predict_batch(x_v, x_u)[0])

    def bind(self, features: Matrix) -> ScoreFn:
        """
        Score function over a fixed feature matrix.

        Per-node projections of both weight halves are computed once, so a
        (v, u) score costs two lookups.
        """
        m = self.feature_dim
        if features.shape[1] != m:
            raise RegressorDimensionError(f"feature width {features.shape[1]} != M={m}")
        w = self.weight.value[:, 0]
        root_part = features @ w[:m] + self.bias.value[0, 0]
        neighbor_part = features @ w[m:]

        def score(v: np.ndarray, u: np.ndarray) -> np.ndarray:
            return -np.exp(np.maximum(root_part[v] + neighbor_part[u], 0.0))

        return score

    def loss_and_grad(
        self, x_v: Matrix, x_u: Matrix, targets: np.ndarray
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        """
        Mean squared error against targets and its gradient.

        Returns:
            (mse, dW as 2M x 1, db as 1 x 1)
        """
        self._check(x_v, x_u)
        z = self.pre_activation(x_v, x_u)
        pred = -np.exp(np.maximum(z, 0.0))
        diff = pred - targets
        n = len(targets)
        loss = float(np.mean(diff**2))
        dz = (2.0 / n) * diff * pred * (z > 0)
        dw = np.concatenate([x_v.T @ dz, x_u.T @ dz])[:, None]
        db = np.full((1, 1), dz.sum())
        return loss, dw, db


def regressor_predict(regressor: ValueRegressor, x_v: np.ndarray, x_u: np.ndarray) -> float:
    return regressor.predict(x_v, x_u)


def _table_mse(score: ScoreFn, pairs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((score(pairs[:, 0], pairs[:, 1]) - targets) ** 2))


def fit_regressor(
    regressor: ValueRegressor,
    table: ValueTable,
    features: Matrix,
    config: RLConfig,
    rng: np.random.Generator,
) -> FitHistory:
    """
    Fit the regressor to the visited values by mini-batch squared error.

    Pairs are reshuffled every epoch; feature rows are gathered per batch.
    The history holds the full-table MSE before training and after every epoch.

    Args:
        regressor: Regressor to train in place (marked fitted on return)
        table: Value table supplying (v, u) -> G/C targets
        features: Node feature matrix (|V| x M)
        config: Epochs, batch size, learning rate and optimizer
        rng: Shuffling generator

    Returns:
        FitHistory

    Raises:
        EmptyValueTableError: If the table has no visited pairs
        RegressorDimensionError: If the feature width is not the regressor's M
    """
    if len(table) == 0:
        raise EmptyValueTableError("cannot fit the regressor on an empty value table")
    if features.shape[1] != regressor.feature_dim:
        raise RegressorDimensionError(
            f"feature width {features.shape[1]} != regressor M={regressor.feature_dim}"
        )

    features = np.asarray(features, dtype=np.float64)
    pairs, targets = table.targets()
    n = len(targets)
    initial_mse = _table_mse(regressor.bind(features), pairs, targets)
    logger.info(f"Fitting value regressor on {n} pairs (initial MSE {initial_mse:.6f})")

    epoch_mse = []
    for epoch in range(1, config.regressor_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.regressor_batch_size):
            idx = order[start : start + config.regressor_batch_size]
            _, dw, db = regressor.loss_and_grad(
                features[pairs[idx, 0]], features[pairs[idx, 1]], targets[idx]
            )
            regressor.weight.grad[...] = dw
            regressor.bias.grad[...] = db
            for param in (regressor.weight, regressor.bias):
                if config.regressor_optimizer == "sgd":
                    sgd_step(param, config.regressor_learning_rate)
                else:
                    adam_step(param, config.regressor_learning_rate)
        epoch_mse.append(_table_mse(regressor.bind(features), pairs, targets))
        logger.debug(f"Regressor epoch {epoch}/{config.regressor_epochs}: mse={epoch_mse[-1]:.6f}")

    regressor.fitted = True
    logger.info(f"Regressor fit done: MSE {initial_mse:.6f} -> {epoch_mse[-1]:.6f}")
    return FitHistory(num_pairs=n, initial_mse=initial_mse, epoch_mse=epoch_mse)
