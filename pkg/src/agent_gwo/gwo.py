"""Standard continuous Grey Wolf Optimizer over a bounded box.

The functional core (``schedule_coefficient``, ``encircle``,
``leader_average_update``, ``gwo_minimize``) is wrapped by
:class:`GreyWolfOptimizer`, a scikit-learn style estimator.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_bounds, check_int, check_vector
from .exceptions import ConfigurationError, EvaluationError, ScheduleError, ShapeError

logger = logging.getLogger(__name__)

N_LEADERS = 3


@dataclass(frozen=True)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower, upper = check_bounds(self.lower, self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def box(cls, low, high, dimension):
        return cls(np.full(dimension, float(low)), np.full(dimension, float(high)))

    @property
    def dimension(self):
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, rng):
        return self.lower + rng.random(self.dimension) * (self.upper - self.lower)


@dataclass(frozen=True)
class GwoSchedule:
    max_iterations: int
    current: int = 0


def schedule_coefficient(schedule):
    """Linearly annealed coefficient ``a(t) = 2 - 2 t / T_max``.

    Raises :class:`ScheduleError` when ``T_max < 1`` or ``t`` lies outside
    ``[0, T_max]``.
    """
    t_max, t = schedule.max_iterations, schedule.current
    if t_max < 1:
        raise ScheduleError(f"max_iterations must be >= 1, got {t_max}")
    if t < 0 or t > t_max:
        raise ScheduleError(f"iteration {t} outside [0, {t_max}]")
    return 2.0 - 2.0 * t / t_max


def encircle(leader, wolf, a, r1, r2):
    """Single leader-guided candidate ``X_p - A * |C * X_p - X_i|``.

    ``C = 2 r1`` and ``A = 2 a r2 - a``. The result is not projected.
    """
    leader = np.asarray(leader, dtype=float)
    wolf = np.asarray(wolf, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    shapes = {leader.shape, wolf.shape, r1.shape, r2.shape}
    # scalar r1/r2 broadcast fine; anything else must agree exactly
    shapes.discard(())
    if len(shapes) > 1:
        raise ShapeError(f"shape mismatch in encircle: {sorted(shapes)}")
    c = 2.0 * r1
    big_a = 2.0 * a * r2 - a
    dist = np.abs(c * leader - wolf)
    return leader - big_a * dist


def leader_average_update(wolf, leaders, a, rng, space=None):
    """Mean of the three encircling candidates, projected into ``space``.

    ``leaders`` is a sequence of alpha, beta, delta positions. Fresh ``r1`` and
    ``r2`` vectors are drawn per leader from ``rng``.
    """
    wolf = np.asarray(wolf, dtype=float)
    if len(leaders) != N_LEADERS:
        raise ShapeError(f"expected {N_LEADERS} leaders, got {len(leaders)}")
    dim = wolf.shape[0]
    candidates = []
    for leader in leaders:
        leader = check_vector(leader, dim, "leader")
        r1 = rng.random(dim)
        r2 = rng.random(dim)
        candidates.append(encircle(leader, wolf, a, r1, r2))
    new = np.mean(candidates, axis=0)
    if space is not None:
        new = space.project(new)
    return new


def select_leaders(fitness, k=N_LEADERS):
    """Indices of the ``k`` smallest fitness values, ties broken by index."""
    order = np.argsort(np.asarray(fitness, dtype=float), kind="stable")
    return order[:k]


def _evaluate(objective, positions, executor):
    if executor is None:
        values = [objective(x) for x in positions]
    else:
        values = list(executor.map(objective, positions))
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise EvaluationError(
            f"objective returned non-finite value {values[i]} for wolf {i}",
            position=positions[i].copy(),
        )
    return values


def gwo_minimize(objective, space, population_size=30, max_iter=500, seed=None,
                 elitism=True, n_jobs=None):
    """Minimize ``objective`` over ``space`` with the Grey Wolf Optimizer.

    Parameters
    ----------
    objective : callable
        Maps a 1-D position array to a finite real.
    space : SearchSpace
        Feasible box; every updated position is clipped back into it.
    population_size : int
        Number of wolves, at least three.
    max_iter : int or GwoSchedule
        Iteration budget ``T_max``.
    seed : int, optional
        Master seed. One independent stream is spawned per wolf so the run
        does not depend on evaluation order.
    elitism : bool
        Keep the current alpha, beta and delta fixed during the update phase.
        ``False`` updates every wolf.
    n_jobs : int, optional
        Evaluate objectives in a thread pool of this size.

    Returns
    -------
    best : ndarray
    value : float
    trace : ndarray of shape (max_iter + 1,)
        Best-so-far value; entry 0 is the initial population best.
    """
    if isinstance(max_iter, GwoSchedule):
        max_iter = max_iter.max_iterations
    if not isinstance(max_iter, (int, np.integer)) or max_iter < 1:
        raise ScheduleError(f"max_iter must be a positive integer, got {max_iter!r}")
    population_size = check_int(population_size, "population_size")
    if population_size < N_LEADERS:
        raise ConfigurationError(
            f"population_size must be >= {N_LEADERS} so that alpha, beta and delta exist, "
            f"got {population_size}"
        )

    streams = np.random.SeedSequence(seed).spawn(population_size)
    rngs = [np.random.default_rng(s) for s in streams]
    positions = np.array([space.sample(rng) for rng in rngs])

    executor = ThreadPoolExecutor(n_jobs) if n_jobs and n_jobs > 1 else None
    try:
        fitness = _evaluate(objective, positions, executor)
        i_best = int(np.argmin(fitness))
        best, best_value = positions[i_best].copy(), float(fitness[i_best])
        trace = [best_value]

        for t in range(1, max_iter + 1):
            a = schedule_coefficient(GwoSchedule(max_iter, t))
            idx = select_leaders(fitness)
            leaders = positions[idx].copy()
            exempt = set(idx.tolist()) if elitism else set()
            for i in range(population_size):
                if i in exempt:
                    continue
                positions[i] = leader_average_update(positions[i], leaders, a, rngs[i], space)
            fitness = _evaluate(objective, positions, executor)
            i_best = int(np.argmin(fitness))
            if fitness[i_best] < best_value:
                best, best_value = positions[i_best].copy(), float(fitness[i_best])
            trace.append(best_value)
    finally:
        if executor is not None:
            executor.shutdown()

    logger.debug("gwo finished: best %.6g after %d iterations", best_value, max_iter)
    return best, best_value, np.asarray(trace)


class GreyWolfOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`gwo_minimize`.

    ``fit`` takes the objective in place of training data and stores
    ``best_position_``, ``best_value_`` and ``trace_``.

    Examples
    --------
    >>> from agent_gwo.benchmarks import sphere
    >>> opt = GreyWolfOptimizer(dimension=2, max_iter=50, random_state=0).fit(sphere)
    >>> bool(opt.best_value_ < 1e-6)
    True
    """

    def __init__(self, n_wolves=30, max_iter=500, lower=-5.0, upper=5.0, dimension=None,
                 elitism=True, n_jobs=None, random_state=None):
        self.n_wolves = n_wolves
        self.max_iter = max_iter
        self.lower = lower
        self.upper = upper
        self.dimension = dimension
        self.elitism = elitism
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, objective, y=None):
        if not callable(objective):
            raise ConfigurationError("objective must be callable")
        space = SearchSpace(*check_bounds(self.lower, self.upper, self.dimension))
        best, value, trace = gwo_minimize(
            objective,
            space,
            population_size=self.n_wolves,
            max_iter=self.max_iter,
            seed=self.random_state,
            elitism=self.elitism,
            n_jobs=self.n_jobs,
        )
        self.space_ = space
        self.best_position_ = best
        self.best_value_ = value
        self.trace_ = trace
        self.n_iter_ = len(trace) - 1
        return self
