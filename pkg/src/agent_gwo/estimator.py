"""Estimator-style wrapper around the Agent-GWO loop."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int
from .config import RunConfig
from .data import QAItem
from .exceptions import ShapeError
from .fitness import exact_match_fitness
from .orchestrator import RunContext, _generate_answers, _role_decoding, run
from .prompts import MockEditorBackend
from .providers import LandscapeBackend, LLMClient, MockBackendSpec, UsageLedger


def _check_xy(X, y=None):
    X = [str(q) for q in np.asarray(X, dtype=object).ravel()]
    if not X:
        raise ShapeError("X is empty")
    if y is None:
        return X, None
    y = [str(a) for a in np.asarray(y, dtype=object).ravel()]
    if len(y) != len(X):
        raise ShapeError(f"X has {len(X)} questions but y has {len(y)} answers")
    return X, y


class AgentGWO(BaseEstimator):
    """Search prompt and decoding configurations for a question set.

    ``fit(X, y)`` runs the optimization on questions ``X`` with gold answers
    ``y``; ``predict`` answers new questions with the champion agent and
    ``score`` reports exact-match accuracy.

    Parameters
    ----------
    n_agents, n_iter, n_elites, batch_size : int
        Population size, iterations, elite count and per-iteration batch size.
    update : str
        ``"weighted-average"`` or ``"single-leader"``.
    sigma : float
        Perturbation scale of the decoding update.
    task_kind : str
        Answer extraction mode.
    backend : object, optional
        Generation backend with ``generate(request, model)``. By default a
        deterministic mock whose accuracy peaks at ``landscape_peak``; the mock
        knows gold answers only for questions it was given in ``fit``/``score``.
    editor_backend : object, optional
        Backend for prompt edits; defaults to the offline mock editor.
    landscape_peak : dict, optional
        Optimum of the default mock backend.
    random_state : int
    """

    def __init__(self, n_agents=5, n_iter=10, n_elites=3, batch_size=16,
                 update="weighted-average", sigma=0.1, task_kind="numeric", backend=None,
                 editor_backend=None, landscape_peak=None, random_state=0):
        self.n_agents = n_agents
        self.n_iter = n_iter
        self.n_elites = n_elites
        self.batch_size = batch_size
        self.update = update
        self.sigma = sigma
        self.task_kind = task_kind
        self.backend = backend
        self.editor_backend = editor_backend
        self.landscape_peak = landscape_peak
        self.random_state = random_state

    def _config(self):
        peak = {"temperature": 0.6} if self.landscape_peak is None else dict(self.landscape_peak)
        return RunConfig.from_dict({
            "gwo": {"n": self.n_agents, "K": self.n_iter, "m": self.n_elites,
                    "batch_size": self.batch_size, "update": self.update,
                    "sigma": float(self.sigma), "seed": check_int(self.random_state, "random_state")},
            "provider": {"landscape_peak": peak},
            "data": {"task_kind": self.task_kind},
        })

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        config = self._config()
        items = [QAItem(f"q{i}", q, a, self.task_kind) for i, (q, a) in enumerate(zip(X, y))]
        ledger = UsageLedger()
        if self.backend is None:
            backend = LandscapeBackend(MockBackendSpec(peak=config.provider.landscape_peak,
                                                       width=config.provider.landscape_width),
                                       dict(zip(X, y)))
        else:
            backend = self.backend
        editor = self.editor_backend or MockEditorBackend()
        client = LLMClient(backend, config.provider.agent_model, ledger=ledger)
        editor_decoding = _role_decoding(config.provider.editor_temperature)
        context = RunContext(
            agent_client=client,
            editor_client=LLMClient(editor, config.provider.editor_model,
                                    decoding=editor_decoding, ledger=ledger),
            ledger=ledger,
        )
        result = run(config, items, context=context)
        self.champion_ = result.champion
        self.history_ = result.history
        self.best_composite_ = result.state.best_composite
        self.client_ = client
        self.usage_ = ledger.snapshot()
        self.n_iter_ = len(result.history)
        return self

    def predict(self, X):
        check_is_fitted(self, "champion_")
        X, _ = _check_xy(X)
        items = [QAItem(f"p{i}", q, None, self.task_kind) for i, q in enumerate(X)]
        answers, _, _ = _generate_answers(self.champion_, items, self.client_,
                                          self.random_state, "predict")
        return np.array(answers, dtype=object)

    def score(self, X, y):
        X, y = _check_xy(X, y)
        backend = self.client_.backend if hasattr(self, "client_") else None
        if self.backend is None and isinstance(backend, LandscapeBackend):
            backend.add_answers(zip(X, y))
        return exact_match_fitness(list(self.predict(X)), y)

