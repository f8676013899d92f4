"""The agent-level optimization loop.

Each iteration draws a question batch, evaluates every agent on it, ranks the
population, then moves the non-elite agents toward the elites (decoding update
plus prompt adaptation). Elites are carried over unchanged. State is
checkpointed after ranking and again after the update so an interrupted run
resumes without repeating a finished evaluation.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_rng, derive_seed
from .data import (
    OFFICIAL,
    SplitSpec,
    _atomic_write,
    check_disjoint,
    emit_report,
    load_dataset,
    make_split,
    synthetic_arithmetic,
    write_json,
)
from .exceptions import (
    ConfigurationError,
    EvaluationError,
    LeakageError,
    ProviderError,
    RunAborted,
)
from .fitness import (
    NON_VERIFIABLE,
    FitnessReport,
    JudgeScores,
    exact_match_fitness,
    extract_answer,
    judge_averaged,
    rank_population,
)
from .prompts import AdaptationInstruction, MockEditorBackend, adapt_prompt, default_pool, init_prompt_pool
from .providers import (
    ChatCompletionsBackend,
    GenerationRequest,
    LandscapeBackend,
    LLMClient,
    MockBackendSpec,
    MockJudgeBackend,
    ScriptedBackend,
    UsageLedger,
)
from .resources import JUDGE_PROMPT, load_templates, load_text
from .space import UPDATE_RULES, AgentConfig, DecodingConfig, sample_decoding

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
STATE_FILE = "state.ckpt.json"
HISTORY_FILE = "history.jsonl"
SPLIT_FILE = "split.json"
TRACE_FILE = "llm_trace.jsonl"

PHASE_INIT = "init"
PHASE_RANKED = "ranked"
PHASE_UPDATED = "updated"

STATE_SCHEMA_VERSION = 1


# -- context -------------------------------------------------------------------

@dataclass
class RunContext:
    """Live collaborators of a run: clients, frozen texts, prompt sources."""

    agent_client: LLMClient
    editor_client: LLMClient | None = None
    judge_client: LLMClient | None = None
    instruction: AdaptationInstruction = field(default_factory=AdaptationInstruction.load)
    judge_prompt: object = field(default_factory=lambda: load_text(JUDGE_PROMPT))
    prompt_pool: list = field(default_factory=default_pool)
    template_generator: object = None
    ledger: UsageLedger = field(default_factory=UsageLedger)


def _role_decoding(temperature):
    return DecodingConfig(temperature=temperature, top_p=1.0, frequency_penalty=0.0,
                          presence_penalty=0.0, max_tokens=2048)


def build_context(config, items, run_dir=None, ledger=None):
    """Clients for the agent, editor and judge roles as configured."""
    p = config.provider
    ledger = ledger or UsageLedger()
    if p.kind == "http":
        trace = str(Path(run_dir) / TRACE_FILE) if (p.trace_llm and run_dir) else None
        backend = ChatCompletionsBackend(base_url=p.base_url, trace_path=trace)
        agent_b = editor_b = judge_b = backend
    else:
        if p.kind == "scripted":
            with open(p.transcript, encoding="utf-8") as fh:
                agent_b = ScriptedBackend(json.load(fh))
        else:
            spec = MockBackendSpec(peak=dict(p.landscape_peak), width=p.landscape_width)
            agent_b = LandscapeBackend(spec, {it.question: it.gold for it in items})
        editor_b = MockEditorBackend()
        judge_b = MockJudgeBackend()

    def client(backend, model, decoding=None):
        return LLMClient(backend, model, decoding=decoding, ledger=ledger,
                         max_attempts=p.max_attempts, max_concurrency=p.max_concurrency)

    pool = default_pool()
    if config.prompts.pool_path:
        pool = load_templates(config.prompts.pool_path)
    return RunContext(
        agent_client=client(agent_b, p.agent_model),
        editor_client=client(editor_b, p.editor_model, _role_decoding(p.editor_temperature)),
        judge_client=(client(judge_b, p.judge_model, _role_decoding(p.judge_temperature))
                      if config.fitness.judge else None),
        instruction=AdaptationInstruction.load(config.prompts.instruction_path),
        prompt_pool=pool,
        ledger=ledger,
    )


def load_items(config):
    """``(optimization_pool, test_set)`` per the data settings."""
    d = config.data
    require_gold = config.fitness.mode != NON_VERIFIABLE
    if d.path is None:
        items = synthetic_arithmetic(d.synthetic_size, seed=d.split_seed)
        return make_split(items, SplitSpec(seed=d.split_seed))
    items = load_dataset(d.path, task_kind=d.task_kind, require_gold=require_gold)
    if d.split == OFFICIAL:
        test = load_dataset(d.test_path, task_kind=d.task_kind, require_gold=require_gold)
        return make_split(items, SplitSpec(mode=OFFICIAL), test_items=test)
    return make_split(items, SplitSpec(seed=d.split_seed))


# -- state ---------------------------------------------------------------------

@dataclass
class RunState:
    k: int
    phase: str
    population: list
    rng_state: dict
    pool_order: list
    pool_cursor: int
    instruction_sha256: str
    judge_prompt_sha256: str
    reports: list | None = None
    ranking: list | None = None
    best: AgentConfig | None = None
    best_composite: float | None = None
    history: list = field(default_factory=list)
    usage: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": STATE_SCHEMA_VERSION,
            "k": self.k,
            "phase": self.phase,
            "population": [a.to_dict() for a in self.population],
            "rng_state": self.rng_state,
            "pool_order": list(self.pool_order),
            "pool_cursor": self.pool_cursor,
            "instruction_sha256": self.instruction_sha256,
            "judge_prompt_sha256": self.judge_prompt_sha256,
            "reports": None if self.reports is None else [r.to_dict() for r in self.reports],
            "ranking": None if self.ranking is None else list(self.ranking),
            "best": None if self.best is None else self.best.to_dict(),
            "best_composite": self.best_composite,
            "history": self.history,
            "usage": self.usage,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            k=data["k"],
            phase=data["phase"],
            population=[AgentConfig.from_dict(a) for a in data["population"]],
            rng_state=data["rng_state"],
            pool_order=list(data["pool_order"]),
            pool_cursor=data["pool_cursor"],
            instruction_sha256=data["instruction_sha256"],
            judge_prompt_sha256=data["judge_prompt_sha256"],
            reports=None if data["reports"] is None
            else [FitnessReport.from_dict(r) for r in data["reports"]],
            ranking=None if data["ranking"] is None else list(data["ranking"]),
            best=None if data["best"] is None else AgentConfig.from_dict(data["best"]),
            best_composite=data["best_composite"],
            history=data["history"],
            usage=data.get("usage", {}),
        )

    def is_complete(self, config):
        return self.k >= config.gwo.K and self.phase == PHASE_UPDATED

    @property
    def champion(self):
        """Current alpha: top of the latest ranking."""
        if self.ranking is None:
            return None
        return self.population[self.ranking[0]]


def initialize_population(config, rng, context):
    n = config.gwo.n
    decodings = [sample_decoding(config.sampling, rng) for _ in range(n)]
    prompts = init_prompt_pool(n, rng, pool=context.prompt_pool,
                               generator=context.template_generator)
    return [
        AgentConfig(j, decodings[j], prompts[j], provider_ref=context.agent_client.model)
        for j in range(n)
    ]


def new_state(config, pool_size, context):
    if pool_size < 1:
        raise ConfigurationError("optimization pool is empty")
    rng = np.random.default_rng(derive_seed(config.gwo.seed, "master"))
    population = initialize_population(config, derive_rng(config.gwo.seed, "init"), context)
    return RunState(
        k=0,
        phase=PHASE_INIT,
        population=population,
        rng_state=rng.bit_generator.state,
        pool_order=rng.permutation(pool_size).tolist(),
        pool_cursor=0,
        instruction_sha256=context.instruction.sha256,
        judge_prompt_sha256=context.judge_prompt.sha256,
        usage=context.ledger.snapshot(),
    )


def _draw_batch(state, rng, pool_size, batch_size):
    """Next ``batch_size`` distinct pool indices; reshuffle when the epoch ends."""
    batch_size = min(batch_size, pool_size)
    batch = []
    while len(batch) < batch_size:
        if state.pool_cursor >= len(state.pool_order):
            state.pool_order = rng.permutation(pool_size).tolist()
            state.pool_cursor = 0
        idx = state.pool_order[state.pool_cursor]
        state.pool_cursor += 1
        if idx not in batch:
            batch.append(idx)
    return batch


# -- evaluation ----------------------------------------------------------------

def _generate_answers(agent, items, client, seed, k):
    answers, trajectories, failures = [], [], 0
    for item in items:
        request = GenerationRequest(
            system_text="",
            user_text=agent.prompt.render(item.question),
            decoding=agent.decoding,
            seed=derive_seed(seed, k, agent.id, item.id),
        )
        try:
            text = client.generate(request).text
        except ProviderError as exc:
            logger.warning("agent %d item %s: generation failed (%s); scored incorrect",
                           agent.id, item.id, exc)
            failures += 1
            answers.append(None)
            trajectories.append(None)
            continue
        answers.append(extract_answer(text, item.task_kind))
        trajectories.append(text)
    return answers, trajectories, failures


def _judge_batch(items, trajectories, context, config):
    scores = []
    for item, traj in zip(items, trajectories):
        if traj is None:
            scores.append(JudgeScores(0.0, 0.0, 0.0))
            continue
        try:
            scores.append(judge_averaged(item.question, traj, context.judge_client,
                                         seeds=config.fitness.judge_seeds,
                                         prompt=context.judge_prompt))
        except EvaluationError as exc:
            logger.warning("judge failed on item %s (%s); scored zero", item.id, exc)
            scores.append(JudgeScores(0.0, 0.0, 0.0))
    return JudgeScores.mean(scores, seeds_used=tuple(config.fitness.judge_seeds))


def evaluate_agent(agent, items, context, config, k):
    """Fitness report for one agent on one batch; returns ``(report, n_failures)``."""
    answers, trajectories, failures = _generate_answers(
        agent, items, context.agent_client, config.gwo.seed, k)
    judge = None
    if context.judge_client is not None:
        judge = _judge_batch(items, trajectories, context, config)
    weights = config.judge_weights
    if config.fitness.mode == NON_VERIFIABLE:
        report = FitnessReport.non_verifiable(judge, len(items), weights)
    else:
        accuracy = exact_match_fitness(answers, [it.gold for it in items])
        report = FitnessReport.verifiable(accuracy, len(items), judge, weights)
    return report, failures


# -- iteration -----------------------------------------------------------------

def _rank_step(state, config, context, pool, executor):
    rng = np.random.default_rng()
    rng.bit_generator.state = state.rng_state
    k = state.k + 1
    n = len(state.population)
    if config.gwo.per_agent_batches:
        batches = [_draw_batch(state, rng, len(pool), config.gwo.batch_size) for _ in range(n)]
    else:
        shared = _draw_batch(state, rng, len(pool), config.gwo.batch_size)
        batches = [shared] * n
    state.rng_state = rng.bit_generator.state

    def work(j):
        return evaluate_agent(state.population[j], [pool[i] for i in batches[j]],
                              context, config, k)

    results = list(executor.map(work, range(n)))
    total_calls = sum(len(b) for b in batches)
    failures = sum(f for _, f in results)
    if total_calls and failures == total_calls:
        raise RunAborted(f"every generation failed in iteration {k}; provider unreachable")

    reports = [r for r, _ in results]
    ranking = rank_population(reports, config.gwo.m)
    alpha = state.population[ranking.alpha]
    alpha_composite = reports[ranking.alpha].composite
    if state.best_composite is None or alpha_composite > state.best_composite:
        state.best, state.best_composite = alpha, alpha_composite

    ids = [[pool[i].id for i in b] for b in batches]
    state.history.append({
        "k": k,
        "batch_ids": ids if config.gwo.per_agent_batches else ids[0],
        "composites": [r.composite for r in reports],
        "elites": [state.population[i].id for i in ranking.elites],
        "champion_composite": alpha_composite,
        "best_so_far": state.best_composite,
        "decodings": [a.decoding.to_dict() for a in state.population],
    })
    state.k, state.phase = k, PHASE_RANKED
    state.reports, state.ranking = reports, list(ranking.order)


def _update_step(state, config, context, executor):
    k = state.k
    m = config.gwo.m
    elites = [state.population[i] for i in state.ranking[:m]]
    followers = state.ranking[m:]
    rule = UPDATE_RULES[config.gwo.update]
    weights = config.leader_weights
    seed = config.gwo.seed

    def work(j):
        agent = state.population[j]
        decoding = rule(agent.decoding, [e.decoding for e in elites], weights,
                        config.gwo.sigma, derive_rng(seed, k, agent.id, "decoding"),
                        config.sampling)
        prompt = agent.prompt
        if config.gwo.adapt_prompts and context.editor_client is not None:
            outcome = adapt_prompt(agent.prompt, [e.prompt for e in elites],
                                   context.instruction, context.editor_client,
                                   derive_rng(seed, k, agent.id, "prompt"), iteration=k)
            prompt = outcome.new_prompt
            if not outcome.accepted:
                logger.info("iteration %d agent %d: prompt edit rejected (%s)",
                            k, agent.id, outcome.rejection_reason)
        return j, AgentConfig(agent.id, decoding, prompt, agent.provider_ref)

    for j, agent in executor.map(work, followers):
        state.population[j] = agent
    state.phase = PHASE_UPDATED


def run_iteration(state, config, context, pool, checkpoint=None, executor=None):
    """Advance ``state`` by one phase: rank (evaluate) or update."""
    own = executor is None
    executor = executor or ThreadPoolExecutor(config.provider.max_concurrency)
    try:
        if state.phase in (PHASE_INIT, PHASE_UPDATED):
            _rank_step(state, config, context, pool, executor)
        else:
            _update_step(state, config, context, executor)
    finally:
        if own:
            executor.shutdown()
    state.usage = context.ledger.snapshot()
    if checkpoint is not None:
        checkpoint(state)
    return state


# -- persistence -----------------------------------------------------------------

class RunDirectory:
    def __init__(self, path):
        self.path = Path(path)

    def file(self, name):
        return self.path / name

    def has_state(self):
        return self.file(STATE_FILE).exists()

    def load_state(self):
        with open(self.file(STATE_FILE), encoding="utf-8") as fh:
            return RunState.from_dict(json.load(fh))

    def load_config(self):
        from .config import RunConfig

        with open(self.file(CONFIG_FILE), encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))

    def save_state(self, state):
        _atomic_write(self.file(HISTORY_FILE),
                      "".join(json.dumps(r, sort_keys=True) + "\n" for r in state.history))
        write_json(self.file(STATE_FILE), state.to_dict())

    def save_report(self, state):
        """``history.csv``, ``champion.json`` and ``usage.json`` for a finished run."""
        return emit_report(state.history, state.champion, self.path, usage=state.usage,
                           composite=state.reports[state.ranking[0]].composite)

    def load_split_ids(self):
        path = self.file(SPLIT_FILE)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)


# -- driver --------------------------------------------------------------------

@dataclass
class RunResult:
    champion: AgentConfig
    history: list
    state: RunState


def run(config, pool, run_dir=None, context=None, test_items=None, on_checkpoint=None):
    """Run (or resume) the loop for ``config.gwo.K`` iterations.

    ``pool`` is the optimization pool. With ``run_dir`` every phase is
    checkpointed there and an existing checkpoint is resumed. ``on_checkpoint``
    is called with the state after each checkpoint.
    """
    pool = list(pool)
    if not pool:
        raise ConfigurationError("optimization pool is empty")
    if test_items is not None:
        check_disjoint(pool, test_items)
    context = context or build_context(config, pool + list(test_items or []), run_dir)
    directory = RunDirectory(run_dir) if run_dir is not None else None

    state = None
    if directory is not None:
        directory.path.mkdir(parents=True, exist_ok=True)
        if directory.has_state():
            stored = directory.load_config()
            if stored.to_dict() != config.to_dict():
                raise ConfigurationError(
                    f"{directory.path} holds a run with a different configuration")
            state = directory.load_state()
            context.ledger = _restore_ledger(context, state.usage)
            logger.info("resuming at iteration %d (%s)", state.k, state.phase)
        else:
            _atomic_write(directory.file(CONFIG_FILE), config.to_json())
            write_json(directory.file(SPLIT_FILE), {
                "pool_ids": [it.id for it in pool],
                "test_ids": [it.id for it in (test_items or [])],
            })
    if state is None:
        state = new_state(config, len(pool), context)
        if directory is not None:
            directory.save_state(state)
    if state.instruction_sha256 != context.instruction.sha256:
        raise ConfigurationError("adaptation instruction changed since the run started")
    if state.judge_prompt_sha256 != context.judge_prompt.sha256:
        raise ConfigurationError("judge prompt changed since the run started")

    def checkpoint(s):
        if directory is not None:
            directory.save_state(s)
        if on_checkpoint is not None:
            on_checkpoint(s)

    with ThreadPoolExecutor(config.provider.max_concurrency) as executor:
        while not state.is_complete(config):
            try:
                run_iteration(state, config, context, pool, checkpoint, executor)
            except RunAborted as exc:
                exc.checkpoint = str(directory.file(STATE_FILE)) if directory else None
                raise

    if directory is not None:
        directory.save_report(state)
    return RunResult(state.champion, list(state.history), state)


def _restore_ledger(context, usage):
    ledger = UsageLedger(usage)
    for client in (context.agent_client, context.editor_client, context.judge_client):
        if client is not None:
            client.ledger = ledger
    return ledger


def evaluate_champion(champion, test_items, client, pool_ids=None, seed=0):
    """Exact-match accuracy of ``champion`` on held-out items."""
    test_items = list(test_items)
    if not test_items:
        raise ConfigurationError("test split is empty")
    if pool_ids is not None:
        overlap = set(pool_ids) & {it.id for it in test_items}
        if overlap:
            raise LeakageError(f"{len(overlap)} test items were in the optimization pool, "
                               f"e.g. {sorted(overlap)[:3]}")
    answers, _, _ = _generate_answers(champion, test_items, client, seed, "eval")
    return exact_match_fitness(answers, [it.gold for it in test_items])
