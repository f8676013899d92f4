"""JSONL datasets, the hold-out split and run reports."""

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DatasetError, LeakageError
from .fitness import TASK_KINDS
from .space import AgentConfig

HOLDOUT = "fixed-seed-holdout"
OFFICIAL = "official"
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    gold: str | None
    task_kind: str = "numeric"

    def to_dict(self):
        return {"id": self.id, "question": self.question, "answer": self.gold,
                "task_kind": self.task_kind}


def _item_from_record(record, lineno, default_kind, require_gold):
    if not isinstance(record, dict):
        raise DatasetError(f"line {lineno}: expected a JSON object")
    question = record.get("question")
    if not isinstance(question, str) or not question.strip():
        raise DatasetError(f"line {lineno}: missing or empty 'question'")
    gold = record.get("answer", record.get("gold"))
    if gold is not None:
        gold = str(gold)
    if require_gold and (gold is None or not gold.strip()):
        raise DatasetError(f"line {lineno}: missing or empty 'answer'")
    kind = record.get("task_kind", default_kind)
    if kind not in TASK_KINDS:
        raise DatasetError(f"line {lineno}: unknown task_kind {kind!r}")
    item_id = record.get("id")
    item_id = str(lineno) if item_id is None else str(item_id)
    return QAItem(item_id, question, gold, kind)


def load_dataset(path, task_kind="numeric", require_gold=True):
    """Read one ``{"id"?, "question", "answer"}`` object per line.

    Missing ids become the 1-based line number.
    """
    items, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            item = _item_from_record(record, lineno, task_kind, require_gold)
            if item.id in seen:
                raise DatasetError(f"{path}: duplicate item id {item.id!r}")
            seen.add(item.id)
            items.append(item)
    if not items:
        raise DatasetError(f"{path}: dataset is empty")
    return items


def write_dataset(items, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")


def synthetic_arithmetic(n, seed=0):
    """Small addition/subtraction word problems for offline runs."""
    rng = np.random.default_rng(seed)
    things = ["apples", "marbles", "books", "cans", "stamps", "shells"]
    items = []
    for i in range(n):
        a, b = (int(v) for v in rng.integers(2, 60, size=2))
        thing = things[int(rng.integers(len(things)))]
        if rng.random() < 0.5:
            q = f"Sam has {a} {thing} and finds {b} more. How many {thing} does Sam have now?"
            gold = a + b
        else:
            a, b = max(a, b), min(a, b)
            q = f"Sam has {a} {thing} and gives away {b}. How many {thing} are left?"
            gold = a - b
        items.append(QAItem(f"syn-{i:04d}", f"[{i}] {q}", str(gold)))
    return items


@dataclass(frozen=True)
class SplitSpec:
    mode: str = HOLDOUT
    seed: int = 0
    ratio: tuple = (1, 4)

    def __post_init__(self):
        if self.mode not in (HOLDOUT, OFFICIAL):
            raise ConfigurationError(f"unknown split mode {self.mode!r}")
        if len(self.ratio) != 2 or min(self.ratio) <= 0:
            raise ConfigurationError(f"split ratio must be two positive numbers, got {self.ratio}")


def check_disjoint(pool, test):
    overlap = {it.id for it in pool} & {it.id for it in test}
    if overlap:
        raise LeakageError(f"{len(overlap)} item ids in both pool and test, e.g. "
                           f"{sorted(overlap)[:3]}")


def make_split(items, spec, test_items=None):
    """Return ``(optimization_pool, test_set)``.

    Hold-out mode shuffles with ``spec.seed`` and puts ``round(N * v / (v + t))``
    items (at least one, halves rounded up) in the pool. Official mode passes
    ``items`` and ``test_items`` through after checking they are disjoint.
    """
    items = list(items)
    if spec.mode == OFFICIAL:
        if not test_items:
            raise ConfigurationError("official split needs an explicit test set")
        test_items = list(test_items)
        check_disjoint(items, test_items)
        return items, test_items
    n = len(items)
    v, t = spec.ratio
    if n < v + t:
        raise ConfigurationError(f"hold-out split needs at least {v + t} items, got {n}")
    n_pool = max(1, int(np.floor(n * v / (v + t) + 0.5)))
    perm = np.random.default_rng(spec.seed).permutation(n)
    pool = [items[i] for i in sorted(perm[:n_pool])]
    test = [items[i] for i in sorted(perm[n_pool:])]
    return pool, test


# -- reports -------------------------------------------------------------------

def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def history_columns(n_agents):
    return ["iteration", "best_composite", "mean_composite"] + [
        f"agent_{j}" for j in range(n_agents)
    ]


def emit_report(history, champion, out_dir, usage=None, composite=None):
    """Write ``history.csv``, ``champion.json`` and ``usage.json`` into ``out_dir``.

    ``history`` is the list of per-iteration records kept by the orchestrator;
    ``composite`` is the champion's fitness in the last iteration, if known.
    Returns the paths written.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc
    n_agents = max((len(r["composites"]) for r in history), default=0)
    csv_path = out_dir / "history.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(history_columns(n_agents))
        for rec in history:
            comps = rec["composites"]
            writer.writerow([rec["k"], max(comps), float(np.mean(comps))] + list(comps))

    champion_path = out_dir / "champion.json"
    payload = {"schema_version": REPORT_SCHEMA_VERSION, "champion": champion.to_dict()}
    if composite is not None:
        payload["composite"] = composite
    write_json(champion_path, payload)
    paths = [csv_path, champion_path]
    if usage is not None:
        usage_path = out_dir / "usage.json"
        totals = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
        for row in usage.values():
            for k in totals:
                totals[k] += row[k]
        write_json(usage_path, {"schema_version": REPORT_SCHEMA_VERSION,
                                "per_provider": usage, "totals": totals})
        paths.append(usage_path)
    return paths


def read_history_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, [[int(r[0])] + [float(v) for v in r[1:]] for r in body]


def read_champion(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return AgentConfig.from_dict(data["champion"])
