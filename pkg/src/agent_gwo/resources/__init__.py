"""Versioned text resources that must stay frozen within a run."""

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

JUDGE_PROMPT = "judge_prompt_v1.txt"
ADAPTATION_INSTRUCTION = "adaptation_instruction_v1.txt"
COT_TEMPLATES = "cot_templates_v1.json"


@dataclass(frozen=True)
class FrozenText:
    text: str
    version: str
    sha256: str

    @classmethod
    def from_text(cls, text, version):
        return cls(text, version, hashlib.sha256(text.encode("utf-8")).hexdigest())


def _version_of(name):
    stem = Path(name).stem
    return stem.rsplit("_", 1)[-1] if "_v" in stem else "custom"


def load_text(name_or_path):
    """Load a packaged resource by file name, or any file by path."""
    path = Path(name_or_path)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        text = resources.files(__name__).joinpath(str(name_or_path)).read_text(encoding="utf-8")
    return FrozenText.from_text(text, _version_of(path.name))


def load_templates(name_or_path=COT_TEMPLATES):
    return json.loads(load_text(name_or_path).text)
