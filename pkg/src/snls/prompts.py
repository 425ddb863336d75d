"""Activity sentence generation: templates, external-knowledge suffixes,
and diversified-sentence corpora, plus training-time sentence sampling.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .seeding import rng_for

PLACEHOLDER = "{activity_name}"
BASE_TEMPLATE_ID = "base"

_WS = re.compile(r"\s+")


def collapse_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def canon_activity(name: str) -> str:
    """Canonical activity key: trim, collapse whitespace, lowercase."""
    return collapse_whitespace(name).lower()


def clean_label(raw: str) -> str:
    """Cleanup pass for free-form dataset labels: trim, collapse spaces,
    strip semicolons and colons."""
    return collapse_whitespace(raw.replace(";", " ").replace(":", " "))


@dataclass(frozen=True)
class Template:
    id: str
    pattern: str

    def __post_init__(self) -> None:
        if self.pattern.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"template {self.id!r} must contain exactly one {PLACEHOLDER} placeholder"
            )


@dataclass(frozen=True)
class KnowledgeEntry:
    activity: str
    body_parts: str = ""
    movements: str = ""


@dataclass
class PromptSet:
    """Templates plus optional knowledge and diversified-sentence corpus."""

    templates: list[Template]
    knowledge: dict[str, KnowledgeEntry] = field(default_factory=dict)
    corpus: dict[str, list[str]] = field(default_factory=dict)
    base_template_id: str = BASE_TEMPLATE_ID

    def __post_init__(self) -> None:
        ids = [t.id for t in self.templates]
        if len(ids) != len(set(ids)):
            raise ValueError("template ids must be unique")
        if self.base_template_id not in set(ids):
            raise ValueError(f"base template {self.base_template_id!r} missing")
        for activity, variants in self.corpus.items():
            if not variants or any(not v.strip() for v in variants):
                raise ValueError(f"corpus for {activity!r} has an empty variant")

    def template_by_id(self, template_id: str) -> Template:
        for t in self.templates:
            if t.id == template_id:
                return t
        raise KeyError(f"unknown template id {template_id!r}")

    @property
    def base_template(self) -> Template:
        return self.template_by_id(self.base_template_id)

    def knowledge_for(self, activity: str) -> KnowledgeEntry | None:
        return self.knowledge.get(canon_activity(activity))


def load_templates(path: str | None = None) -> list[Template]:
    """Load templates from JSON; default is the shipped 33-template set."""
    if path is None:
        text = resources.files("snls.data").joinpath("templates.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return [Template(id=e["id"], pattern=e["pattern"]) for e in json.loads(text)]


def load_knowledge(path: str | None = None) -> dict[str, KnowledgeEntry]:
    """Load knowledge entries keyed by canonical activity; default ships
    the Mobiact body-part/movement descriptions."""
    if path is None:
        text = resources.files("snls.data").joinpath("knowledge_mobiact.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    entries: dict[str, KnowledgeEntry] = {}
    for e in json.loads(text):
        key = canon_activity(e["activity"])
        if key in entries:
            raise ValueError(f"duplicate knowledge entry for {e['activity']!r}")
        entries[key] = KnowledgeEntry(
            activity=e["activity"],
            body_parts=e.get("body_parts", ""),
            movements=e.get("movements", ""),
        )
    return entries


def load_corpus(path: str) -> dict[str, list[str]]:
    """Load a diversified-sentence corpus: JSON map activity -> variants."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {canon_activity(k): list(v) for k, v in raw.items()}


def default_prompt_set() -> PromptSet:
    return PromptSet(templates=load_templates(), knowledge=load_knowledge())


# --------------------------------------------------------------------------
# sentence construction
# --------------------------------------------------------------------------

def render(template: Template, activity: str) -> str:
    """Substitute the activity into the template and tidy whitespace."""
    if not activity or not activity.strip():
        raise ValueError("activity name must be nonempty")
    return collapse_whitespace(template.pattern.replace(PLACEHOLDER, activity))


def attach_knowledge(sentence: str, entry: KnowledgeEntry, mode: str) -> str:
    """Append external knowledge: body_parts, movements, or both in that order."""
    if mode not in ("body_parts", "movements", "both"):
        raise ValueError(f"unknown knowledge mode {mode!r}")
    parts: list[str] = []
    if mode in ("body_parts", "both"):
        if not entry.body_parts.strip():
            raise ValueError(f"knowledge for {entry.activity!r} lacks body_parts")
        parts.append(entry.body_parts.strip())
    if mode in ("movements", "both"):
        if not entry.movements.strip():
            raise ValueError(f"knowledge for {entry.activity!r} lacks movements")
        parts.append(entry.movements.strip())
    out = sentence.rstrip()
    for piece in parts:
        sep = " " if out.endswith((".", "!", "?")) else ". "
        out = out + sep + piece
    return collapse_whitespace(out)


def sample_training_sentence(
    prompt_set: PromptSet,
    activity: str,
    policy: str,
    seed: int,
    knowledge_mode: str | None = None,
) -> str:
    """Draw one training sentence for an activity under the given policy.

    base_only renders the base template; random_template draws uniformly
    over all templates; random_corpus draws uniformly over the
    activity's diversified variants. Deterministic under seed.
    """
    if policy == "base_only":
        sentence = render(prompt_set.base_template, activity)
    elif policy == "random_template":
        rng = rng_for(seed, "template-draw", canon_activity(activity))
        template = prompt_set.templates[int(rng.integers(len(prompt_set.templates)))]
        sentence = render(template, activity)
    elif policy == "random_corpus":
        key = canon_activity(activity)
        if key not in prompt_set.corpus:
            raise KeyError(f"no corpus variants for activity {activity!r}")
        variants = prompt_set.corpus[key]
        rng = rng_for(seed, "corpus-draw", key)
        sentence = collapse_whitespace(variants[int(rng.integers(len(variants)))])
    else:
        raise ValueError(f"unknown training policy {policy!r}")
    if knowledge_mode:
        entry = prompt_set.knowledge_for(activity)
        if entry is not None:
            sentence = attach_knowledge(sentence, entry, knowledge_mode)
    return sentence


def class_sentences(
    prompt_set: PromptSet,
    activities: list[str],
    eval_policy: str = "base",
    knowledge_mode: str | None = None,
) -> dict[str, list[str]]:
    """Evaluation-time sentences per activity.

    ``base`` gives one base-template sentence; ``template:<id>`` one
    sentence from that template; ``all_templates`` the full template
    sweep per activity (for mean-embedding aggregation).
    """
    if not activities:
        raise ValueError("activities must be nonempty")
    canon = [canon_activity(a) for a in activities]
    if len(set(canon)) != len(canon):
        raise ValueError("activities must be distinct after canonicalization")
    if eval_policy == "base":
        templates = [prompt_set.base_template]
    elif eval_policy == "all_templates":
        templates = list(prompt_set.templates)
    elif eval_policy.startswith("template:"):
        templates = [prompt_set.template_by_id(eval_policy.split(":", 1)[1])]
    else:
        raise ValueError(f"unknown eval policy {eval_policy!r}")
    out: dict[str, list[str]] = {}
    for activity in activities:
        sentences = [render(t, activity) for t in templates]
        if knowledge_mode:
            entry = prompt_set.knowledge_for(activity)
            if entry is not None:
                sentences = [attach_knowledge(s, entry, knowledge_mode) for s in sentences]
        out[activity] = sentences
    return out
