"""Prompt templates: the fixed task prompt, the mutation prompts, the meta-prompt.

Templates carry placeholders in curly braces ({rate_percent}, {total_lines},
{mutate_lines}, {keep_lines}, {model_name}); rendering substitutes them and
refuses to leave any placeholder unresolved.  The built-in bank is also
shipped as a plain-text file under prompts/ and can be extended or replaced
by a user-supplied file in the same format.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .benchsuite import CANDIDATE_MAIN_STANZA
from .codediff import SourceText

PLACEHOLDERS = ("rate_percent", "total_lines", "mutate_lines", "keep_lines", "model_name")
KINDS = ("generation", "mutation", "meta")
_LINE_PLACEHOLDERS = ("{total_lines}", "{mutate_lines}", "{keep_lines}")
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    kind: str
    body: str

    def __post_init__(self) -> None:
        if not self.id or not re.fullmatch(r"[A-Za-z0-9_.-]+", self.id):
            raise ValueError(f"template id must be a simple token, got {self.id!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.body.strip():
            raise ValueError(f"template {self.id!r} has an empty body")
        unknown = set(_PLACEHOLDER_RE.findall(self.body)) - set(PLACEHOLDERS)
        if unknown:
            raise ValueError(f"template {self.id!r} uses unknown placeholders {sorted(unknown)}")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    requested_rate: float | None
    source_lines: int | None


def format_rate(rate: float) -> str:
    """Render a rate for prose: integral values bare, others with <= 2 decimals."""
    if math.isclose(rate, round(rate), abs_tol=1e-9):
        return str(int(round(rate)))
    return f"{rate:.2f}".rstrip("0").rstrip(".")


def render(
    template: PromptTemplate,
    rate_percent: float | None = None,
    source: SourceText | None = None,
    model_name: str = "",
) -> RenderedPrompt:
    """Substitute placeholders; every placeholder the body uses must be supplied."""
    text = template.body
    if "{rate_percent}" in text:
        if rate_percent is None:
            raise ValueError(f"template {template.id!r} needs a rate")
    if rate_percent is not None:
        if not (math.isfinite(rate_percent) and 0 < rate_percent < 100):
            raise ValueError(f"rate must lie in (0, 100), got {rate_percent!r}")
        text = text.replace("{rate_percent}", format_rate(rate_percent))
    source_lines: int | None = None
    if any(token in text for token in _LINE_PLACEHOLDERS):
        if source is None or not source.lines:
            raise ValueError(f"template {template.id!r} needs a non-empty source")
        if rate_percent is None:
            raise ValueError(f"template {template.id!r} needs a rate to compute line counts")
        source_lines = len(source.lines)
        # The small epsilon keeps floor() honest when rate = 100 * k / n
        # reconstructs k with floating-point noise just below the integer.
        mutate_lines = math.floor(source_lines * rate_percent / 100.0 + 1e-9)
        text = text.replace("{total_lines}", str(source_lines))
        text = text.replace("{mutate_lines}", str(mutate_lines))
        text = text.replace("{keep_lines}", str(source_lines - mutate_lines))
    elif source is not None:
        source_lines = len(source.lines)
    if "{model_name}" in text:
        if not model_name:
            raise ValueError(f"template {template.id!r} needs a model name")
        text = text.replace("{model_name}", model_name)
    leftover = set(_PLACEHOLDER_RE.findall(text)) & set(PLACEHOLDERS)
    if leftover:
        raise ValueError(f"unresolved placeholders {sorted(leftover)} in template {template.id!r}")
    return RenderedPrompt(text=text, requested_rate=rate_percent, source_lines=source_lines)


# ----- built-in texts -------------------------------------------------------

_REFINE = "Now, refine the strategy of the selected solution to improve it."
_CHANGE = "Make sure that you only change {rate_percent}% of the code."
_MANDATORY = "This changing rate {rate_percent}% is the mandatory requirement"
_HUNDRED = (
    "Make sure that you only change {rate_percent}% of the code, which means if the code has"
    " 100 lines, you can only change {rate_percent} lines, and the rest lines should remain"
    " the same."
)

_BODIES: dict[str, str] = {
    "prompt1": f"{_REFINE} {_CHANGE}",
    "prompt2": f"{_REFINE} {_CHANGE} {_MANDATORY}.",
    "prompt3": f"{_REFINE} {_CHANGE} {_MANDATORY}, you cannot change more or less than this rate.",
    "prompt4": f"{_REFINE} {_HUNDRED} {_MANDATORY}, you cannot change more or less than this rate.",
    "prompt5": (
        f"{_REFINE} {_HUNDRED} For this code, it has {{total_lines}} lines, so you can only"
        " change {mutate_lines} lines, the rest {keep_lines} lines should remain the same."
        f" {_MANDATORY}, you cannot change more or less than this rate."
    ),
    "prompt6": (
        "Adjust the code such that the algorithm's convergence speed is improved, while"
        " ensuring that the changes result in an exact difference of {rate_percent}% compared"
        " to the original code. This difference should reflect the modification in"
        " functionality, not code style or syntax. Feel free to adjust any part of the"
        " algorithm (e.g., initialization, selection, mutation, or other components) to"
        " achieve faster convergence while maintaining the specified code difference."
    ),
    "prompt7": (
        "Modify the optimization algorithm code to improve its performance in terms of"
        " convergence speed. The modification should result in a code difference of exactly"
        " {rate_percent}%. Ensure that the changes are meaningful to enhance optimization"
        " speed without focusing on code efficiency or readability improvements. Explore any"
        " strategy within the algorithm to achieve this, but keep the difference precisely at"
        " the specified percentage."
    ),
    "prompt8": (
        "Please enhance the convergence speed of the optimization algorithm given below by"
        " modifying it. The modifications should introduce a code difference of precisely"
        " {rate_percent}% compared to the original code. Focus on optimizing the algorithm's"
        " behavior rather than its implementation efficiency. You are free to explore any"
        " area of the algorithm's logic, but ensure that the total code difference remains"
        " exactly at {rate_percent}% and is geared toward faster convergence."
    ),
    "prompt9": (
        "Here's a piece of code for an optimization algorithm. Please modify it by exactly"
        " {rate_percent}% to improve the algorithm's performance in terms of optimization"
        " convergence speed. Focus on introducing meaningful changes that can potentially"
        " enhance its effectiveness, such as exploring alternative strategies or approaches"
        " across any aspect of the algorithm. Keep the modifications strictly within the"
        " specified {rate_percent}% range for code difference while striving for faster"
        " convergence."
    ),
    "prompt10": (
        "Take this code of an optimization algorithm and adjust it by {rate_percent}% to"
        " improve convergence speed. Make sure the modifications cover a broad spectrum of"
        " possible algorithm adjustments, considering changes across different components"
        " without exceeding {rate_percent}% in code difference. Your changes should aim to"
        " improve the algorithm's ability to reach optimal solutions more quickly."
    ),
    "prompt11": (
        "Please transform this optimization algorithm code by exactly {rate_percent}% in a"
        " way that enhances convergence speed. Keep the code difference precisely at"
        " {rate_percent}%, and focus solely on achieving performance improvements through"
        " algorithmic adjustments across various elements of the code. Avoid focusing on code"
        " efficiency; instead, prioritize exploration of diverse approaches within the"
        " allowed modification percentage."
    ),
    "baseline": "Either refine or redesign to improve the algorithm",
    "meta": (
        "Now, imagine yourself as a prompt engineer, you give {model_name} a piece of"
        " optimization algorithm code, and you want {model_name} to modify it by x% (where x"
        " is a predefined number from 2 to 40, and indicated the code difference between the"
        " new one and the old one) exactly to improve the algorithm performance (meaning"
        " optimization convergence speed, not code efficiency, for example, by trying"
        " different mutation, selection, etc. strategies), what prompt would you give? Please"
        " give me at least 3 examples. Do not propose any specific directions or elements to"
        " change, since we want to cover the whole algorithm search space."
    ),
}

TASK_PROMPT = (
    "You are designing a metaheuristic optimizer for box-constrained"
    " single-objective minimization of a black-box function.\n"
    "\n"
    "Write one complete, self-contained Python program. It must define\n"
    "\n"
    "    def optimize(objective, dim, budget, lower, upper, seed):\n"
    "\n"
    "where `objective` is a callable taking a list of `dim` floats and"
    " returning the objective value as a float, `budget` is the maximum"
    " number of objective calls allowed, every proposed point should stay"
    " inside [lower, upper] in each coordinate, and `seed` must make the run"
    " fully reproducible.\n"
    "\n"
    "The program runs as a subprocess and talks line-delimited JSON on"
    " standard input/output. Keep the following protocol boilerplate at the"
    " end of the program exactly as given, so the program works when executed"
    " directly:\n"
    "\n"
    "```python\n" + CANDIDATE_MAIN_STANZA + "```\n"
    "\n"
    "Only the Python standard library and numpy may be imported. Reply with"
    " the full program in a single fenced code block and no text after it."
)

GENERATION_TEMPLATE = PromptTemplate(id="generation", kind="generation", body=TASK_PROMPT)


def builtin_bank() -> tuple[PromptTemplate, ...]:
    """The eleven rate-controlled mutation prompts, the baseline, and the meta-prompt."""
    templates = []
    for template_id, body in _BODIES.items():
        kind = "meta" if template_id == "meta" else "mutation"
        templates.append(PromptTemplate(id=template_id, kind=kind, body=body))
    return tuple(templates)


def bank_by_id(templates: Iterable[PromptTemplate]) -> dict[str, PromptTemplate]:
    bank = {}
    for template in templates:
        if template.id in bank:
            raise ValueError(f"duplicate template id {template.id!r}")
        bank[template.id] = template
    return bank


# ----- on-disk format -------------------------------------------------------
#
# One record per template:
#
#     id: prompt1
#     kind: mutation
#     body:
#     <body lines, verbatim, up to the separator>
#     ---
#
# Bodies may span many lines but must not contain a line that is exactly
# "---"; none of the built-ins do.

_SEPARATOR = "---"


def format_prompt_file(templates: Sequence[PromptTemplate]) -> str:
    chunks = []
    for template in templates:
        if any(line == _SEPARATOR for line in template.body.split("\n")):
            raise ValueError(f"template {template.id!r} body contains the record separator")
        chunks.append(f"id: {template.id}\nkind: {template.kind}\nbody:\n{template.body}\n{_SEPARATOR}\n")
    return "".join(chunks)


def dump_prompt_file(templates: Sequence[PromptTemplate], path: Path) -> None:
    Path(path).write_text(format_prompt_file(templates), encoding="utf-8")


def parse_prompt_file(text: str) -> tuple[PromptTemplate, ...]:
    templates = []
    lines = text.split("\n")
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        header: dict[str, str] = {}
        for key in ("id", "kind"):
            if pos >= len(lines) or not lines[pos].startswith(f"{key}: "):
                raise ValueError(f"expected '{key}: ...' at line {pos + 1}")
            header[key] = lines[pos][len(key) + 2 :].strip()
            pos += 1
        if pos >= len(lines) or lines[pos] != "body:":
            raise ValueError(f"expected 'body:' at line {pos + 1}")
        pos += 1
        body_lines = []
        while pos < len(lines) and lines[pos] != _SEPARATOR:
            body_lines.append(lines[pos])
            pos += 1
        if pos >= len(lines):
            raise ValueError(f"record {header['id']!r} is missing its closing separator")
        pos += 1  # consume the separator
        templates.append(PromptTemplate(id=header["id"], kind=header["kind"], body="\n".join(body_lines)))
    if not templates:
        raise ValueError("prompt file holds no templates")
    return tuple(templates)


def load_prompt_file(path: Path) -> tuple[PromptTemplate, ...]:
    return parse_prompt_file(Path(path).read_text(encoding="utf-8"))
