"""Prompt construction, description generation and pilot scoring.

The prompt carries the measured features plus lexicon vocabulary grouped by
dimension.  Descriptions come either from an HTTP chat-completions endpoint or
from a deterministic offline stub whose claims are constructed to satisfy
pilot_evaluate's consistency checks.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from string import Template

import requests

from .errors import (
    ConfigError,
    EmptyCompletionError,
    EndpointError,
    MissingFileError,
    NetworkError,
    ParseError,
    UnboundSlotError,
)
from .features import FeatureBundle

DIMENSIONS = ("color", "composition", "connotation")

_SLOTS = (
    "language", "mean_hue", "mean_saturation", "mean_lightness", "warm_ratio",
    "dominant_colors", "centroid_dx", "centroid_dy", "thirds_distance",
    "h_symmetry", "v_symmetry", "balance", "area_ratio", "region_count",
)

_DEFAULT_PROFILE_PATH = Path(__file__).resolve().parent / "data" / "default_profile.json"


def _template_slots(template: str) -> set[str]:
    names = set()
    for m in Template.pattern.finditer(template):
        name = m.group("named") or m.group("braced")
        if name:
            names.add(name)
        elif m.group("invalid") is not None:
            raise ParseError(f"malformed template placeholder near {m.group(0)!r}")
    return names


@dataclass(frozen=True)
class PromptProfile:
    lexicons: dict
    template: str
    required_dimensions: tuple[str, ...] = DIMENSIONS
    language: str = "en"

    def __post_init__(self):
        if set(self.lexicons) != set(DIMENSIONS):
            raise ConfigError(f"lexicons must cover exactly {DIMENSIONS}")
        for dim, terms in self.lexicons.items():
            if not terms:
                raise ConfigError(f"lexicon for {dim!r} is empty")
        object.__setattr__(self, "lexicons",
                           {d: tuple(self.lexicons[d]) for d in DIMENSIONS})
        object.__setattr__(self, "required_dimensions", tuple(self.required_dimensions))
        unknown = set(self.required_dimensions) - set(DIMENSIONS)
        if unknown:
            raise ConfigError(f"unknown required dimensions {sorted(unknown)}")
        bad = _template_slots(self.template) - set(_SLOTS)
        if bad:
            raise UnboundSlotError(f"template references unknown slots {sorted(bad)}")

    @classmethod
    def from_json(cls, path: str | Path) -> "PromptProfile":
        path = Path(path)
        if not path.exists():
            raise MissingFileError(f"no such profile: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if not isinstance(doc, dict) or "lexicons" not in doc or "template" not in doc:
            raise ParseError(f"{path}: profile needs 'lexicons' and 'template'")
        return cls(
            lexicons=doc["lexicons"],
            template=doc["template"],
            required_dimensions=tuple(doc.get("required_dimensions", DIMENSIONS)),
            language=doc.get("language", "en"),
        )


def default_profile() -> PromptProfile:
    return PromptProfile.from_json(_DEFAULT_PROFILE_PATH)


@dataclass(frozen=True)
class PromptText:
    text: str
    bindings: dict


@dataclass(frozen=True)
class Description:
    text: str
    generator: str
    prompt_hash: str
    timestamp: str


@dataclass(frozen=True)
class PilotScore:
    coverage: float
    consistency: float
    violations: tuple[str, ...]

    def __post_init__(self):
        if not (0.0 <= self.coverage <= 1.0 and 0.0 <= self.consistency <= 1.0):
            raise ValueError("coverage/consistency must lie in [0, 1]")


def build_prompt(bundle: FeatureBundle, profile: PromptProfile) -> PromptText:
    """Fill the profile template from the bundle; numbers rounded to 2 decimals."""
    c, comp = bundle.color, bundle.composition
    swatches = ", ".join(
        f"rgb({s.rgb[0]},{s.rgb[1]},{s.rgb[2]})~{s.weight:.2f}"
        for s in c.dominant_colors)
    bindings = {
        "language": profile.language,
        "mean_hue": f"{c.mean_hue:.2f}",
        "mean_saturation": f"{c.mean_saturation:.2f}",
        "mean_lightness": f"{c.mean_lightness:.2f}",
        "warm_ratio": f"{c.warm_ratio:.2f}",
        "dominant_colors": swatches,
        "centroid_dx": f"{comp.centroid_offset[0]:.2f}",
        "centroid_dy": f"{comp.centroid_offset[1]:.2f}",
        "thirds_distance": f"{comp.thirds_distance:.2f}",
        "h_symmetry": f"{comp.h_symmetry:.2f}",
        "v_symmetry": f"{comp.v_symmetry:.2f}",
        "balance": f"{comp.balance:.2f}",
        "area_ratio": f"{comp.area_ratio:.2f}",
        "region_count": str(comp.region_count),
    }
    try:
        text = Template(profile.template).substitute(bindings)
    except KeyError as exc:
        raise UnboundSlotError(f"template references unbound slot {exc}") from None
    except ValueError as exc:
        raise ParseError(f"bad template: {exc}") from None
    if profile.required_dimensions:
        lines = ["", "Use vocabulary from these dimensions where it fits:"]
        for dim in profile.required_dimensions:
            lines.append(f"- {dim}: {', '.join(profile.lexicons[dim])}")
        text += "\n".join(lines) + "\n"
    return PromptText(text=text, bindings=bindings)


# --- description generation ---

@dataclass
class LLMEndpointConfig:
    url: str | None = None
    model: str = "default"
    stub: bool = False
    api_key_env: str = "COVIS_LLM_API_KEY"
    url_env: str = "COVIS_LLM_URL"
    response_path: tuple = ("choices", 0, "message", "content")
    timeout: float = 30.0
    max_tries: int = 5
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    max_in_flight: int = 4
    _gate: threading.BoundedSemaphore = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.max_tries < 1 or self.max_in_flight < 1:
            raise ConfigError("max_tries and max_in_flight must be >= 1")
        self._gate = threading.BoundedSemaphore(self.max_in_flight)


def _stub_text(bindings: dict) -> str:
    """Deterministic description from the rounded prompt bindings.

    Every claim stays on the safe side of pilot_evaluate's thresholds after
    2-decimal rounding, so stub output always scores (1.0, 1.0, []).
    """
    warm = float(bindings["warm_ratio"])
    sym = max(float(bindings["h_symmetry"]), float(bindings["v_symmetry"]))
    tone = "bright" if float(bindings["mean_lightness"]) >= 0.5 else "dull"
    lead = bindings["dominant_colors"].split(", ")[0]
    first = f"A {tone} image"
    if warm > 0.5:
        first += " with warm tones"
    elif warm < 0.5:
        first += " with cool tones"
    first += f", led by {lead}."
    terms = []
    if sym > 0.7:
        terms.append("symmetrical")
    if float(bindings["balance"]) > 0.7:
        terms.append("balanced")
    if float(bindings["thirds_distance"]) < 0.15:
        terms.append("dynamic")
    if not terms:
        terms = ["static"]
    second = "The composition feels " + " and ".join(terms) + "."
    third = ("Overall the scene reads as "
             + ("realistic" if int(bindings["region_count"]) > 0 else "abstract") + ".")
    return " ".join((first, second, third))


def _walk(doc, path):
    for step in path:
        try:
            doc = doc[step]
        except (KeyError, IndexError, TypeError):
            raise EmptyCompletionError(
                f"no completion text at response path {list(path)}") from None
    return doc


def generate_description(prompt: PromptText, endpoint: LLMEndpointConfig,
                         _sleep=time.sleep) -> Description:
    stamp = datetime.now(timezone.utc).isoformat()
    digest = hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()
    if endpoint.stub:
        return Description(text=_stub_text(prompt.bindings), generator="stub",
                           prompt_hash=digest, timestamp=stamp)

    url = endpoint.url or os.environ.get(endpoint.url_env)
    if not url:
        raise ConfigError(
            f"no endpoint URL: pass one or set {endpoint.url_env}")
    headers = {}
    key = os.environ.get(endpoint.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {"model": endpoint.model,
            "messages": [{"role": "user", "content": prompt.text}]}

    with endpoint._gate:
        for attempt in range(endpoint.max_tries):
            try:
                resp = requests.post(url, json=body, headers=headers,
                                     timeout=endpoint.timeout)
            except requests.RequestException as exc:
                raise NetworkError(f"POST {url} failed: {exc}") from None
            if resp.status_code == 429 and attempt < endpoint.max_tries - 1:
                _sleep(endpoint.backoff_base * endpoint.backoff_factor ** attempt)
                continue
            break
    if resp.status_code >= 400:
        raise EndpointError(resp.status_code, resp.text)
    try:
        doc = resp.json()
    except ValueError:
        raise EmptyCompletionError("response body is not JSON") from None
    text = _walk(doc, endpoint.response_path)
    if not isinstance(text, str) or not text.strip():
        raise EmptyCompletionError("endpoint returned empty completion")
    return Description(text=text, generator=endpoint.model,
                       prompt_hash=digest, timestamp=stamp)


# --- pilot evaluation ---

def _mentioned(term: str, text: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(term.lower())}(?!\w)", text.lower()) is not None


def pilot_evaluate(description: Description, bundle: FeatureBundle,
                   profile: PromptProfile) -> PilotScore:
    """Score a description against the bundle it was generated from."""
    text = description.text
    required = profile.required_dimensions
    if required:
        hit = sum(
            1 for dim in required
            if any(_mentioned(term, text) for term in profile.lexicons[dim]))
        coverage = hit / len(required)
    else:
        coverage = 1.0

    c, comp = bundle.color, bundle.composition
    checks = (
        ("warm", c.warm_ratio > 0.5,
         f"'warm' claim but warm_ratio={c.warm_ratio:.3f} <= 0.5"),
        ("cool", c.warm_ratio < 0.5,
         f"'cool' claim but warm_ratio={c.warm_ratio:.3f} >= 0.5"),
        ("symmetrical", max(comp.h_symmetry, comp.v_symmetry) > 0.7,
         f"'symmetrical' claim but max symmetry="
         f"{max(comp.h_symmetry, comp.v_symmetry):.3f} <= 0.7"),
        ("balanced", comp.balance > 0.7,
         f"'balanced' claim but balance={comp.balance:.3f} <= 0.7"),
        ("dynamic", comp.thirds_distance < 0.15,
         f"'dynamic' claim but thirds_distance={comp.thirds_distance:.3f} >= 0.15"),
    )
    checked = passed = 0
    violations = []
    for term, ok, note in checks:
        if _mentioned(term, text):
            checked += 1
            if ok:
                passed += 1
            else:
                violations.append(note)
    consistency = passed / checked if checked else 1.0
    return PilotScore(coverage=coverage, consistency=consistency,
                      violations=tuple(violations))
