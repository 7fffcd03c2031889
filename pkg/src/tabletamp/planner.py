"""Task planner and reflector backends.

Two interchangeable backends produce plan skeletons: a deterministic
scripted planner that walks a scenario's ordered fallback-plan list (naive
plan first, informed plans later), and an HTTP client for any
chat-completions-style model endpoint. Both validate their skeletons
symbolically before returning them.

The scripted reflector keys a one-line insight off (error kind, failed step
kind) and advances to the next fallback plan, reproducing the
naive-fails-then-informed-plan-succeeds loop without any model endpoint.
"""

from __future__ import annotations

import base64
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from .control import ErrorKind, ExecError
from .domain import (
    ObjectState,
    PlanSkeleton,
    PrimitiveKind,
    SymbolicState,
    parse_skeleton,
    primitive_definitions_text,
    validate_skeleton,
)

API_KEY_ENV = "TABLETAMP_API_KEY"
_PROMPTS_DIR = Path(__file__).parent / "prompts"


class PlannerUnavailable(Exception):
    """The model endpoint failed or kept returning unusable skeletons."""


class NoMorePlans(Exception):
    """The scripted fallback-plan list is exhausted."""


@dataclass(frozen=True)
class Observation:
    """What the planner sees: a rendering plus a symbolic scene summary."""

    rendering: str  # top-down SVG
    summary: dict  # per-object {pose, on_feature, graspable, is_tool, held}
    instruction: str

    def symbolic_state(self) -> SymbolicState:
        objects = {}
        gripper_free = True
        for oid, info in self.summary.get("objects", {}).items():
            held = bool(info.get("held", False))
            gripper_free = gripper_free and not held
            objects[oid] = ObjectState(
                held=held,
                on_feature=info.get("on_feature"),
                is_tool=bool(info.get("is_tool", False)),
            )
        return SymbolicState(objects, gripper_free=gripper_free)


@dataclass(frozen=True)
class ReflectionInput:
    error: ExecError
    observation: Observation
    failed_plan: PlanSkeleton
    history: tuple[str, ...] = ()

    def __post_init__(self):
        if self.error.step is not None and self.error.step not in self.failed_plan.steps:
            raise ValueError("the failing step must belong to the failed plan")


@dataclass(frozen=True)
class PlannerConfig:
    backend: str = "scripted"  # "scripted" | "http"
    endpoint: str = ""
    model: str = ""
    timeout_s: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    prompts_dir: str = ""

    def __post_init__(self):
        if self.backend not in ("scripted", "http"):
            raise ValueError(f"unknown planner backend {self.backend!r}")
        if self.backend == "http" and not self.endpoint:
            raise ValueError("http backend requires an endpoint URL")


# a fallback entry builds a concrete skeleton from the current observation,
# binding randomized goal poses and scene-derived hints at plan time
FallbackBuilder = Callable[[Observation], PlanSkeleton]


# insight strings keyed by (error kind, failed primitive kind)
INSIGHT_RULES: dict[tuple[ErrorKind, PrimitiveKind], str] = {
    (ErrorKind.NO_GRASP_FOUND, PrimitiveKind.GRASP):
        "object ungraspable in place; create overhang or raise it",
    (ErrorKind.OUT_OF_REACH, PrimitiveKind.GRASP):
        "the object is out of reach; use a tool to extend reach or pull it closer",
    (ErrorKind.OUT_OF_REACH, PrimitiveKind.PUSH):
        "the push contact is out of reach; use a tool to extend reach",
    (ErrorKind.IK_FAILURE, PrimitiveKind.MOVETO):
        "the placement target is beyond reach; put the object down and push it "
        "there with a tool",
    (ErrorKind.COLLISION, PrimitiveKind.GRASP):
        "the grasp approach is blocked from above; tilt or slide the object out "
        "of the enclosure first",
    (ErrorKind.COLLISION, PrimitiveKind.MOVETO):
        "the transport or placement is blocked; choose a clearer approach",
    (ErrorKind.COLLISION, PrimitiveKind.ROTATE):
        "the flip sweeps into the enclosure; use a reduced flip and grasp the "
        "exposed part",
    (ErrorKind.COLLISION, PrimitiveKind.PUSH):
        "the push approach is blocked; free the object along another direction",
    (ErrorKind.CONVERGENCE_TIMEOUT, PrimitiveKind.PUSH):
        "pushing stalled against an obstacle; the target cannot be reached by "
        "planar pushing alone",
    (ErrorKind.CONVERGENCE_TIMEOUT, PrimitiveKind.ROTATE):
        "the rotation never crossed the balance point; try a different strategy",
    (ErrorKind.OBJECT_LOST, PrimitiveKind.PUSH):
        "the object toppled or fell during pushing; keep farther from edges "
        "and drops",
}


def insight_for(error: ExecError) -> str:
    step_kind = error.step.kind if error.step is not None else None
    if step_kind is not None:
        rule = INSIGHT_RULES.get((error.kind, step_kind))
        if rule is not None:
            return rule
    where = f" at {error.step.describe()}" if error.step is not None else ""
    return f"execution failed ({error.kind.value}){where}; revise the plan"


def _checked(skeleton: PlanSkeleton, obs: Observation, source: str) -> PlanSkeleton:
    violations = validate_skeleton(skeleton, obs.symbolic_state())
    if violations:
        raise ValueError(
            f"{source} produced a symbolically invalid skeleton: "
            + "; ".join(str(v) for v in violations)
        )
    return skeleton


class ScriptedPlanner:
    """Deterministic planner over a scenario's ordered fallback-plan list.

    Entry 0 is the naive direct plan; each reflection advances to the next
    entry. A pure function of (fallback list, attempt index): identical
    inputs give identical skeletons.
    """

    def __init__(self, fallbacks: list[FallbackBuilder]):
        if not fallbacks:
            raise ValueError("scripted planner needs at least one fallback plan")
        self._fallbacks = list(fallbacks)
        self.attempt = 0

    def plan(self, obs: Observation) -> PlanSkeleton:
        builder = self._fallbacks[self.attempt]
        skeleton = builder(obs)
        if skeleton.revision != self.attempt:
            skeleton = PlanSkeleton(skeleton.steps, revision=self.attempt,
                                    rationale=skeleton.rationale)
        return _checked(skeleton, obs, "scripted planner")

    def reflect(self, inp: ReflectionInput) -> tuple[str, PlanSkeleton]:
        insight = insight_for(inp.error)
        self.attempt += 1
        if self.attempt >= len(self._fallbacks):
            raise NoMorePlans(
                f"fallback plans exhausted after attempt {self.attempt}"
            )
        builder = self._fallbacks[self.attempt]
        skeleton = builder(inp.observation)
        skeleton = PlanSkeleton(skeleton.steps,
                                revision=inp.failed_plan.revision + 1,
                                rationale=skeleton.rationale or insight)
        return insight, _checked(skeleton, inp.observation, "scripted reflector")


# ---------------------------------------------------------------------------
# http backend
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_fenced_block(text: str) -> str:
    """The single fenced schema block of a model reply; prose is ignored."""
    blocks = _FENCE_RE.findall(text)
    if len(blocks) != 1:
        raise ValueError(f"expected exactly one fenced block, found {len(blocks)}")
    return blocks[0].strip()


def _load_template(name: str, prompts_dir: str = "") -> str:
    base = Path(prompts_dir) if prompts_dir else _PROMPTS_DIR
    return (base / f"{name}.txt").read_text(encoding="utf-8")


def _svg_data_uri(svg: str) -> str:
    payload = base64.b64encode(svg.encode("utf-8")).decode("ascii")
    return f"data:image/svg+xml;base64,{payload}"


class HttpPlanner:
    """Chat-completions client for plan generation and reflection.

    Each request carries the primitive catalog, the instruction, and the
    rendered observation as an image part. Replies must contain exactly one
    fenced JSON block with the skeleton schema; invalid replies are retried
    up to max_retries before PlannerUnavailable is raised. The API key comes
    from the environment and is never logged.
    """

    def __init__(self, cfg: PlannerConfig, session: requests.Session | None = None):
        if cfg.backend != "http":
            raise ValueError("HttpPlanner requires an http backend config")
        self.cfg = cfg
        self._session = session or requests.Session()
        self.last_attempts = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _chat(self, prompt: str, images: list[str]) -> str:
        content: list[dict] = [{"type": "text", "text": prompt}]
        for svg in images:
            content.append(
                {"type": "image_url", "image_url": {"url": _svg_data_uri(svg)}}
            )
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.cfg.temperature,
        }
        resp = self._session.post(
            self.cfg.endpoint, json=payload, headers=self._headers(),
            timeout=self.cfg.timeout_s,
        )
        resp.raise_for_status()
        data = resp.json()
        return data["choices"][0]["message"]["content"]

    def _request_skeleton(self, prompt: str, images: list[str],
                          obs: Observation, revision: int) -> PlanSkeleton:
        errors: list[str] = []
        self.last_attempts = 0
        for _attempt in range(self.cfg.max_retries + 1):
            self.last_attempts += 1
            try:
                reply = self._chat(prompt, images)
                block = extract_fenced_block(reply)
                skeleton = parse_skeleton(block)
                skeleton = PlanSkeleton(skeleton.steps, revision=revision,
                                        rationale=skeleton.rationale)
                return _checked(skeleton, obs, "http planner")
            except Exception as exc:  # noqa: BLE001 - every failure is retryable
                errors.append(f"{type(exc).__name__}: {exc}")
        raise PlannerUnavailable(
            f"no usable skeleton after {self.last_attempts} attempts: "
            + " | ".join(errors)
        )

    def plan(self, obs: Observation) -> PlanSkeleton:
        prompt = _load_template("planner", self.cfg.prompts_dir)
        prompt = (
            prompt.replace("{PRIMITIVES}", primitive_definitions_text())
            .replace("{OBSERVATION}", json.dumps(obs.summary, sort_keys=True))
            .replace("{INSTRUCTION}", obs.instruction)
        )
        return self._request_skeleton(prompt, [obs.rendering], obs, revision=0)

    def reflect(self, inp: ReflectionInput) -> tuple[str, PlanSkeleton]:
        prompt = _load_template("reflector", self.cfg.prompts_dir)
        obs = inp.observation
        prompt = (
            prompt.replace("{PRIMITIVES}", primitive_definitions_text())
            .replace("{FAILED_PLAN}", inp.failed_plan.describe())
            .replace("{FAILED_STEP}",
                     inp.error.step.describe() if inp.error.step else "?")
            .replace("{ERROR}", f"{inp.error.kind.value}: {inp.error.message}")
            .replace("{OBSERVATION}", json.dumps(obs.summary, sort_keys=True))
            .replace("{HISTORY}", "\n".join(inp.history) or "(none)")
            .replace("{INSTRUCTION}", obs.instruction)
        )
        skeleton = self._request_skeleton(
            prompt, [obs.rendering], obs, revision=inp.failed_plan.revision + 1
        )
        return insight_for(inp.error), skeleton


def selector_llm(cfg: PlannerConfig, instruction: str):
    """Adapter making the http backend usable as a sub-goal selector."""
    planner = HttpPlanner(cfg)

    def ask(images: list[str], context: dict) -> str:
        prompt = _load_template("selector", cfg.prompts_dir)
        current = context.get("current")
        nxt = context.get("next")
        prompt = (
            prompt.replace("{CURRENT}", current.describe() if current else "(none)")
            .replace("{NEXT}", nxt.describe() if nxt else "(none)")
            .replace("{INSTRUCTION}", instruction)
        )
        return planner._chat(prompt, images)

    return ask


def make_planner(cfg: PlannerConfig, fallbacks: list[FallbackBuilder] | None = None):
    if cfg.backend == "scripted":
        if not fallbacks:
            raise ValueError("scripted backend needs the scenario's fallback plans")
        return ScriptedPlanner(fallbacks)
    return HttpPlanner(cfg)
