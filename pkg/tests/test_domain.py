import json

import numpy as np
import pytest

from tabletamp.domain import (
    ObjectState,
    PlanSkeleton,
    PrimitiveInstance,
    PrimitiveKind,
    RegionDescriptor,
    SkeletonParseError,
    SymbolicState,
    apply_effects,
    invert_effects,
    parse_skeleton,
    primitive_schema,
    serialize_skeleton,
    validate_skeleton,
)
from tabletamp.geometry import Pose6D, quat_from_yaw


def state(objects=("box",), held=None, tools=()):
    return SymbolicState(
        {
            oid: ObjectState(held=(oid == held), is_tool=(oid in tools))
            for oid in objects
        },
        gripper_free=held is None,
    )


def step(kind, obj="box", region="target_zone"):
    reg = RegionDescriptor(region) if kind in (
        PrimitiveKind.PUSH, PrimitiveKind.ROTATE, PrimitiveKind.MOVETO
    ) else None
    return PrimitiveInstance(kind, obj, region=reg)


class TestPrimitiveSchema:
    def test_grasp_requires_free_gripper(self):
        schema = primitive_schema(PrimitiveKind.GRASP)
        assert "gripper_free" in schema["preconditions"]
        assert "held(o)" in schema["effects"]

    def test_exactly_five_kinds(self):
        assert len(PrimitiveKind) == 5
        assert {k.value for k in PrimitiveKind} == {
            "push", "rotate", "grasp", "moveto", "release"
        }

    def test_release_on_unheld_object_violates(self):
        sk = PlanSkeleton((step(PrimitiveKind.RELEASE),))
        violations = validate_skeleton(sk, state())
        assert violations and violations[0].step_index == 0
        assert "held(box)" in violations[0].predicate

    def test_push_while_holding_target_violates(self):
        sk = PlanSkeleton((step(PrimitiveKind.PUSH),))
        violations = validate_skeleton(sk, state(held="box"))
        assert any("not held(box)" in v.predicate for v in violations)

    def test_push_while_holding_tool_is_fine(self):
        sk = PlanSkeleton((step(PrimitiveKind.PUSH, obj="box"),))
        st = state(objects=("box", "hook"), held="hook", tools=("hook",))
        assert validate_skeleton(sk, st) == []

    def test_push_while_holding_non_tool_violates(self):
        sk = PlanSkeleton((step(PrimitiveKind.PUSH, obj="box"),))
        st = state(objects=("box", "cup"), held="cup")
        violations = validate_skeleton(sk, st)
        assert any("tool" in v.predicate for v in violations)


class TestValidateSkeleton:
    def test_grasp_move_release_ok(self):
        sk = PlanSkeleton((
            step(PrimitiveKind.GRASP),
            step(PrimitiveKind.MOVETO),
            step(PrimitiveKind.RELEASE),
        ))
        assert validate_skeleton(sk, state()) == []

    def test_moveto_without_grasp_violates_at_step_zero(self):
        sk = PlanSkeleton((step(PrimitiveKind.MOVETO),))
        violations = validate_skeleton(sk, state())
        assert violations[0].step_index == 0
        assert "held(box)" in violations[0].predicate

    def test_push_to_edge_then_grasp_ok(self):
        sk = PlanSkeleton((
            PrimitiveInstance(PrimitiveKind.PUSH, "card",
                              region=RegionDescriptor("table_edge_nearest")),
            PrimitiveInstance(PrimitiveKind.GRASP, "card"),
            PrimitiveInstance(PrimitiveKind.MOVETO, "card",
                              region=RegionDescriptor("target_zone")),
            PrimitiveInstance(PrimitiveKind.RELEASE, "card"),
        ))
        assert validate_skeleton(sk, state(objects=("card",))) == []

    def test_unknown_object_flagged(self):
        sk = PlanSkeleton((step(PrimitiveKind.GRASP, obj="ghost"),))
        violations = validate_skeleton(sk, state())
        assert "unknown object" in violations[0].predicate

    def test_prefix_monotone(self):
        rng = np.random.default_rng(31)
        kinds = list(PrimitiveKind)
        for _ in range(100):
            n = rng.integers(1, 7)
            steps = tuple(
                step(kinds[int(rng.integers(0, len(kinds)))]) for _ in range(n)
            )
            sk = PlanSkeleton(steps)
            if validate_skeleton(sk, state()) == []:
                for cut in range(1, n + 1):
                    prefix = PlanSkeleton(steps[:cut])
                    assert validate_skeleton(prefix, state()) == []

    def test_grasp_release_restores_state(self):
        st = state()
        grasp = step(PrimitiveKind.GRASP)
        release = step(PrimitiveKind.RELEASE)
        after = apply_effects(release, apply_effects(grasp, st))
        assert after == st

    def test_invert_effects_roundtrip(self):
        # inversion from a state satisfying the step's preconditions
        for kind in PrimitiveKind:
            held = "box" if kind in (PrimitiveKind.MOVETO, PrimitiveKind.RELEASE) else None
            st = state(held=held)
            s = step(kind)
            forward = apply_effects(s, st)
            assert invert_effects(s, forward) == st


class TestWireFormat:
    def test_minimal_grasp_document(self):
        sk = parse_skeleton(json.dumps({
            "steps": [{"kind": "grasp", "object_id": "box"}],
        }))
        assert len(sk.steps) == 1
        assert sk.steps[0].kind is PrimitiveKind.GRASP
        assert sk.revision == 0

    def test_unknown_kind_rejected_with_path(self):
        doc = json.dumps({"steps": [
            {"kind": "grasp", "object_id": "box"},
            {"kind": "slide", "object_id": "box"},
        ]})
        with pytest.raises(SkeletonParseError) as err:
            parse_skeleton(doc)
        assert "steps[1]" in str(err.value)
        assert "slide" in str(err.value)

    def test_push_without_region_rejected(self):
        doc = json.dumps({"steps": [{"kind": "push", "object_id": "card"}]})
        with pytest.raises(SkeletonParseError) as err:
            parse_skeleton(doc)
        assert "region" in str(err.value)

    def test_round_trip_random_skeletons(self):
        rng = np.random.default_rng(37)
        kinds = list(PrimitiveKind)
        for _ in range(200):
            steps = []
            for _ in range(int(rng.integers(1, 6))):
                kind = kinds[int(rng.integers(0, len(kinds)))]
                region = None
                hint = None
                if kind in (PrimitiveKind.PUSH, PrimitiveKind.ROTATE, PrimitiveKind.MOVETO):
                    if rng.random() < 0.5:
                        region = RegionDescriptor(
                            f"region_{rng.integers(0, 5)}", refinement="nearest"
                        )
                    else:
                        hint = Pose6D(
                            tuple(rng.uniform(-0.4, 0.4, size=3)),
                            quat_from_yaw(rng.uniform(-3, 3)),
                        )
                steps.append(PrimitiveInstance(kind, f"obj{rng.integers(0, 3)}",
                                               region=region, target_pose_hint=hint))
            sk = PlanSkeleton(tuple(steps), revision=int(rng.integers(0, 4)),
                              rationale="r")
            text = serialize_skeleton(sk)
            back = parse_skeleton(text)
            assert serialize_skeleton(back) == text
            assert back == sk

    def test_invalid_json_rejected(self):
        with pytest.raises(SkeletonParseError):
            parse_skeleton("{not json")

    def test_empty_steps_rejected(self):
        with pytest.raises(SkeletonParseError):
            parse_skeleton(json.dumps({"steps": []}))
