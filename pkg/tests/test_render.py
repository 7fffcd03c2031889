from tabletamp.geometry import Pose6D, rect_polygon
from tabletamp.render import render_scene

from tests.test_twin import TABLE_H, base_scene, make_box


class TestRenderScene:
    def test_deterministic_text(self):
        scene = base_scene([make_box(), make_box("second", x=0.2, yaw=0.4)])
        a = render_scene(scene, caption="check")
        b = render_scene(scene, caption="check")
        assert a == b
        assert a.startswith("<svg") and a.rstrip().endswith("</svg>")

    def test_candidate_drawn_solid_current_translucent(self):
        scene = base_scene([make_box()])
        candidate = Pose6D((0.1, 0.1, TABLE_H + 0.05))
        svg = render_scene(scene, highlight={"box": candidate})
        assert 'fill-opacity="0.35"' in svg  # current pose fades out
        assert "box candidate" in svg

    def test_goal_markers(self):
        scene = base_scene([make_box()])
        svg = render_scene(
            scene,
            goal_pose=("box", Pose6D((0.2, 0.0, TABLE_H + 0.05))),
            goal_zone=rect_polygon(0.0, 0.2, 0.08, 0.08),
        )
        assert "stroke-dasharray" in svg
        assert "target zone" in svg

    def test_object_order_stable_regardless_of_input_order(self):
        a = base_scene([make_box("a", x=-0.1), make_box("b", x=0.1)])
        b = base_scene([make_box("b", x=0.1), make_box("a", x=-0.1)])
        assert render_scene(a) == render_scene(b)
