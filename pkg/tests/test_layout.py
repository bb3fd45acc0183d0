import json

import pytest

from cavforge.errors import LayoutError
from cavforge.layout import (apply_overrides, build_workspace, default_layout,
                             load_layout, validate_layout)
from cavforge.simcore import ComponentKind, new_workspace


def _valid():
    return default_layout()


def test_default_layout_validates():
    layout = validate_layout(_valid())
    assert layout.seed == 42
    assert layout.placement_noise_sigma == 0.1
    assert len(layout.records) == 11
    assert layout.record("lens").params["focal_length_mm"] == 100.0
    assert layout.raw == _valid()


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.update(extra=1), "unknown layout fields"),
    (lambda d: d.update(schema_version=99), "schema_version"),
    (lambda d: d.update(seed="42"), "seed must be an integer"),
    (lambda d: d.update(seed=True), "seed must be an integer"),
    (lambda d: d.update(placement_noise_sigma_mm=-0.1), "placement_noise_sigma_mm"),
    (lambda d: d.update(tilt_per_turn_deg=0.0), "tilt_per_turn_deg"),
    (lambda d: d.update(table_bounds_mm=[[0, 0], [-1, 1]]), "increasing"),
    (lambda d: d.update(table_bounds_mm="wide"), "table_bounds_mm"),
    (lambda d: d.update(physics=[1]), "physics must be an object"),
    (lambda d: d["physics"].update(gravity=9.8), "unknown physics fields"),
    (lambda d: d.update(components=[]), "non-empty list"),
])
def test_top_level_validation(mutate, message):
    data = _valid()
    mutate(data)
    with pytest.raises(LayoutError, match=message):
        validate_layout(data)


def _component(data, cid):
    return next(c for c in data["components"] if c["id"] == cid)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: _component(d, "lens").update(id="pump"), "duplicate component id"),
    (lambda d: _component(d, "lens").update(id=""), "non-empty string id"),
    (lambda d: _component(d, "lens").update(kind="Prism"), "unknown kind"),
    (lambda d: _component(d, "lens").update(color="red"), "unknown fields"),
    (lambda d: _component(d, "lens")["params"].update(tint=1), "unknown params"),
    (lambda d: _component(d, "lens")["params"].pop("focal_length_mm"),
     "needs focal_length_mm"),
    (lambda d: _component(d, "lens")["params"].update(focal_length_mm=0),
     "focal_length_mm"),
    (lambda d: _component(d, "ndf")["params"].update(transmittance=0.0),
     "transmittance"),
    (lambda d: _component(d, "ndf")["params"].update(transmittance=1.5),
     "transmittance"),
    (lambda d: _component(d, "bs")["params"].update(split_ratio=1.0),
     "split_ratio"),
    (lambda d: _component(d, "oc")["params"].update(pump_transmission=0.8,
                                                    pump_reflectivity=0.5),
     "pump_transmission"),
    (lambda d: _component(d, "cam1")["params"].update(width_px=3.5),
     "width_px"),
    (lambda d: _component(d, "cam1")["params"].update(pixel_pitch_mm=0),
     "pixel_pitch_mm"),
    (lambda d: _component(d, "pump").update(nominal_x_mm=float("nan")),
     "finite number"),
])
def test_component_validation(mutate, message):
    data = _valid()
    mutate(data)
    with pytest.raises(LayoutError, match=message):
        validate_layout(data)


def test_exactly_one_pump_required():
    data = _valid()
    data["components"] = [c for c in data["components"] if c["id"] != "pump"]
    with pytest.raises(LayoutError, match="exactly one PumpSource"):
        validate_layout(data)
    data = _valid()
    clone = dict(_component(data, "pump"), id="pump2")
    data["components"].append(clone)
    with pytest.raises(LayoutError, match="exactly one PumpSource"):
        validate_layout(data)


def test_load_layout_file_round_trip(tmp_path):
    path = tmp_path / "table.json"
    path.write_text(json.dumps(_valid()))
    layout = load_layout(path)
    assert layout.raw == _valid()
    with pytest.raises(LayoutError, match="not valid JSON"):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        load_layout(bad)
    with pytest.raises(LayoutError, match="cannot read"):
        load_layout(tmp_path / "missing.json")


def test_apply_overrides_paths_and_values():
    data = apply_overrides(_valid(), [
        "seed=7",
        "physics.slope_efficiency=0.25",
        "components.lens.params.focal_length_mm=120",
        "components.ndf.params.transmittance=0.02",
    ])
    layout = validate_layout(data)
    assert layout.seed == 7
    assert layout.physics.slope_efficiency == 0.25
    assert layout.record("lens").params["focal_length_mm"] == 120
    assert layout.record("ndf").params["transmittance"] == 0.02
    # unquoted non-JSON stays a string
    data = apply_overrides(_valid(), ["components.bpf.params.passband=laser"])
    assert _component(data, "bpf")["params"]["passband"] == "laser"


def test_apply_overrides_rejects_bad_paths():
    with pytest.raises(LayoutError, match="key=value"):
        apply_overrides(_valid(), ["seed"])
    with pytest.raises(LayoutError, match="no component with id"):
        apply_overrides(_valid(), ["components.ghost.params.x=1"])
    with pytest.raises(LayoutError, match="ends on a list"):
        apply_overrides(_valid(), ["components.lens=1"])


def test_apply_overrides_does_not_mutate_input():
    data = _valid()
    apply_overrides(data, ["seed=9"])
    assert data["seed"] == 42


def test_template_knobs_follow_layout():
    data = _valid()
    data["tilt_per_turn_deg"] = 0.25
    layout = validate_layout(data)
    oc = layout.template("oc")
    assert oc.knobs.tilt_per_turn_deg == 0.25
    assert (oc.knobs.h_deg, oc.knobs.v_deg) == (0.0, 0.0)
    assert layout.template("ndf").knobs is None
    with pytest.raises(LayoutError):
        layout.template("ghost")


def test_build_workspace_bolts_down_only_the_pump():
    layout = validate_layout(_valid())
    ws = build_workspace(layout)
    assert [c.id for c in ws.components] == ["pump"]
    pose = ws.component("pump").pose
    assert (pose.x, pose.y) == (0.0, 0.0)
    assert pose.yaw == pytest.approx(0.02)
    assert ws.placement_noise_sigma == 0.1
    assert ws.physics is layout.physics
    # seed override swaps the noise stream, default uses the layout seed
    assert build_workspace(layout).rng_state == new_workspace(42).rng_state
    assert build_workspace(layout, 7).rng_state == new_workspace(7).rng_state
