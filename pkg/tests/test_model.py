import copy
import math

import numpy as np
import pytest

import stridesim as ss
from stridesim.model import (
    ModelParseError,
    ModelValidationError,
    interval_coverage,
    model_from_dict,
)

DEG = math.pi / 180.0


def test_default_model_total_mass(model):
    assert abs(model.total_mass() - 16.0) <= 0.1
    assert model.total_mass() == pytest.approx(16.0, abs=1e-9)


def test_default_model_structure(model):
    assert len(model.joints) == 12
    names = [j.name.split("_", 1)[1] for j in model.joints[:6]]
    assert names == ["HR", "HAA", "HFE", "KFE", "FFE", "FAA"]
    # tree: every body's parent has a smaller index (no loops)
    parents = model.arrays().parent
    assert parents[0] == -1
    assert all(parents[b] < b for b in range(1, 13))


def test_kfe_limits(model):
    j = model.joint("left_KFE")
    assert j.limit_lo == pytest.approx(0.0)
    assert j.limit_hi == pytest.approx(120.0 * DEG)
    j = model.joint("right_FFE")
    assert j.limit_lo == pytest.approx(-30.0 * DEG)
    assert j.limit_hi == pytest.approx(70.0 * DEG)


def test_negative_mass_rejected(model_dict):
    bad = copy.deepcopy(model_dict)
    bad["leg"]["chain"][2]["mass"] = -1.0
    with pytest.raises(ModelValidationError) as e:
        model_from_dict(bad)
    assert any("leg.chain[2].mass" in v for v in e.value.violations)


def test_non_spd_inertia_rejected(model_dict):
    bad = copy.deepcopy(model_dict)
    bad["leg"]["chain"][0]["inertia_diag"] = [1e-4, -1e-4, 1e-4]
    with pytest.raises(ModelValidationError) as e:
        model_from_dict(bad)
    assert any("inertia" in v for v in e.value.violations)


def test_total_mass_invariant_enforced(model_dict):
    bad = copy.deepcopy(model_dict)
    bad["base"]["mass"] = 3.0
    with pytest.raises(ModelValidationError) as e:
        model_from_dict(bad)
    assert any("total mass" in v for v in e.value.violations)


def test_missing_file():
    with pytest.raises(ModelParseError):
        ss.load_model("/nonexistent/robot.yaml")


def test_actuator_assignment(model):
    assert ss.actuator_for_joint(model, "left_HFE").peak_torque == 62.6
    assert ss.actuator_for_joint(model, "left_KFE").peak_torque == 81.1
    assert ss.actuator_for_joint(model, "right_FAA").rotor_inertia == 6.1e-6
    for side in ("left", "right"):
        for jn, act in (("HR", "8513"), ("HAA", "8513"), ("HFE", "8518"),
                        ("KFE", "10413"), ("FFE", "8513"), ("FAA", "5013")):
            assert ss.actuator_for_joint(model, f"{side}_{jn}").name == act
    with pytest.raises(KeyError):
        ss.actuator_for_joint(model, "left_ELBOW")


def test_reflected_armature(model):
    a10413 = model.actuator_types["10413"]
    assert abs(ss.reflected_armature(a10413) - 1.215e-2) <= 1e-15
    a5013 = model.actuator_types["5013"]
    assert abs(ss.reflected_armature(a5013) - 4.941e-4) <= 1e-15
    zero = ss.ActuatorSpec("test", 9.0, 1.0, 0.5, 1.0, 0.0)
    assert ss.reflected_armature(zero) == 0.0


def test_couple_positions_identity():
    c = ss.TransmissionCoupling(("KFE", "FFE"), np.eye(2))
    out = ss.couple_positions(c, np.array([0.3, -0.1]))
    np.testing.assert_array_equal(out, [0.3, -0.1])


def test_couple_positions_default(model):
    c = model.couplings[0]
    out = ss.couple_positions(c, np.array([0.5, 0.5]))
    np.testing.assert_allclose(out, [0.5, 0.0], atol=1e-15)


def test_coupling_power_conservation(rng):
    for _ in range(50):
        T = rng.normal(size=(2, 2))
        if abs(np.linalg.det(T)) < 0.1:
            continue
        c = ss.TransmissionCoupling(("KFE", "FFE"), T)
        qd_act = rng.normal(size=2)
        tau_joint = rng.normal(size=2)
        qd_joint = ss.couple_positions(c, qd_act)
        tau_act = ss.couple_torques(c, tau_joint)
        assert abs(tau_act @ qd_act - tau_joint @ qd_joint) < 1e-10


def test_coupling_roundtrip(rng):
    for _ in range(50):
        T = rng.normal(size=(2, 2))
        if abs(np.linalg.det(T)) < 0.1:
            continue
        c = ss.TransmissionCoupling(("KFE", "FFE"), T)
        q = rng.normal(size=2)
        assert np.max(np.abs(ss.uncouple_positions(c, ss.couple_positions(c, q)) - q)) < 1e-12
        t = rng.normal(size=2)
        assert np.max(np.abs(ss.uncouple_torques(c, ss.couple_torques(c, t)) - t)) < 1e-12


# Measured human ranges of motion (deg) and the coverage each robot joint is
# known to achieve against them.
HUMAN_RANGES = {
    "HR": ((-50.0, 40.0), 77.8),
    "HAA": ((-40.0, 20.0), 91.6),
    "HFE": ((-110.0, 30.0), 92.9),
    "KFE": ((0.0, 150.0), 80.0),
    "FFE": ((-20.0, 50.0), 100.0),
    "FAA": ((-30.0, 18.0), 100.0),
}


@pytest.mark.parametrize("joint", list(HUMAN_RANGES))
def test_joint_limit_coverage_of_human_ranges(model, joint):
    human, expected_pct = HUMAN_RANGES[joint]
    j = model.joint(f"left_{joint}")
    cov = interval_coverage((j.limit_lo / DEG, j.limit_hi / DEG), human)
    assert abs(cov * 100.0 - expected_pct) < 0.1


def test_foot_mass_below_torso(model):
    for fname in model.foot_link_names:
        foot = next(l for l in model.links if l.name == fname)
        assert foot.mass < model.base.mass
        assert foot.geometry is not None


def test_standing_height_matches_spec(model):
    from stridesim.dynamics import standing_pose_height

    h = standing_pose_height(model) + model.torso_top_offset
    assert h == pytest.approx(model.standing_height, abs=0.005)
