import numpy as np
import pytest

from nvpulse.fitting import (
    EseemMeasurement,
    EseemMeasurementSet,
    HyperfineSearchSpec,
    MeasurementFormatError,
    ZRowConstraint,
    _predicted_pairs,
    _refine_stages,
    components_to_matrix,
    coarse_shard,
    grid_search,
    matrix_to_components,
    measurements_to_csv,
    merge_shards,
    mirror_components,
    objective,
    parse_measurements_csv,
    result_to_config,
    synthesize_measurements,
    zero_field_seed,
)
from nvpulse.hamiltonian import SpinSystem, TargetSpin, effective_larmor

CONFIGS = (
    (0.018, 3.0, "minus_one"),
    (0.018, 3.0, "plus_one"),
    (0.031, 3.0, "minus_one"),
    (0.040, 3.0, "plus_one"),
)

# search geometry small enough for unit tests; full defaults run in the
# acceptance suite
SMALL_SPEC = HyperfineSearchSpec(
    coarse_range=1.0, coarse_step=0.5, fine_step=0.1, fine_halfwidth=0.2
)

PLANT = components_to_matrix((0.5, -0.5, 0.0, 0.0, 0.5, -1.0))


def measurement(**overrides):
    base = dict(
        b0=0.030, theta=2.0, transition="minus_one",
        omega_slow=0.3, omega_fast=1.4, weight=1.0,
    )
    base.update(overrides)
    return EseemMeasurement(**base)


def test_component_packing_round_trip():
    comps = (0.1, -0.2, 0.3, -0.4, 0.5, -0.6)
    a = components_to_matrix(comps)
    assert np.allclose(a, a.T)
    assert matrix_to_components(a) == comps
    with pytest.raises(ValueError, match="symmetric"):
        matrix_to_components([[0, 1, 0], [0, 0, 0], [0, 0, 0]])


def test_mirror_flips_xy_and_yz():
    comps = (0.1, -0.2, 0.3, -0.4, 0.5, -0.6)
    mirrored = mirror_components(comps)
    assert mirrored == (0.1, 0.2, 0.3, -0.4, -0.5, -0.6)
    assert mirror_components(mirrored) == comps


def test_measurement_validation():
    with pytest.raises(ValueError, match="b0"):
        measurement(b0=0.2)
    with pytest.raises(ValueError, match="transition"):
        measurement(transition="zero")
    with pytest.raises(ValueError, match="omega_fast > omega_slow"):
        measurement(omega_slow=2.0, omega_fast=1.0)
    with pytest.raises(ValueError, match="weight"):
        measurement(weight=0.0)


def test_measurement_set_identifiability():
    single_field = EseemMeasurementSet(
        entries=(measurement(), measurement(transition="plus_one"))
    )
    assert not single_field.identifiable
    warnings = single_field.identifiability_warnings()
    assert len(warnings) == 2  # < 3 entries and a single field
    two_fields = EseemMeasurementSet(
        entries=(
            measurement(),
            measurement(b0=0.04),
            measurement(b0=0.04, transition="plus_one"),
        )
    )
    assert two_fields.identifiable
    assert two_fields.identifiability_warnings() == []
    assert two_fields.fields == (0.030, 0.04)
    with pytest.raises(ValueError, match="empty"):
        EseemMeasurementSet(entries=())


def test_search_spec_validation():
    with pytest.raises(ValueError, match="fine_step < coarse_step"):
        HyperfineSearchSpec(coarse_step=0.5, fine_step=0.5)
    with pytest.raises(ValueError, match="multiple"):
        HyperfineSearchSpec(coarse_range=4.2, coarse_step=0.5)
    axis = HyperfineSearchSpec().coarse_axis()
    assert len(axis) == 17
    assert axis[0] == -4.0 and axis[-1] == 4.0
    assert np.allclose(np.diff(axis), 0.5)


def test_predictions_match_effective_larmor():
    rng = np.random.default_rng(11)
    for _ in range(10):
        a = rng.uniform(-4, 4, (3, 3))
        a = (a + a.T) / 2
        comps = np.array([matrix_to_components(a)])
        for b0, theta, transition in CONFIGS:
            system = SpinSystem(
                nitrogen=None, target=TargetSpin.carbon13(a), b0=b0, theta=theta
            )
            ms = -1 if transition == "minus_one" else 1
            expected = sorted(
                (
                    effective_larmor(system, 0, exact=True),
                    effective_larmor(system, ms, exact=True),
                )
            )
            probe = measurement(b0=b0, theta=theta, transition=transition)
            from nvpulse.fitting import _measurement_base

            pair = _predicted_pairs(comps, [_measurement_base(probe)], [transition])
            assert pair[0, 0, 0] == pytest.approx(expected[0], rel=1e-9)
            assert pair[0, 0, 1] == pytest.approx(expected[1], rel=1e-9)


def test_objective_zero_on_self_and_locally_monotone():
    measurements = synthesize_measurements(PLANT, CONFIGS)
    assert objective(PLANT, measurements) <= 1e-12
    last = 0.0
    for eps in (0.05, 0.1, 0.2):
        perturbed = PLANT + np.diag([0, 0, eps])
        value = objective(perturbed, measurements)
        assert value > last
        last = value


def test_objective_mirror_invariance():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.uniform(-2, 2, (3, 3))
        a = (a + a.T) / 2
        measurements = synthesize_measurements(PLANT, CONFIGS)
        mirrored = components_to_matrix(mirror_components(matrix_to_components(a)))
        assert objective(a, measurements) == pytest.approx(
            objective(mirrored, measurements), rel=1e-9, abs=1e-12
        )


def test_zero_field_seed_constraint():
    seed = zero_field_seed(1.1226308386998818)
    assert seed.tolerance == 1.0
    comps = np.array(
        [
            matrix_to_components(PLANT),          # z row (0, 0.5, -1.0), norm 1.118
            (0.0, 0.0, 0.0, 0.0, 0.0, 4.0),       # norm 4: pruned
            (0.0, 0.0, 3.0, 0.0, 0.0, 0.0),       # norm 3: pruned
        ]
    )
    assert list(seed.mask(comps)) == [True, False, False]
    null = zero_field_seed(0.0)
    # z-row norms 1.118, 4, 3 all exceed the 2-step tolerance around zero
    assert list(null.mask(comps)) == [False, False, False]
    assert null.mask(np.zeros((1, 6)))[0]
    with pytest.raises(ValueError):
        zero_field_seed(-1.0)


def test_grid_search_recovers_planted_matrix():
    measurements = synthesize_measurements(PLANT, CONFIGS)
    result = grid_search(measurements, SMALL_SPEC)
    assert np.max(np.abs(result.a_matrix - PLANT)) <= SMALL_SPEC.fine_step + 1e-9
    assert result.objective <= 1e-10
    assert result.warnings == ()
    assert result.evaluations > 0
    # the xz-mirror partner is indistinguishable and must be surfaced
    mirror_a, mirror_obj = result.mirror
    expected_mirror = components_to_matrix(
        mirror_components(matrix_to_components(result.a_matrix))
    )
    assert np.allclose(np.array(mirror_a), expected_mirror)
    assert mirror_obj == pytest.approx(result.objective, abs=1e-10)


def test_grid_search_zero_plant_exact_at_coarse():
    measurements = synthesize_measurements(np.zeros((3, 3)), CONFIGS)
    ranking = coarse_shard(measurements, SMALL_SPEC)
    comps, obj = ranking.candidates[0]
    assert comps == (0.0,) * 6
    assert obj <= 1e-12


def test_grid_search_shard_merge_matches_full():
    measurements = synthesize_measurements(PLANT, CONFIGS)
    full = grid_search(measurements, SMALL_SPEC)
    sharded = grid_search(measurements, SMALL_SPEC, shards=3)
    assert sharded.a == full.a
    assert sharded.objective == full.objective
    assert sharded.runners_up == full.runners_up
    shards = [coarse_shard(measurements, SMALL_SPEC, (i, 3)) for i in range(3)]
    merged = merge_shards(shards)
    assert merged.candidates == coarse_shard(measurements, SMALL_SPEC).candidates


def test_grid_search_pruning_is_sound():
    measurements = synthesize_measurements(PLANT, CONFIGS)
    z_norm = float(np.linalg.norm(PLANT[2]))
    pruned = grid_search(
        measurements, SMALL_SPEC,
        zero_field=zero_field_seed(z_norm, SMALL_SPEC.coarse_step),
    )
    unpruned = grid_search(measurements, SMALL_SPEC)
    assert pruned.a == unpruned.a
    assert pruned.evaluations < unpruned.evaluations


def test_grid_search_flags_underdetermined_set():
    single_field = synthesize_measurements(
        PLANT, ((0.030, 3.0, "minus_one"), (0.030, 3.0, "plus_one"))
    )
    result = grid_search(single_field, SMALL_SPEC)
    assert any("field" in w for w in result.warnings)


def test_refine_stages_reach_fine_step():
    stages = _refine_stages(HyperfineSearchSpec())
    assert stages[0][0] == 0.5
    assert stages[-1][1] == 0.01
    for (_, step), (next_halfwidth, _) in zip(stages, stages[1:]):
        assert next_halfwidth >= step  # no gap for the minimum to escape


def test_measurement_csv_round_trip():
    measurements = synthesize_measurements(PLANT, CONFIGS)
    text = measurements_to_csv(measurements)
    back = parse_measurements_csv(text)
    assert back == measurements
    assert measurements_to_csv(back) == text


def test_measurement_csv_errors_carry_line_numbers():
    header = "b0_T,theta_deg,transition,w_slow_MHz,w_fast_MHz,weight"
    with pytest.raises(MeasurementFormatError, match="line 1"):
        parse_measurements_csv("b0,theta\n")
    with pytest.raises(MeasurementFormatError, match="line 3") as err:
        parse_measurements_csv(
            f"{header}\n0.03,2.0,minus_one,0.3,1.4,1.0\n0.03,2.0,sideways,0.3,1.4,1.0\n"
        )
    assert err.value.line == 3
    with pytest.raises(MeasurementFormatError, match="line 4"):
        parse_measurements_csv(
            f"# comment\n{header}\n0.03,2.0,minus_one,0.3,1.4,1.0\n0.03,2.0,plus_one,0.3\n"
        )
    with pytest.raises(MeasurementFormatError, match="no measurement rows"):
        parse_measurements_csv(f"{header}\n")


def test_result_config_report():
    measurements = synthesize_measurements(PLANT, CONFIGS)
    result = grid_search(measurements, SMALL_SPEC)
    text = result_to_config(result)
    assert "[hyperfine]" in text and "[mirror]" in text and "[runners_up]" in text
    assert f"objective_MHz2 = {result.objective!r}" in text
    assert "rank_1 = " in text


def test_zrow_constraint_is_plain_dataclass():
    constraint = ZRowConstraint(norm=1.0, tolerance=0.5)
    mask = constraint.mask(np.array([(0, 0, 0, 0, 0, 1.2), (0, 0, 0, 0, 0, 2.0)]))
    assert list(mask) == [True, False]
