import numpy as np
import pytest

from dmkhyper.mesh import triangulate_unit_square
from dmkhyper.synth import (
    FULL_BETAS,
    ProblemSpec,
    default_radius,
    derive_seed,
    forcing_from_spec,
    generate_ensemble,
    generate_problem,
    generate_spec,
)


def test_default_problem_shape():
    p = generate_problem(0)
    spec = p.spec
    assert spec.source_center == (0.0, 0.0)
    assert spec.n_sinks == 15
    assert len(set(spec.sink_centers)) == 15
    assert spec.radius == default_radius(32)
    for c in spec.sink_centers:
        assert np.hypot(*c) > 2 * spec.radius
        assert all(abs(x * 32 - round(x * 32)) < 1e-12 for x in c)


@pytest.mark.parametrize("seed", range(10))
def test_mass_balance_and_unit_masses(seed):
    p = generate_problem(seed, n_div=16, n_sinks=5)
    w = p.mesh.vertex_weights()
    f = p.forcing.values
    assert abs(np.dot(f, w)) <= 1e-12
    assert np.dot(np.maximum(f, 0), w) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(np.maximum(-f, 0), w) == pytest.approx(1.0, abs=1e-12)


def test_seed_determinism():
    a = generate_problem(42, n_div=16)
    b = generate_problem(42, n_div=16)
    assert a.spec == b.spec
    assert np.array_equal(a.forcing.values, b.forcing.values)
    assert generate_spec(43, 16) != a.spec


def test_full_scale_ensemble_size():
    jobs = generate_ensemble(100, FULL_BETAS, master_seed=0, n_div=32)
    assert len(jobs) == 900
    assert len({j.job_id for _, j in jobs}) == 900


def test_singleton_ensemble():
    jobs = generate_ensemble(1, [1.5])
    assert len(jobs) == 1 and jobs[0][1].beta == 1.5


def test_ensemble_seeds_distinct_and_reproducible():
    a = generate_ensemble(10, [1.2, 1.5, 1.8], master_seed=7)
    b = generate_ensemble(10, [1.2, 1.5, 1.8], master_seed=7)
    assert [j for _, j in a] == [j for _, j in b]
    problem_seeds = {j.problem_index: j.seed for _, j in a}
    assert len(set(problem_seeds.values())) == 10
    # each problem is paired with every beta under one seed
    assert len({(j.seed, j.beta) for _, j in a}) == 30
    assert derive_seed(7, 3) == problem_seeds[3]
    assert derive_seed(8, 3) != derive_seed(7, 3)


def test_seed_collision_scan():
    seeds = [derive_seed(0, i) for i in range(10000)]
    assert len(set(seeds)) == len(seeds)


def test_empty_ensemble_inputs_rejected():
    with pytest.raises(ValueError):
        generate_ensemble(0, [1.5])
    with pytest.raises(ValueError):
        generate_ensemble(3, [])


def test_tiny_radius_names_center():
    m = triangulate_unit_square(8)
    spec = ProblemSpec((0.0, 0.0), [(0.51, 0.49)], 0.001, 0)
    with pytest.raises(ValueError, match=r"0\.51"):
        forcing_from_spec(m, spec)


def test_too_many_sinks_rejected():
    with pytest.raises(ValueError):
        generate_spec(0, 2, n_sinks=50)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"radius": 0.0},
        {"sink_centers": [(0.5, 0.5), (0.5, 0.5)]},
        {"sink_centers": [(1.5, 0.5)]},
        {"n_sinks": 3},
    ],
)
def test_spec_invariants(kwargs):
    base = {"source_center": (0, 0), "sink_centers": [(0.5, 0.5)], "radius": 0.1, "seed": 0}
    with pytest.raises(ValueError):
        ProblemSpec(**{**base, **kwargs})


def test_spec_json_round_trip():
    spec = generate_spec(11, 32)
    assert ProblemSpec.from_json(spec.to_json()) == spec
