import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whichpath_sim.statevec import (
    Basis,
    BasisMismatchError,
    CompositionError,
    DensityMatrix,
    LinearMap,
    ProjectorSet,
    StateVector,
    Subsystem,
    apply_map,
    density_from,
    fired,
    idle,
    inner,
    internal,
    is_isometry,
    mix,
    outcome_distribution,
    partial_trace,
    path,
    position,
    projective_measure,
    ray,
    tensor,
)

S2 = 1 / math.sqrt(2)


def path_state(ca=1.0, cb=0.0):
    return StateVector.from_dict({path("a"): ca, path("b"): cb}, Basis([path("a"), path("b")]))


def random_state(rng, basis):
    v = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
    return StateVector(basis, v / np.linalg.norm(v))



# ---------------------------------------------------------------- labels and bases

def test_basis_sorted_and_unique():
    b = Basis([path("b"), path("a")])
    assert [str(k[0]) for k in b] == ["Path:a", "Path:b"]
    with pytest.raises(ValueError):
        Basis([path("a"), path("a")])


def test_label_strings():
    assert str(fired(3)) == "Click:fired(x3)"
    assert str(idle()) == "Click:idle"
    assert str(internal("A", 3)) == "Internal:(A,x3)"
    assert str(ray("b", 2)) == "DiffractedRay:(b,x2)"


def test_mixed_subsystem_structure_rejected():
    with pytest.raises(ValueError):
        Basis([path("a"), (path("b"), idle())])


# ---------------------------------------------------------------- tensor

def test_tensor_of_kets():
    s = tensor(StateVector.ket(path("a")), StateVector.ket(idle()))
    assert s.as_dict() == {(path("a"), idle()): 1.0}


def test_tensor_equal_superposition():
    s = tensor(path_state(S2, S2), StateVector.ket(idle()))
    assert s[(path("a"), idle())] == pytest.approx(S2, abs=1e-15)
    assert s[(path("b"), idle())] == pytest.approx(S2, abs=1e-15)


def test_tensor_order_independent():
    a = path_state(0.6, 0.8j)
    z = StateVector.ket(idle())
    assert tensor(a, z).basis == tensor(z, a).basis
    assert np.array_equal(tensor(a, z).amplitudes, tensor(z, a).amplitudes)


def test_tensor_overlapping_subsystems():
    with pytest.raises(CompositionError):
        tensor(path_state(), path_state())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_tensor_norm_multiplies(seed, n1, n2):
    rng = np.random.default_rng(seed)
    b1 = Basis([position(j) for j in range(n1)])
    b2 = Basis([internal("A", j) for j in range(n2)])
    u = StateVector(b1, rng.normal(size=n1) + 1j * rng.normal(size=n1))
    v = StateVector(b2, rng.normal(size=n2) + 1j * rng.normal(size=n2))
    nu = math.sqrt(sum(abs(x) ** 2 for x in u.amplitudes))
    nv = math.sqrt(sum(abs(x) ** 2 for x in v.amplitudes))
    assert tensor(u, v).norm() == pytest.approx(nu * nv, rel=1e-12)


# ---------------------------------------------------------------- maps

def test_identity_map():
    s = path_state(0.6, 0.8)
    out = apply_map(LinearMap.identity(s.basis), s)
    assert np.array_equal(out.amplitudes, s.amplitudes)


def test_apply_map_names_mismatched_label():
    s = path_state()
    m = LinearMap.identity(Basis([path("a"), path("c")]))
    with pytest.raises(BasisMismatchError, match="Path:b"):
        apply_map(m, s)


def test_inner_basics():
    s = path_state(0.6, 0.8j)
    assert inner(s, s) == pytest.approx(1.0)
    assert inner(path_state(1, 0), path_state(0, 1)) == 0
    with pytest.raises(BasisMismatchError):
        inner(s, StateVector.ket(idle()))


def test_is_isometry_identity_and_degenerate():
    r = is_isometry(LinearMap.identity(Basis([path("a"), path("b")])))
    assert r.gram_defect == 0 and r.passes
    empty = LinearMap(Basis([]), Basis([]), np.zeros((0, 0)))
    assert is_isometry(empty).passes


def test_is_isometry_duplicate_columns():
    in_b = Basis([path("a"), path("b")])
    out_b = Basis([position(0)])
    m = LinearMap.from_rules(in_b, out_b, [(path("a"), position(0), 1), (path("b"), position(0), 1)])
    r = is_isometry(m, 1e-12)
    assert r.gram_defect == pytest.approx(1.0)
    assert not r.passes


# ---------------------------------------------------------------- measurement

def path_projectors():
    b = Basis([path("a"), path("b")])
    return ProjectorSet.partition(b, lambda k: k[0].tag[0])


def test_outcome_distribution_equal_superposition():
    d = dict(outcome_distribution(path_state(S2, S2), path_projectors()))
    assert d["a"] == pytest.approx(0.5, abs=1e-15)
    assert d["b"] == pytest.approx(0.5, abs=1e-15)


def test_outcome_distribution_point_mass():
    d = dict(outcome_distribution(path_state(0, 1j), path_projectors()))
    assert d == {"a": 0.0, "b": pytest.approx(1.0)}


def test_incomplete_projector_set_rejected():
    b = Basis([path("a"), path("b")])
    with pytest.raises(ValueError, match="incomplete"):
        ProjectorSet(b, (("a", np.array([1, 0])),))


def test_nonorthogonal_projectors_rejected():
    b = Basis([path("a"), path("b")])
    with pytest.raises(ValueError, match="orthogonal"):
        ProjectorSet(b, (("a", np.array([1, 0])), ("d", np.array([S2, S2]))))


def test_measure_requires_normalized_state():
    with pytest.raises(ValueError, match="normalized"):
        projective_measure(path_state(1, 1), path_projectors(), np.random.default_rng(0))


def test_measure_eigenstate():
    basis = Basis([(position(j), fired(j)) for j in range(4)])
    s = StateVector.ket((position(3), fired(3)), basis)
    p = ProjectorSet.partition(basis, lambda k: k[1])
    label, post, prob = projective_measure(s, p, np.random.default_rng(1))
    assert label == fired(3) and prob == pytest.approx(1.0)
    assert np.allclose(post.amplitudes, s.amplitudes)


def test_measure_deterministic_for_seed():
    rng_state = np.random.default_rng(5)
    s = random_state(rng_state, Basis([position(j) for j in range(6)]))
    p = ProjectorSet.partition(s.basis, lambda k: k[0])

    def outcomes(seed):
        g = np.random.default_rng(seed)
        return [projective_measure(s, p, g)[0] for _ in range(200)]

    assert outcomes(42) == outcomes(42)


def test_measure_frequencies_match_born_rule():
    from scipy.stats import chi2

    rng = np.random.default_rng(11)
    s = random_state(rng, Basis([position(j) for j in range(5)]))
    p = ProjectorSet.partition(s.basis, lambda k: k[0])
    probs = np.array([pr for _, pr in outcome_distribution(s, p)])
    g = np.random.default_rng(99)
    n = 100_000
    counts = dict.fromkeys(p.labels, 0)
    for _ in range(n):
        counts[projective_measure(s, p, g)[0]] += 1
    obs = np.array([counts[lab] for lab in p.labels])
    stat = float(np.sum((obs - n * probs) ** 2 / (n * probs)))
    assert stat < chi2.ppf(0.999, df=len(probs) - 1)


# ---------------------------------------------------------------- densities

def test_density_from_ket():
    rho = density_from(path_state(1, 0))
    assert np.array_equal(rho.matrix, np.diag([1, 0]).astype(complex))
    rho.check()


def test_mix_validates_weights():
    r = density_from(path_state(1, 0))
    with pytest.raises(ValueError):
        mix([(0.7, r), (0.7, r)])
    m = mix([(0.25, r), (0.75, density_from(path_state(0, 1)))])
    assert np.allclose(m.diagonal(), [0.25, 0.75])


def test_partial_trace_of_product_state():
    a = path_state(0.6, 0.8j)
    b = StateVector.from_dict({internal("A"): S2, internal("B"): -S2},
                              Basis([internal("A"), internal("B")]))
    rho = partial_trace(density_from(tensor(a, b)), {Subsystem.PATH})
    assert np.allclose(rho.matrix, density_from(a).matrix, atol=1e-15)
    rho_b = partial_trace(density_from(tensor(a, b)), {Subsystem.INTERNAL})
    assert np.allclose(rho_b.matrix, density_from(b).matrix, atol=1e-15)


def test_partial_trace_bad_keep_set():
    rho = density_from(tensor(path_state(), StateVector.ket(idle())))
    with pytest.raises(CompositionError):
        partial_trace(rho, {Subsystem.INTERNAL})


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 4), st.integers(1, 5))
def test_partial_trace_preserves_trace_and_hermiticity(seed, n1, n2, k):
    rng = np.random.default_rng(seed)
    basis = Basis([(position(i), internal("A", j)) for i in range(n1) for j in range(n2)])
    weights = rng.dirichlet(np.ones(k))
    rho = mix([(float(w), density_from(random_state(rng, basis))) for w in weights / weights.sum()])
    for keep in ({Subsystem.POSITION}, {Subsystem.INTERNAL}):
        red = partial_trace(rho, keep)
        assert abs(red.trace() - 1.0) <= 1e-12
        assert red.hermiticity_defect() <= 1e-12
        red.check()


def test_density_check_rejects_non_hermitian():
    with pytest.raises(ValueError):
        DensityMatrix(Basis([path("a"), path("b")]), np.array([[0.5, 1], [0, 0.5]])).check()
