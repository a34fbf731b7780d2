import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats as sps

from dpdetect.core import Cat, InvalidParameterError, MechanismArgs, stream
from dpdetect.mechanisms import REGISTRY, get_mechanism

Q = np.array([1.0, 3.0, 2.0, 0.0, 3.0])


def noiseless(name, q, **kw):
    return get_mechanism(name).execute(q, MechanismArgs(0.7, noiseless=True, **kw))


def test_registry_names():
    assert set(REGISTRY) == {
        "noisy_max_lap", "noisy_max_exp", "noisy_max_lap_value", "noisy_max_exp_value",
        "histogram", "histogram_wrong_scale", "svt", "isvt1", "isvt2", "isvt3", "isvt4"}
    with pytest.raises(InvalidParameterError):
        get_mechanism("nope")


def test_noiseless_traces():
    # ties resolve to the first maximal index, reported 1-based
    assert noiseless("noisy_max_lap", Q) .entries == (Cat(2),)
    assert noiseless("noisy_max_exp", Q) .entries == (Cat(2),)
    assert noiseless("noisy_max_lap_value", Q) .entries == (3.0,)
    assert noiseless("histogram", Q).entries == tuple(Q)
    assert noiseless("histogram_wrong_scale", Q).entries == tuple(Q)
    F, T = Cat(False), Cat(True)
    assert noiseless("svt", Q, threshold=1.5, bound=1).entries == (F, T)
    assert noiseless("svt", Q, threshold=1.5, bound=2).entries == (F, T, T)
    assert noiseless("isvt1", Q, threshold=1.5).entries == (F, T, T, F, T)
    assert noiseless("isvt2", Q, threshold=1.5).entries == (F, T, T, F, T)
    assert noiseless("isvt3", Q, threshold=1.5, bound=1).entries == (F, T)
    assert noiseless("isvt4", Q, threshold=1.5, bound=2).entries == (F, 3.0, 2.0)


def test_threshold_and_bound_required():
    svt = get_mechanism("svt")
    with pytest.raises(InvalidParameterError):
        svt.execute(Q, MechanismArgs(0.7, bound=1, noiseless=True))
    with pytest.raises(InvalidParameterError):
        svt.execute(Q, MechanismArgs(0.7, threshold=1.0, noiseless=True))


def test_noisy_max_symmetric_on_equal_answers():
    out = get_mechanism("noisy_max_lap").sample(np.zeros(4), MechanismArgs(0.5), stream(1), 40_000)
    counts = np.bincount(out.codes[:, 0], minlength=4)
    assert sps.chisquare(counts).pvalue > 0.001


def _p_above(threshold_scale, query_scale, gap):
    """P(gap + Lap(query_scale) >= Lap(threshold_scale)) by quadrature."""
    def integrand(r):
        tail = 1.0 if query_scale is None else sps.laplace.sf(r - gap, scale=query_scale)
        if query_scale is None:
            tail = float(gap >= r)
        return sps.laplace.pdf(r, scale=threshold_scale) * tail
    val, _ = integrate.quad(integrand, -80, 80, points=[0.0, gap], limit=400)
    return val


@pytest.mark.parametrize("name,t_scale,q_scale", [
    ("svt", 2 / 0.7, 4 / 0.7),
    ("isvt1", 2 / 0.7, None),
    ("isvt2", 2 / 0.7, 2 / 0.7),
    ("isvt3", 4 / 0.7, 4 / (3 * 0.7)),
    ("isvt4", 2 / 0.7, 2 / 0.7),
])
def test_sparse_vector_noise_scales(name, t_scale, q_scale):
    mech = get_mechanism(name)
    args = MechanismArgs(0.7, threshold=0.5, bound=1)
    batch = mech.sample(np.array([1.0]), args, stream(5), 200_000)
    above = (batch.codes[:, 0] == 1) | ~np.isnan(batch.values[:, 0])
    expected = _p_above(t_scale, q_scale, 0.5)
    assert above.mean() == pytest.approx(expected, abs=0.004)


@pytest.mark.parametrize("name,scale", [("histogram", 1 / 0.4), ("histogram_wrong_scale", 0.4)])
def test_histogram_noise_scale(name, scale):
    batch = get_mechanism(name).sample(np.array([5.0, 1.0]), MechanismArgs(0.4), stream(6), 200_000)
    noise = batch.values - np.array([5.0, 1.0])
    assert noise.var() == pytest.approx(2 * scale**2, rel=0.03)


@pytest.mark.parametrize("name,dist", [
    ("noisy_max_lap", sps.laplace(scale=2 / 0.5)),
    ("noisy_max_exp", sps.expon(scale=2 / 0.5)),
])
def test_noisy_max_scale(name, dist):
    # P(argmax = 2) for answers (0, 1) is P(X2 + 1 > X1) for iid noise
    val, _ = integrate.quad(lambda x: dist.pdf(x) * dist.cdf(x + 1.0), -60, 60, limit=400)
    batch = get_mechanism(name).sample(np.array([0.0, 1.0]), MechanismArgs(0.5), stream(7), 200_000)
    assert np.mean(batch.codes[:, 0] == 1) == pytest.approx(val, abs=0.004)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8), st.floats(-2, 2),
       st.integers(1, 3), st.integers(0, 10**6), st.sampled_from(["svt", "isvt3", "isvt4"]))
def test_sparse_vector_halts_after_bound(q, threshold, bound, seed, name):
    mech = get_mechanism(name)
    batch = mech.sample(np.array(q), MechanismArgs(0.5, threshold=threshold, bound=bound),
                        stream(seed), 200)
    for out in batch.outputs():
        hits = sum(1 for e in out.entries if not (isinstance(e, Cat) and e.symbol is False))
        assert hits <= bound
        if len(out) < len(q):
            assert hits == bound
            assert not (isinstance(out[-1], Cat) and out[-1].symbol is False)


@pytest.mark.parametrize("name", ["isvt1", "isvt2"])
def test_unbounded_variants_have_full_length(name):
    batch = get_mechanism(name).sample(np.arange(6.0), MechanismArgs(0.5, threshold=2.5),
                                       stream(8), 1000)
    assert np.all(batch.lengths == 6)


def test_branch_predicates():
    svt = get_mechanism("svt")
    args = MechanismArgs(0.7, threshold=1.5, bound=1)
    assert svt.branch_predicates(Q, args).tolist() == [False, True, True, False, True]
    assert get_mechanism("histogram").branch_predicates(Q, MechanismArgs(1.0)).size == 0
