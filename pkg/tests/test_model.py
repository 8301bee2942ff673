import json

import numpy as np
import pytest

from fparma.hilbert import BlockOp, hs_distance, hs_norm
from fparma.model import (
    AssumptionViolation,
    FparmaModel,
    NoiseSpec,
    closed_form_ma_aggregates,
    companion_ar,
    companion_ma,
    cycle_matrix,
    cycle_matrix_recursive,
    ma_aggregates,
    model_from_dict,
    model_to_dict,
    noise_entry_matrix,
    phi_product,
    recursive_entry,
    require_valid,
    save_model,
    load_model,
    season_of,
    validate,
)
from fparma.presets import benchmark_cycle_closed_form, benchmark_model


def direct_recursion(model, eps, init_window):
    """Values at times P+1..2P straight from the defining recursion.

    ``eps[t-1]`` is the innovation at time t (1..2P) and ``init_window``
    holds X_1..X_P. This is the ground truth the companion algebra must
    reproduce; it never touches the block machinery.
    """
    P, d = model.P, model.d
    values = np.zeros((2 * P, d))
    values[:P] = init_window
    for t in range(P + 1, 2 * P + 1):
        s = season_of(t, P)
        x = eps[t - 1].copy()
        for i in range(1, model.p + 1):
            x += model.ar_block(i, s) @ values[t - i - 1]
        for j in range(1, model.q + 1):
            x += model.ma_block(j, s) @ eps[t - j - 1]
        values[t - 1] = x
    return values[P:]


def tiny_model(P=3, p=2, q=1, d=2, seed=0):
    gen = np.random.default_rng(seed)
    phi = 0.3 * gen.normal(size=(p, P, d, d))
    psi = 0.3 * gen.normal(size=(q, P, d, d))
    cov = np.stack([np.eye(d) * (0.5 + 0.1 * s) for s in range(P)])
    return FparmaModel(P=P, p=p, q=q, phi=phi, psi=psi, noise=NoiseSpec(cov))


def test_season_of_values():
    assert [season_of(k, 3) for k in range(1, 8)] == [1, 2, 3, 1, 2, 3, 1]
    assert season_of(0, 3) == 3
    assert season_of(-1, 3) == 2


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        NoiseSpec(np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        NoiseSpec(np.zeros((2, 2, 2)), distribution="poisson")
    spec = NoiseSpec(np.stack([np.eye(2)] * 3), distribution="scaled_uniform")
    assert (spec.P, spec.d) == (3, 2)
    with pytest.raises(ValueError):
        spec.covariances[0, 0, 0] = 1.0  # read-only


def test_block_accessors():
    m = tiny_model()
    assert np.array_equal(m.ar_block(1, 2), m.phi[0, 1])
    assert np.array_equal(m.ar_block(2, 3), m.phi[1, 2])
    assert np.array_equal(m.ar_block(3, 1), np.zeros((2, 2)))  # beyond order
    assert np.array_equal(m.ma_block(1, 1), m.psi[0, 0])
    assert np.array_equal(m.ma_block(0, 1), np.zeros((2, 2)))  # lag 0 is not stored
    assert np.array_equal(m.ma_block(2, 1), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        m.ar_block(0, 1)
    with pytest.raises(ValueError):
        m.ma_block(-1, 1)


def test_model_rejects_wrong_array_sizes():
    noise = NoiseSpec(np.stack([np.eye(2)] * 3))
    with pytest.raises(ValueError):
        FparmaModel(P=3, p=2, q=0, phi=np.zeros((2, 3, 3, 3)), psi=np.zeros((0, 3, 2, 2)), noise=noise)


def test_validate_accepts_benchmark():
    assert validate(benchmark_model(d=4)) == []


def test_validate_flags_defects():
    d = 2
    eye = np.stack([np.eye(d)] * 3)

    # period does not exceed the AR order
    bad = FparmaModel(P=2, p=2, q=0, phi=0.1 * np.ones((2, 2, d, d)),
                      psi=np.zeros((0, 2, d, d)), noise=NoiseSpec(eye[:2]))
    assert any("must exceed" in msg for msg in validate(bad))

    # declared top lag vanishes at every season
    phi = np.zeros((2, 3, d, d))
    phi[0, 0] = 0.2 * np.eye(d)
    dead = FparmaModel(P=3, p=2, q=0, phi=phi, psi=np.zeros((0, 3, d, d)),
                       noise=NoiseSpec(eye))
    assert any("vanishes at every season" in msg for msg in validate(dead))

    # asymmetric noise
    cov = np.stack([np.eye(d)] * 3)
    cov[1] = np.array([[1.0, 0.5], [-0.5, 1.0]])
    askew = FparmaModel(P=3, p=0, q=0, phi=np.zeros((0, 3, d, d)),
                        psi=np.zeros((0, 3, d, d)), noise=NoiseSpec(cov))
    assert any("not symmetric" in msg for msg in validate(askew))

    # negative eigenvalue
    cov = np.stack([np.eye(d)] * 3)
    cov[2] = np.array([[1.0, 2.0], [2.0, 1.0]])
    neg = FparmaModel(P=3, p=0, q=0, phi=np.zeros((0, 3, d, d)),
                      psi=np.zeros((0, 3, d, d)), noise=NoiseSpec(cov))
    assert any("negative eigenvalue" in msg for msg in validate(neg))

    # silent process
    silent = FparmaModel(P=3, p=0, q=0, phi=np.zeros((0, 3, d, d)),
                         psi=np.zeros((0, 3, d, d)),
                         noise=NoiseSpec(np.zeros((3, d, d))))
    assert any("zero innovation covariance" in msg for msg in validate(silent))

    with pytest.raises(AssumptionViolation):
        require_valid(bad)
    require_valid(benchmark_model(d=3))  # no raise


# ---------------------------------------------------------------------------
# companion algebra
# ---------------------------------------------------------------------------


def test_companion_ar_structure():
    m = tiny_model(P=3, p=2, q=0)
    for season in (1, 2, 3):
        c = companion_ar(m, season)
        eye = np.eye(2)
        assert np.array_equal(c.block(0, 1), eye)
        assert np.array_equal(c.block(1, 2), eye)
        assert hs_norm(c.block(0, 0)) == 0.0
        assert hs_norm(c.block(0, 2)) == 0.0
        assert hs_norm(c.block(1, 0)) == 0.0
        assert hs_norm(c.block(1, 1)) == 0.0
        # last block row carries lags P+1-j: lag 3 is beyond order, then 2, 1
        assert hs_norm(c.block(2, 0)) == 0.0
        assert np.array_equal(c.block(2, 1), m.ar_block(2, season))
        assert np.array_equal(c.block(2, 2), m.ar_block(1, season))
    with pytest.raises(ValueError):
        companion_ar(m, 0)
    with pytest.raises(ValueError):
        companion_ar(m, 4)


def test_companion_ma_structure_and_noise_entry():
    m = tiny_model(P=3, p=1, q=2)
    for season in (1, 2, 3):
        c = companion_ma(m, season)
        # only the last block row is populated and the corner is the
        # structural zero of the lag-0 position
        assert hs_norm(BlockOp(c.blocks[:2])) == 0.0
        assert np.array_equal(c.block(2, 0), m.ma_block(2, season))
        assert np.array_equal(c.block(2, 1), m.ma_block(1, season))
        assert hs_norm(c.block(2, 2)) == 0.0
        theta = noise_entry_matrix(m, season)
        diff = theta.blocks - c.blocks
        assert np.array_equal(diff[2, 2], np.eye(2))
        diff[2, 2] -= np.eye(2)
        assert hs_norm(BlockOp(diff)) == 0.0


def test_phi_product_order_and_identity():
    m = tiny_model(P=4, p=3, q=0, seed=3)
    assert hs_distance(phi_product(m, 0, 2), BlockOp.identity(4, 2)) == 0.0
    one = phi_product(m, 1, 3)
    assert hs_distance(one, companion_ar(m, 3)) == 0.0
    # factors accumulate on the left as time advances
    two = phi_product(m, 2, 3)
    oracle = companion_ar(m, 3) @ companion_ar(m, 2)
    assert hs_distance(two, oracle) < 1e-14
    wrap = phi_product(m, 2, 1)  # seasons 1 and 4
    oracle = companion_ar(m, 1) @ companion_ar(m, 4)
    assert hs_distance(wrap, oracle) < 1e-14
    with pytest.raises(ValueError):
        phi_product(m, -1, 1)


def test_one_step_companion_matches_direct_recursion(model_factory):
    """The stacked one-step update must reproduce the scalar recursion."""
    for model in model_factory(101, count=8):
        P, d = model.P, model.d
        gen = np.random.default_rng(5 + P)
        eps = gen.normal(size=(2 * P, d))
        init = gen.normal(size=(P, d))
        truth = direct_recursion(model, eps, init)

        state = init.reshape(-1)
        for t in range(P + 1, 2 * P + 1):
            s = season_of(t, P)
            window = eps[t - P : t].reshape(-1)
            state = companion_ar(model, s).apply(state) + noise_entry_matrix(
                model, s
            ).apply(window)
        assert np.abs(state - truth.reshape(-1)).max() < 1e-12


def test_cycle_matrix_agrees_with_row_recursion(model_factory):
    for model in model_factory(202, count=10):
        built = cycle_matrix(model)
        rebuilt = cycle_matrix_recursive(model)
        assert hs_distance(built, rebuilt) < 1e-12
        i = (model.P + 1) // 2
        entry = recursive_entry(model, i, model.P)
        assert np.abs(entry - built.block(i - 1, model.P - 1)).max() < 1e-12
    with pytest.raises(ValueError):
        recursive_entry(benchmark_model(d=2), 0, 1)
    with pytest.raises(ValueError):
        recursive_entry(benchmark_model(d=2), 1, 4)


def test_cycle_first_block_column_vanishes(model_factory):
    # every lag feeding block column 1 exceeds the order p < P
    for model in model_factory(303, count=6):
        cyc = cycle_matrix(model)
        assert hs_norm(BlockOp(cyc.blocks[:, :1])) == 0.0


def test_benchmark_cycle_closed_form():
    built = cycle_matrix(benchmark_model(d=8))
    closed = benchmark_cycle_closed_form(d=8)
    assert hs_distance(built, closed) < 1e-12
    built = cycle_matrix(benchmark_model(d=3, beta=0.4, scale=0.7, c11=0.1, c21=0.9,
                                         c13=0.3, c22=0.2))
    closed = benchmark_cycle_closed_form(d=3, beta=0.4, scale=0.7, c11=0.1, c21=0.9,
                                         c13=0.3, c22=0.2)
    assert hs_distance(built, closed) < 1e-12


# ---------------------------------------------------------------------------
# noise aggregation over one cycle
# ---------------------------------------------------------------------------


def test_ma_aggregates_one_shot_identity(model_factory):
    """Iterating P companion steps equals one cycle-operator step.

    The previous/current aggregates must absorb the innovations of the two
    cycles involved, for an arbitrary starting window.
    """
    for model in model_factory(404, count=8):
        P, d = model.P, model.d
        gen = np.random.default_rng(17 + P)
        eps = gen.normal(size=(2 * P, d))
        init = gen.normal(size=(P, d))

        state = init.reshape(-1)
        for t in range(P + 1, 2 * P + 1):
            s = season_of(t, P)
            window = eps[t - P : t].reshape(-1)
            state = companion_ar(model, s).apply(state) + noise_entry_matrix(
                model, s
            ).apply(window)

        cur, prev = ma_aggregates(model)
        one_shot = (
            cycle_matrix(model).apply(init.reshape(-1))
            + prev.apply(eps[:P].reshape(-1))
            + cur.apply(eps[P:].reshape(-1))
        )
        assert np.abs(one_shot - state).max() < 1e-12


def test_ma_aggregates_closed_form_cross_check(model_factory):
    for model in model_factory(505, count=8):
        cur, prev = ma_aggregates(model)
        cur2, prev2 = closed_form_ma_aggregates(model)
        assert hs_distance(cur, cur2) < 1e-13
        assert hs_distance(prev, prev2) < 1e-13


def test_ma_aggregates_pure_ar_structure(model_factory):
    for model in model_factory(606, count=4, q=0):
        P, d = model.P, model.d
        cur, prev = ma_aggregates(model)
        assert hs_norm(prev) == 0.0
        for j in range(1, P + 1):
            tail = phi_product(model, P - j, P)
            expect = tail.blocks[:, P - 1]
            assert np.abs(cur.blocks[:, j - 1] - expect).max() < 1e-13


def test_ma_aggregates_pure_noise():
    d = 2
    model = FparmaModel(P=3, p=0, q=0, phi=np.zeros((0, 3, d, d)),
                        psi=np.zeros((0, 3, d, d)),
                        noise=NoiseSpec(np.stack([np.eye(d)] * 3)))
    cur, prev = ma_aggregates(model)
    assert hs_distance(cur, BlockOp.identity(3, d)) == 0.0
    assert hs_norm(prev) == 0.0


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_model_dict_roundtrip(model_factory):
    model = model_factory(707)
    doc = model_to_dict(model)
    back = model_from_dict(doc)
    assert np.array_equal(back.phi, model.phi)
    assert np.array_equal(back.psi, model.psi)
    assert np.array_equal(back.noise.covariances, model.noise.covariances)
    assert back.noise.distribution == model.noise.distribution
    # the document survives an actual JSON round trip bit for bit
    again = model_from_dict(json.loads(json.dumps(doc)))
    assert np.array_equal(again.phi, model.phi)
    assert np.array_equal(again.noise.covariances, model.noise.covariances)


def test_model_dict_rejects_malformed_documents():
    doc = model_to_dict(benchmark_model(d=2))
    bad = dict(doc, extra=1)
    with pytest.raises(ValueError, match="unknown model fields"):
        model_from_dict(bad)
    missing = {k: v for k, v in doc.items() if k != "noise"}
    with pytest.raises(ValueError, match="missing model fields"):
        model_from_dict(missing)
    with pytest.raises(ValueError, match="unknown phi fields"):
        model_from_dict(dict(doc, phi=[dict(doc["phi"][0], tag="x")]))
    with pytest.raises(ValueError, match="out of range"):
        model_from_dict(dict(doc, phi=[dict(doc["phi"][0], season=9)]))
    with pytest.raises(ValueError, match="entries must be"):
        model_from_dict(dict(doc, phi=[dict(doc["phi"][0], entries=[[1.0]])]))
    with pytest.raises(ValueError, match="unknown noise fields"):
        model_from_dict(dict(doc, noise=dict(doc["noise"], skew=1)))
    with pytest.raises(ValueError):
        model_from_dict(dict(doc, P=0))
    with pytest.raises(ValueError):
        model_from_dict([1, 2, 3])


def test_save_load_roundtrip(tmp_path, model_factory):
    model = model_factory(808)
    target = tmp_path / "model.json"
    save_model(model, target)
    back = load_model(target)
    assert np.array_equal(back.phi, model.phi)
    assert np.array_equal(back.psi, model.psi)
    assert np.array_equal(back.noise.covariances, model.noise.covariances)
