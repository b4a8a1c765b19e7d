import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbcs.core import Rng, chain_product, normalize_columns
from dbcs.exceptions import DimensionMismatchError
from dbcs.model import (DbcsModel, TrainOptions, bcs_fit, dbcs_fit, dl_fit, encode,
                        initial_dictionaries, normalize_with_compensation, objective,
                        reconstruct)
from dbcs.operators import build_operator
from dbcs.solvers import SolverOptions
from dbcs.synthetic import planted_factorization

TIGHT = TrainOptions(SolverOptions(500, 1e-12), SolverOptions(100, 1e-12), 0.0)


def planted(sizes, sparsity, n_samples, seed):
    # data stream kept apart from the model stream used in the fits below
    return planted_factorization(sizes, sparsity, n_samples, 0.0, Rng(seed, (99,)))


def assert_trace_monotone(trace, slack=1e-9):
    t = np.asarray(trace)
    assert np.all(t[1:] <= t[:-1] + slack * np.abs(t[:-1]))


def assert_unit_columns(dicts, tol=1e-9):
    for D in dicts:
        np.testing.assert_allclose(np.linalg.norm(D, axis=0), 1.0, atol=tol)


# -- objective ----------------------------------------------------------------

def test_objective_zero_code():
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((5, 7))
    D = rng.standard_normal((5, 3))
    assert objective([D], np.zeros((3, 7)), Y, None, 2.0) == pytest.approx(np.sum(Y ** 2), rel=1e-14)


def test_objective_scalar_hand_value():
    one = np.ones((1, 1))
    assert objective([one], np.array([[2.0]]), np.array([[3.0]]), one, 1.0) == 3.0


def test_objective_planted_exact_fit():
    data = planted([12, 10, 8], 2, 30, 0)
    assert objective(data.dictionaries, data.codes, data.X, None, 0.0) <= 1e-10


def test_objective_operator_and_dense_agree():
    op = build_operator("sparse_binary", 6, 12, seed=4)
    rng = np.random.default_rng(1)
    D, Z, Y = rng.standard_normal((12, 5)), rng.standard_normal((5, 4)), rng.standard_normal((6, 4))
    a = objective([D], Z, Y, op, 0.3)
    b = objective([D], Z, Y, op.to_dense(), 0.3)
    assert a == pytest.approx(b, rel=1e-12)


def test_objective_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        objective([np.ones((4, 3))], np.ones((3, 2)), np.ones((5, 2)), None, 0.0)
    with pytest.raises(DimensionMismatchError):
        objective([np.ones((4, 3))], np.ones((3, 2)), np.ones((2, 2)), np.ones((2, 5)), 0.0)


# -- reconstruct ----------------------------------------------------------------

def test_reconstruct_examples():
    Z = np.arange(6.0).reshape(3, 2)
    model = DbcsModel([np.eye(3)], Z, 0.0, [3, 3], [0.0])
    np.testing.assert_array_equal(reconstruct(model), Z)
    model = DbcsModel([np.ones((4, 3))], np.zeros((3, 2)), 0.0, [4, 3], [0.0])
    assert not reconstruct(model).any()


# -- dbcs_fit -------------------------------------------------------------------

def test_huge_lambda_gives_zero_codes():
    data = planted([16, 12, 8], 2, 40, 1)
    A = build_operator("dense_gaussian", 8, 16, seed=2)
    Y = A.apply(data.X)
    # every column of G = A D1 D2 has unit-bounded norm growth; this bound
    # exceeds 2 max |G^T Y| for any unit-column dictionaries
    lam = 2.0 * np.linalg.norm(A.to_dense(), 2) * 12 * np.abs(Y).sum(axis=0).max() * 10
    model = dbcs_fit(Y, A, [16, 12, 8], lam=lam, sweeps=3, rng=Rng(5))
    assert not model.codes.any()
    assert not reconstruct(model).any()


def test_planted_identity_two_layers():
    data = planted([20, 16, 12], 3, 200, 0)
    A = build_operator("identity", 20, 20)
    model = dbcs_fit(data.X, A, [20, 16, 12], lam=1e-4, sweeps=50, rng=Rng(7))
    assert model.objective_trace[-1] <= 0.01 * model.objective_trace[0]
    assert model.objective_trace[0] == pytest.approx(np.sum(data.X ** 2), rel=1e-12)


def test_fit_is_deterministic():
    data = planted([16, 12, 8], 2, 50, 3)
    A = build_operator("dense_gaussian", 8, 16, seed=3)
    Y = A.apply(data.X)
    a = dbcs_fit(Y, A, [16, 12, 8], sweeps=4, rng=Rng(11))
    b = dbcs_fit(Y, A, [16, 12, 8], sweeps=4, rng=Rng(11))
    for Da, Db in zip(a.dictionaries + [a.codes], b.dictionaries + [b.codes]):
        assert Da.tobytes() == Db.tobytes()
    assert a.objective_trace == b.objective_trace and a.lam == b.lam


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 3),
       kind=st.sampled_from(["dense_gaussian", "sparse_binary", "row_subsample", "identity"]))
def test_fit_monotone_and_normalized(seed, M, kind):
    r = np.random.default_rng(seed)
    sizes = [int(r.integers(6, 20))] + [int(r.integers(2, 12)) for _ in range(M)]
    n = sizes[0]
    m = n if kind == "identity" else int(r.integers(2, n + 1))
    A = build_operator(kind, m, n, seed=seed)
    Y = A.apply(r.standard_normal((n, int(r.integers(3, 40)))))
    model = dbcs_fit(Y, A, sizes, sweeps=5, rng=Rng(seed))
    assert_trace_monotone(model.objective_trace)
    assert_unit_columns(model.dictionaries)


def test_fit_input_errors():
    A = build_operator("dense_gaussian", 4, 8, seed=0)
    with pytest.raises(DimensionMismatchError):
        dbcs_fit(np.ones((5, 3)), A, [8, 4])
    with pytest.raises(DimensionMismatchError):
        dbcs_fit(np.ones((4, 3)), A, [9, 4])
    with pytest.raises(ValueError):
        dbcs_fit(np.ones((4, 0)), A, [8, 4])
    with pytest.raises(ValueError):
        dbcs_fit(np.ones((4, 3)), A, [8, 4], sweeps=0)
    with pytest.raises(ValueError):
        dbcs_fit(np.ones((4, 3)), A, [8])


# -- normalization ----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 4))
def test_normalization_preserves_product(seed, M):
    r = np.random.default_rng(seed)
    sizes = [int(r.integers(1, 10)) for _ in range(M + 1)]
    dicts = [r.standard_normal((sizes[i], sizes[i + 1])) * r.uniform(0.01, 100)
             for i in range(M)]
    Z = r.standard_normal((sizes[-1], int(r.integers(1, 10))))
    before = chain_product(dicts + [Z])
    nd, nz = normalize_with_compensation(dicts, Z, Rng(seed))
    after = chain_product(nd + [nz])
    assert np.linalg.norm(after - before) <= 1e-10 * max(np.linalg.norm(before), 1e-300)
    assert_unit_columns(nd, 1e-12)


def test_normalization_dead_atom_zeroes_downstream():
    D = np.array([[1.0, 0.0], [0.0, 0.0]])
    Z = np.array([[1.0, 2.0], [3.0, 4.0]])
    nd, nz = normalize_with_compensation([D], Z, Rng(0))
    assert np.linalg.norm(nd[0][:, 1]) == pytest.approx(1.0)
    np.testing.assert_array_equal(nz[1], [0.0, 0.0])
    np.testing.assert_allclose(nd[0] @ nz, D @ Z)


def test_collapsed_model_differs_after_renormalization():
    data = planted([16, 12, 8], 2, 60, 4)
    A = build_operator("dense_gaussian", 10, 16, seed=4)
    Y = A.apply(data.X)
    model = dbcs_fit(Y, A, [16, 12, 8], sweeps=5, rng=Rng(4))
    F = objective(model.dictionaries, model.codes, Y, A, model.lam)
    D = model.dictionaries[0] @ model.dictionaries[1]
    Dn, scales = normalize_columns(D, Rng(0))
    assert np.abs(scales - 1).max() > 1e-3
    assert abs(objective([Dn], model.codes, Y, A, model.lam) - F) > 1e-6 * F
    # with the scale pushed into the code the product, and the data term, survive
    Zc = model.codes * scales[:, None]
    assert np.allclose(Dn @ Zc, D @ model.codes)


def test_collapse_with_unit_scales_is_harmless():
    r = np.random.default_rng(0)
    D1, _ = np.linalg.qr(r.standard_normal((6, 6)))
    D2 = np.eye(6)[:, :4]
    Dn, scales = normalize_columns(D1 @ D2, Rng(0))
    np.testing.assert_allclose(scales, 1.0, atol=1e-12)
    np.testing.assert_allclose(Dn, D1 @ D2, atol=1e-12)


# -- encode --------------------------------------------------------------------------

def _encode_setup():
    data = planted([20, 16, 12], 3, 80, 5)
    A = build_operator("identity", 20, 20)
    model = dbcs_fit(data.X, A, [20, 16, 12], lam=0.05, sweeps=5, rng=Rng(5))
    return data, A, model


def test_encode_zero_input():
    _, A, model = _encode_setup()
    Z = encode(A, model.dictionaries, np.zeros((20, 3)), model.lam)
    assert Z.shape == (12, 3) and not Z.any()


def test_encode_batch_equals_per_column_bitwise():
    data, A, model = _encode_setup()
    Y = data.X[:, :10]
    batch = encode(A, model.dictionaries, Y, model.lam)
    for j in range(10):
        single = encode(A, model.dictionaries, Y[:, j:j + 1], model.lam)
        assert single.tobytes() == batch[:, j:j + 1].copy().tobytes()


def test_encode_permutation_equivariant():
    data, A, model = _encode_setup()
    Y = data.X[:, :15]
    perm = np.random.default_rng(0).permutation(15)
    a = encode(A, model.dictionaries, Y, model.lam)
    b = encode(A, model.dictionaries, Y[:, perm], model.lam)
    assert a[:, perm].tobytes() == b.tobytes()


def test_encode_not_worse_than_training_codes():
    data, A, model = _encode_setup()
    Z = encode(A, model.dictionaries, data.X, model.lam, SolverOptions(5000, 0.0))
    for j in range(data.X.shape[1]):
        y = data.X[:, j:j + 1]
        enc = objective(model.dictionaries, Z[:, j:j + 1], y, A, model.lam)
        trained = objective(model.dictionaries, model.codes[:, j:j + 1], y, A, model.lam)
        assert enc <= trained + 1e-8


def test_encode_dimension_error():
    _, A, model = _encode_setup()
    with pytest.raises(DimensionMismatchError):
        encode(A, model.dictionaries, np.zeros((19, 2)), model.lam)


# -- shallow baselines ----------------------------------------------------------------

def test_bcs_mu_zero_matches_unnormalized_dl_bitwise():
    data = planted([12, 16], 3, 50, 6)
    A = build_operator("identity", 12, 12)
    D1, Z1, t1 = bcs_fit(data.X, A, 16, lam=0.01, mu=0.0, sweeps=6, rng=Rng(3))
    D2, Z2, t2 = dl_fit(data.X, 16, lam=0.01, sweeps=6, rng=Rng(3), normalize=False)
    assert D1.tobytes() == D2.tobytes() and Z1.tobytes() == Z2.tobytes() and t1 == t2


def test_bcs_large_mu_shrinks_dictionary():
    data = planted([20, 30], 3, 100, 7)
    A = build_operator("dense_gaussian", 15, 20, seed=7)
    Y = A.apply(data.X)
    norms = []
    for sweeps in range(1, 6):
        D, _, _ = bcs_fit(Y, A, 30, lam=0.01, mu=1e6, sweeps=sweeps,
                          opts=TrainOptions(sweep_tol=0.0), rng=Rng(1))
        norms.append(np.linalg.norm(D))
    assert all(b <= a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3 * norms[0]


def test_bcs_planted_shallow():
    data = planted([20, 30], 3, 200, 8)
    A = build_operator("dense_gaussian", 15, 20, seed=8)
    Y = A.apply(data.X)
    _, _, trace = bcs_fit(Y, A, 30, lam=0.01, mu=1e-3, sweeps=50, rng=Rng(2))
    assert_trace_monotone(trace)
    assert trace[-1] <= 0.05 * trace[0]


def test_bcs_rejects_negative_mu():
    A = build_operator("identity", 3, 3)
    with pytest.raises(ValueError):
        bcs_fit(np.ones((3, 2)), A, 2, mu=-1.0)


def test_dl_wrapper_equivalence():
    data = planted([12, 16], 3, 40, 9)
    D, Z, trace = dl_fit(data.X, 16, lam=0.02, sweeps=5, rng=Rng(9))
    model = dbcs_fit(data.X, build_operator("identity", 12, 12), [12, 16], lam=0.02,
                     sweeps=5, rng=Rng(9))
    assert D.tobytes() == model.dictionaries[0].tobytes()
    assert Z.tobytes() == model.codes.tobytes()
    assert trace == model.objective_trace


def test_dl_planted_unit_dictionary():
    data = planted([20, 30], 3, 200, 10)
    assert_unit_columns(data.dictionaries, 1e-12)
    _, _, trace = dl_fit(data.X, 30, lam=1e-3, sweeps=50, rng=Rng(10))
    assert trace[-1] <= 0.01 * np.sum(data.X ** 2)


def test_dl_full_rank_fit():
    X = np.random.default_rng(11).standard_normal((10, 40))
    opts = TrainOptions(SolverOptions(500, 1e-12), SolverOptions(100, 1e-12), 0.0)
    D, Z, _ = dl_fit(X, 10, lam=0.0, sweeps=30, opts=opts, rng=Rng(11))
    assert np.linalg.norm(X - D @ Z) <= 1e-3 * np.linalg.norm(X)


# -- persistence -----------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    data = planted([12, 10, 6], 2, 20, 12)
    A = build_operator("sparse_binary", 6, 12, seed=12)
    model = dbcs_fit(A.apply(data.X), A, [12, 10, 6], sweeps=3, rng=Rng(12))
    model.save(tmp_path / "m")
    assert sorted(p.name for p in (tmp_path / "m").iterdir()) == [
        "D1.mat", "D2.mat", "Z.mat", "manifest.json"]
    back = DbcsModel.load(tmp_path / "m")
    for a, b in zip(model.dictionaries + [model.codes], back.dictionaries + [back.codes]):
        assert a.tobytes() == b.tobytes()
    assert back.lam == model.lam and back.objective_trace == model.objective_trace
    assert back.sizes == [12, 10, 6] and back.config == model.config


def test_initial_dictionaries_unit_norm():
    dicts = initial_dictionaries([9, 7, 5, 3], Rng(0))
    assert [D.shape for D in dicts] == [(9, 7), (7, 5), (5, 3)]
    assert_unit_columns(dicts, 1e-12)
