import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampler import (
    CandidateGrid,
    ConfigError,
    FimBank,
    NoiseSpec,
    ParamGrid,
    SignalModel,
    SingularFimError,
    aggregate_fim,
    apply_param_transform,
    build_bank,
    build_banks,
    crlb_diag,
    crlb_table,
    is_positive_definite,
    weighted_crlb_sum,
    worst_case_crlb,
)


def random_bank(rng, N=12, P=4, rank=2):
    g = rng.standard_normal((N, P, rank))
    return FimBank(np.einsum("npr,nqr->npq", g, g))


def test_aggregate_trivial(rng):
    bank = random_bank(rng)
    np.testing.assert_array_equal(aggregate_fim(np.zeros(bank.size), bank), np.zeros((4, 4)))
    e = np.zeros(bank.size)
    e[3] = 1
    np.testing.assert_array_equal(aggregate_fim(e, bank), bank.fims[3])


def test_aggregate_homogeneous_and_additive(rng):
    bank = random_bank(rng)
    w, v = rng.random(bank.size), rng.random(bank.size)
    direct = sum(0.37 * w[n] * bank.fims[n] for n in range(bank.size))
    np.testing.assert_allclose(aggregate_fim(0.37 * w, bank), direct, rtol=1e-13)
    np.testing.assert_allclose(aggregate_fim(w + v, bank), aggregate_fim(w, bank) + aggregate_fim(v, bank),
                               rtol=1e-14, atol=1e-14)


def test_aggregate_length_mismatch(rng):
    with pytest.raises(ConfigError):
        aggregate_fim(np.ones(3), random_bank(rng))


def test_crlb_diag_examples():
    np.testing.assert_allclose(crlb_diag(np.diag([4.0, 0.25])), [0.25, 4.0], rtol=1e-15)
    np.testing.assert_allclose(crlb_diag(np.eye(5)), np.ones(5), rtol=1e-15)


def test_crlb_diag_vs_column_solves(rng):
    for _ in range(20):
        a = rng.standard_normal((5, 5))
        fim = a @ a.T + 0.1 * np.eye(5)
        want = [np.linalg.solve(fim, e)[i] for i, e in enumerate(np.eye(5))]
        np.testing.assert_allclose(crlb_diag(fim), want, rtol=1e-10)


def test_crlb_singular_and_ridge():
    fim = np.diag([1.0, 0.0])
    with pytest.raises(SingularFimError):
        crlb_diag(fim)
    np.testing.assert_allclose(crlb_diag(fim, ridge=0.5), [1 / 1.5, 2.0])
    with pytest.raises(ConfigError):
        crlb_diag(np.eye(2), ridge=-1)


def test_pd_test_is_scale_invariant():
    # wildly different parameter scales are still well posed
    fim = np.diag([1e-6, 1e8])
    fim[0, 1] = fim[1, 0] = 0.5 * np.sqrt(1e2)
    assert is_positive_definite(fim)
    assert not is_positive_definite(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_weighted_sum_examples(rng):
    a = rng.standard_normal((4, 4))
    fim = a @ a.T + np.eye(4)
    inv = np.linalg.inv(fim)
    assert weighted_crlb_sum(fim, np.ones(4)) == pytest.approx(np.trace(inv), rel=1e-10)
    assert weighted_crlb_sum(fim, np.eye(4)[2]) == pytest.approx(inv[2, 2], rel=1e-12)
    assert weighted_crlb_sum(fim, np.zeros(4)) == 0.0
    with pytest.raises(ConfigError):
        weighted_crlb_sum(fim, -np.ones(4))


def test_transform_examples(rng):
    bank = random_bank(rng)
    np.testing.assert_allclose(apply_param_transform(bank, np.eye(4)).fims, bank.fims)
    np.testing.assert_allclose(apply_param_transform(bank, 3.0 * np.eye(4)).fims, 9.0 * bank.fims, rtol=1e-14)
    diag_bank = FimBank(np.stack([np.diag(rng.uniform(1, 2, 3)) for _ in range(4)]))
    d = np.array([2.0, 0.5, 3.0])
    before = crlb_diag(aggregate_fim(np.ones(4), diag_bank))
    after = crlb_diag(aggregate_fim(np.ones(4), apply_param_transform(diag_bank, np.diag(d))))
    np.testing.assert_allclose(after, before / d**2, rtol=1e-13)
    with pytest.raises(ConfigError):
        apply_param_transform(bank, np.eye(3))


def test_worst_case_examples(rng):
    bank = random_bank(rng)
    w = rng.random(bank.size)
    assert worst_case_crlb(w, [bank], 1) == crlb_diag(aggregate_fim(w, bank))[1]
    banks = [FimBank(np.stack([np.diag(s * np.arange(1.0, 4.0))] * 2)) for s in (1.0, 2.0, 0.5)]
    # aggregate with w = 1 is diag(2 s, 4 s, 6 s); worst case is the s = 0.5 member
    for p in range(3):
        assert worst_case_crlb(np.ones(2), banks, p) == pytest.approx(1 / (2 * 0.5 * (p + 1)), rel=1e-14)
    other = random_bank(rng)
    assert worst_case_crlb(w, [bank, other], 0) >= worst_case_crlb(w, [bank], 0)


def test_worst_case_reports_singular_member(rng):
    good = random_bank(rng)
    bad = FimBank(np.zeros_like(good.fims))
    with pytest.raises(SingularFimError) as info:
        worst_case_crlb(np.ones(good.size), [good, bad], 0)
    assert info.value.theta_index == 1


def test_param_grid_members_and_interval():
    pg = ParamGrid.along([1, 0.25, 0.1, 0.5], 2, 0.1, 0.022, 10)
    assert len(pg) == 10
    np.testing.assert_allclose(pg.thetas[:, 2], 0.1 + np.arange(10) / 10 * 0.022)
    lo, hi = ParamGrid.interval(0.1, 0.022, 10)
    assert lo == 0.1 and hi == pytest.approx(0.1 + 0.9 * 0.022)
    assert pg.thetas[:, 2].max() == pytest.approx(hi)


def test_build_banks_shapes():
    m = SignalModel("damped_1d", 1)
    grid = CandidateGrid.uniform(10, start=1)
    banks = build_banks(m, ParamGrid.along([1, 0.2, 0.1, 0.5], 2, 0.1, 0.02, 3), grid, NoiseSpec(0.1))
    assert len(banks) == 3 and banks[0].fims.shape == (10, 4, 4)
    one = build_bank(m, banks[1].theta, grid, NoiseSpec(0.1))
    np.testing.assert_array_equal(one.fims, banks[1].fims)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_loewner_monotonicity(seed):
    rng = np.random.default_rng(seed)
    bank = random_bank(rng, N=10, P=4)
    w = rng.uniform(0.3, 1.0, bank.size)
    w2 = w + rng.uniform(0.0, 1.0, bank.size)
    c1 = crlb_diag(aggregate_fim(w, bank))
    c2 = crlb_diag(aggregate_fim(w2, bank))
    assert np.all(c2 <= c1 * (1 + 1e-10))


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_worst_case_attained_on_grid(seed):
    rng = np.random.default_rng(seed)
    banks = [random_bank(rng, N=8, P=3) for _ in range(int(rng.integers(1, 6)))]
    w = rng.uniform(0.2, 1.0, 8)
    p = int(rng.integers(0, 3))
    value = worst_case_crlb(w, banks, p)
    table = crlb_table(w, banks)
    assert value in set(table[:, p].tolist())
    assert value == table[:, p].max()
