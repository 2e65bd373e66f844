import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import reference_lm2_decode
from sccs.ensemble import (MeasurementMatrixInstance, lift_protograph, make_coupled_protograph,
                           make_regular_protograph)
from sccs.lm2_decoder import (TRIAL_CSV_FIELDS, DecodeResult, audit_false_verification,
                              gen_sparse_signal, lm2_decode, measure, measure_exact,
                              monte_carlo, recovered, trial_stats_csv, _inverse_mod_2_64)

BACKENDS = ["numba", "numpy"]
G48 = make_regular_protograph(4, 8)


def _instance(entries, M, N):
    r, c, v = map(np.array, zip(*entries))
    return MeasurementMatrixInstance(M=M, N=N, rows=r, cols=c, values=v, lift_size=1)


# --- signals and measurements ------------------------------------------------

@pytest.mark.parametrize("N, K", [(100, 0), (100, 100), (4032, 403), (1, 1)])
def test_signal_sparsity(N, K):
    x = gen_sparse_signal(N, K, seed=1)
    assert x.K == K and x.N == N
    assert np.count_nonzero(x.values) == K
    assert np.array_equal(np.flatnonzero(x.values), x.support)


@pytest.mark.parametrize("bits", [32, 48, 63, 64])
def test_signal_value_range(bits):
    x = gen_sparse_signal(5000, 2500, value_bits=bits, seed=2)
    nz = x.values[x.support]
    assert np.all(nz != 0)
    assert np.abs(nz).max() <= 2 ** (bits - 1) - 1
    assert (nz > 0).mean() == pytest.approx(0.5, abs=0.05)
    assert np.abs(nz).max() > 2 ** (bits - 2)


def test_signal_epsilon_and_errors():
    assert gen_sparse_signal(1000, epsilon=0.25, seed=0).K == 250
    with pytest.raises(ValueError):
        gen_sparse_signal(10, 11)
    with pytest.raises(ValueError):
        gen_sparse_signal(10, 2, value_bits=31)
    with pytest.raises(ValueError):
        gen_sparse_signal(10, 2, epsilon=0.2)


def test_signal_determinism():
    a = gen_sparse_signal(1000, 100, seed=9)
    b = gen_sparse_signal(1000, 100, seed=9)
    assert np.array_equal(a.values, b.values)


def test_measure_examples():
    inst = lift_protograph(G48, 20, seed=0)
    assert not measure(inst, np.zeros(inst.N, dtype=np.int64)).any()
    x = np.zeros(inst.N, dtype=np.int64)
    x[7] = 12345
    y = measure(inst, x)
    rows = inst.rows[inst.cols == 7]
    assert set(np.flatnonzero(y)) == set(rows.tolist())
    for r in rows:
        assert y[r] == inst.values[(inst.rows == r) & (inst.cols == 7)][0] * 12345
    with pytest.raises(ValueError):
        measure(inst, np.zeros(inst.N + 1, dtype=np.int64))


def test_measure_is_linear_and_exact_mod_2_64():
    inst = lift_protograph(G48, 30, seed=3, entry_rule="continuous")
    x1 = gen_sparse_signal(inst.N, 20, seed=1)
    x2 = gen_sparse_signal(inst.N, 20, seed=2)
    with np.errstate(over="ignore"):
        total = measure(inst, x1) + measure(inst, x2)
        assert np.array_equal(total, measure(inst, x1.values + x2.values))
    exact = measure_exact(inst, x1)
    assert [v % 2 ** 64 for v in exact] == [int(v) % 2 ** 64 for v in measure(inst, x1)]


@given(st.lists(st.integers(-2 ** 31, 2 ** 31 - 1), min_size=1, max_size=50))
def test_inverse_mod_2_64(vals):
    a = np.array([2 * v + 1 for v in vals], dtype=np.int64)
    inv = _inverse_mod_2_64(a)
    assert all((int(x) * int(y)) % 2 ** 64 == 1 for x, y in zip(a, inv))


# --- decoder vs exact reference ----------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("rule", ["signed_unit", "continuous"])
@pytest.mark.parametrize("g, Z", [(make_regular_protograph(3, 6), 20), (G48, 12),
                                  (make_coupled_protograph(3, 6, 3), 8)], ids=["36", "48", "36L3"])
def test_decoder_matches_reference(backend, rule, g, Z):
    for s in range(4):
        inst = lift_protograph(g, Z, seed=s, entry_rule=rule)
        for eps in (0.1, 0.3):
            x = gen_sparse_signal(inst.N, epsilon=eps, seed=100 + s)
            ent = list(zip(inst.rows.tolist(), inst.cols.tolist(), inst.values.tolist()))
            est, ver, it = reference_lm2_decode(inst.M, inst.N, ent, measure_exact(inst, x), 200)
            r = lm2_decode(inst, measure(inst, x), 200, backend=backend)
            assert r.verified.tolist() == ver
            assert r.iterations_used == it
            assert [int(e) for e in r.estimates] == [int(e) if v else 0 for e, v in zip(est, ver)]


@pytest.mark.parametrize("backend", BACKENDS)
def test_backends_agree_at_scale(backend):
    inst = lift_protograph(G48, 2000, seed=4, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, epsilon=0.2, seed=4)
    ref = lm2_decode(inst, measure(inst, x), backend="numba")
    r = lm2_decode(inst, measure(inst, x), backend=backend)
    for f in ("estimates", "verified", "verified_at"):
        assert np.array_equal(getattr(r, f), getattr(ref, f))
    assert (r.iterations_used, r.halted_reason) == (ref.iterations_used, ref.halted_reason)


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_signal_verified_in_one_iteration(backend):
    inst = lift_protograph(G48, 50, seed=0)
    r = lm2_decode(inst, np.zeros(inst.M, dtype=np.int64), backend=backend)
    assert r.verified.all() and not r.estimates.any()
    assert r.iterations_used == 1 and r.halted_reason == "all_verified"


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_nonzero_hand_trace(backend):
    # x = (0, 7, 0); row 0 sees x0 + x1, row 1 sees x1 - x2, row 2 sees x0 + x2
    inst = _instance([(0, 0, 1), (0, 1, 1), (1, 1, 1), (1, 2, -1), (2, 0, 1), (2, 2, 1)], 3, 3)
    y = measure(inst, [0, 7, 0])
    assert y.tolist() == [7, 7, 0]
    r = lm2_decode(inst, y, backend=backend)
    # row 2 is zero, so x0 and x2 verify to 0 first; x1 then matches 7 twice
    assert r.verified_at.tolist() == [1, 1, 1]
    assert r.estimates.tolist() == [0, 7, 0]
    assert r.halted_reason == "all_verified"


@pytest.mark.parametrize("backend", BACKENDS)
def test_k1_on_lifted_instance(backend):
    inst = lift_protograph(G48, 100, seed=1, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, 1, seed=3)
    r = lm2_decode(inst, measure(inst, x), backend=backend)
    assert r.halted_reason == "all_verified"
    assert np.array_equal(r.estimates, x.values)


@pytest.mark.parametrize("backend", BACKENDS)
def test_decoding_below_threshold(backend):
    inst = lift_protograph(G48, 16000, seed=2, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, epsilon=0.15, seed=2)
    r = lm2_decode(inst, measure(inst, x), backend=backend)
    assert r.halted_reason == "all_verified"
    assert np.array_equal(r.estimates, x.values)
    assert audit_false_verification(r, x) == 0


def test_stickiness_and_stall():
    inst = lift_protograph(G48, 500, seed=5, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, epsilon=0.3, seed=5)
    y = measure(inst, x)
    full = lm2_decode(inst, y)
    assert full.halted_reason == "stalled" and not full.verified.all()
    prev = np.zeros(inst.N, dtype=bool)
    for t in range(1, full.iterations_used + 1):
        part = lm2_decode(inst, y, max_iters=t)
        assert np.all(part.verified >= prev)
        assert np.array_equal(part.verified, ~full.unverified_after(t))
        prev = part.verified
    assert lm2_decode(inst, y, max_iters=1).halted_reason in ("max_iters", "stalled")


def test_idempotent_halt():
    inst = lift_protograph(G48, 300, seed=6, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, epsilon=0.1, seed=6)
    y = measure(inst, x)
    a = lm2_decode(inst, y)
    b = lm2_decode(inst, y, max_iters=a.iterations_used + 10)
    assert a.halted_reason == "all_verified"
    assert np.array_equal(a.estimates, b.estimates) and a.iterations_used == b.iterations_used


def test_big_integer_measurements_accepted():
    inst = lift_protograph(G48, 40, seed=0, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, 5, seed=0, value_bits=64)
    a = lm2_decode(inst, measure_exact(inst, x))
    b = lm2_decode(inst, measure(inst, x))
    assert np.array_equal(a.estimates, b.estimates)
    with pytest.raises(ValueError):
        lm2_decode(inst, [0] * (inst.M - 1))


def test_even_entries_rejected():
    inst = _instance([(0, 0, 2), (0, 1, 1)], 1, 2)
    with pytest.raises(ValueError):
        lm2_decode(inst, [0])


# --- audit -------------------------------------------------------------------

def test_audit():
    inst = lift_protograph(G48, 100, seed=7, entry_rule="continuous")
    x = gen_sparse_signal(inst.N, epsilon=0.1, seed=7)
    r = lm2_decode(inst, measure(inst, x))
    assert audit_false_verification(r, x) == 0
    assert recovered(r, x).all()
    wrong = x.values.copy()
    wrong[r.verified_set[0]] += 1
    assert audit_false_verification(r, wrong) == 1
    with pytest.raises(ValueError):
        audit_false_verification(r, wrong[:-1])


def test_signed_entries_can_false_verify_on_4_cycle():
    # rows 0 and 1 both see x0 + x1 and nothing else unresolved
    inst = _instance([(0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, 1)], 2, 2)
    x = np.array([3, 4])
    r = lm2_decode(inst, measure(inst, x))
    assert audit_false_verification(r, x) == 2
    assert r.estimates.tolist() == [7, 7]


def test_decode_result_helpers():
    r = DecodeResult(np.array([0, 5, 0]), np.array([True, True, False]),
                     np.array([1, 3, -1]), 3, "stalled")
    assert r.verified_set.tolist() == [0, 1]
    assert r.unverified_after(2).tolist() == [False, True, True]


# --- Monte Carlo -------------------------------------------------------------

def test_monte_carlo_eps_zero_and_monotone():
    stats = monte_carlo(G48, 200, [0.0, 0.1, 0.35], trials=8, seed=3)
    assert stats[0].full_success_count == 8 and stats[0].K == 0
    rates = [s.success_rate for s in stats]
    assert rates == sorted(rates, reverse=True)
    assert stats[-1].mean_unverified_fraction > 0.1
    assert all(s.false_verification_count == 0 for s in stats)


def test_monte_carlo_deterministic_and_jobs_independent():
    a = monte_carlo(G48, 100, [0.2, 0.25], trials=4, seed=11)
    b = monte_carlo(G48, 100, [0.2, 0.25], trials=4, seed=11, jobs=2)
    c = monte_carlo(G48, 100, [0.2, 0.25], trials=4, seed=12)
    assert a == b
    assert a != c


def test_monte_carlo_shared_instance_and_csv():
    stats = monte_carlo(G48, 100, [0.2], trials=3, seed=0, shared_instance=True,
                        backend="numpy")
    assert stats[0].shared_instance
    text = trial_stats_csv(stats)
    header, row = text.splitlines()
    assert header.split(",") == TRIAL_CSV_FIELDS
    assert row.startswith("4,8,,100,200,40,0.2,3,")
    with pytest.raises(ValueError):
        monte_carlo(G48, 100, [0.2], trials=0)


def test_monte_carlo_reports_false_verification(caplog):
    stats = monte_carlo(G48, 50, [0.15], trials=20, seed=0, entry_rule="signed_unit")
    assert stats[0].false_verification_count > 0
    assert "false verification" in caplog.text
