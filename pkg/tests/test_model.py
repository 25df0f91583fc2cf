import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinbroadcast.model import (
    CentralState,
    CouplingMatrix,
    DimensionError,
    EnvSpin,
    InvalidStateError,
    Partition,
    RegisterLabel,
    all_labels,
    derived_theta_zeta,
    dumps,
    loads,
    make_partition,
)
from spinbroadcast.oracle import env_spin_state

from conftest import env_spins


def test_theta_zeta_of_maximally_mixed_spin():
    assert derived_theta_zeta(EnvSpin(0.5, 0.0, 1.0, 0.0)) == (pytest.approx(0.0), pytest.approx(0.0))


def test_theta_zeta_of_polarized_spin():
    theta, zeta = derived_theta_zeta(EnvSpin(1.0, 0.0, 0.0, 0.0))
    assert theta == pytest.approx(0.0, abs=1e-15)
    assert zeta == 1.0


@given(env_spins())
def test_theta_zeta_match_rotated_matrix(spin):
    rho = env_spin_state(spin).data
    theta, zeta = derived_theta_zeta(spin)
    assert rho[0, 0].real == pytest.approx(0.5 * (1 + zeta), abs=1e-12)
    assert rho[0, 1] == pytest.approx(theta * np.exp(1j * spin.alpha), abs=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [dict(lam=1.2), dict(lam=-0.1), dict(lam=0.5, beta=4.0), dict(lam=0.5, alpha=2 * np.pi), dict(lam=0.5, gamma_euler=-1)],
)
def test_env_spin_rejects_out_of_range(kwargs):
    with pytest.raises(ValueError):
        EnvSpin(**kwargs)


def test_make_partition_consecutive():
    p = make_partition(10, [3, 3])
    assert p.macrofractions == ((0, 1, 2), (3, 4, 5))
    assert p.unobserved == (6, 7, 8, 9)
    assert p.f_times_M == 2 and p.n_dis == 4 and p.n_mac(1) == 3


def test_make_partition_all_observed():
    p = make_partition(4, [4])
    assert p.unobserved == () and p.n_dis == 0


def test_make_partition_overflow():
    with pytest.raises(DimensionError):
        make_partition(3, [2, 2])


def test_partition_rejects_overlap_and_bad_unobserved():
    with pytest.raises(ValueError):
        Partition(5, ((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Partition(5, ((0, 1),), unobserved=(2, 3))
    with pytest.raises(DimensionError):
        Partition(3, ((0, 5),))


def test_label_index_round_trip():
    labels = list(all_labels(3))
    assert [l.index for l in labels] == list(range(8))
    assert all(RegisterLabel.from_index(3, l.index) == l for l in labels)
    assert str(RegisterLabel.from_plus_set(4, [1, 3])) == "+-+-"


def test_label_rejects_non_spin_values():
    with pytest.raises(ValueError):
        RegisterLabel((1, 0))


def test_coupling_matrix_is_read_only_and_checked():
    G = CouplingMatrix([[1.0, 2.0]])
    assert (G.K, G.N, G.scale) == (1, 2, 2.0)
    with pytest.raises(ValueError):
        G.entries[0, 0] = 3.0
    with pytest.raises(DimensionError):
        CouplingMatrix([1.0, 2.0])
    with pytest.raises(ValueError):
        CouplingMatrix([[np.nan]])


def test_central_state_validation():
    CentralState.qubit(0.3, 0.2 + 0.1j)
    with pytest.raises(InvalidStateError):
        CentralState(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(InvalidStateError):
        CentralState(np.diag([0.6, 0.6]))
    with pytest.raises(InvalidStateError):
        CentralState(np.array([[1.2, 0.0], [0.0, -0.2]]))
    with pytest.raises(DimensionError):
        CentralState(np.eye(3) / 3)


def test_central_state_named_coefficients():
    s = CentralState.qubit(0.3, 0.2 - 0.1j)
    assert (s.sigma_plus, s.sigma_minus, s.sigma_pm) == (pytest.approx(0.3), pytest.approx(0.7), 0.2 - 0.1j)
    assert s.coefficient((1,), (-1,)) == 0.2 - 0.1j
    two = CentralState(np.eye(4) / 4)
    with pytest.raises(DimensionError):
        two.sigma_plus


def test_from_coefficients_fills_hermitian_partner():
    s = CentralState.from_coefficients(1, {((1,), (1,)): 0.5, ((-1,), (-1,)): 0.5, ((1,), (-1,)): 0.25j})
    assert s.coefficient((-1,), (1,)) == -0.25j


@given(env_spins())
def test_env_spin_round_trip(spin):
    assert loads(dumps(spin)) == spin


def test_json_round_trip_of_all_types():
    objs = [
        CouplingMatrix([[0.1, 0.2], [0.3, 0.4]]),
        make_partition(5, [2, 1]),
        CentralState.qubit(0.25, 0.1 + 0.2j),
        RegisterLabel((1, -1)),
    ]
    for obj in objs:
        back = loads(dumps(obj))
        if isinstance(obj, CentralState):
            np.testing.assert_array_equal(back.matrix, obj.matrix)
        else:
            assert back == obj
    doc = json.loads(dumps(objs[0]))
    assert doc["type"] == "CouplingMatrix" and doc["K"] == 2


def test_loads_rejects_unknown_type():
    with pytest.raises(ValueError):
        loads('{"type": "Banana"}')
