import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cddclock import kernels
from cddclock import _kernels_py

BACKENDS = kernels.backends()


def vectors(n, seed):
    rng = np.random.default_rng(seed)
    return tuple(rng.normal(scale=0.3, size=n) for _ in range(3))


def step_oracle(vx, vy, vz):
    sx = np.array([[0, 1], [1, 0]], complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1.0 + 0j, -1.0])
    from scipy.linalg import expm
    U = np.eye(2, dtype=complex)
    for a, b, c in zip(vx, vy, vz):
        U = expm(-0.5j * (a * sx + b * sy + c * sz)) @ U
    return U


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("n", [0, 1, 7, 300])
def test_chain_matches_expm(name, n):
    v = vectors(n, n)
    np.testing.assert_allclose(BACKENDS[name].su2_chain(*v), step_oracle(*v), atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_chain_respects_initial_matrix(name):
    v = vectors(50, 1)
    U0 = step_oracle(*vectors(3, 2))
    np.testing.assert_allclose(BACKENDS[name].su2_chain(*v, U0), step_oracle(*v) @ U0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 400), st.integers(1, 3), st.integers(0, 1000))
def test_backends_agree_on_p2(n, stride, seed):
    v = vectors(n, seed)
    psi0 = np.array([0.6, 0.8j])
    ref = _kernels_py.su2_track_p2(*v, psi0, stride)
    for mod in BACKENDS.values():
        psi, acc, cnt = mod.su2_track_p2(*v, psi0, stride)
        np.testing.assert_allclose(psi, ref[0], atol=1e-12)
        assert acc == pytest.approx(ref[1], abs=1e-9)
        assert cnt == ref[2]


def test_p2_of_fixed_state():
    # no rotation: |up> has <sigma_z> = 1 so P2 = 1 at every step
    z = np.zeros(10)
    for mod in BACKENDS.values():
        _, acc, cnt = mod.su2_track_p2(z, z, z, np.array([1.0, 0.0]), 1)
        assert (acc, cnt) == (10.0, 10)


def test_compiled_backend_available():
    assert "compiled" in BACKENDS, "the Cython extension is not built"
    assert kernels.BACKEND == "compiled"
