import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _helpers import valid_operator
from condwco import kernels

BACKENDS = sorted(kernels.BACKENDS)


def test_backends_loaded():
    assert "numpy" in kernels.BACKENDS
    assert kernels.NAME in kernels.BACKENDS


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
@given(st.integers(0, 2**32 - 1), st.integers(0, 25))
def test_backends_agree(seed, steps):
    rng = np.random.default_rng(seed)
    T = valid_operator(rng, 20)
    args = (T.u, T.phi.image, T.space.weights, T.A.labels, T.A.n_blocks)
    F = np.ascontiguousarray(rng.normal(size=(T.n, 3)))
    py, cy = kernels.BACKENDS["numpy"], kernels.BACKENDS["cython"]
    scale = max(1.0, np.abs(py.iterate_T(*args, F, steps)).max())
    np.testing.assert_allclose(cy.iterate_T(*args, F, steps), py.iterate_T(*args, F, steps), atol=1e-12 * scale, rtol=0)
    np.testing.assert_allclose(
        cy.block_average(F, T.space.weights, T.A.labels, T.A.n_blocks),
        py.block_average(F, T.space.weights, T.A.labels, T.A.n_blocks), rtol=1e-14, atol=1e-14,
    )
    e = T.conditional_weight()
    np.testing.assert_allclose(cy.cocycle(e, T.phi.image, steps), py.cocycle(e, T.phi.image, steps), rtol=1e-13)
    np.testing.assert_array_equal(cy.preimage_mass(T.phi.image, T.space.weights), py.preimage_mass(T.phi.image, T.space.weights))
    n1, f1 = cy.orbit_norms(*args, F, steps, T.p)
    n2, f2 = py.orbit_norms(*args, F, steps, T.p)
    np.testing.assert_allclose(n1, n2, rtol=1e-12, atol=1e-300)


def test_singleton_blocks_are_exact():
    w = np.array([0.3, 0.7, 1.1])
    f = np.array([[1.0 / 3], [2.0 / 7], [5.0]])
    for mod in kernels.BACKENDS.values():
        out = mod.block_average(f, w, np.arange(3), 3)
        np.testing.assert_array_equal(out, f)


def test_pure_fallback_env(tmp_path):
    import subprocess
    import sys

    code = "import condwco.kernels as k; print(k.NAME)"
    out = subprocess.run([sys.executable, "-c", code], env={"CONDWCO_PURE": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
