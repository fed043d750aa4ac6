import numpy as np
import pytest

from entroq import kernels
from entroq._accel import NUMBA_ENABLED, backend_name

from conftest import random_hermitian


def test_backend_flag_consistent():
    assert backend_name() == ("numba" if NUMBA_ENABLED else "numpy")


@pytest.mark.parametrize("d", [1, 2, 3, 4, 8, 16])
def test_jacobi_variants_agree(d, rng):
    m = random_hermitian(d, rng)
    w1, v1 = kernels.jacobi_eigh_numba(m.copy())
    w2, v2 = kernels.jacobi_eigh_numpy(m.copy())
    assert np.allclose(w1, w2, atol=1e-12)
    for w, v in ((w1, v1), (w2, v2)):
        assert np.allclose((v * w) @ v.conj().T, m, atol=1e-10)


def test_tridiag_variants_agree(rng):
    diag, off = rng.standard_normal(9), rng.standard_normal(8)
    t = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    for fn in (kernels.tridiag_eigh_numba, kernels.tridiag_eigh_numpy):
        w, v = fn(diag.copy(), off.copy())
        order = np.argsort(w)
        assert np.allclose(np.asarray(w)[order], np.linalg.eigvalsh(t), atol=1e-12)
        assert np.allclose(t @ v, v * w, atol=1e-10)
