"""Kernel backends: numpy/numba agreement and behavioral contracts."""

import subprocess
import sys

import numpy as np
import pytest

from retrospect.kernels import BACKEND, PROB_FLOOR, _load
from retrospect.kernels import _numpy as ref

try:
    from retrospect.kernels import _numba as numba_kernels
except ImportError:
    numba_kernels = None


def _pair(rng, m=13, n=7):
    return rng.uniform(-2, 2, (m, n)), rng.uniform(-2, 2, (m, n))


def test_active_backend_is_known():
    assert BACKEND in ("numpy", "numba")


def test_load_numpy_forced():
    impl, name = _load("numpy")
    assert name == "numpy" and impl is ref


@pytest.mark.skipif(numba_kernels is None, reason="numba not installed")
def test_load_auto_prefers_numba():
    _, name = _load("auto")
    assert name == "numba"


def test_invalid_backend_env_rejected(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-c", "import retrospect"],
        env={"RETROSPECT_KERNELS": "fortran", "PATH": "/usr/bin:/bin"},
        capture_output=True, text=True,
    )
    assert proc.returncode != 0
    assert "RETROSPECT_KERNELS" in proc.stderr


@pytest.mark.skipif(numba_kernels is None, reason="numba not installed")
class TestCrossBackendAgreement:
    """Both implementations must agree to reduction-order noise (~1e-13)."""

    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def _close(self, a, b):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)

    def test_relu(self):
        x = self.rng.uniform(-2, 2, (9, 5))
        g = self.rng.uniform(-1, 1, (9, 5))
        self._close(ref.relu_fwd(x), numba_kernels.relu_fwd(x))
        self._close(ref.relu_bwd(x, g), numba_kernels.relu_bwd(x, g))

    def test_softmax(self):
        x = self.rng.uniform(-4, 4, (11, 6))
        g = self.rng.uniform(-1, 1, (11, 6))
        p_ref = ref.softmax_fwd(x)
        p_nb = numba_kernels.softmax_fwd(x)
        self._close(p_ref, p_nb)
        self._close(ref.softmax_bwd(p_ref, g), numba_kernels.softmax_bwd(p_ref, g))

    def test_l1(self):
        a, b = _pair(self.rng)
        self._close(ref.l1_total_fwd(a.ravel(), b.ravel()),
                    numba_kernels.l1_total_fwd(a.ravel(), b.ravel()))
        self._close(ref.l1_total_bwd(a, b, 1.7), numba_kernels.l1_total_bwd(a, b, 1.7))
        self._close(ref.l1_rows_fwd(a, b), numba_kernels.l1_rows_fwd(a, b))
        g = self.rng.uniform(-1, 1, a.shape[0])
        self._close(ref.l1_rows_bwd(a, b, g), numba_kernels.l1_rows_bwd(a, b, g))

    def test_l2(self):
        a, b = _pair(self.rng)
        d_ref = ref.l2_total_fwd(a.ravel(), b.ravel())
        self._close(d_ref, numba_kernels.l2_total_fwd(a.ravel(), b.ravel()))
        self._close(ref.l2_total_bwd(a, b, d_ref, 0.3),
                    numba_kernels.l2_total_bwd(a, b, d_ref, 0.3))
        rows = ref.l2_rows_fwd(a, b)
        self._close(rows, numba_kernels.l2_rows_fwd(a, b))
        g = self.rng.uniform(-1, 1, a.shape[0])
        self._close(ref.l2_rows_bwd(a, b, rows, g), numba_kernels.l2_rows_bwd(a, b, rows, g))

    def test_cross_entropy(self):
        logits = self.rng.uniform(-3, 3, (10, 4))
        p = ref.softmax_fwd(logits)
        labels = self.rng.integers(0, 4, 10)
        self._close(ref.xent_fwd(p, labels), numba_kernels.xent_fwd(p, labels))
        self._close(ref.xent_bwd(p, labels, 1.0), numba_kernels.xent_bwd(p, labels, 1.0))

    @pytest.mark.parametrize("name", ["sgd", "momentum", "adam"])
    def test_optimizer_steps_bitwise(self, name):
        # elementwise updates with identical op order: bit-exact across backends
        theta_a = self.rng.uniform(-1, 1, 40)
        theta_b = theta_a.copy()
        bufs_a = [np.zeros(40), np.zeros(40)]
        bufs_b = [np.zeros(40), np.zeros(40)]
        for t in range(1, 6):
            g = self.rng.uniform(-1, 1, 40)
            if name == "sgd":
                ref.sgd_step(theta_a, g, 0.05)
                numba_kernels.sgd_step(theta_b, g, 0.05)
            elif name == "momentum":
                ref.momentum_step(theta_a, bufs_a[0], g, 0.05, 0.9)
                numba_kernels.momentum_step(theta_b, bufs_b[0], g, 0.05, 0.9)
            else:
                ref.adam_step(theta_a, bufs_a[0], bufs_a[1], g, 0.05, 0.9, 0.999, 1e-8, t)
                numba_kernels.adam_step(theta_b, bufs_b[0], bufs_b[1], g, 0.05, 0.9, 0.999, 1e-8, t)
        assert np.array_equal(theta_a, theta_b)


def test_sign_convention_at_zero(kernel_impl):
    a = np.array([[1.0, 2.0, -1.0]])
    b = np.array([[1.0, 0.0, 0.5]])
    da = kernel_impl.l1_total_bwd(a, b, 2.0)
    assert da.tolist() == [[0.0, 2.0, -2.0]]


def test_l2_zero_distance_gradient(kernel_impl):
    a = np.array([[0.5, 0.5]])
    da = kernel_impl.l2_total_bwd(a, a.copy(), 0.0, 3.0)
    assert np.array_equal(da, np.zeros_like(a))
    rows = kernel_impl.l2_rows_bwd(a, a.copy(), np.array([0.0]), np.array([3.0]))
    assert np.array_equal(rows, np.zeros_like(a))


def test_cross_entropy_clamp(kernel_impl):
    p = np.array([[0.0, 1.0]])
    labels = np.array([0], dtype=np.int64)
    val = kernel_impl.xent_fwd(p, labels)
    assert val == pytest.approx(-np.log(PROB_FLOOR))
    # flat region: clamped probability contributes no gradient
    dp = kernel_impl.xent_bwd(p, labels, 1.0)
    assert np.array_equal(dp, np.zeros_like(p))


def test_updates_run_in_place(kernel_impl):
    theta = np.ones(4)
    ref_obj = theta
    kernel_impl.sgd_step(theta, np.ones(4), 0.1)
    assert theta is ref_obj
    assert np.allclose(theta, 0.9)
