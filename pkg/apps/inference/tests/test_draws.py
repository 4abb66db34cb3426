import numpy as np
from django.test import SimpleTestCase

from apps.common.exceptions import NotPsdError
from apps.inference.draws import mvn_draws, robust_cholesky


class CholeskyTests(SimpleTestCase):
    def test_positive_definite(self):
        omega = np.array([[2.0, 0.5], [0.5, 1.0]])
        L = robust_cholesky(omega)
        np.testing.assert_allclose(L @ L.T, omega)

    def test_singular_psd_gets_jitter(self):
        omega = np.ones((2, 2))
        L = robust_cholesky(omega)
        np.testing.assert_allclose(L @ L.T, omega, atol=1e-7)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(robust_cholesky(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_indefinite_and_asymmetric(self):
        with self.assertRaises(NotPsdError):
            robust_cholesky(np.diag([1.0, -1.0]))
        with self.assertRaises(NotPsdError):
            robust_cholesky(np.array([[1.0, 0.2], [0.0, 1.0]]))


class DrawTests(SimpleTestCase):
    def test_same_seed_same_draws(self):
        omega = np.array([[1.0, 0.3], [0.3, 2.0]])
        np.testing.assert_array_equal(mvn_draws(omega, 50, 9), mvn_draws(omega, 50, 9))
        self.assertFalse(np.array_equal(mvn_draws(omega, 50, 9), mvn_draws(omega, 50, 10)))

    def test_sample_covariance(self):
        omega = np.array([[1.0, 0.3], [0.3, 2.0]])
        M = mvn_draws(omega, 20000, np.random.SeedSequence(3))
        self.assertEqual(M.shape, (20000, 2))
        np.testing.assert_allclose(np.cov(M.T), omega, atol=0.06)
