import unittest
from fractions import Fraction

import numpy as np

from iems.polyring import (
    LogGenerator,
    Poly,
    PolyringError,
    log_series,
    log_series_expand,
    poly_roots,
    root_condition,
)
from iems.schemes import characteristic_triple, family_generator, make_scheme


class PolyArithmeticTests(unittest.TestCase):
    def test_trailing_zeros_are_stripped(self):
        p = Poly.of(1, 2, 0, 0)

        self.assertEqual(p.coeffs, (1, 2))
        self.assertEqual(p.degree, 1)

    def test_zero_polynomial_has_negative_degree(self):
        self.assertTrue(Poly().is_zero)
        self.assertEqual(Poly.of(0).degree, -1)

    def test_exact_product_and_evaluation(self):
        p = Poly.of(-1, 1) * Poly.of(1, 1)

        self.assertEqual(p.coeffs, (-1, 0, 1))
        self.assertEqual(p(Fraction(1, 2)), Fraction(-3, 4))

    def test_compose_shifts_argument(self):
        shifted = Poly.monomial(2).compose(Poly.of(1, 1))

        self.assertEqual(shifted.coeffs, (1, 2, 1))

    def test_log_series_coefficients(self):
        self.assertEqual(log_series(3).coeffs, (0, 1, Fraction(-1, 2), Fraction(1, 3)))


class RootTests(unittest.TestCase):
    def test_zeta_squared_minus_one(self):
        report = poly_roots(Poly.of(-1, 0, 1))

        np.testing.assert_allclose(sorted(r.real for r in report.roots), [-1.0, 1.0], atol=1e-12)
        self.assertTrue(all(report.on_circle))
        self.assertTrue(report.simple_on_circle)

    def test_monomial_double_root_at_origin(self):
        scheme = make_scheme("WBDF", 2, 1)
        report = poly_roots(characteristic_triple(scheme).rho_b)

        self.assertEqual(len(report.roots), 2)
        self.assertAlmostEqual(report.max_modulus, 0.0, places=12)

    def test_zero_polynomial_raises(self):
        with self.assertRaises(PolyringError) as context:
            poly_roots(Poly())

        self.assertIn("zero polynomial", str(context.exception))

    def test_constant_has_no_roots(self):
        report = poly_roots(Poly.of(3))

        self.assertEqual(report.roots, ())
        self.assertTrue(root_condition(Poly.of(3)))

    def test_roots_reproduce_coefficients(self):
        rng = np.random.default_rng(29)
        for degree in range(1, 10):
            with self.subTest(degree=degree):
                coeffs = [Fraction(1)] + [Fraction(int(x), 8) for x in rng.integers(-8, 9, degree)]
                report = poly_roots(Poly(coeffs=coeffs[::-1]))

                self.assertEqual(len(report.roots), degree)
                np.testing.assert_allclose(np.poly(report.roots), [float(x) for x in coeffs], atol=1e-8)

    def test_gbdf3_implicit_polynomial_below_threshold(self):
        with self.assertLogs("iems.schemes", level="WARNING"):
            below = make_scheme("GBDF", 3, Fraction(70, 100))
        above = make_scheme("GBDF", 3, Fraction(72, 100))

        self.assertGreater(poly_roots(characteristic_triple(below).rho_b).max_modulus, 1.0)
        self.assertTrue(root_condition(characteristic_triple(above).rho_b))


class RootConditionTests(unittest.TestCase):
    def test_double_root_on_circle_fails(self):
        self.assertFalse(root_condition(Poly.of(1, -2, 1)))

    def test_bdf2_first_polynomial(self):
        scheme = make_scheme("WBDF", 2, 1)

        self.assertTrue(root_condition(characteristic_triple(scheme).rho_a))

    def test_siems8_explicit_polynomial_threshold(self):
        stable = make_scheme("SIEMS", 8, Fraction(18, 10))
        with self.assertLogs("iems.schemes", level="WARNING"):
            unstable = make_scheme("SIEMS", 8, Fraction(178, 100))

        self.assertTrue(root_condition(characteristic_triple(stable).rho_c))
        self.assertFalse(root_condition(characteristic_triple(unstable).rho_c))


class LogSeriesExpandTests(unittest.TestCase):
    def test_wbdf2_at_one(self):
        expanded = log_series_expand(family_generator("WBDF", 2, 1), 2)

        self.assertEqual(expanded.coeffs, (Fraction(-1, 2), Fraction(3, 2)))

    def test_siems3_at_one(self):
        expanded = log_series_expand(family_generator("SIEMS", 3, 1), 3)

        self.assertEqual(expanded.coeffs, (Fraction(1, 3), Fraction(-7, 6), Fraction(11, 6)))

    def test_nimex2_at_one_matches_bdf2(self):
        nimex = log_series_expand(family_generator("NIMEX", 2, 1), 2)
        bdf = log_series_expand(family_generator("BDF", 2), 2)

        self.assertEqual(nimex.coeffs, bdf.coeffs)

    def test_nimex3_symbolic_leading_coefficient(self):
        delta = Fraction(5, 2)
        expanded = log_series_expand(family_generator("NIMEX", 3, delta), 3)

        self.assertEqual(expanded.coeff(2), 3 * delta**2 - Fraction(3, 2) * delta + Fraction(1, 3))

    def test_non_positive_step_count(self):
        generator = LogGenerator(prefactor=Poly.monomial(1), label="euler")

        with self.assertRaises(PolyringError):
            log_series_expand(generator, 0)


if __name__ == "__main__":
    unittest.main()
