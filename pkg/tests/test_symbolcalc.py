import csv
import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

from iems.schemes import SchemeTriad, make_scheme
from iems.symbolcalc import (
    CURVE_HEADER,
    SymbolError,
    indicator_sweep,
    indicators,
    max_re_b_over_a,
    symbol_of,
    theta_curves,
    write_theta_curves_csv,
)


class SymbolTests(unittest.TestCase):
    def test_euler_symbols_are_constant(self):
        scheme = make_scheme("BDF", 1)
        theta = np.linspace(0.0, 2 * np.pi, 7)

        for which in ("a", "b", "c"):
            np.testing.assert_allclose(symbol_of(scheme, which)(theta), np.ones(7), atol=1e-15)

    def test_wbdf2_explicit_symbol(self):
        scheme = make_scheme("WBDF", 2, 1)
        theta = np.array([0.3, 1.1, 2.9])

        np.testing.assert_allclose(symbol_of(scheme, "c")(theta), 2 - np.exp(1j * theta), atol=1e-14)

    def test_bdf2_alternating_sum(self):
        value = symbol_of(make_scheme("BDF", 2), "a")(np.pi)

        self.assertAlmostEqual(complex(value).real, 2.0, places=14)

    def test_conjugate_symmetry(self):
        scheme = make_scheme("SIEMS", 5, 3)
        theta = np.random.default_rng(7).uniform(0.0, 2 * np.pi, 25)

        for which in ("a", "b", "c"):
            sym = symbol_of(scheme, which)
            np.testing.assert_allclose(sym(2 * np.pi - theta), np.conj(sym(theta)), atol=1e-12)

    def test_shifted_evaluation_matches_power_form(self):
        scheme = make_scheme("WBDF", 3, 2)
        theta = np.linspace(0.0, 2 * np.pi, 17)

        for which in ("a", "b", "c"):
            direct = npoly.polyval(np.exp(1j * theta), getattr(scheme, which))
            np.testing.assert_allclose(symbol_of(scheme, which)(theta), direct, atol=1e-12)

    def test_large_coefficients_keep_unit_value_at_zero(self):
        for family, k, param in (("SIEMS", 7, 9), ("SIEMS", 8, 6), ("NIMEX", 8, 4)):
            scheme = make_scheme(family, k, param)
            with self.subTest(scheme=scheme.label):
                self.assertGreater(max(abs(x) for x in scheme.b), 1e5)
                for which in ("a", "b", "c"):
                    self.assertAlmostEqual(complex(symbol_of(scheme, which)(0.0)), 1.0, delta=1e-13)

    def test_convolution_symbol_is_product(self):
        scheme = make_scheme("WBDF", 3, 2)
        theta = np.random.default_rng(11).uniform(0.0, 2 * np.pi, 64)
        product = np.convolve(scheme.b, scheme.c)

        expected = symbol_of(scheme, "b")(theta) * symbol_of(scheme, "c")(theta)
        np.testing.assert_allclose(npoly.polyval(np.exp(1j * theta), product), expected, rtol=1e-12)


class IndicatorTests(unittest.TestCase):
    def test_euler_is_optimal(self):
        report = indicators(make_scheme("BDF", 1))

        for value in (report.sigma_F, report.sigma_E, report.lambda_I, report.intensity):
            self.assertAlmostEqual(value, 1.0, places=12)

    def test_wbdf2_at_two(self):
        report = indicators(make_scheme("WBDF", 2, 2))

        self.assertAlmostEqual(report.sigma_F, 1.0, places=10)
        self.assertAlmostEqual(report.sigma_E, 1.25, places=10)
        self.assertAlmostEqual(report.lambda_I, 0.75, places=10)
        self.assertAlmostEqual(report.intensity, 0.6, places=10)
        self.assertAlmostEqual(report.step_ratio, 0.75, places=10)

    def test_gbdf3_at_two_inside_bounds(self):
        report = indicators(make_scheme("GBDF", 3, 2))

        self.assertAlmostEqual(report.sigma_E, 1.5, places=10)
        self.assertGreaterEqual(report.lambda_I, 20 / 34 - 1e-10)
        self.assertLessEqual(report.lambda_I, 21 / 34 + 1e-10)
        self.assertGreaterEqual(report.intensity, 20 / 51 - 1e-10)
        self.assertLessEqual(report.intensity, 21 / 51 + 1e-10)

    def test_nimex2_dissipation_at_optimum(self):
        report = indicators(make_scheme("NIMEX", 2, Fraction(11, 4)))

        self.assertAlmostEqual(report.lambda_I, 27 / 32, places=9)

    def test_interior_extremum_is_refined(self):
        coarse = indicators(make_scheme("GBDF", 4, 9), 512)
        fine = indicators(make_scheme("GBDF", 4, 9), 8192)

        self.assertAlmostEqual(coarse.intensity, fine.intensity, places=8)

    def test_refined_extrema_match_dense_sampling(self):
        scheme = make_scheme("GBDF", 4, 9)
        theta = np.linspace(0.0, np.pi, 400001)
        a = symbol_of(scheme, "a")(theta)
        dense_E = float(np.max(np.abs(symbol_of(scheme, "c")(theta) / a)))
        dense_I = float(np.min(np.real(symbol_of(scheme, "b")(theta) / a)))

        report = indicators(scheme, 1025)

        self.assertTrue(report.refined)
        self.assertGreaterEqual(report.sigma_E, dense_E - 1e-13)
        self.assertAlmostEqual(report.sigma_E, dense_E, delta=1e-9)
        self.assertLessEqual(report.lambda_I, dense_I + 1e-13)
        self.assertAlmostEqual(report.lambda_I, dense_I, delta=1e-9)

    def test_refinement_moves_maximum_off_the_grid(self):
        scheme = make_scheme("GBDF", 4, 9)
        coarse = indicators(scheme, 65)
        grid = np.linspace(0.0, np.pi, 65)
        on_grid = float(np.max(np.abs(symbol_of(scheme, "c")(grid) / symbol_of(scheme, "a")(grid))))

        self.assertGreater(coarse.sigma_E, on_grid)
        self.assertNotIn(coarse.theta_E, set(grid.tolist()))

    def test_vanishing_symbol(self):
        scheme = SchemeTriad(k=2, a=(0.5, 0.5), b=(1.0, 0.0, 0.0), c=(2.0, -1.0))

        with self.assertRaises(SymbolError) as context:
            indicators(scheme)

        self.assertIn("symbol vanishes on unit circle", str(context.exception))

    def test_grid_too_small(self):
        with self.assertRaises(SymbolError):
            indicators(make_scheme("BDF", 2), 2)

    def test_upper_dissipation_value(self):
        self.assertAlmostEqual(max_re_b_over_a(make_scheme("BDF", 1)), 1.0, places=12)

    def test_upper_dissipation_shares_grid_validation(self):
        with self.assertRaises(SymbolError):
            max_re_b_over_a(make_scheme("BDF", 2), 2)

        self.assertAlmostEqual(max_re_b_over_a(make_scheme("WBDF", 2, 1), 257), 1.0, places=10)


class SweepTests(unittest.TestCase):
    def test_mbdf2_optimum_at_five(self):
        result = indicator_sweep("MBDF", 2, list(range(2, 11)))

        self.assertEqual(result.argmax_lambda_I, 5.0)
        self.assertAlmostEqual(result.max_lambda_I, 2 / 3, places=9)
        self.assertEqual(len(result.rows), 9)

    def test_nimex2_intensity_peak(self):
        result = indicator_sweep("NIMEX", 2, [8.3, 8.4, 8.5176, 8.6, 8.7])

        self.assertEqual(result.argmax_intensity, 8.5176)
        self.assertAlmostEqual(result.max_intensity, 0.795354, delta=2e-6)

    def test_siems6_intensity_increases_to_range_end(self):
        result = indicator_sweep("SIEMS", 6, [2, 5, 9, 13, 17])

        self.assertEqual(result.argmax_intensity, 17.0)
        self.assertAlmostEqual(result.max_intensity, 0.756452, delta=1e-6)

    def test_empty_grid(self):
        with self.assertRaises(SymbolError):
            indicator_sweep("WBDF", 2, [])


class ThetaCurveTests(unittest.TestCase):
    def test_euler_curves_constant(self):
        curves = theta_curves(make_scheme("BDF", 1), 33)

        for series in (curves.inv_abs_a, curves.abs_c_over_a, curves.re_b_over_a):
            np.testing.assert_allclose(series, np.ones(33), atol=1e-14)

    def test_dissipation_curve_at_pi(self):
        bdf2 = theta_curves(make_scheme("WBDF", 2, 1), 65)
        bdf3 = theta_curves(make_scheme("WBDF", 3, 1), 65)

        self.assertAlmostEqual(bdf2.theta[-1], np.pi, places=14)
        self.assertAlmostEqual(bdf2.re_b_over_a[-1], 0.5, places=12)
        self.assertAlmostEqual(bdf3.re_b_over_a[-1], 0.3, places=12)

    def test_csv_output(self):
        curves = theta_curves(make_scheme("SIEMS", 3, 2), 9)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_theta_curves_csv(curves, Path(tmp) / "curves.csv")
            with path.open(newline="", encoding="utf-8") as handle:
                rows = list(csv.reader(handle))

        self.assertEqual(tuple(rows[0]), CURVE_HEADER)
        self.assertEqual(len(rows), 10)


if __name__ == "__main__":
    unittest.main()
