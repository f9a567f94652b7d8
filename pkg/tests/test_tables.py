import csv
import random
import tempfile
import unittest
from math import inf
from pathlib import Path
from unittest.mock import patch

from iems.catalog import indicator_range
from iems.schemes import make_scheme, truncation_leading
from iems.symbolcalc import indicator_sweep, indicators
from iems.tables import (
    TABLE_HEADER,
    TableError,
    _forms,
    build_tables,
    closed_forms,
    family_table,
    truncation_closed_form,
    write_table_csv,
)


def _row(rows, param, quantity, relation=None):
    for row in rows:
        if row.param == param and row.quantity == quantity and (relation is None or row.relation == relation):
            return row
    raise AssertionError(f"no row for param={param} quantity={quantity}")


class ClosedFormLookupTests(unittest.TestCase):
    def test_euler_forms_apply_without_parameter(self):
        forms = closed_forms("BDF", 1, None)

        self.assertEqual({form.quantity for form in forms}, {"sigma_F", "sigma_E", "lambda_I", "intensity"})

    def test_forms_respect_parameter_range(self):
        self.assertEqual(closed_forms("WBDF", 4, 1.0), [])
        self.assertTrue(closed_forms("WBDF", 4, 1.2))
        self.assertEqual(closed_forms("MBDF", 2, 1.0), [])
        self.assertEqual(closed_forms("SIEMS", 6, 18.0), [])

    def test_gbdf5_switches_regime_at_eighteen(self):
        below = {form.quantity: form for form in closed_forms("GBDF", 5, 17.5)}
        above = {form.quantity: form for form in closed_forms("GBDF", 5, 18.0)}

        self.assertEqual(len(closed_forms("GBDF", 5, 18.0)), 4)
        self.assertNotAlmostEqual(below["intensity"].formula(18.0), above["intensity"].formula(18.0))

    def test_unknown_family_order_has_no_forms(self):
        self.assertEqual(closed_forms("BDF", 4, None), [])
        self.assertIsNone(truncation_closed_form("BDF", 2, 1))


class EqualityTableTests(unittest.TestCase):
    def test_euler_row_is_all_ones(self):
        rows = family_table("BDF", 1)

        self.assertEqual(len(rows), 4)
        for row in rows:
            self.assertTrue(row.passed)
            self.assertAlmostEqual(row.computed, 1.0, delta=1e-13)

    def test_wbdf_default_grids_match_closed_forms(self):
        for k in (2, 3, 4):
            with self.subTest(k=k):
                rows = family_table("WBDF", k)

                self.assertTrue(rows)
                self.assertTrue(all(row.passed for row in rows if row.relation is not None))

    def test_wbdf2_unit_weight_intensity(self):
        rows = family_table("WBDF", 2, [1])

        self.assertAlmostEqual(_row(rows, 1.0, "intensity").computed, 1 / 3, delta=1e-9)

    def test_wbdf5_lies_between_bounds(self):
        rows = family_table("WBDF", 5, [1, 3, 10])

        self.assertTrue(all(row.passed for row in rows if row.relation is not None))

    def test_gbdf_low_orders(self):
        for k in (2, 3):
            with self.subTest(k=k):
                rows = family_table("GBDF", k, [1, 2, 5, 10])

                self.assertTrue(all(row.passed for row in rows if row.relation is not None))

    def test_siems_low_orders_at_four_parameters(self):
        for k in (3, 4, 5):
            with self.subTest(k=k):
                rows = family_table("SIEMS", k, [2, 3, 5, 8])

                self.assertEqual(sum(1 for row in rows if row.passed), 16)

    def test_siems_high_orders_at_range_endpoints(self):
        for k in (6, 7, 8):
            lo, hi = indicator_range("SIEMS", k)
            with self.subTest(k=k):
                rows = family_table("SIEMS", k, [lo, hi])

                self.assertEqual(sum(1 for row in rows if row.passed), 8)

    def test_nimex2_and_mbdf2_equalities(self):
        self.assertTrue(all(row.passed for row in family_table("NIMEX", 2, [1.2, 2.75, 8.5])))
        self.assertTrue(all(row.passed for row in family_table("MBDF", 2, [2, 5, 10])))


class BoundTableTests(unittest.TestCase):
    def test_gbdf4_bounds_at_nine(self):
        report = indicators(make_scheme("GBDF", 4, 9))

        self.assertGreaterEqual(report.intensity, 547 / 773 - 1e-9)
        self.assertLessEqual(report.sigma_E, 2319 / 1960 + 1e-9)

    def test_gbdf5_bound_at_twenty(self):
        rows = family_table("GBDF", 5, [20])
        row = _row(rows, 20.0, "intensity")

        self.assertEqual(row.relation, "lower")
        self.assertAlmostEqual(row.formula, 353817 / 500365, delta=1e-12)
        self.assertGreaterEqual(row.computed, 353817 / 500365 - 1e-9)

    def test_gbdf3_dissipation_between_bounds(self):
        rows = family_table("GBDF", 3, [2])

        lower = _row(rows, 2.0, "lambda_I", "lower")
        upper = _row(rows, 2.0, "lambda_I", "upper")
        self.assertTrue(lower.passed and upper.passed)
        self.assertLessEqual(lower.formula, upper.formula)


class FamilyOptimumTests(unittest.TestCase):
    def test_siems7_intensity_grows_across_range(self):
        result = indicator_sweep("SIEMS", 7, [2.2, 4, 6, 8, 9])

        self.assertEqual(result.argmax_intensity, 9.0)
        self.assertAlmostEqual(result.max_intensity, 0.549995, delta=1e-4)
        self.assertAlmostEqual(result.rows[2].report.intensity, 0.421759, delta=1e-4)

    def test_siems8_optimum_at_upper_end(self):
        result = indicator_sweep("SIEMS", 8, [2.5, 3, 4, 5, 6])

        self.assertEqual(result.argmax_intensity, 6.0)
        self.assertAlmostEqual(result.max_intensity, 0.373486, delta=1e-4)


class TruncationFormTests(unittest.TestCase):
    def test_truncation_formulas_match_computed_constants(self):
        cases = {
            ("WBDF", 2): (1, 2, 5),
            ("WBDF", 3): (1, 3, 10),
            ("GBDF", 3): (1, 2, 9),
            ("SIEMS", 3): (1, 2, 4),
            ("SIEMS", 4): (1.2, 2, 3),
            ("NIMEX", 2): (1.2, 2.75, 5),
        }
        for (family, k), params in cases.items():
            for param in params:
                with self.subTest(family=family, k=k, param=param):
                    computed = truncation_leading(make_scheme(family, k, param))
                    coeff_u, coeff_F = truncation_closed_form(family, k, param)

                    self.assertAlmostEqual(computed.coeff_u, coeff_u, delta=1e-10)
                    self.assertAlmostEqual(computed.coeff_F, coeff_F, delta=1e-10)


class RandomSchemeTests(unittest.TestCase):
    def test_indicator_inequalities_hold_in_range(self):
        rng = random.Random(20240611)
        keys = [
            ("WBDF", 2), ("WBDF", 3), ("WBDF", 4), ("WBDF", 5),
            ("MBDF", 2), ("MBDF", 3),
            ("GBDF", 2), ("GBDF", 3), ("GBDF", 4), ("GBDF", 5),
            ("NIMEX", 2), ("NIMEX", 3),
            ("SIEMS", 3), ("SIEMS", 4), ("SIEMS", 5), ("SIEMS", 6), ("SIEMS", 7), ("SIEMS", 8),
        ]
        for family, k in keys:
            lo, hi = indicator_range(family, k)
            span = 8.0 if hi is None else float(hi - lo) - 0.1
            param = round(float(lo) + 0.1 + rng.random() * span, 6)
            with self.subTest(family=family, k=k, param=param):
                report = indicators(make_scheme(family, k, param), 2048)

                self.assertLessEqual(report.intensity, 1 + 1e-10)
                self.assertGreaterEqual(report.sigma_F, 1 - 1e-10)
                self.assertGreaterEqual(report.sigma_E, 1 - 1e-10)


class BuildTablesTests(unittest.TestCase):
    def test_build_logs_summary(self):
        with self.assertLogs("iems.tables", level="INFO") as captured:
            rows = build_tables(["BDF", "WBDF"], orders=[1, 2], params=[2, 3])

        self.assertEqual({(row.family, row.k) for row in rows}, {("BDF", 1), ("BDF", 2), ("WBDF", 2)})
        self.assertIn("Tables built rows=16 failures=0", "\n".join(captured.output))

    def test_mismatch_is_logged_and_flagged(self):
        broken = {("BDF", 1): _forms(-inf, sigma_F=("eq", lambda _: 2.0))}
        with patch.dict("iems.tables._CLOSED_FORMS", broken):
            with self.assertLogs("iems.tables", level="WARNING") as captured:
                rows = build_tables(["BDF"])

        failing = [row for row in rows if row.passed is False]
        self.assertEqual(len(failing), 1)
        self.assertEqual(failing[0].quantity, "sigma_F")
        self.assertIn("Closed form mismatch family=BDF k=1", "\n".join(captured.output))

    def test_every_nimex_order_is_tabulated(self):
        rows = build_tables(["NIMEX"])

        self.assertEqual({row.k for row in rows}, set(range(2, 9)))
        self.assertTrue(all(row.passed is not False for row in rows if row.k >= 4))

    def test_quantities_without_forms_have_empty_columns(self):
        rows = build_tables(["BDF"], orders=[3])

        self.assertEqual(len(rows), 4)
        self.assertTrue(all(row.formula is None and row.passed is None for row in rows))

    def test_missing_grid_raises(self):
        with patch("iems.tables.default_grid", return_value=[]):
            with self.assertRaises(TableError) as context:
                family_table("SIEMS", 2)

        self.assertIn("no parameter grid", str(context.exception))

    def test_csv_export(self):
        rows = family_table("WBDF", 2, [2])
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_table_csv(rows, Path(tmpdir) / "table.csv")
            with path.open(newline="", encoding="utf-8") as handle:
                records = list(csv.reader(handle))

        self.assertEqual(tuple(records[0]), TABLE_HEADER)
        self.assertEqual(len(records), 5)
        self.assertEqual(records[1][:4], ["WBDF", "2", "2", "sigma_F"])
        self.assertEqual(records[1][-1], "PASS")


if __name__ == "__main__":
    unittest.main()
