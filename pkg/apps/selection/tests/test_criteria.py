import numpy as np
from django.test import SimpleTestCase, tag

from apps.common.exceptions import ConfigError, UnsupportedConfigError
from apps.moments.estimators import fit_ols, fit_tsls
from apps.moments.models import Dataset, MomentSet, candidate_lattice
from apps.selection.criteria import (
    CriterionFlavor, ccic_select, combined_select, dhw_critical_value, dhw_test,
    downward_j_select, gmm_msc_select, j_statistic, j_test, kappa_n,
)
from apps.selection.fmsc import fmsc_ols_vs_tsls
from apps.simulation.designs import (
    ChooseIvDesign, OlsTslsDesign, gen_choose_iv, gen_ols_tsls, replication_rng,
)


def choose_iv_data(gamma=0.4, rho=0.0, n=500, seed=0):
    d = gen_choose_iv(ChooseIvDesign(gamma=gamma, rho=rho, n=n), np.random.default_rng(seed))
    return d, candidate_lattice(d.p, d.q)


class KappaTests(SimpleTestCase):
    def test_penalty_rates(self):
        self.assertAlmostEqual(kappa_n(CriterionFlavor.BIC, 100), np.log(100))
        self.assertAlmostEqual(kappa_n(CriterionFlavor.HQ, 100), 2.01 * np.log(np.log(100)))
        self.assertEqual(kappa_n(CriterionFlavor.AIC, 100), 2.0)

    def test_small_samples_are_rejected(self):
        with self.assertRaises(ConfigError):
            kappa_n(CriterionFlavor.BIC, 7)


class JTestTests(SimpleTestCase):
    def test_degrees_of_freedom(self):
        d, (valid, full) = choose_iv_data()
        self.assertEqual(j_test(d, valid).df, 2)
        self.assertEqual(j_test(d, full).df, 3)

    def test_just_identified_has_unit_p_value(self):
        d, _ = choose_iv_data()
        self.assertEqual(j_test(d, MomentSet('one', (0,), kind='TSLS_CANDIDATE')).p_value, 1.0)

    def test_invalid_instrument_is_rejected(self):
        d, (_, full) = choose_iv_data(rho=0.5, n=1000, seed=1)
        self.assertLess(j_test(d, full).p_value, 1e-6)


class GmmCriterionTests(SimpleTestCase):
    def test_picks_valid_under_strong_violation(self):
        d, lattice = choose_iv_data(rho=0.5, n=1000, seed=2)
        for flavor in CriterionFlavor:
            chosen, values = gmm_msc_select(d, lattice, flavor)
            self.assertEqual(chosen.id, 'valid')
            self.assertEqual(len(values), 2)

    def test_values_are_j_minus_penalty(self):
        d, lattice = choose_iv_data(seed=3)
        kappa = kappa_n(CriterionFlavor.HQ, d.n)
        _, values = gmm_msc_select(d, lattice, CriterionFlavor.HQ)
        for s, value in zip(lattice, values):
            self.assertAlmostEqual(value.penalty, (s.size - d.r) * kappa)
            self.assertAlmostEqual(value.value, value.j_stat - value.penalty)

    @tag('slow')
    def test_bic_keeps_locally_invalid_instrument_more_often_with_n(self):
        def full_rate(n, reps=600):
            rho = 2.0 / np.sqrt(n)
            design = ChooseIvDesign(gamma=0.2, rho=rho, n=n)
            hits = 0
            for rep in range(reps):
                d = gen_choose_iv(design, replication_rng(23, n, rep))
                hits += gmm_msc_select(d, candidate_lattice(d.p, d.q))[0].id == 'full'
            return hits / reps

        self.assertGreaterEqual(full_rate(10000) - full_rate(100), 0.10)

    @tag('slow')
    def test_downward_j_drops_invalid_instrument(self):
        design = ChooseIvDesign(gamma=0.4, rho=0.2, n=2000)
        hits = 0
        reps = 200
        for rep in range(reps):
            d = gen_choose_iv(design, replication_rng(29, 0, rep))
            hits += downward_j_select(d, candidate_lattice(d.p, d.q)).id == 'valid'
        self.assertGreater(hits / reps, 0.5)


class CcicTests(SimpleTestCase):
    def test_strong_relevant_instrument_is_kept(self):
        d, lattice = choose_iv_data(gamma=0.6, n=1000, seed=4)
        chosen, values = ccic_select(d, lattice)
        self.assertEqual(chosen.id, 'full')
        self.assertLess(values[1].j_stat, values[0].j_stat)

    def test_combined_needs_two_candidates(self):
        d = gen_choose_iv(ChooseIvDesign(gamma=0.4, rho=0.0, n=200), np.random.default_rng(5))
        with self.assertRaises(UnsupportedConfigError):
            combined_select(d, candidate_lattice(d.p, d.q) + [MomentSet('extra', (0, 1, 3))])

    def test_combined_falls_back_to_valid(self):
        d, lattice = choose_iv_data(rho=0.5, n=1000, seed=6)
        self.assertEqual(combined_select(d, lattice).id, 'valid')

    @tag('slow')
    def test_combined_keeps_valid_when_w_is_irrelevant(self):
        design = ChooseIvDesign(gamma=0.0, rho=0.2, n=500)
        hits = 0
        reps = 300
        for rep in range(reps):
            d = gen_choose_iv(design, replication_rng(31, 0, rep))
            hits += combined_select(d, candidate_lattice(d.p, d.q)).id == 'valid'
        self.assertGreater(hits / reps, 0.95)


class DhwTests(SimpleTestCase):
    def test_critical_value(self):
        self.assertAlmostEqual(dhw_critical_value(0.05), 3.841458820694124, places=8)
        self.assertAlmostEqual(dhw_critical_value(0.10), 2.705543454095404, places=8)

    def test_endogeneity_is_detected(self):
        d = gen_ols_tsls(OlsTslsDesign(pi=0.6, rho=0.5, n=1000), np.random.default_rng(7))
        result = dhw_test(d, dhw_critical_value(0.05))
        self.assertFalse(result.select_ols)
        self.assertGreater(result.stat, 3.84)


class FmscDhwEquivalenceTests(SimpleTestCase):
    def datasets(self):
        grid = [OlsTslsDesign(pi, rho, n) for n in (50, 100, 500) for pi in (0.2, 0.4, 0.6)
                for rho in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)]
        for cell, design in enumerate(grid):
            for rep in range(19):
                yield gen_ols_tsls(design, replication_rng(43, cell, rep))

    def test_fmsc_is_dhw_with_critical_value_two(self):
        checked = 0
        for d in self.datasets():
            report = fmsc_ols_vs_tsls(d)
            self.assertEqual(report.selected == 'ols', dhw_test(d, 2.0).select_ols)
            beta_gap = fit_ols(d.y, d.X).beta[0] - fit_tsls(d.y, d.X, d.Z1).beta[0]
            sigma_x_sq = d.x @ d.x / d.n
            self.assertAlmostEqual(
                report.tau[0] ** 2 / (d.n * sigma_x_sq ** 2 * beta_gap ** 2), 1.0, delta=1e-8,
            )
            checked += 1
        self.assertGreaterEqual(checked, 1000)


class JStatisticTests(SimpleTestCase):
    def test_just_identified_is_zero(self):
        one = MomentSet('one', (0,), kind='TSLS_CANDIDATE')
        for seed in range(100):
            d, _ = choose_iv_data(n=100, seed=seed)
            self.assertLess(j_statistic(d, one), 1e-8)

    def test_instrument_rescaling(self):
        d, lattice = choose_iv_data(rho=0.1, seed=9)
        scaled = Dataset(y=d.y, X=d.X, Z1=d.Z1 * np.array([3.0, 0.2, 50.0]), Z2=d.Z2 * 7.0)
        for s in lattice:
            self.assertAlmostEqual(j_statistic(scaled, s) / j_statistic(d, s), 1.0, delta=1e-8)
