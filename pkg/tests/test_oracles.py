"""Vertex-removal formulas, closed-form entries, assumption checks, bound.

The Schur complement of the precision matrix is the reference for every
marginalization claim; the matrix product (I-B)^T D^-1 (I-B) is the reference
for entry formulas.
"""

import math

import numpy as np
import pytest

import diffdag as dd
from diffdag import (
    Sem,
    check_assumptions,
    covariance,
    delta_omega_entry,
    is_terminal_invariant,
    marginalize_sem,
    minimax_sample_bound,
    partial_correlation,
    precision,
)
from helpers import chain_sem, perturb_sem, random_sem


def _schur_precision(sem, retained_labels):
    """Precision of the marginal over the retained labels, by Schur complement."""
    om = precision(sem)
    keep = [sem.index(lab) for lab in retained_labels]
    drop = [k for k in range(sem.p) if k not in keep]
    if not drop:
        return om
    a = om[np.ix_(keep, keep)]
    b = om[np.ix_(keep, drop)]
    d = om[np.ix_(drop, drop)]
    return a - b @ np.linalg.solve(d, b.T)


class TestMarginalizeSem:
    def test_terminal_removal_is_exact_submatrix(self):
        rng = np.random.default_rng(3)
        sem = random_sem(rng, 6, edge_prob=0.5)
        terminal = next(lab for lab in sem.labels if not sem.children(lab))
        marg = marginalize_sem(sem, {terminal})
        keep = [sem.index(lab) for lab in marg.sem.labels]
        np.testing.assert_array_equal(marg.sem.b, sem.b[np.ix_(keep, keep)])
        np.testing.assert_array_equal(marg.sem.noise_vars, sem.noise_vars[keep])

    def test_chain_root_removal_inflates_child_noise(self):
        # chain 0 <- 1 <- 2 with unit noise; removing the root 2 folds its
        # variance into vertex 1 through the squared edge weight
        sem = chain_sem([0.5, 0.8])
        marg = marginalize_sem(sem, {2})
        assert marg.sem.labels == (0, 1)
        assert marg.sem.noise_vars[1] == pytest.approx(1.0 + 0.8**2)
        assert marg.sem.noise_vars[0] == pytest.approx(1.0)
        schur = _schur_precision(sem, (0, 1))
        assert np.abs(precision(marg.sem) - schur).max() < 1e-8

    @pytest.mark.parametrize("seed", range(20))
    def test_precision_matches_schur_complement(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(4, 9))
        sem = random_sem(rng, p, edge_prob=0.5)
        k = int(rng.integers(1, p // 2 + 1))
        removed = set(rng.choice(sem.labels, size=k, replace=False).tolist())
        marg = marginalize_sem(sem, removed)
        schur = _schur_precision(sem, marg.sem.labels)
        assert np.abs(precision(marg.sem) - schur).max() < 1e-8

    @pytest.mark.parametrize("seed", range(10))
    def test_covariance_of_marginal_is_restricted_covariance(self, seed):
        rng = np.random.default_rng(100 + seed)
        sem = random_sem(rng, 7, edge_prob=0.5)
        removed = set(rng.choice(sem.labels, size=3, replace=False).tolist())
        marg = marginalize_sem(sem, removed)
        keep = [sem.index(lab) for lab in marg.sem.labels]
        assert np.abs(
            covariance(marg.sem) - covariance(sem)[np.ix_(keep, keep)]
        ).max() < 1e-8

    @pytest.mark.parametrize("seed", range(8))
    def test_removals_commute(self, seed):
        rng = np.random.default_rng(200 + seed)
        sem = random_sem(rng, 8, edge_prob=0.4)
        labs = rng.choice(sem.labels, size=4, replace=False).tolist()
        u, w = set(labs[:2]), set(labs[2:])
        stepwise = marginalize_sem(marginalize_sem(sem, u).sem, w)
        direct = marginalize_sem(sem, u | w)
        assert stepwise.sem.labels == direct.sem.labels
        assert np.abs(stepwise.sem.b - direct.sem.b).max() < 1e-8
        assert np.abs(stepwise.sem.noise_vars - direct.sem.noise_vars).max() < 1e-8

    @pytest.mark.parametrize("seed", range(8))
    def test_topological_order_survives_marginalization(self, seed):
        # the original order restricted to the retained labels must still put
        # every marginal parent before its child
        rng = np.random.default_rng(300 + seed)
        sem = random_sem(rng, 8, edge_prob=0.5)
        removed = set(rng.choice(sem.labels, size=3, replace=False).tolist())
        marg = marginalize_sem(sem, removed).sem
        restricted = [lab for lab in sem.topological_order() if lab not in removed]
        position = {lab: k for k, lab in enumerate(restricted)}
        for child, parent in marg.edge_set().edges:
            assert position[parent] < position[child]

    def test_cannot_remove_everything(self):
        sem = chain_sem([0.5])
        with pytest.raises(ValueError):
            marginalize_sem(sem, {0, 1})

    def test_unknown_label(self):
        sem = chain_sem([0.5])
        with pytest.raises(KeyError):
            marginalize_sem(sem, {5})


class TestDeltaOmegaEntry:
    def test_nonadjacent_without_common_children_is_zero(self):
        # edges 0 <- 1 and 3 <- 2 only: vertices 0 and 3 are unrelated
        b = np.zeros((4, 4))
        b[0, 1] = 0.5
        b[3, 2] = 0.7
        sem1 = Sem(b, np.ones(4))
        b2 = np.array(b)
        b2[0, 1] = 0.9
        sem2 = Sem(b2, np.ones(4))
        assert delta_omega_entry(sem1, sem2, 0, 3) == 0.0

    def test_single_changed_edge_value(self):
        nv = np.array([2.0, 1.0])
        b = np.zeros((2, 2))
        b[0, 1] = 0.5
        sem1 = Sem(b, nv)
        b2 = np.array(b)
        b2[0, 1] = 0.9
        sem2 = Sem(b2, nv)
        got = delta_omega_entry(sem1, sem2, 0, 1)
        oracle = (precision(sem1) - precision(sem2))[0, 1]
        assert got == pytest.approx(oracle, abs=1e-12)
        assert got == pytest.approx((0.9 - 0.5) / nv[0])

    def test_common_child_sum(self):
        # co-parents 0 and 1 of child 2; both child edges change
        nv = np.array([1.0, 1.0, 1.3])
        b1m = np.zeros((3, 3))
        b1m[2, 0] = 0.8
        b1m[2, 1] = 0.6
        b2m = np.array(b1m)
        b2m[2, 0] = 0.4
        b2m[2, 1] = -0.5
        sem1, sem2 = Sem(b1m, nv), Sem(b2m, nv)
        expected = (0.8 * 0.6 - 0.4 * (-0.5)) / nv[2]
        got = delta_omega_entry(sem1, sem2, 0, 1)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx((precision(sem1) - precision(sem2))[0, 1], abs=1e-12)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_matrix_oracle_everywhere(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(3, 11))
        sem1 = random_sem(rng, p, edge_prob=0.5)
        sem2 = perturb_sem(rng, sem1, n_changes=3)
        oracle = precision(sem1) - precision(sem2)
        for i in sem1.labels:
            for j in sem1.labels:
                got = delta_omega_entry(sem1, sem2, i, j)
                assert abs(got - oracle[sem1.index(i), sem1.index(j)]) < 1e-10

    def test_requires_shared_noise(self):
        sem1 = chain_sem([0.5])
        sem2 = Sem(sem1.b, np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            delta_omega_entry(sem1, sem2, 0, 1)


class TestIsTerminalInvariant:
    def test_identical_sems_all_invariant(self):
        sem = random_sem(np.random.default_rng(4), 6)
        dom = precision(sem) - precision(sem)
        for lab in sem.labels:
            assert is_terminal_invariant(sem, sem, lab)
            assert abs(dom[sem.index(lab), sem.index(lab)]) == 0.0

    def test_changed_outgoing_edge_not_invariant(self):
        sem1 = chain_sem([0.5])  # edge 0 <- 1
        b2 = np.array(sem1.b)
        b2[0, 1] = 0.9
        sem2 = Sem(b2, sem1.noise_vars)
        assert not is_terminal_invariant(sem1, sem2, 1)
        assert (precision(sem1) - precision(sem2))[1, 1] != 0.0

    def test_changed_incoming_edge_stays_invariant(self):
        sem1 = chain_sem([0.5])
        b2 = np.array(sem1.b)
        b2[0, 1] = 0.9
        sem2 = Sem(b2, sem1.noise_vars)
        assert is_terminal_invariant(sem1, sem2, 0)
        assert abs((precision(sem1) - precision(sem2))[0, 0]) < 1e-12


class TestCheckAssumptions:
    def test_identical_pair_passes_vacuously(self):
        sem = random_sem(np.random.default_rng(0), 6)
        report = check_assumptions(sem, sem, 0.125)
        assert report.passed
        assert report.delta_edges == frozenset()
        assert report.subsets_checked == 0

    @pytest.mark.parametrize("seed", range(10))
    def test_generated_pairs_pass_at_generator_epsilon(self, seed):
        cfg = dd.SemPairGenConfig(p=8, seed=seed)
        sem1, sem2, _ = dd.generate_sem_pair(cfg)
        report = check_assumptions(sem1, sem2, cfg.min_delta_omega / 2.0)
        assert report.passed, report.detail

    def test_planted_cancellation_fails_separation(self):
        # deleted edge (1, 0) exactly compensated by the common-child term of
        # the deleted edge (2, 1): the partial correlation of (0, 1) given
        # everything matches across the models although the edge changed
        b1 = np.zeros((3, 3))
        b1[1, 0] = 0.6
        b1[2, 0] = 1.0
        b1[2, 1] = 0.6
        b2 = np.zeros((3, 3))
        b2[2, 0] = 1.0
        sem1 = Sem(b1, np.ones(3))
        sem2 = Sem(b2, np.ones(3))
        dom = precision(sem1) - precision(sem2)
        assert dom[1, 0] == 0.0  # the plant is exact
        report = check_assumptions(sem1, sem2, 0.125)
        assert not report.passed
        assert report.failed_condition == "separation"

    def test_subset_budget_marks_inconclusive(self):
        sem1, sem2, delta = dd.generate_sem_pair(dd.SemPairGenConfig(p=8, seed=2))
        assert delta.edges  # a pair with separations to enumerate
        report = check_assumptions(sem1, sem2, 0.125, max_subsets=1)
        assert not report.passed
        assert report.failed_condition == "subset-budget"

    def test_report_dict_round_trip(self):
        sem = random_sem(np.random.default_rng(9), 4)
        payload = check_assumptions(sem, sem, 0.1).to_dict()
        assert payload["passed"] is True
        assert payload["failed_condition"] is None


class TestMinimaxSampleBound:
    def test_boundary_p_equals_2d(self):
        val = minimax_sample_bound(4, 2)
        assert val == pytest.approx(-(2.0 / 4.0) * math.log(2.0))
        assert val < 0.0

    def test_reference_value(self):
        # independent arithmetic: (2/2) ln(32/4) - (2/32) ln 2
        expected = math.log(8.0) - math.log(2.0) / 16.0
        assert minimax_sample_bound(32, 2) == pytest.approx(expected, abs=1e-12)

    def test_monotone_in_p(self):
        vals = [minimax_sample_bound(p, 2) for p in (4, 8, 16, 32, 64)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            minimax_sample_bound(3, 2)
        with pytest.raises(ValueError):
            minimax_sample_bound(10, 0)


class TestPartialCorrelation:
    def test_marginal_correlation(self):
        cov = np.array([[1.0, 0.6], [0.6, 1.0]])
        assert partial_correlation(cov, (0, 1), 0, 1, ()) == pytest.approx(0.6)

    def test_chain_middle_separates_ends(self):
        sem = chain_sem([0.7, 0.7])
        cov = covariance(sem)
        rho = partial_correlation(cov, sem.labels, 0, 2, (1,))
        assert abs(rho) < 1e-12
        marginal = partial_correlation(cov, sem.labels, 0, 2, ())
        assert abs(marginal) > 0.1
