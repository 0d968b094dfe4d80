import numpy as np
import pytest

from snrom import (
    AlreadyConverged,
    KrylovBreakdown,
    RomsadConfig,
    apply_lhs_tilde,
    apply_rom_correction,
    assemble_dense_full_system,
    assemble_dsa,
    build_preconditioner_schedule,
    compute_eta,
    dsa_correct,
    fgmres,
    rhs_tilde,
    romsad_offline,
    romsad_schedule,
    si_step,
    source_iteration,
    sweep_all,
)
from snrom.rom import basis_from_modes, rom_initial_guess
from snrom.tar import (
    TarArtifact,
    tar_offline_fgmres,
    tar_offline_si,
    tar_online_si,
    training_solutions,
)

from oracles import dense_density_operators, dense_ideal_correction


@pytest.fixture(scope="module")
def trained(mini_family, mini_train_set):
    solutions = training_solutions(
        mini_family, mini_train_set, tol=1e-13, max_iter=300, window=3
    )
    return solutions


class TestTrainingSolutions:
    def test_all_converge_with_recorded_window(self, trained):
        assert all(s.converged for s in trained)
        assert all(len(s.window_fluxes) == 3 for s in trained)

    def test_nonconverging_solve_warns_but_keeps_snapshot(self, mini_family):
        with pytest.warns(UserWarning, match="max_iter"):
            sols = training_solutions(
                mini_family, np.array([[1.0, 45.0]]), tol=1e-13, max_iter=2
            )
        assert len(sols) == 1 and not sols[0].converged


class TestOfflineSi:
    def test_single_level_matches_windowed_first_level(
        self, mini_family, mini_train_set, trained
    ):
        """With one level and a zero start the snapshots coincide with the
        window-1 deltas of the fixed-preconditioner recording."""
        artifact = tar_offline_si(
            mini_family,
            mini_train_set,
            rho0_policy="zero",
            n_w=1,
            eps_pod=1e-10,
            solutions=trained,
        )
        config = RomsadConfig(window=1, switch_iteration=1)
        single = romsad_offline(mini_family, trained, config, 1e-10)
        assert artifact.levels[0].rank == single.rank
        np.testing.assert_allclose(
            np.abs(artifact.levels[0].singular_values),
            np.abs(single.singular_values),
            rtol=1e-10,
        )

    def test_provenance_recorded(self, mini_family, mini_train_set, trained):
        artifact = tar_offline_si(
            mini_family, mini_train_set, n_w=2, eps_pod=1e-7, solutions=trained
        )
        assert artifact.mode == "si"
        assert artifact.metadata["level1.built_from"].endswith("levels 1..0")
        assert artifact.metadata["level2.built_from"].endswith("levels 1..1")
        assert artifact.n_w == 2 and len(artifact.levels) == 2

    def test_trajectory_replay_bitwise(self, mini_family, mini_train_set, trained):
        """Offline and online trajectories coincide at training parameters."""
        artifact = tar_offline_si(
            mini_family, mini_train_set, n_w=2, eps_pod=1e-13, solutions=trained
        )
        for mu in map(tuple, mini_train_set):
            problem = mini_family.problem(mu)
            rho_off = rom_initial_guess(artifact.ig_basis, mu)
            rho_on = rho_off.copy()
            for level in range(2):
                _, star_off = si_step(problem, rho_off)
                _, star_on = si_step(problem, rho_on)
                np.testing.assert_allclose(
                    star_on - rho_on, star_off - rho_off, atol=1e-10
                )
                rho_off = star_off + apply_rom_correction(
                    artifact.levels[level], problem, star_off - rho_off
                )
                rho_on = star_on + apply_rom_correction(
                    artifact.levels[level], problem, star_on - rho_on
                )

    def test_online_converges_within_levels_plus_one(
        self, mini_family, mini_train_set, trained
    ):
        artifact = tar_offline_si(
            mini_family, mini_train_set, n_w=2, eps_pod=1e-13, solutions=trained
        )
        for mu in map(tuple, mini_train_set):
            problem = mini_family.problem(mu)
            report = tar_online_si(artifact, problem, tol=1e-10, max_iter=10)
            assert report.converged and report.iterations <= 3


class TestOnlineSi:
    def test_empty_schedule_equals_pure_dsa(self, mini_family, trained):
        mu = (1.0, 24.0)
        problem = mini_family.problem(mu)
        dsa = assemble_dsa(problem)
        artifact = TarArtifact(
            mode="si", ig_basis=None, levels=[], eps_pod=1e-7, n_w=0
        )
        ref = source_iteration(
            problem,
            correction=lambda incr, it: dsa_correct(dsa, incr, problem),
            tol=1e-12,
            max_iter=60,
        )
        report = tar_online_si(artifact, problem, tol=1e-12, max_iter=60, dsa=dsa)
        assert report.iterations == ref.iterations
        np.testing.assert_allclose(report.final_density, ref.final_density, atol=1e-13)

    def test_failure_falls_back_to_dsa(self, mini_family, mini_train_set, trained):
        artifact = tar_offline_si(
            mini_family, mini_train_set, n_w=1, eps_pod=1e-7, solutions=trained
        )
        # rig the level to be singular: zero operator blocks
        level = artifact.levels[0]
        rigged = basis_from_modes(level.u, mini_family.quadrature)
        rigged.op_blocks = [np.zeros((level.rank, level.rank)) for _ in level.op_blocks]
        rigged.rhs_blocks = level.rhs_blocks
        rigged.affine = mini_family.affine
        bad = TarArtifact(
            mode="si",
            ig_basis=artifact.ig_basis,
            levels=[rigged],
            eps_pod=1e-7,
            n_w=1,
        )
        problem = mini_family.problem((1.0, 30.0))
        report = tar_online_si(bad, problem, tol=1e-12, max_iter=60)
        assert report.converged  # degraded to the diffusion correction

    def test_mode_mismatch_rejected(self, mini_family):
        artifact = TarArtifact(mode="fgmres", ig_basis=None, levels=[], eps_pod=1e-7, n_w=0)
        with pytest.raises(ValueError):
            tar_online_si(artifact, mini_family.problem((1.0, 30.0)))


class TestComputeEta:
    def test_zero_guess_first_driver(self, slab_small):
        report = fgmres(slab_small, tol=1e-13, max_iter=60, collect_state=True)
        rho = report.final_density
        b = rhs_tilde(slab_small)
        eta1 = compute_eta(
            1, rho, np.zeros(slab_small.n_dof), report.krylov.beta, [], report.krylov.h, []
        )
        np.testing.assert_allclose(eta1, rho / np.linalg.norm(b), atol=1e-12)

    def test_defining_identity_first_three_levels(self, slab_small):
        from snrom import DsaPreconditioner

        a_tilde, _, b, _ = dense_density_operators(slab_small)
        rho_exact = np.linalg.solve(a_tilde, b)
        report = fgmres(
            slab_small,
            preconditioner=DsaPreconditioner(slab_small),
            tol=1e-14,
            max_iter=40,
            collect_state=True,
        )
        st = report.krylov
        etas = []
        for level in range(1, 4):
            eta = compute_eta(
                level, rho_exact, np.zeros(slab_small.n_dof), st.beta, st.zs, st.h, etas
            )
            etas.append(eta)
            np.testing.assert_allclose(
                apply_lhs_tilde(slab_small, eta), st.qs[level - 1], atol=1e-10
            )

    def test_reformulated_correction_matches_dense_ideal(self, slab_small):
        from snrom import DsaPreconditioner

        a_tilde, _, b, _ = dense_density_operators(slab_small)
        rho_exact = np.linalg.solve(a_tilde, b)
        report = fgmres(
            slab_small,
            preconditioner=DsaPreconditioner(slab_small),
            tol=1e-14,
            max_iter=40,
            collect_state=True,
        )
        st = report.krylov
        etas = []
        for level in range(1, 3):
            eta = compute_eta(
                level, rho_exact, np.zeros(slab_small.n_dof), st.beta, st.zs, st.h, etas
            )
            etas.append(eta)
            flux = sweep_all(slab_small, slab_small.apply_sigma_s(eta))
            delta_sweep = slab_small.quadrature.weights @ flux
            delta_dense = dense_ideal_correction(slab_small, st.qs[level - 1])
            np.testing.assert_allclose(delta_sweep, delta_dense, atol=1e-9)

    def test_signals(self, slab_small):
        with pytest.raises(AlreadyConverged):
            compute_eta(1, np.zeros(4), np.zeros(4), 0.0, [], np.zeros((2, 1)), [])
        with pytest.raises(KrylovBreakdown):
            compute_eta(2, np.zeros(4), np.zeros(4), 1.0, [np.zeros(4)], np.zeros((3, 2)), [np.zeros(4)])


class TestOfflineFgmres:
    def test_levels_and_metadata(self, mini_family, mini_train_set, trained):
        artifact = tar_offline_fgmres(
            mini_family, mini_train_set, n_w=2, eps_pod=1e-8, solutions=trained
        )
        assert artifact.mode == "fgmres"
        assert artifact.metadata["snapshot_kind"].startswith("sweep-solved")
        assert 1 <= len(artifact.levels) <= 2

    def test_single_parameter_replay(self, mini_family, trained):
        """With one training parameter and a tight basis, the online solve
        at that parameter converges within the aware level count."""
        train = np.array([[1.0, 30.0]])
        sols = training_solutions(mini_family, train, tol=1e-13, max_iter=300)
        with pytest.warns(UserWarning, match="broke down"):
            # the exact level-1 correction ends the Arnoldi process early
            artifact = tar_offline_fgmres(
                mini_family, train, rho0_policy="zero", n_w=2, eps_pod=1e-14, solutions=sols
            )
        problem = mini_family.problem((1.0, 30.0))
        schedule = build_preconditioner_schedule(artifact, problem)
        report = fgmres(problem, preconditioner=schedule, tol=1e-10, max_iter=10)
        assert report.converged and report.iterations <= max(artifact.n_w, 1)

    def test_breakdown_truncates_artifact(self, mini_family):
        """A single parameter with an exact level-1 correction breaks down,
        so a requested second level cannot be built."""
        train = np.array([[1.0, 30.0]])
        sols = training_solutions(mini_family, train, tol=1e-13, max_iter=300)
        with pytest.warns(UserWarning, match="broke down"):
            artifact = tar_offline_fgmres(
                mini_family,
                train,
                rho0_policy="zero",
                n_w=3,
                eps_pod=1e-14,
                solutions=sols,
            )
        assert len(artifact.levels) < 3
        assert artifact.n_w == len(artifact.levels)


class TestPreconditionerSchedule:
    def test_empty_artifact_constant_dsa(self, mini_family):
        problem = mini_family.problem((1.0, 30.0))
        dsa = assemble_dsa(problem)
        schedule = build_preconditioner_schedule(None, problem, dsa=dsa)
        rng = np.random.default_rng(0)
        q = rng.standard_normal(problem.n_dof)
        np.testing.assert_allclose(
            schedule(1, q), q + dsa_correct(dsa, q, problem), atol=1e-14
        )
        np.testing.assert_allclose(schedule(5, q), schedule(1, q), atol=1e-14)

    def test_rom_level_application_structure(self, mini_family, mini_train_set, trained):
        artifact = tar_offline_fgmres(
            mini_family, mini_train_set, n_w=1, eps_pod=1e-8, solutions=trained
        )
        problem = mini_family.problem((1.0, 22.0))
        schedule = build_preconditioner_schedule(artifact, problem)
        rng = np.random.default_rng(1)
        q = rng.standard_normal(problem.n_dof)
        expected = q + apply_rom_correction(artifact.levels[0], problem, q)
        np.testing.assert_allclose(schedule(1, q), expected, atol=1e-14)

    def test_matches_dense_preconditioner_matrix(self, mini_family, mini_train_set, trained):
        artifact = tar_offline_fgmres(
            mini_family, mini_train_set, n_w=1, eps_pod=1e-8, solutions=trained
        )
        mu = (1.0, 26.0)
        problem = mini_family.problem(mu)
        basis = artifact.levels[0]
        a_full, _ = assemble_dense_full_system(problem)
        reduced = basis.u.T @ a_full @ basis.u
        _, _, _, sig_s = dense_density_operators(problem)
        m_dense = np.eye(problem.n_dof) + basis.u_rho @ np.linalg.solve(
            reduced, basis.u_iso.T @ sig_s
        )
        schedule = build_preconditioner_schedule(artifact, problem)
        rng = np.random.default_rng(2)
        q = rng.standard_normal(problem.n_dof)
        np.testing.assert_allclose(schedule(1, q), m_dense @ q, atol=1e-11)


class TestRomsad:
    def test_switch_zero_always_dsa(self, mini_family, trained):
        config = RomsadConfig(window=3, switch_iteration=0)
        basis = romsad_offline(mini_family, trained, config, 1e-8)
        mu = (1.0, 24.0)
        problem = mini_family.problem(mu)
        dsa = assemble_dsa(problem)
        strategy = romsad_schedule(config, basis, problem, dsa=dsa)
        ref = source_iteration(
            problem,
            correction=lambda incr, it: dsa_correct(dsa, incr, problem),
            tol=1e-12,
            max_iter=60,
        )
        run = source_iteration(
            problem, correction=strategy, tol=1e-12, max_iter=60
        )
        assert run.iterations == ref.iterations
        np.testing.assert_allclose(run.final_density, ref.final_density, atol=1e-13)

    def test_selection_rule(self, mini_family, trained):
        """Reduced correction exactly when early and above threshold, else DSA."""
        config = RomsadConfig(window=3, switch_iteration=3)
        basis = romsad_offline(mini_family, trained, config, 1e-8)
        problem = mini_family.problem((1.0, 24.0))
        dsa = assemble_dsa(problem)
        rng = np.random.default_rng(9)
        increment = rng.standard_normal(problem.n_dof)

        strategy = romsad_schedule(config, basis, problem, dsa=dsa)
        np.testing.assert_allclose(
            strategy(increment, 1),
            apply_rom_correction(basis, problem, increment),
            atol=1e-14,
        )
        np.testing.assert_allclose(  # beyond the switch iteration: DSA
            strategy(increment, 4),
            dsa_correct(dsa, increment, problem),
            atol=1e-14,
        )
        # below the explicit threshold: DSA even in the window
        strict = romsad_schedule(
            RomsadConfig(window=3, switch_iteration=3, tolerance=1e9),
            basis,
            problem,
            dsa=dsa,
        )
        np.testing.assert_allclose(
            strict(increment, 1), dsa_correct(dsa, increment, problem), atol=1e-14
        )

    def test_auto_threshold_from_first_increment(self, mini_family, trained):
        config = RomsadConfig(window=3, switch_iteration=3)
        basis = romsad_offline(mini_family, trained, config, 1e-8)
        problem = mini_family.problem((1.0, 24.0))
        strategy = romsad_schedule(config, basis, problem, dsa=assemble_dsa(problem))
        first = np.ones(problem.n_dof)
        strategy(first, 1)
        assert strategy._threshold == pytest.approx(1e-3)

    def test_window_larger_than_recorded_raises(self, mini_family, trained):
        config = RomsadConfig(window=5, switch_iteration=3)
        with pytest.raises(ValueError):
            romsad_offline(mini_family, trained, config, 1e-8)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RomsadConfig(window=0, switch_iteration=3)
        with pytest.raises(ValueError):
            RomsadConfig(window=1, switch_iteration=-1)


def test_tar_mean_sweeps_bound_by_baselines(mini_family):
    """With a well-resolved training set, trajectory-aware runs need no
    more sweeps than either baseline.

    The benchmark-scale ordering (windowed corrector strictly between the
    trajectory-aware runs and pure DSA) is asserted by the acceptance
    suite; here a dense 1D training grid stands in.
    """
    train = np.column_stack([np.full(13, 1.0), np.linspace(12.0, 48.0, 13)])
    solutions = training_solutions(mini_family, train, tol=1e-13, max_iter=300, window=3)
    artifact = tar_offline_si(
        mini_family, train, n_w=2, eps_pod=1e-11, solutions=solutions
    )
    config = RomsadConfig(window=3, switch_iteration=3)
    romsad_basis = romsad_offline(mini_family, solutions, config, 1e-11)
    rng = np.random.default_rng(5)
    test_mus = np.column_stack(
        [np.full(5, 1.0), rng.uniform(12.0, 48.0, size=5)]
    )
    sweeps = {"tar": [], "romsad": [], "dsa": []}
    for mu in map(tuple, test_mus):
        problem = mini_family.problem(mu)
        dsa = assemble_dsa(problem)
        sweeps["tar"].append(
            tar_online_si(artifact, problem, tol=1e-12, max_iter=60, dsa=dsa).sweep_count
        )
        sweeps["romsad"].append(
            source_iteration(
                problem,
                correction=romsad_schedule(config, romsad_basis, problem, dsa=dsa),
                tol=1e-12,
                max_iter=60,
            ).sweep_count
        )
        sweeps["dsa"].append(
            source_iteration(
                problem,
                correction=lambda incr, it: dsa_correct(dsa, incr, problem),
                tol=1e-12,
                max_iter=60,
            ).sweep_count
        )
    assert np.mean(sweeps["tar"]) <= np.mean(sweeps["romsad"])
    assert np.mean(sweeps["tar"]) <= np.mean(sweeps["dsa"])
