import numpy as np
import pytest

from asgl.exceptions import (
    BudgetInfeasibleError,
    DomainError,
    EmptyGraphError,
    InvalidConfigError,
    TrainingDivergedError,
)
from asgl.models import EdgeCase, EmbeddingTable, RowGradient, Sign, SignedGraph, TrainConfig
from asgl.services import trainer as trainer_module
from asgl.services.accountant import to_dp
from asgl.services.adversarial import init_embeddings
from asgl.services.mechanism import clip_gradient
from asgl.services.sampler import SubgraphSet, WalkPath, r_nl, sample_subgraphs
from asgl.services.trainer import build_edge_sets, export, train
from asgl.utils.rng import stream


def with_overrides(config: TrainConfig, **values) -> TrainConfig:
    return TrainConfig.from_flat(values, base=config)


class TestBuildEdgeSets:
    """Discriminator examples grouped by subgraph, generator sets of fake pairs."""

    def test_real_plus_fake(self):
        g = SignedGraph.from_edges(5, [(0, 1, Sign.POSITIVE), (1, 2, Sign.POSITIVE)])
        s_tr = SubgraphSet(
            pos_fake_edges=((0, 3), (0, 4), (1, 4)),
            pos_paths={0: (WalkPath((0, 1, 2), Sign.POSITIVE),), 1: (WalkPath((1, 0), Sign.POSITIVE),)},
        )
        sets = build_edge_sets(g, s_tr)
        assert len(sets.gen(Sign.POSITIVE)) == 3
        examples = sets.examples(Sign.POSITIVE)
        assert examples.roots == (0, 1)
        assert [len(group) for group in examples.groups] == [4, 2]
        assert examples.groups[0].entries() == [
            (0, 1, EdgeCase.REAL_POS),
            (1, 2, EdgeCase.REAL_POS),
            (0, 3, EdgeCase.FAKE_POS),
            (0, 4, EdgeCase.FAKE_POS),
        ]
        assert sets.real_count(Sign.POSITIVE) == 3
        assert len(sets.disc(Sign.POSITIVE)) == 6
        assert len(sets.examples(Sign.NEGATIVE)) == 0

    def test_shared_path_edges_count_once(self):
        g = SignedGraph.from_edges(4, [(0, 1, Sign.NEGATIVE), (1, 2, Sign.NEGATIVE), (1, 3, Sign.NEGATIVE)])
        s_tr = SubgraphSet(
            neg_paths={0: (WalkPath((0, 1, 2), Sign.NEGATIVE), WalkPath((0, 1, 3), Sign.NEGATIVE))},
        )
        (group,) = build_edge_sets(g, s_tr).examples(Sign.NEGATIVE).groups
        assert group.entries() == [
            (0, 1, EdgeCase.REAL_NEG),
            (1, 2, EdgeCase.REAL_NEG),
            (1, 3, EdgeCase.REAL_NEG),
        ]

    def test_empty_subgraph_set(self, community_graph):
        sets = build_edge_sets(community_graph, SubgraphSet())
        for sign in (Sign.POSITIVE, Sign.NEGATIVE):
            assert len(sets.gen(sign)) == 0
            assert len(sets.examples(sign)) == 0
            assert len(sets.disc(sign)) == 0

    def test_case_tags_partition_each_set(self, community_graph, small_embeddings):
        s_tr = sample_subgraphs(community_graph, 2, 2, small_embeddings, 0)
        sets = build_edge_sets(community_graph, s_tr)
        for sign in (Sign.POSITIVE, Sign.NEGATIVE):
            disc = sets.disc(sign)
            real, fake = disc.count(EdgeCase.real(sign)), disc.count(EdgeCase.fake(sign))
            assert 0 < real <= community_graph.num_edges(sign) * len(sets.examples(sign))
            assert fake == len(s_tr.fake_edges(sign))
            assert real + fake == len(disc)
            assert len(sets.examples(sign)) == s_tr.subgraph_count(sign)
            assert set(sets.gen(sign).cases()) <= {EdgeCase.fake(sign)}

    def test_groups_stay_inside_their_subgraph(self, random_graph):
        """Every entry of a group joins nodes of that subgraph, and real entries are real edges."""
        g = random_graph(24, 60, 3)
        theta = init_embeddings(g.num_nodes, 8, stream(0, "theta"))
        s_tr = sample_subgraphs(g, 2, 2, theta, 0)
        sets = build_edge_sets(g, s_tr)
        for sign in (Sign.POSITIVE, Sign.NEGATIVE):
            examples = sets.examples(sign)
            for index, root in enumerate(examples.roots):
                members = s_tr.subgraph_nodes(sign, root)
                assert examples.nodes(index) <= members
                for u, v, case in examples.groups[index].entries():
                    if case is EdgeCase.real(sign):
                        assert g.sign_of(u, v) is sign

    @pytest.mark.parametrize("n,l", [(1, 1), (2, 2), (3, 2)])
    def test_node_reaches_at_most_receptive_field_groups(self, random_graph, n, l):
        g = random_graph(40, 300, 1)
        theta = init_embeddings(g.num_nodes, 8, stream(1, "theta"))
        sets = build_edge_sets(g, sample_subgraphs(g, n, l, theta, 1))
        cap = r_nl(n, l)
        for sign in (Sign.POSITIVE, Sign.NEGATIVE):
            examples = sets.examples(sign)
            for v in range(g.num_nodes):
                assert sum(v in examples.nodes(k) for k in range(len(examples))) <= cap


class TestTrain:
    """Alternating private adversarial training."""

    def test_zero_epochs_returns_initialisation(self, community_graph, small_config):
        result = train(community_graph, with_overrides(small_config, epochs=0))
        expected = init_embeddings(community_graph.num_nodes, 8, stream(7, "init", "generator"))
        assert result.theta_g == expected
        assert result.report.ledger.steps_taken == 0
        assert result.report.epsilon == 0.0
        assert result.report.epochs_completed == 0

    def test_deterministic(self, community_graph, small_config):
        a = train(community_graph, small_config)
        b = train(community_graph, small_config)
        assert a.theta_g == b.theta_g
        assert a.theta_d == b.theta_d
        assert a.report == b.report

    def test_seed_changes_embeddings(self, community_graph, small_config):
        a = train(community_graph, small_config)
        b = train(community_graph, with_overrides(small_config, seed=8))
        assert a.theta_g != b.theta_g

    def test_step_counts_and_ledger(self, community_graph, small_config):
        """Every epoch runs n_iter steps per component; only discriminator steps are accounted."""
        result = train(community_graph, small_config)
        report = result.report
        assert not report.stopped_early
        assert report.epochs_completed == 2
        assert report.steps["D+"] == report.steps["D-"] == 4
        assert report.ledger.steps_pos == 4
        assert report.ledger.steps_neg == 4
        assert report.epsilon <= small_config.dp.epsilon_target
        assert report.config_hash == small_config.config_hash()

    def test_generator_steps_never_touch_the_ledger(self, community_graph, small_config, mocker):
        spy = mocker.spy(trainer_module, "record_step")
        report = train(community_graph, small_config).report
        assert spy.call_count == report.steps["D+"] + report.steps["D-"]
        assert report.steps["G+"] > 0

    def test_components_alternate_in_order(self, community_graph, small_config, mocker):
        """One epoch runs every D+ step, then G+, then D-, then G-."""
        order = []
        disc_step, gen_step = trainer_module._Trainer.disc_step, trainer_module._Trainer.gen_step

        def recording_disc_step(self, theta_d, examples, sign):
            order.append(f"D{sign.symbol}")
            return disc_step(self, theta_d, examples, sign)

        def recording_gen_step(self, theta_g, theta_d, edges, sign):
            order.append(f"G{sign.symbol}")
            return gen_step(self, theta_g, theta_d, edges, sign)

        mocker.patch.object(trainer_module._Trainer, "disc_step", recording_disc_step)
        mocker.patch.object(trainer_module._Trainer, "gen_step", recording_gen_step)
        config = with_overrides(small_config, epochs=1, iters=3)
        steps = train(community_graph, config).report.steps
        assert steps["D+"] == steps["D-"] == steps["G+"] == 3
        assert order == ["D+"] * 3 + ["G+"] * 3 + ["D-"] * 3 + ["G-"] * steps["G-"]

    def test_every_sampled_subgraph_is_clipped_once(self, community_graph, small_config, mocker):
        clipped_norms = []

        def recording_clip(grad, c):
            out = clip_gradient(grad, c)
            clipped_norms.append(np.linalg.norm(out.values))
            return out

        mocker.patch.object(trainer_module, "clip_gradient", side_effect=recording_clip)
        noise_spy = mocker.spy(trainer_module, "noisy_row_gradient")
        config = with_overrides(small_config, epochs=1, iters=1, clip=0.5)
        train(community_graph, config)
        assert len(clipped_norms) == 2 * config.b_d
        assert max(clipped_norms) <= 0.5 + 1e-12
        for call in noise_spy.call_args_list:
            clipped, batch_size = call.args[0], call.args[4]
            assert batch_size == config.b_d
            assert np.linalg.norm(clipped.values) <= config.b_d * 0.5 + 1e-9

    def test_budget_is_never_exceeded(self, community_graph, small_config):
        """A tight budget stops training before the step that would overspend."""
        config = with_overrides(small_config, sigma=5.0, epsilon=2.0, epochs=30, iters=5)
        report = train(community_graph, config).report
        assert report.stopped_early
        assert report.epsilon <= 2.0
        assert report.spent_delta < config.dp.delta
        assert report.stop_delta >= config.dp.delta
        eps, _ = to_dp(report.ledger, config.dp.delta)
        assert eps == pytest.approx(report.epsilon)

    def test_stop_decision_follows_spent_delta(self, community_graph, small_config, mocker):
        """Three affordable steps, then the fourth would overspend."""
        calls = {"n": 0}

        def fake_spent_delta(ledger, epsilon_target):
            calls["n"] += 1
            return 0.0 if calls["n"] <= 3 else 1.0

        mocker.patch("asgl.services.trainer.spent_delta", side_effect=fake_spent_delta)
        report = train(community_graph, small_config).report
        assert report.stopped_early
        assert report.steps["D+"] + report.steps["D-"] == 3
        assert report.stop_delta >= small_config.dp.delta
        assert report.epochs_completed == 0

    def test_budget_infeasible(self, community_graph, small_config):
        with pytest.raises(BudgetInfeasibleError):
            train(community_graph, with_overrides(small_config, sigma=0.01))

    def test_missing_sign_is_skipped(self, community_graph, small_config):
        g = community_graph.restrict(Sign.POSITIVE)
        report = train(g, small_config).report
        assert report.skipped_signs == ["-1"]
        assert report.steps["D-"] == 0
        assert report.steps["G-"] == 0
        assert report.ledger.steps_neg == 0

    def test_single_sign_variant(self, community_graph, small_config):
        report = train(community_graph, small_config, only_sign=Sign.NEGATIVE).report
        assert report.steps["D+"] == 0
        assert report.steps["D-"] == 4

    def test_single_sign_variant_without_edges(self, community_graph, small_config):
        with pytest.raises(DomainError):
            train(community_graph.restrict(Sign.POSITIVE), small_config, only_sign=Sign.NEGATIVE)

    def test_empty_graph(self, small_config):
        with pytest.raises(EmptyGraphError):
            train(SignedGraph.from_edges(3, []), small_config)

    def test_discriminator_batch_too_large(self, community_graph, small_config):
        with pytest.raises(InvalidConfigError):
            train(community_graph, with_overrides(small_config, batch_d=1000))

    def test_non_finite_update_aborts_with_snapshot(self, community_graph, small_config, mocker):
        bad = RowGradient(np.array([0]), np.full((1, 8), np.nan))
        mocker.patch("asgl.services.trainer.noisy_row_gradient", return_value=bad)
        with pytest.raises(TrainingDivergedError) as exc_info:
            train(community_graph, small_config)
        assert exc_info.value.snapshot["component"] == "D+"
        assert exc_info.value.snapshot["step"] == 0


class TestExport:
    """Publishing theta_G."""

    def test_round_trip(self, tmp_path, small_embeddings):
        path = export(small_embeddings, tmp_path / "out" / "emb.txt")
        lines = path.read_text().splitlines()
        assert lines[0] == f"{small_embeddings.num_nodes} 16"
        assert len(lines) == small_embeddings.num_nodes + 1
        assert EmbeddingTable.load(path) == small_embeddings

    def test_original_ids(self, tmp_path, make_table):
        theta = make_table([0.5, -0.25], [1.0, 2.0])
        path = export(theta, tmp_path / "emb.txt", original_ids=[7, 100])
        lines = path.read_text().splitlines()
        assert lines[0] == "2 2"
        assert lines[1].split()[0] == "7"
        assert lines[2].split() == ["100", "1", "2"]

    def test_original_ids_length_mismatch(self, tmp_path, make_table):
        with pytest.raises(DomainError):
            export(make_table([0.0], [1.0]), tmp_path / "emb.txt", original_ids=[1])
