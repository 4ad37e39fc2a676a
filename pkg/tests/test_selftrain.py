#!/usr/bin/env python
import unittest
from unittest import mock
import pytest
from noisyst.selftrain import (
    Selection,
    ExperimentPlan,
    PseudoCorpus,
    confidence_of,
    pseudo_label,
    select_subset,
    pseudo_train,
    fine_tune,
    self_train_loop,
    train_baseline,
    SelfTrainer,
)
from noisyst.decoding import DecodeSpec, make_hypothesis
from noisyst.exceptions import ConfigError, UsageError, StageError
from noisyst.model import ModelConfig, ModelParams, init_params
from noisyst.report import MetricsReport
from noisyst import selftrain
from noisyst.toysum import gen_toy_dataset, TOY_VOCAB
from noisyst.vocab import ParallelExample, EOS
import numpy as np
import tempfile
import math
import os

import logging
logging.disable(logging.ERROR)

TINY = dict(max_updates=4, batch_size=8, valid_interval=2, lr=0.01, warmup_steps=0)


def fixed_distribution_model(probs, seed=0):
    config = ModelConfig(vocab_size=len(TOY_VOCAB), embed_dim=4, hidden_dim=4)
    params = init_params(config, seed)
    bias = np.full(config.vocab_size, -50.0)
    for tok, p in probs.items():
        bias[tok] = math.log(p)
    return params.replace({"out_W": np.zeros((4, config.vocab_size)), "out_b": bias})


def tiny_plan(**settings):
    base = dict(
        baseline_schedule=TINY,
        pt_schedule=TINY,
        ft_schedule=TINY,
        decode=dict(mode="greedy", max_len=4),
    )
    base.update(settings)
    return ExperimentPlan(**base)


class Test(unittest.TestCase):

    @classmethod
    def setup_class(self):
        split = gen_toy_dataset(3)
        self.parallel = split.train[:40]
        self.valid = split.valid[:20]
        self.unlabeled = split.unlabeled[:30]
        # Always writes the digit 7, never stops.
        self.chatty = fixed_distribution_model({TOY_VOCAB.token_to_id("7"): 0.9, EOS: 0.1})
        # Always stops at once.
        self.silent = fixed_distribution_model({EOS: 0.9, TOY_VOCAB.token_to_id("7"): 0.1})

    def test_selection_parse(self):
        assert Selection.parse("all").count(10) == 10
        top = Selection.parse("top_fraction:0.25")
        assert top.count(10) == 3
        assert str(top) == "top_fraction:0.25"
        sched = Selection.parse("schedule:5,8")
        assert sched.count(100, 1) == 5
        assert sched.count(100, 2) == 8
        assert sched.count(100, 3) == 8
        assert sched.count(6, 2) == 6
        for bad in ("top_fraction:0", "top_fraction:x", "schedule:", "best", "all:3"):
            with pytest.raises(ConfigError):
                Selection.parse(bad)

    def test_plan_validation(self):
        with pytest.raises(ConfigError):
            ExperimentPlan(init_mode="random")
        with pytest.raises(ConfigError):
            ExperimentPlan(pt_target="real")
        with pytest.raises(ConfigError):
            ExperimentPlan(regime="joint", upsample_ratio=0.5)
        with pytest.raises(ConfigError):
            ExperimentPlan(pt_dropout_rate=1.0)
        with pytest.raises(ConfigError):
            ExperimentPlan(beam=3)
        plan = ExperimentPlan(decode=dict(beam_size=2))
        assert plan.decode.beam_size == 2

    def test_stage_seeds_differ(self):
        plan = tiny_plan()
        seeds = {plan.stage_schedule(w, i).seed for w in ("pt", "ft") for i in (1, 2)}
        assert len(seeds) == 4
        assert plan.stage_schedule("pt", 1).max_updates == 4

    def test_confidence(self):
        h = make_hypothesis([6, 7], -3.0, True, True)
        assert confidence_of(h) == pytest.approx(-1.0)
        assert confidence_of(h, normalize=False) == -3.0

    def test_pseudo_label(self):
        corpus = pseudo_label(self.chatty, self.unlabeled, DecodeSpec(mode="greedy", max_len=4))
        assert len(corpus) == 30
        assert corpus.n_dropped == 0
        seven = TOY_VOCAB.token_to_id("7")
        assert all(ex.target == (seven,) * 4 for ex in corpus.examples)
        assert [ex.source for ex in corpus.examples] == self.unlabeled
        assert corpus.indices == list(range(30))
        assert corpus.teacher_fingerprint == self.chatty.fingerprint()

    def test_pseudo_label_drops_empty(self):
        corpus = pseudo_label(self.silent, self.unlabeled, DecodeSpec(mode="greedy"))
        assert len(corpus) == 0
        assert corpus.n_dropped == 30
        with pytest.raises(UsageError):
            select_subset(corpus, "all")

    def test_select_subset(self):
        examples = [ParallelExample((6 + i,), (6,)) for i in range(5)]
        corpus = PseudoCorpus(examples, [-1.0, -0.5, -0.5, -2.0, -0.1], range(5))
        kept = select_subset(corpus, "top_fraction:0.6")
        assert kept.indices == [1, 2, 4]
        assert kept.n_filtered == 2
        assert kept.n_input == 5
        kept = select_subset(corpus, "schedule:2")
        assert kept.indices == [1, 4]
        assert select_subset(corpus, "all") is corpus

    def test_pseudo_corpus_write(self):
        corpus = PseudoCorpus(self.parallel[:3], [-0.5, -0.25, -1.0], range(3))
        with tempfile.TemporaryDirectory() as tmp:
            path = corpus.write(os.path.join(tmp, "pseudo.tsv"), TOY_VOCAB)
            lines = open(path).read().splitlines()
        assert len(lines) == 3
        assert lines[1].endswith("\t-0.25")

    def test_pseudo_train_restores_dropout(self):
        plan = tiny_plan(pt_dropout_rate=0.5, noise=dict(kind="synthetic"))
        corpus = PseudoCorpus.from_parallel(self.parallel)
        trained = pseudo_train(plan, self.chatty, corpus, valid=self.valid)
        assert isinstance(trained, ModelParams)
        assert trained.config.dropout_rate == self.chatty.config.dropout_rate
        assert trained.fingerprint() != self.chatty.fingerprint()

    def test_pseudo_train_from_scratch(self):
        plan = tiny_plan()
        corpus = PseudoCorpus.from_parallel(self.parallel)
        trained, history = pseudo_train(
            plan, self.chatty.config, corpus, valid=self.valid, return_history=True
        )
        assert trained.config == self.chatty.config
        assert history[-1]["update"] == 4

    def test_pseudo_train_empty(self):
        with pytest.raises(UsageError):
            pseudo_train(tiny_plan(), self.chatty, PseudoCorpus([], [], []))

    def test_fine_tune(self):
        tuned = fine_tune(tiny_plan(), self.chatty, self.parallel, self.valid)
        assert tuned.config == self.chatty.config
        assert tuned.fingerprint() != self.chatty.fingerprint()

    def test_loop_records(self):
        plan = tiny_plan(iterations=2, noise=dict(kind="operand_swap"))
        with tempfile.TemporaryDirectory() as tmp:
            final, report = self_train_loop(
                plan,
                self.parallel,
                self.unlabeled,
                self.valid,
                test=self.valid,
                baseline=self.chatty,
                run_dir=tmp,
                vocab=TOY_VOCAB,
            )
            assert os.path.exists(os.path.join(tmp, "0", "baseline.ckpt"))
            assert os.path.exists(os.path.join(tmp, "2", "ft.ckpt"))
            assert os.path.exists(os.path.join(tmp, "1", "pseudo.tsv"))
        assert report.stages() == [(0, "baseline"), (1, "PT"), (1, "FT"), (2, "PT"), (2, "FT")]
        assert report.find(1, "PT")["n_pseudo"] == 30
        assert report.find(1, "FT")["test_loss"] is not None
        assert isinstance(final, ModelParams)

    def test_loop_is_deterministic(self):
        plan = tiny_plan(decode=dict(mode="sample", max_len=4))
        a, ra = self_train_loop(plan, self.parallel, self.unlabeled, baseline=self.chatty)
        b, rb = self_train_loop(plan, self.parallel, self.unlabeled, baseline=self.chatty)
        assert a.fingerprint() == b.fingerprint()
        assert ra.to_csv() == rb.to_csv()

    def test_loop_trains_baseline(self):
        plan = tiny_plan(pt_data="parallel", pt_target="real")
        final, report = self_train_loop(
            plan, self.parallel, [], self.valid, config=self.chatty.config
        )
        assert report.stages() == [(0, "baseline"), (1, "PT"), (1, "FT")]
        assert report.find(0, "baseline")["train_loss"] is not None

    def test_no_unlabeled_returns_baseline(self):
        final, report = self_train_loop(tiny_plan(), self.parallel, [], baseline=self.chatty)
        assert final is self.chatty
        assert len(report) == 1

    def test_joint_regime(self):
        plan = tiny_plan(regime="joint", upsample_ratio=2, iterations=2)
        _, report = self_train_loop(plan, self.parallel, self.unlabeled, baseline=self.chatty)
        assert report.stages() == [(0, "baseline"), (1, "joint"), (2, "joint")]

    def test_filtering_counts(self):
        plan = tiny_plan(selection="top_fraction:0.5")
        _, report = self_train_loop(plan, self.parallel, self.unlabeled, baseline=self.chatty)
        assert report.find(1, "PT")["n_selected"] == 15

    def test_init_modes(self):
        for mode in ("scratch", "previous"):
            plan = tiny_plan(init_mode=mode)
            _, report = self_train_loop(plan, self.parallel, self.unlabeled, baseline=self.chatty)
            assert len(report) == 3

    def test_stage_error(self):
        report = MetricsReport()
        with pytest.raises(StageError) as e:
            self_train_loop(tiny_plan(), self.parallel, self.unlabeled,
                            baseline=self.silent, report=report)
        assert e.value.iteration == 1
        assert e.value.stage == "select"
        assert isinstance(e.value.cause, UsageError)
        assert len(report) == 1

    def test_needs_config_or_baseline(self):
        with pytest.raises(UsageError):
            self_train_loop(tiny_plan(), self.parallel, self.unlabeled)

    def test_trainer_keeps_empty_report(self):
        report = MetricsReport("tiny", 1, "abc")
        trainer = SelfTrainer(tiny_plan(), self.chatty.config, report=report)
        assert trainer.report is report

    def test_stages_move_off_trained_baseline(self):
        plan = tiny_plan(
            pt_schedule=dict(TINY, lr=1e-5),
            ft_schedule=dict(TINY, lr=1e-5),
            noise=dict(kind="operand_swap"),
        )
        baseline, _ = train_baseline(plan, self.chatty.config, self.parallel, self.valid)
        corpus = PseudoCorpus.from_parallel(self.parallel)
        pt, history = pseudo_train(plan, baseline, corpus, valid=self.valid, return_history=True)
        assert pt.fingerprint() != baseline.fingerprint()
        assert history[0]["update"] == 0
        ft = fine_tune(plan, baseline, self.parallel, self.valid)
        assert ft.fingerprint() != baseline.fingerprint()

    def test_stage_valid_loss_skips_initial_entry(self):
        history = [
            dict(update=0, train_loss=None, valid_loss=0.1),
            dict(update=2, train_loss=0.9, valid_loss=0.5),
            dict(update=4, train_loss=0.7, valid_loss=0.4),
        ]
        assert selftrain._losses(history) == dict(train_loss=0.7, valid_loss=0.4)
        assert selftrain._losses(history[:1])["valid_loss"] is None

    def test_selection_is_nested(self):
        rng = np.random.default_rng(0)
        examples = [ParallelExample((6,), (7,))] * 50
        conf = list(np.round(rng.normal(size=50), 1))
        corpus = PseudoCorpus(examples, conf, range(50), n_dropped=4)
        previous = set()
        for fraction in (0.1, 0.3, 0.5, 0.9, 1.0):
            kept = select_subset(corpus, f"top_fraction:{fraction}")
            assert previous <= set(kept.indices)
            assert kept.indices == sorted(kept.indices)
            assert len(kept) + kept.n_filtered + kept.n_dropped == 54
            previous = set(kept.indices)

    def test_schedule_selection_per_iteration(self):
        examples = [ParallelExample((6,), (7,))] * 4000
        corpus = PseudoCorpus(examples, [-i / 4000 for i in range(4000)], range(4000))
        rule = "schedule:2500,3000,3800"
        assert len(select_subset(corpus, rule, iteration=1)) == 2500
        kept = select_subset(corpus, rule, iteration=2)
        assert len(kept) == 3000
        assert kept.indices == list(range(3000))
        assert len(select_subset(corpus, rule, iteration=5)) == 3800

    def test_fine_tune_always_uses_dropout(self):
        plan = tiny_plan(pt_dropout=False)
        with mock.patch("noisyst.selftrain.train", wraps=selftrain.train) as spy:
            fine_tune(plan, self.chatty, self.parallel, self.valid)
            assert spy.call_args[1]["train_mode"] is True
            pseudo_train(plan, self.chatty, PseudoCorpus.from_parallel(self.parallel))
            assert spy.call_args[1]["train_mode"] is False

    def test_beam_and_sample_labels_differ(self):
        seven, eight = TOY_VOCAB.token_to_id("7"), TOY_VOCAB.token_to_id("8")
        spread = fixed_distribution_model({seven: 0.4, eight: 0.35, EOS: 0.25})
        beam = pseudo_label(spread, self.unlabeled, DecodeSpec(mode="beam", max_len=4))
        sample = pseudo_label(spread, self.unlabeled, DecodeSpec(mode="sample", max_len=4))
        assert len({ex.target for ex in beam.examples}) == 1
        assert len({ex.target for ex in sample.examples}) > 1
        assert [ex.target for ex in sample.examples] != [ex.target for ex in beam.examples]

    def test_three_iterations(self):
        plan = tiny_plan(iterations=3, init_mode="scratch", noise=dict(kind="operand_swap"))
        _, report = self_train_loop(
            plan, self.parallel, self.unlabeled, self.valid, test=self.valid,
            baseline=self.chatty,
        )
        assert len(report) == 7
        assert [s for s in report.stages() if s[1] == "FT"] == [(1, "FT"), (2, "FT"), (3, "FT")]
        assert all(r["valid_loss"] is not None for r in report.records if r["stage"] != "baseline")
