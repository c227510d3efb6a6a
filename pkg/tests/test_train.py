"""Training harness: schedules, stage freezing, overfit oracles, resume
determinism, divergence policy."""

import dataclasses
import json

import numpy as np
import pytest

from ppon import tensor as T
from ppon.data import DegradationSpec, make_pair_source
from ppon.fixture import fixture_images
from ppon.losses import (
    Discriminator,
    DiscriminatorConfig,
    desk_feature_extractor,
    identity_feature_extractor,
)
from ppon.model import PPON, PponConfig
from ppon.train import (
    MissingPrerequisite,
    RunRecord,
    StageSchedule,
    TrainingDiverged,
    load_checkpoint,
    lr_at,
    make_schedule,
    parameter_hash,
    prepare_stage_model,
    save_checkpoint,
    train_stage,
)


def patch_sources(names_and_origins, size=48):
    imgs = fixture_images()
    sources = []
    for i, (name, oy, ox) in enumerate(names_and_origins):
        hr = T.Tensor(imgs[name].data[:, :, oy : oy + size, ox : ox + size])
        sources.append(make_pair_source(f"patch{i}", hr, DegradationSpec(), seed=i))
    return sources


SMOOTH_CROPS = [
    ("grad_bands.png", 32, 96),
    ("grad_waves.png", 128, 64),
    ("grad_bands.png", 160, 20),
    ("grad_waves.png", 16, 160),
]


class TestSchedules:
    def test_lr_at_start(self):
        sched = make_schedule("content", "full")
        assert lr_at(sched, 0) == 2e-4

    def test_content_halves_at_interval(self):
        sched = make_schedule("content", "full")
        assert sched.decay_interval_iters == 138_000
        assert lr_at(sched, 138_000) == pytest.approx(1e-4)

    def test_step_function(self):
        sched = make_schedule("structure", "full")
        assert sched.initial_lr == 1e-4
        assert sched.decay_interval_iters == 34_500
        assert lr_at(sched, int(2.5 * 34_500)) == pytest.approx(1e-4 / 4)

    def test_full_batch_and_patch(self):
        sched = make_schedule("content", "full")
        assert sched.batch_size == 25 and sched.hr_patch == 192
        assert sched.ms_scales == 5

    def test_desk_interval_ratio(self):
        sched = make_schedule("structure", "test", max_iters=2000)
        assert sched.decay_interval_iters == 500
        assert sched.ms_scales == 3

    def test_trainable_prefixes(self):
        assert make_schedule("content", "test").trainable_prefixes == ("co.",)
        assert make_schedule("structure", "test").trainable_prefixes == ("so.",)
        perception = make_schedule("perception", "test")
        assert perception.trainable_prefixes == ("po.",)
        assert perception.adversarial

    def test_negative_iteration_rejected(self):
        with pytest.raises(ValueError):
            lr_at(make_schedule("content", "test"), -1)


class TestStageFreezing:
    def test_structure_stage_one_iter_keeps_content_hash(self, tmp_path):
        model = PPON(PponConfig.test(), seed=0)
        sources = patch_sources(SMOOTH_CROPS)
        co_hash = parameter_hash(model, ("co.",))
        sched = make_schedule("structure", "test", max_iters=1, batch_size=2,
                              hr_patch=48)
        train_stage(model, sched, sources, tmp_path / "s.ckpt", run_seed=0)
        assert parameter_hash(model, ("co.",)) == co_hash
        assert parameter_hash(model, ("so.",)) != parameter_hash(
            PPON(PponConfig.test(), seed=0), ("so.",)
        )

    def test_frozen_params_never_receive_gradients(self, tmp_path):
        model = PPON(PponConfig.test(), seed=1)
        sources = patch_sources(SMOOTH_CROPS)
        sched = make_schedule("structure", "test", max_iters=2, batch_size=2,
                              hr_patch=48)
        train_stage(model, sched, sources, tmp_path / "s.ckpt", run_seed=0)
        for name, p in model.named_parameters():
            if not name.startswith("so."):
                assert p.grad_accums == 0, name

    def test_perception_keeps_content_and_structure_hashes(self, tmp_path):
        model = PPON(PponConfig.test(), seed=2)
        sources = patch_sources(SMOOTH_CROPS)
        frozen_hash = parameter_hash(model, ("co.", "so."))
        sched = make_schedule("perception", "test", max_iters=2, batch_size=2,
                              hr_patch=48)
        disc = Discriminator(DiscriminatorConfig.desk(48), seed=0)
        train_stage(
            model, sched, sources, tmp_path / "p.ckpt", run_seed=0,
            extractor=desk_feature_extractor(), discriminator=disc,
        )
        assert parameter_hash(model, ("co.", "so.")) == frozen_hash


class TestPrerequisites:
    def test_structure_needs_checkpoint(self):
        with pytest.raises(MissingPrerequisite):
            prepare_stage_model("structure", PponConfig.test())

    def test_missing_file_named(self, tmp_path):
        missing = tmp_path / "ghost.ckpt"
        with pytest.raises(MissingPrerequisite, match="ghost.ckpt"):
            prepare_stage_model("structure", PponConfig.test(),
                                init_checkpoint=missing)

    def test_perception_rejects_content_only_checkpoint(self, tmp_path):
        model = PPON(PponConfig.test(), seed=3)
        path = tmp_path / "content.ckpt"
        save_checkpoint(model, path, stage="content")
        with pytest.raises(MissingPrerequisite, match="perception"):
            prepare_stage_model("perception", PponConfig.test(),
                                init_checkpoint=path)

    def test_structure_accepts_content_checkpoint(self, tmp_path):
        model = PPON(PponConfig.test(), seed=4)
        path = tmp_path / "content.ckpt"
        save_checkpoint(model, path, stage="content")
        loaded, history = prepare_stage_model(
            "structure", PponConfig.test(), init_checkpoint=path
        )
        assert parameter_hash(loaded, ("co.",)) == parameter_hash(model, ("co.",))


class TestDivergencePolicy:
    def test_nan_aborts_with_diagnostic(self, tmp_path):
        model = PPON(PponConfig.test(), seed=5)
        for name, p in model.named_parameters():
            if name == "co.head.weight":
                p.data[0, 0, 0, 0] = np.nan
        sources = patch_sources(SMOOTH_CROPS)
        sched = make_schedule("content", "test", max_iters=3, batch_size=2,
                              hr_patch=48)
        log = tmp_path / "log.jsonl"
        with pytest.raises(TrainingDiverged):
            train_stage(model, sched, sources, tmp_path / "c.ckpt", run_seed=0,
                        log_path=log)
        rows = [json.loads(line) for line in log.read_text().splitlines()]
        assert rows[-1]["record"] == "abort"
        assert not (tmp_path / "c.ckpt").exists()


class TestResume:
    def test_mid_stage_resume_reproduces_trajectory(self, tmp_path):
        sources = patch_sources(SMOOTH_CROPS)

        def fresh():
            return PPON(PponConfig.test(), seed=6)

        full_sched = make_schedule("content", "test", max_iters=120, batch_size=2,
                                   hr_patch=48)
        uninterrupted = fresh()
        rec_full = train_stage(uninterrupted, full_sched, sources,
                               tmp_path / "full.ckpt", run_seed=9)

        half_sched = dataclasses.replace(full_sched, max_iters=60)
        first = fresh()
        train_stage(first, half_sched, sources, tmp_path / "half.ckpt", run_seed=9)
        resumed, header = load_checkpoint(tmp_path / "half.ckpt")
        assert header["iteration"] == 60
        rec_rest = train_stage(resumed, full_sched, sources,
                               tmp_path / "resumed.ckpt", run_seed=9,
                               start_iter=header["iteration"])

        full_series = rec_full.loss_series("content")
        rest_series = rec_rest.loss_series("content")
        assert full_series[60:] == rest_series
        assert (
            parameter_hash(uninterrupted, ("co.",))
            == parameter_hash(resumed, ("co.",))
        )


class TestContentOverfit:
    def test_four_patch_overfit(self, tmp_path):
        # four fixed 48px patches, 3000 iterations, no augmentation, no
        # mid-run decay: converges below 0.02 mean absolute error
        sources = patch_sources(SMOOTH_CROPS)
        sched = dataclasses.replace(
            make_schedule("content", "test", max_iters=3000, batch_size=4,
                          hr_patch=48),
            augment=False, decay_interval_iters=3000,
        )
        model = PPON(PponConfig.test(), seed=0)
        record = train_stage(model, sched, sources, tmp_path / "c.ckpt", run_seed=0)
        series = record.loss_series("content")
        assert series[-1] < 0.02
        assert (tmp_path / "c.ckpt").is_file()


class TestDegeneratePerception:
    def test_eta_zero_identity_extractor_is_l1_descent(self, tmp_path):
        # with eta = 0 and an identity extractor the stage reduces to L1
        # training of the perceptual branch; the 100-iteration moving
        # average decreases monotonically
        sources = patch_sources(SMOOTH_CROPS)
        model = PPON(PponConfig.test(), seed=7)
        save_checkpoint(model, tmp_path / "s.ckpt", stage="structure")
        sched = dataclasses.replace(
            make_schedule("perception", "test", max_iters=2000, batch_size=2,
                          hr_patch=48),
            adversarial=False, perception_eta=0.0, augment=False,
        )
        record = train_stage(
            model, sched, sources, tmp_path / "p.ckpt", run_seed=0,
            extractor=identity_feature_extractor(),
        )
        series = record.loss_series("perception")
        windows = [np.mean(series[i : i + 100]) for i in range(0, 2000, 100)]
        for earlier, later in zip(windows, windows[1:]):
            assert later < earlier
