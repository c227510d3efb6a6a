"""Three-stage progressive training: content first, then structure with the
content branch frozen, then adversarial perception with both earlier
branches frozen.

Schedules are specified in iterations.  Full-profile intervals follow the
published recipe (content: 2e-4 halved every 138k iterations; structure and
perception: 1e-4 halved every 34.5k), which in both cases is a quarter of
the stage length; desk schedules keep that ratio.  Per-sample seeds are
derived from (run seed, stage, sample index), so a resumed run replays the
identical data stream.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import ContainerError, read_container, write_container
from .data import PairSource, augment, sample_patch_pair
from .losses import (
    FeatureExtractor,
    MsWeights,
    PERCEPTION_ETA,
    STRUCTURE_LAMBDA,
    content_loss,
    ms_l1,
    ms_ssim,
    perceptual_loss,
    ragan_d_loss,
    ragan_g_loss,
)
from .model import PPON, PponConfig, branch_prefixes

STAGES = ("content", "structure", "perception")
_STAGE_ID = {"content": 1, "structure": 2, "perception": 3}
# parameter scopes persisted by a checkpoint of each stage
_STAGE_SCOPE = {
    "content": ("co.",),
    "structure": ("co.", "so."),
    "perception": ("co.", "so.", "po."),
}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; the run aborts, never skips."""


class MissingPrerequisite(ValueError):
    """A stage was started without the checkpoint it builds on."""


@dataclass
class StageSchedule:
    stage: str
    initial_lr: float
    decay_factor: float
    decay_interval_iters: int
    max_iters: int
    batch_size: int
    trainable_prefixes: tuple
    adversarial: bool
    hr_patch: int
    ms_scales: int = 5
    structure_lambda: float = STRUCTURE_LAMBDA
    perception_eta: float = PERCEPTION_ETA
    augment: bool = True

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.decay_interval_iters < 1 or self.max_iters < 1:
            raise ValueError("iteration counts must be >= 1")


def lr_at(schedule: StageSchedule, iteration: int) -> float:
    """Step-decayed learning rate at a given iteration."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    steps = iteration // schedule.decay_interval_iters
    return schedule.initial_lr * schedule.decay_factor**steps


def make_schedule(stage: str, profile: str = "full", max_iters: int | None = None,
                  batch_size: int | None = None, hr_patch: int | None = None) -> StageSchedule:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if profile not in ("full", "test"):
        raise ValueError(f"unknown profile {profile!r}")
    initial_lr = 2e-4 if stage == "content" else 1e-4
    if profile == "full":
        max_iters = max_iters or (552_000 if stage == "content" else 138_000)
        interval = 138_000 if stage == "content" else 34_500
        batch_size = batch_size or 25
        hr_patch = hr_patch or 192
        ms_scales = 5
    else:
        defaults = {"content": 3000, "structure": 1500, "perception": 1000}
        max_iters = max_iters or defaults[stage]
        # keep the full-profile interval:length ratio of 1/4
        interval = max(1, max_iters // 4)
        batch_size = batch_size or 4
        hr_patch = hr_patch or 64
        ms_scales = 3
    return StageSchedule(
        stage=stage,
        initial_lr=initial_lr,
        decay_factor=0.5,
        decay_interval_iters=interval,
        max_iters=max_iters,
        batch_size=batch_size,
        trainable_prefixes=branch_prefixes(stage),
        adversarial=(stage == "perception"),
        hr_patch=hr_patch,
        ms_scales=ms_scales,
    )


@dataclass
class LossBundle:
    """Per-iteration loss scalars and the blend weights in force."""

    stage: str
    values: dict
    weights: dict = field(default_factory=dict)


class RunRecord:
    """Append-only per-iteration log, optionally streamed as JSON lines."""

    def __init__(self, path=None, meta: dict | None = None):
        self.rows = []
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        if meta is not None:
            self.log(record="meta", **meta)

    def log(self, **fields):
        self.rows.append(fields)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(json.dumps(fields) + "\n")

    def loss_series(self, key: str):
        return [r[key] for r in self.rows if key in r]


def parameter_hash(layer, prefixes=("",)) -> str:
    """SHA-256 over the raw bytes of every parameter under the prefixes."""
    h = hashlib.sha256()
    for name, p in layer.named_parameters():
        if any(name.startswith(pre) for pre in prefixes):
            h.update(name.encode())
            h.update(p.data.tobytes())
    return h.hexdigest()


def apply_stage_freeze(model: PPON, schedule: StageSchedule):
    """Freeze everything outside the stage scope; returns the trainables."""
    trainable = []
    for name, p in model.named_parameters():
        if any(name.startswith(pre) for pre in schedule.trainable_prefixes):
            p.unfreeze()
            trainable.append(p)
        else:
            p.freeze()
    return trainable


def _make_batch(sources, schedule: StageSchedule, run_seed: int, iteration: int):
    stage_id = _STAGE_ID[schedule.stage]
    lrs, hrs = [], []
    for i in range(schedule.batch_size):
        sample_index = iteration * schedule.batch_size + i
        rng = np.random.default_rng(
            np.random.SeedSequence((run_seed, stage_id, sample_index))
        )
        src = sources[int(rng.integers(len(sources)))]
        pair = sample_patch_pair(src, schedule.hr_patch, rng)
        if schedule.augment:
            pair = augment(pair, rng)
        lrs.append(pair.lr.data)
        hrs.append(pair.hr.data)
    return T.Tensor(np.concatenate(lrs)), T.Tensor(np.concatenate(hrs))


def _check_finite(value: float, record: RunRecord, context: dict):
    if not np.isfinite(value):
        record.log(record="abort", reason="non-finite loss", **context)
        raise TrainingDiverged(f"non-finite loss at {context}")


def train_stage(model: PPON, schedule: StageSchedule, sources, out_checkpoint,
                run_seed: int = 0, log_path=None, extractor: FeatureExtractor | None = None,
                discriminator=None, start_iter: int = 0, stage_history=None,
                progress_every: int = 0) -> RunRecord:
    """Optimize one stage and write its checkpoint.

    Only parameters in the schedule's scope receive gradients or updates;
    during the perception stage each iteration runs one discriminator
    update followed by one generator update on the same batch.
    """
    if schedule.stage == "perception":
        if schedule.adversarial and discriminator is None:
            raise ValueError("perception stage needs a discriminator")
        if not schedule.adversarial and schedule.perception_eta != 0.0:
            raise ValueError("non-adversarial perception run requires eta == 0")
        if extractor is None:
            raise ValueError("perception stage needs a feature extractor")
    if not sources:
        raise ValueError("no training images")

    record = RunRecord(
        log_path,
        meta={
            "stage": schedule.stage,
            "run_seed": run_seed,
            "start_iter": start_iter,
            "max_iters": schedule.max_iters,
            "batch_size": schedule.batch_size,
            "hr_patch": schedule.hr_patch,
            "initial_lr": schedule.initial_lr,
            "config": model.config.to_dict(),
            "n_images": len(sources),
        },
    )
    trainable = apply_stage_freeze(model, schedule)
    ms_weights = MsWeights.truncated(schedule.ms_scales)

    t0 = time.time()
    for it in range(start_iter, schedule.max_iters):
        lr_value = lr_at(schedule, it)
        lr_batch, hr_batch = _make_batch(sources, schedule, run_seed, it)

        if schedule.stage == "content":
            _, sr_c = model.forward_content(lr_batch)
            loss = content_loss(sr_c, hr_batch)
            loss_value = loss.item()
            _check_finite(loss_value, record, {"iter": it, "stage": "content"})
            T.backward(loss)
            T.adam_step(trainable, lr_value, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
            bundle = LossBundle("content", {"content": loss_value})

        elif schedule.stage == "structure":
            f_c, sr_c = model.forward_content(lr_batch)
            _, sr_s = model.forward_structure(f_c, sr_c)
            l1_term = ms_l1(sr_s, hr_batch, ms_weights)
            ssim_term = ms_ssim(sr_s, hr_batch, ms_weights)
            loss = T.add(
                l1_term,
                T.scalar_mul(T.sub(1.0, ssim_term), schedule.structure_lambda),
            )
            loss_value = loss.item()
            _check_finite(loss_value, record, {"iter": it, "stage": "structure"})
            T.backward(loss)
            T.adam_step(trainable, lr_value, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
            bundle = LossBundle(
                "structure",
                {
                    "structure": loss_value,
                    "ms_l1": l1_term.item(),
                    "ms_ssim": ssim_term.item(),
                },
                {"lambda": schedule.structure_lambda},
            )

        else:  # perception
            # earlier branches are frozen constants for this whole iteration
            f_c, sr_c = model.forward_content(lr_batch)
            f_s, sr_s = model.forward_structure(f_c, sr_c)

            d_loss_value = None
            c_real_data = None
            if schedule.adversarial:
                with T.no_grad():
                    _, sr_p_const = model.forward_perceptual(f_s, sr_s, 1.0)
                c_real = discriminator(hr_batch)
                c_fake = discriminator(sr_p_const.detach())
                d_loss = ragan_d_loss(c_real, c_fake)
                d_loss_value = d_loss.item()
                _check_finite(d_loss_value, record, {"iter": it, "stage": "perception/d"})
                T.backward(d_loss)
                T.adam_step(
                    list(discriminator.parameters()), lr_value,
                    ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
                )
                c_real_data = c_real.data

            _, sr_p = model.forward_perceptual(f_s, sr_s, 1.0)
            vgg_term = perceptual_loss(sr_p, hr_batch, extractor)
            if schedule.adversarial:
                discriminator.freeze()
                c_fake_g = discriminator(sr_p)
                adv_term = ragan_g_loss(T.Tensor(c_real_data), c_fake_g)
                loss = T.add(
                    vgg_term, T.scalar_mul(adv_term, schedule.perception_eta)
                )
                adv_value = adv_term.item()
            else:
                loss = vgg_term
                adv_value = None
            loss_value = loss.item()
            _check_finite(loss_value, record, {"iter": it, "stage": "perception/g"})
            T.backward(loss)
            T.adam_step(trainable, lr_value, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
            if schedule.adversarial:
                discriminator.unfreeze()
            values = {"perception": loss_value, "vgg": vgg_term.item()}
            if adv_value is not None:
                values["g_adv"] = adv_value
                values["d_adv"] = d_loss_value
            bundle = LossBundle("perception", values, {"eta": schedule.perception_eta})

        record.log(
            record="iter", iter=it, lr=lr_value, wall=round(time.time() - t0, 3),
            **bundle.values,
        )
        if progress_every and (it + 1) % progress_every == 0:
            print(
                f"[{schedule.stage}] iter {it + 1}/{schedule.max_iters} "
                f"loss {loss_value:.5f} lr {lr_value:.2e}",
                flush=True,
            )

    history = list(stage_history or [])
    history.append(
        {"stage": schedule.stage, "iters": schedule.max_iters, "run_seed": run_seed}
    )
    save_checkpoint(
        model, out_checkpoint, stage=schedule.stage, stage_history=history,
        iteration=schedule.max_iters,
    )
    record.log(record="done", stage=schedule.stage, checkpoint=str(out_checkpoint))
    return record


# ---------------------------------------------------------------------------
# checkpoint glue


def _scoped_params(model: PPON, prefixes):
    return [
        (name, p)
        for name, p in model.named_parameters()
        if any(name.startswith(pre) for pre in prefixes)
    ]


def save_checkpoint(model: PPON, path, stage: str, stage_history=None,
                    iteration: int | None = None, include_optimizer: bool = True) -> None:
    """Write the parameters covered by `stage` (content -> co, structure ->
    co+so, perception -> all) with config, seed and provenance."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    scope = _STAGE_SCOPE[stage]
    named = _scoped_params(model, scope)
    tensors, blobs = [], []
    for name, p in named:
        tensors.append({"name": name, "shape": list(p.shape)})
        blobs.append(p.data)
    step_counts = {}
    if include_optimizer:
        for name, p in named:
            tensors.append({"name": name + "#m", "shape": list(p.shape)})
            blobs.append(p.adam_m)
            tensors.append({"name": name + "#v", "shape": list(p.shape)})
            blobs.append(p.adam_v)
            step_counts[name] = p.step_count
    header = {
        "kind": "ppon_model",
        "config": model.config.to_dict(),
        "seed": model.seed,
        "stage": stage,
        "stage_history": list(stage_history or []),
        "iteration": iteration,
        "init": "kaiming_uniform_fan_in",
        "scope": list(scope),
        "optimizer": {"present": include_optimizer, "step_counts": step_counts},
        "tensors": tensors,
    }
    write_container(path, header, blobs)


def load_checkpoint(path, model: PPON | None = None, partial: bool = False):
    """Rebuild or populate a model from a container.

    Without `model` the architecture is rebuilt from the header (parameters
    outside the checkpoint scope stay at their seeded init).  With `model`,
    the configs must match exactly; loading a narrower-scope checkpoint
    then requires `partial=True`.
    """
    header, blobs = read_container(path)
    if header.get("kind") != "ppon_model":
        raise ContainerError(f"{path}: kind {header.get('kind')!r} is not a model")
    config = PponConfig.from_dict(header["config"])
    rebuilt = model is None
    if rebuilt:
        # a model rebuilt from the header keeps its seeded init outside the
        # checkpoint's declared scope
        model = PPON(config, seed=header.get("seed", 0))
    elif model.config.to_dict() != config.to_dict():
        raise ContainerError(
            f"{path}: checkpoint config does not match the target model"
        )

    params = dict(model.named_parameters())
    value_names = [
        d["name"] for d in header["tensors"] if not d["name"].endswith(("#m", "#v"))
    ]
    missing = [n for n in params if n not in set(value_names)]
    if missing and not (partial or rebuilt):
        raise ContainerError(
            f"{path}: checkpoint covers {header.get('scope')} only; pass "
            f"partial=True to load it into a full model"
        )
    arrays = {d["name"]: blob for d, blob in zip(header["tensors"], blobs)}
    step_counts = header.get("optimizer", {}).get("step_counts", {})
    for name in value_names:
        if name not in params:
            raise ContainerError(f"{path}: unknown parameter {name!r} for this model")
        p = params[name]
        if tuple(p.shape) != tuple(arrays[name].shape):
            raise ContainerError(
                f"{path}: shape mismatch for {name}: "
                f"{arrays[name].shape} vs {tuple(p.shape)}"
            )
        p.data[:] = arrays[name]
        if name + "#m" in arrays:
            p.adam_m[:] = arrays[name + "#m"]
            p.adam_v[:] = arrays[name + "#v"]
            p.step_count = int(step_counts.get(name, 0))
    return model, header


def prepare_stage_model(stage: str, config: PponConfig, seed: int = 0,
                        init_checkpoint=None) -> tuple:
    """Build the model for a stage, enforcing checkpoint prerequisites."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if stage == "content":
        if init_checkpoint is not None:
            model, header = load_checkpoint(init_checkpoint, partial=True)
            return model, header.get("stage_history", [])
        return PPON(config, seed=seed), []
    if init_checkpoint is None:
        raise MissingPrerequisite(
            f"{stage} stage needs an initial checkpoint from the previous stage "
            f"(none given)"
        )
    path = Path(init_checkpoint)
    if not path.is_file():
        raise MissingPrerequisite(f"{stage} stage prerequisite not found: {path}")
    model, header = load_checkpoint(path, partial=True)
    have = set(header.get("scope", []))
    need = {"structure": {"co."}, "perception": {"co.", "so."}}[stage]
    if not need.issubset(have):
        raise MissingPrerequisite(
            f"{path}: covers {sorted(have)} but the {stage} stage needs "
            f"{sorted(need)}"
        )
    return model, header.get("stage_history", [])
