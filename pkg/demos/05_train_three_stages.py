"""A miniature end-to-end run of the three-stage schedule: fit the content
branch, freeze it and fit the structure branch, then freeze both and run
the adversarial perception stage. Tiny iteration counts; this demo shows
the mechanics, not converged quality (see the acceptance suite for that).

Run:  python demos/05_train_three_stages.py   (about 2 minutes)
"""

import tempfile
from pathlib import Path

from ppon.data import DatasetManifest, DegradationSpec, load_sources
from ppon.fixture import write_fixture
from ppon.losses import Discriminator, DiscriminatorConfig, desk_feature_extractor
from ppon.model import PPON, PponConfig
from ppon.train import (
    load_checkpoint,
    make_schedule,
    parameter_hash,
    prepare_stage_model,
    train_stage,
)

work = Path(tempfile.mkdtemp(prefix="ppon_demo_"))
manifest = DatasetManifest.from_file(write_fixture(work / "data"))
sources = load_sources(manifest, DegradationSpec(), seed=0)
print(f"workspace: {work}")

ITERS = {"content": 120, "structure": 60, "perception": 40}

# Stage 1: the fidelity trunk alone.
model = PPON(PponConfig.test(), seed=0)
sched = make_schedule("content", "test", max_iters=ITERS["content"], batch_size=2)
rec = train_stage(model, sched, sources, work / "content.ckpt", run_seed=0)
print(f"content  : loss {rec.loss_series('content')[0]:.4f} -> "
      f"{rec.loss_series('content')[-1]:.4f}")

# Stage 2: structure branch on top of the frozen trunk.
model, history = prepare_stage_model(
    "structure", PponConfig.test(), init_checkpoint=work / "content.ckpt"
)
co_hash = parameter_hash(model, ("co.",))
sched = make_schedule("structure", "test", max_iters=ITERS["structure"], batch_size=2)
rec = train_stage(model, sched, sources, work / "structure.ckpt", run_seed=0,
                  stage_history=history)
print(f"structure: loss {rec.loss_series('structure')[0]:.2f} -> "
      f"{rec.loss_series('structure')[-1]:.2f} "
      f"(content hash unchanged: {parameter_hash(model, ('co.',)) == co_hash})")

# Stage 3: adversarial perception branch; both earlier branches frozen.
model, history = prepare_stage_model(
    "perception", PponConfig.test(), init_checkpoint=work / "structure.ckpt"
)
sched = make_schedule("perception", "test", max_iters=ITERS["perception"], batch_size=2)
disc = Discriminator(DiscriminatorConfig.desk(sched.hr_patch), seed=0)
rec = train_stage(model, sched, sources, work / "perception.ckpt", run_seed=0,
                  extractor=desk_feature_extractor(), discriminator=disc,
                  stage_history=history)
last = rec.rows[-2]
print(f"perception: vgg {last['vgg']:.4f}  g_adv {last['g_adv']:.3f}  "
      f"d_adv {last['d_adv']:.3f}")

final, header = load_checkpoint(work / "perception.ckpt")
print(f"\nstage history: {[h['stage'] for h in header['stage_history']]}")
print(f"final checkpoint: {work / 'perception.ckpt'}")
