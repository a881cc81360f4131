"""Component ablation at desk scale: cascade, residual blocks and PReLU switched on and off.

Each variant is trained for the same number of steps on the same synthetic
pairs, then scored on held-out semantic images: Inception score of the
outputs and FID against the held-out stand-in targets, both under the chosen
metric backend. The single-stage variant is one generator trained on the full
image, as in the unmodified image-to-image baseline.

    python scripts/ablation.py --corpus corpus.txt --steps 300 --out ablation.json
"""

import argparse
import itertools
import json
import time

import torch

from seqforge.losses import adversarial_loss_d, generator_loss
from seqforge.metrics import classify, extract_features, fit_gaussian, frechet_distance, inception_score
from seqforge.models import Cascade, CascadePlan, Generator, PatchDiscriminator, cascade_forward, init_params
from seqforge.pairs import synthesize_pairs
from seqforge.render import Corpus, FontCatalogue, RendererConfig
from seqforge.train import TrainConfig, Trainer, make_optimizer, set_requires_grad


class SingleStage:
    """One generator/discriminator pair trained against the full real image."""

    def __init__(self, plan, config, seed):
        gen = torch.Generator().manual_seed(seed)
        self.g = init_params(Generator(plan), gen, plan.prelu_init)
        self.d = init_params(PatchDiscriminator(plan), gen, plan.prelu_init)
        self.opt_g, self.opt_d = make_optimizer(self.g.parameters(), config), make_optimizer(self.d.parameters(), config)
        self.config = config

    def train_step(self, batch):
        self.g.train()
        self.d.train()
        x, real = batch.semantic, batch.real
        fake = self.g(x)
        self.opt_d.zero_grad()
        adversarial_loss_d(self.d(x, real), self.d(x, fake.detach())).backward()
        self.opt_d.step()
        self.opt_g.zero_grad()
        set_requires_grad(self.d, False)
        loss = generator_loss(self.d(x, fake), fake, real, None, self.config.l1_weight)
        set_requires_grad(self.d, True)
        loss.total.backward()
        self.opt_g.step()

    def outputs(self, x):
        self.g.eval()
        with torch.no_grad():
            return self.g(x)


class Cascaded:
    def __init__(self, plan, config, seed):
        self.trainer = Trainer(Cascade(plan, seed=seed), config)

    def train_step(self, batch):
        self.trainer.train_step(batch)

    def outputs(self, x):
        return cascade_forward(self.trainer.cascade, x, "eval")[1]


def to_unit(t):
    return [img for img in ((t.clamp(-1, 1) + 1) / 2).permute(0, 2, 3, 1).double().numpy()]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--fonts")
    ap.add_argument("--train-pairs", type=int, default=64)
    ap.add_argument("--eval-pairs", type=int, default=64)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--width-scale", type=float, default=0.25, help="multiplier on the default channel widths")
    ap.add_argument("--backend", default="tiny-convnet")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    torch.set_num_threads(1)
    corpus, fonts = Corpus.from_file(args.corpus), FontCatalogue.default(args.fonts)
    train_set = synthesize_pairs(corpus, fonts, RendererConfig(), args.train_pairs, base_seed=1_000)
    eval_set = synthesize_pairs(corpus, fonts, RendererConfig(), args.eval_pairs, base_seed=2_000_000)
    eval_batch = next(eval_set.batches(0, args.eval_pairs, 0))
    reference = fit_gaussian(extract_features(to_unit(eval_batch.real), args.backend))

    base = CascadePlan()
    widths = tuple(max(4, int(w * args.width_scale)) for w in base.widths)
    disc = tuple(max(4, int(w * args.width_scale)) for w in base.disc_widths)
    config = TrainConfig(batch_size=args.batch_size, seed=args.seed)

    rows = []
    for cascaded, residual, prelu in itertools.product([False, True], repeat=3):
        plan = CascadePlan(widths=widths, disc_widths=disc, residual_blocks=residual,
                           encoder_activation="prelu" if prelu else "leaky")
        model = (Cascaded if cascaded else SingleStage)(plan, config, args.seed)
        start = time.perf_counter()
        step, epoch = 0, 0
        while step < args.steps:
            for batch in train_set.batches(epoch, args.batch_size, args.seed):
                model.train_step(batch)
                step += 1
                if step >= args.steps:
                    break
            epoch += 1
        images = to_unit(model.outputs(eval_batch.semantic))
        is_mean, is_std = inception_score(classify(images, args.backend), min(10, len(images)))
        fid = frechet_distance(fit_gaussian(extract_features(images, args.backend)), reference)
        row = {"cascaded": cascaded, "residual_blocks": residual, "prelu": prelu, "inception_mean": is_mean,
               "inception_std": is_std, "fid": fid, "seconds": round(time.perf_counter() - start, 1)}
        rows.append(row)
        print(f"cascade={cascaded!s:5} residual={residual!s:5} prelu={prelu!s:5}  "
              f"IS {is_mean:.3f}±{is_std:.3f}  FID {fid:.4f}  ({row['seconds']} s)", flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"backend": args.backend, "steps": args.steps, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
