"""Train the cascade on a handful of fixed pairs and report the stage-2 L1 trajectory.

    python scripts/overfit_smoke.py --corpus corpus.txt --fonts /usr/share/fonts/truetype/dejavu
"""

import argparse
import time

import numpy as np
import torch

from seqforge.models import Cascade, CascadePlan
from seqforge.pairs import synthesize_pairs
from seqforge.render import Corpus, FontCatalogue, RendererConfig
from seqforge.train import TrainConfig, Trainer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--fonts")
    ap.add_argument("--pairs", type=int, default=16)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--max-steps", type=int, default=2000)
    ap.add_argument("--target", type=float, default=0.5, help="stop once last/first epoch L1 ratio drops below this")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    torch.set_num_threads(args.threads)
    pairs = synthesize_pairs(
        Corpus.from_file(args.corpus), FontCatalogue.default(args.fonts), RendererConfig(), args.pairs, base_seed=100
    )
    trainer = Trainer(Cascade(CascadePlan(), seed=args.seed), TrainConfig(batch_size=args.batch_size, seed=args.seed))
    per_epoch = pairs.num_batches(args.batch_size)
    g2, g1 = [], []
    start = time.perf_counter()
    epoch = 0
    print("step  seconds  g1_l1   g2_l1   ratio")
    while trainer.step < args.max_steps:
        for batch in pairs.batches(epoch, args.batch_size, args.seed):
            rec = trainer.train_step(batch)
            g1.append(rec.g1_l1)
            g2.append(rec.g2_l1)
        epoch += 1
        ratio = np.mean(g2[-per_epoch:]) / np.mean(g2[:per_epoch])
        print(f"{trainer.step:5d}  {time.perf_counter() - start:7.0f}  {np.mean(g1[-per_epoch:]):.4f}  "
              f"{np.mean(g2[-per_epoch:]):.4f}  {ratio:.3f}", flush=True)
        if ratio <= args.target:
            break


if __name__ == "__main__":
    main()
