import time

import torch

from gsba.attack import InversionParams, attack_batch
from gsba.data import build_eval_set, load_dataset
from gsba.oracle import BlackBoxOracle, QueryLedger
from gsba.surrogate import LossWeights, SurrogateSchedule, train_surrogate
from gsba.targets import TargetTrainConfig, train_target

train = load_dataset("digits", "train")
test = load_dataset("digits", "test")
target = train_target("small-cnn", train, TargetTrainConfig(epochs=30, seed=0), test_data=test)
print("target acc=%.4f" % target.meta["test_accuracy"])
eval_set = build_eval_set(target, test, n=30, seed=7, target_id="t0")

oracle = BlackBoxOracle(target, "P", QueryLedger(50_000))
t0 = time.time()
bundle = train_surrogate(
    oracle, train, LossWeights(),
    SurrogateSchedule(batch_size=64, seed=0, log_every=100),
)
print("batch64: %d steps in %.0fs" % (bundle.history[-1]["step"], time.time() - t0))
print("last:", {k: (round(v, 3) if isinstance(v, float) else v) for k, v in bundle.history[-1].items()})
bundle.save("/tmp/spike_bundle.pt")

gen = bundle.generator

# raw nearest-sample distance from a big random pool (no descent at all)
with torch.no_grad():
    for label in ("eval(test)", "train"):
        xs = eval_set.samples.pixels if label == "eval(test)" else train.pixels[:30]
        ys = eval_set.samples.labels if label == "eval(test)" else train.labels[:30]
        best = []
        for i in range(len(xs)):
            y = int(ys[i])
            dmin = 1e9
            for cls in range(10):
                if cls == y:
                    continue
                z = torch.randn(512, gen.latent_dim)
                out = gen(z, torch.full((512,), cls, dtype=torch.long))
                d = (out - xs[i]).flatten(1).abs().max(dim=1).values.min()
                dmin = min(dmin, float(d))
            best.append(dmin)
        best = torch.tensor(best)
        print("%s pool-512 nearest: min=%.3f med=%.3f" % (label, best.min(), best.median()))

for rp in [InversionParams(4, 100, 0.05), InversionParams(8, 200, 0.05), InversionParams(8, 400, 0.1)]:
    t0 = time.time()
    outcomes = attack_batch(gen, eval_set.samples, "untargeted", 0.1, rp, seed=11)
    dists = torch.tensor([o.linf_perturbation for o in outcomes])
    print("restarts=%d iters=%d lr=%.2f: claimed=%d/30 dist med=%.3f min=%.3f (%.0fs)"
          % (rp.restarts, rp.iterations, rp.step_size, sum(o.success for o in outcomes), dists.median(), dists.min(), time.time() - t0))
