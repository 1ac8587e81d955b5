import time

import torch

from gsba.attack import InversionParams, attack_batch
from gsba.data import build_eval_set, load_dataset
from gsba.oracle import BlackBoxOracle, QueryLedger
from gsba.surrogate import LossWeights, SurrogateSchedule, train_surrogate
from gsba.targets import TargetTrainConfig, accuracy, train_target

train = load_dataset("digits", "train")
test = load_dataset("digits", "test")
t0 = time.time()
target = train_target("small-cnn", train, TargetTrainConfig(epochs=30, seed=0), test_data=test)
print("target acc=%.4f (%.0fs)" % (target.meta["test_accuracy"], time.time() - t0))

eval_set = build_eval_set(target, test, n=50, seed=7, target_id="digits-smallcnn-0")

budget = 50_000
ledger = QueryLedger(budget)
oracle = BlackBoxOracle(target, "P", ledger)
t0 = time.time()
bundle = train_surrogate(
    oracle, train, LossWeights(), SurrogateSchedule(batch_size=128, seed=0, log_every=50)
)
dt = time.time() - t0
print("trained: %d steps, used=%d, %.0fs (%.3fs/step)" % (len(bundle.history) and bundle.history[-1]["step"], ledger.used, dt, dt / max(1, ledger.used / 128)))
print("last:", {k: (round(v, 3) if isinstance(v, float) else v) for k, v in bundle.history[-1].items()})

# substitute agreement with target on test data
sub_acc = accuracy(bundle.substitute, test)
with torch.no_grad():
    tgt = target(test.pixels).argmax(1)
    sub = bundle.substitute(test.pixels).argmax(1)
print("substitute: test-acc=%.3f agreement-with-target=%.3f" % (sub_acc, (tgt == sub).float().mean()))

# generator conditioning: does argmax S(G(z,y)) == y?
g = torch.Generator().manual_seed(3)
z = torch.randn(256, bundle.generator.latent_dim, generator=g)
y = torch.randint(0, 10, (256,), generator=g)
with torch.no_grad():
    xf = bundle.generator(z, y)
    agree_s = (bundle.substitute(xf).argmax(1) == y).float().mean()
    agree_t = (target(xf).argmax(1) == y).float().mean()
print("conditioning: S-agree=%.3f T-agree=%.3f" % (agree_s, agree_t))

delta = 0.1
t0 = time.time()
outcomes = attack_batch(
    bundle.generator, eval_set.samples, "untargeted", delta,
    InversionParams(restarts=4, iterations=100), seed=11,
)
print("attack %.0fs" % (time.time() - t0))
claimed = [o for o in outcomes if o.success]
dists = torch.tensor([o.linf_perturbation for o in outcomes])
print("claimed=%d/%d  dist: min=%.3f med=%.3f max=%.3f" % (len(claimed), len(outcomes), dists.min(), dists.median(), dists.max()))
ver = 0
for o in claimed:
    lbl = int(oracle.query(o.adversarial.unsqueeze(0), charge=False).argmax(1))
    if lbl != o.original_label:
        ver += 1
print("verified ASR = %.1f%%" % (100 * ver / len(outcomes)))
