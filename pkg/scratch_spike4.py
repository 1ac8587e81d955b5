import sys
import time

import torch

from gsba.data import build_eval_set, load_dataset
from gsba.surrogate import SurrogateBundle
from gsba.targets import TargetTrainConfig, train_target

train = load_dataset("digits", "train")
test = load_dataset("digits", "test")
target = train_target("small-cnn", train, TargetTrainConfig(epochs=30, seed=0), test_data=test)
n = int(sys.argv[1]) if len(sys.argv) > 1 else 30
eval_set = build_eval_set(target, test, n=n, seed=7, target_id="t0")
bundle = SurrogateBundle.load("/tmp/bundle_200k.pt")
gen = bundle.generator
gen.eval()
dz = gen.latent_dim
xs, ys = eval_set.samples.pixels, eval_set.samples.labels


def descend(z0, labels, x, iters, lr, decay=False):
    z = z0.clone().requires_grad_(True)
    opt = torch.optim.Adam([z], lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=iters) if decay else None
    for _ in range(iters):
        out = gen(z, labels)
        loss = (out - x).flatten(1).pow(2).mean(dim=1).sum()
        opt.zero_grad(); loss.backward(); opt.step()
        if sched: sched.step()
    with torch.no_grad():
        out = gen(z, labels)
    return z.detach(), (out - x).flatten(1).abs().max(dim=1).values


def two_phase(x, y, r, n1, n2, lr1, lr2):
    classes = [c for c in range(10) if c != y]
    k = len(classes)
    labels = torch.tensor(classes).repeat_interleave(r)
    z0 = torch.randn(k * r, dz, generator=rng)
    z1, d1 = descend(z0, labels, x, n1, lr1)
    keep = d1.view(k, r).argmin(dim=1) + torch.arange(k) * r
    z2, d2 = descend(z1[keep], torch.tensor(classes), x, n2, lr2)
    return float(d2.min())


def run(tag, fn):
    global rng
    rng = torch.Generator().manual_seed(11)
    t0 = time.time()
    best = torch.tensor([fn(xs[i], int(ys[i])) for i in range(len(xs))])
    print("%-40s claimed=%4.0f%% med=%.3f (%.0fs)"
          % (tag, 100 * (best <= 0.1).float().mean(), best.median(), time.time() - t0), flush=True)


run("2ph r4 60+240 lr .1/.05", lambda x, y: two_phase(x, y, 4, 60, 240, 0.1, 0.05))
run("2ph r8 60+300 lr .1/.05", lambda x, y: two_phase(x, y, 8, 60, 300, 0.1, 0.05))
run("2ph r4 80+400 lr .15/.05", lambda x, y: two_phase(x, y, 4, 80, 400, 0.15, 0.05))
run("1ph r4 300 lr .1", lambda x, y: two_phase(x, y, 4, 300, 1, 0.1, 0.05))
