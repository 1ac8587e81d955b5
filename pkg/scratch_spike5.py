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


def obj_l2(diff):
    return diff.flatten(1).pow(2).mean(dim=1)


def obj_linf(diff, tau=100.0):
    a = diff.flatten(1).abs()
    return (torch.softmax(tau * a, dim=1) * a).sum(dim=1)


def obj_mix(diff, lam=0.5):
    return obj_l2(diff) + lam * obj_linf(diff)


def descend(z0, labels, x, iters, lr, obj):
    z = z0.clone().requires_grad_(True)
    opt = torch.optim.Adam([z], lr=lr)
    for _ in range(iters):
        out = gen(z, labels)
        loss = obj(out - x).sum()
        opt.zero_grad(); loss.backward(); opt.step()
    with torch.no_grad():
        out = gen(z, labels)
    return z.detach(), (out - x).flatten(1).abs().max(dim=1).values


def run(tag, r, n1, n2, n3, lr1, lr2, obj2):
    rng = torch.Generator().manual_seed(11)
    t0 = time.time()
    best = []
    for i in range(len(xs)):
        x, y = xs[i], int(ys[i])
        classes = [c for c in range(10) if c != y]
        k = len(classes)
        labels = torch.tensor(classes).repeat_interleave(r)
        z0 = torch.randn(k * r, dz, generator=rng)
        z1, d1 = descend(z0, labels, x, n1, lr1, obj_l2)
        keep = d1.view(k, r).argmin(dim=1) + torch.arange(k) * r
        z2, d2 = descend(z1[keep], torch.tensor(classes), x, n2, lr2, obj_l2)
        if n3:
            z3, d3 = descend(z2, torch.tensor(classes), x, n3, 0.02, obj2)
            d2 = torch.minimum(d2, d3)
        best.append(float(d2.min()))
    best = torch.tensor(best)
    print("%-44s claimed=%4.0f%% med=%.3f (%.0fs)"
          % (tag, 100 * (best <= 0.1).float().mean(), best.median(), time.time() - t0), flush=True)


run("r4 60+240, +0 polish", 4, 60, 240, 0, 0.1, 0.05, None)
run("r4 60+240, +120 linf polish", 4, 60, 240, 120, 0.1, 0.05, obj_linf)
run("r4 60+240, +120 mix polish", 4, 60, 240, 120, 0.1, 0.05, obj_mix)
run("r4 60+360, +160 mix polish", 4, 60, 360, 160, 0.1, 0.05, obj_mix)
