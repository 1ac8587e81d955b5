import time

import torch

from gsba.data import build_eval_set, load_dataset
from gsba.surrogate import SurrogateBundle
from gsba.targets import TargetTrainConfig, train_target

train = load_dataset("digits", "train")
test = load_dataset("digits", "test")
target = train_target("small-cnn", train, TargetTrainConfig(epochs=30, seed=0), test_data=test)
eval_set = build_eval_set(target, test, n=30, seed=7, target_id="t0")
bundle = SurrogateBundle.load("/tmp/spike_bundle.pt")
gen = bundle.generator
gen.eval()
dz = gen.latent_dim
xs, ys = eval_set.samples.pixels, eval_set.samples.labels


@torch.no_grad()
def pool_init(x, classes, pool, rng):
    """Best-of-pool latent per class by l2; returns (len(classes), dz)."""
    zs = []
    for cls in classes:
        z = torch.randn(pool, dz, generator=rng)
        out = gen(z, torch.full((pool,), cls, dtype=torch.long))
        d = (out - x).flatten(1).pow(2).mean(dim=1)
        zs.append(z[d.argmin()])
    return torch.stack(zs)


def descend(z0, labels, x, iters, lr, decay=True):
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
        return (out - x).flatten(1).abs().max(dim=1).values


def run(tag, pool, iters, lr, extra_restarts=0, decay=True):
    rng = torch.Generator().manual_seed(11)
    t0 = time.time()
    best = []
    for i in range(len(xs)):
        y = int(ys[i])
        classes = [c for c in range(10) if c != y]
        z0 = pool_init(xs[i], classes, pool, rng) if pool else torch.empty(0, dz)
        labels = torch.tensor(classes).repeat(1 + extra_restarts if pool else extra_restarts)
        inits = [z0] if pool else []
        for _ in range(extra_restarts):
            inits.append(torch.randn(len(classes), dz, generator=rng))
        z_all = torch.cat(inits)
        d = descend(z_all, labels, xs[i], iters, lr, decay)
        best.append(float(d.min()))
    best = torch.tensor(best)
    claimed = (best <= 0.1).float().mean()
    print("%-38s claimed=%4.0f%% med=%.3f min=%.3f  (%.0fs)"
          % (tag, 100 * claimed, best.median(), best.min(), time.time() - t0))


run("pool256 + 100it lr0.1", 256, 100, 0.1)
run("pool512 + 150it lr0.1", 512, 150, 0.1)
run("pool512 + 150it lr0.2", 512, 150, 0.2)
run("pool512+1restart 150it lr0.1", 512, 150, 0.1, extra_restarts=1)
run("norestart-pool0 4r 150it lr0.1", 0, 150, 0.1, extra_restarts=4)
run("pool512 + 300it lr0.2", 512, 300, 0.2)
