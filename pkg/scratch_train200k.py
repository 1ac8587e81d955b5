import time
import torch
from gsba.data import build_eval_set, load_dataset
from gsba.oracle import BlackBoxOracle, QueryLedger
from gsba.surrogate import LossWeights, SurrogateSchedule, train_surrogate
from gsba.targets import TargetTrainConfig, train_target

train = load_dataset("digits", "train")
test = load_dataset("digits", "test")
target = train_target("small-cnn", train, TargetTrainConfig(epochs=30, seed=0), test_data=test)
torch.save({"note": "spike"}, "/tmp/spike_target_marker.pt")
print("target acc=%.4f" % target.meta["test_accuracy"], flush=True)

t0 = time.time()
oracle = BlackBoxOracle(target, "P", QueryLedger(200_000))
bundle = train_surrogate(oracle, train, LossWeights(), SurrogateSchedule(batch_size=128, seed=0, log_every=200))
print("200k run: %d steps in %.0fs" % (bundle.history[-1]["step"], time.time() - t0), flush=True)
print("last:", {k: (round(v, 3) if isinstance(v, float) else v) for k, v in bundle.history[-1].items()}, flush=True)
bundle.save("/tmp/bundle_200k.pt")

with torch.no_grad():
    g = torch.Generator().manual_seed(3)
    z = torch.randn(512, bundle.generator.latent_dim, generator=g)
    y = torch.randint(0, 10, (512,), generator=g)
    xf = bundle.generator(z, y)
    print("conditioning: S=%.3f T=%.3f" % (
        (bundle.substitute(xf).argmax(1) == y).float().mean(),
        (target(xf).argmax(1) == y).float().mean()), flush=True)
