import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gsba.losses import (
    AdvLossSpec,
    DivergenceError,
    adv_loss,
    boundary_hinge_from_logits,
    class_control_loss,
    distill_loss,
    gan_losses,
    generator_realness,
    inter_class_similarity,
    intra_class_diversity,
)
from loss_oracles import (
    ADV_LOSS_CASES,
    CONTROL_CASES,
    DISTILL_P_CASES,
    DIVERSITY_CASES,
    SIMILARITY_CASES,
    TwoLayerNet,
    TwoParamGenerator,
    finite_difference_grad,
    relative_error,
)

TOL = 1e-6


class _OracleStub:
    """Minimal stand-in for the black-box oracle in distillation tests."""

    def __init__(self, response):
        self.response = response
        self.queries = 0

    def query(self, x, charge=True):
        self.queries += x.shape[0]
        return self.response


def _const_disc(value):
    class Disc(torch.nn.Module):
        def forward(self, x):
            return torch.full((x.shape[0],), value)

    return Disc()


@pytest.mark.parametrize("kind,targeted,target,probs,labels,expected", ADV_LOSS_CASES)
def test_adv_loss_closed_forms(kind, targeted, target, probs, labels, expected):
    spec = AdvLossSpec(kind, targeted, target)
    value = adv_loss(torch.tensor(probs), torch.tensor(labels), spec)
    assert value.shape == (len(labels),)
    assert abs(float(value[0]) - expected) < TOL


def test_adv_loss_rejects_bad_rows():
    spec = AdvLossSpec()
    with pytest.raises(ValueError):
        adv_loss(torch.tensor([[0.9, 0.9, 0.9]]), torch.tensor([0]), spec)


def test_adv_loss_rejects_target_equal_label():
    spec = AdvLossSpec("classification", targeted=True, target=1)
    with pytest.raises(ValueError):
        adv_loss(torch.tensor([[0.5, 0.5]]), torch.tensor([1]), spec)


def test_cw_positive_iff_goal_reached():
    probs = torch.tensor([[0.6, 0.3, 0.1], [0.2, 0.7, 0.1]])
    labels = torch.tensor([0, 0])
    vals = adv_loss(probs, labels, AdvLossSpec("cw-margin"))
    assert float(vals[0]) == 0.0  # still classified as y
    assert float(vals[1]) > 0.0  # misclassified


def test_gan_losses_constant_half_disc(fixed_net):
    x = torch.rand(4, 1, 8, 8)
    loss_d, loss_g = gan_losses(_const_disc(0.5), x, x)
    assert abs(float(loss_g) - math.log(0.5)) < TOL
    assert abs(float(loss_d) - (-2 * math.log(0.5))) < TOL


def test_gan_losses_saturation_endpoints():
    x = torch.rand(4, 1, 8, 8)

    class PerfectDisc(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.fake_mode = False

        def forward(self, inp):
            value = 0.0 if self.fake_mode else 1.0
            self.fake_mode = not self.fake_mode
            return torch.full((inp.shape[0],), value)

    # called once on real (returns 1), once on fake (returns 0)
    loss_d, loss_g = gan_losses(PerfectDisc(), x, x)
    assert abs(float(loss_d)) < 1e-5  # optimum of the negated objective
    assert abs(float(loss_g)) < 1e-5  # log(1 - 0): the worst value for G


def test_gan_loss_nonfinite_raises():
    class NanDisc(torch.nn.Module):
        def forward(self, inp):
            return torch.full((inp.shape[0],), float("nan"))

    with pytest.raises(DivergenceError):
        gan_losses(NanDisc(), torch.rand(2, 1, 8, 8), torch.rand(2, 1, 8, 8))


@pytest.mark.parametrize("probs,labels,expected", CONTROL_CASES)
def test_class_control_closed_forms(fixed_net, probs, labels, expected):
    net = fixed_net(probs)
    value = class_control_loss(net, torch.zeros(len(labels), 1, 8, 8), torch.tensor(labels))
    assert abs(float(value) - expected) < TOL


@pytest.mark.parametrize("probs,labels,expected", SIMILARITY_CASES)
def test_similarity_closed_forms(fixed_net, probs, labels, expected):
    net = fixed_net(probs)
    value = inter_class_similarity(net, torch.zeros(len(labels), 1, 8, 8), torch.tensor(labels))
    assert abs(float(value) - expected) < 1e-5


@pytest.mark.parametrize("probs,labels,formula,expected", DIVERSITY_CASES)
def test_diversity_closed_forms(fixed_net, probs, labels, formula, expected):
    net = fixed_net(probs)
    value = intra_class_diversity(
        net, torch.zeros(len(labels), 1, 8, 8), torch.tensor(labels), formula
    )
    assert abs(float(value) - expected) < 1e-5


def test_diversity_negative_mean_formula(fixed_net):
    # as-printed variant: negation of H(P) = -(1/K) sum p_i over the raw average
    net = fixed_net([[0.0, 0.5, 0.25, 0.25]])
    value = intra_class_diversity(net, torch.zeros(1, 1, 8, 8), torch.tensor([0]), "negative_mean")
    assert abs(float(value) - (1.0 / 3.0)) < 1e-5


def test_diversity_unknown_formula(fixed_net):
    with pytest.raises(ValueError):
        intra_class_diversity(
            fixed_net([[0.5, 0.5]]), torch.zeros(1, 1, 8, 8), torch.tensor([0]), "bogus"
        )


@pytest.mark.parametrize("s_probs,t_probs,expected", DISTILL_P_CASES)
def test_distill_probability_mode(fixed_net, s_probs, t_probs, expected):
    sub = fixed_net(s_probs)
    oracle = _OracleStub(torch.tensor(t_probs))
    value = distill_loss(sub, oracle, torch.zeros(len(s_probs), 1, 8, 8))
    assert abs(float(value) - expected) < 1e-5
    assert oracle.queries == len(s_probs)


def test_distill_label_mode_zero_when_matching(fixed_net):
    sub = fixed_net([[1.0, 0.0, 0.0]])
    oracle = _OracleStub(torch.tensor([0]))
    value = distill_loss(sub, oracle, torch.zeros(1, 1, 8, 8))
    assert float(value) < 1e-5


def test_boundary_hinge_zero_past_boundary(fixed_net):
    # misclassified sample contributes nothing; confident sample is positive
    logits = torch.log(torch.tensor([[0.2, 0.8], [0.9, 0.1]]))
    y = torch.tensor([0, 0])
    value = boundary_hinge_from_logits(logits, y)
    expected = 0.5 * (math.log(0.9) - math.log(0.1))
    assert abs(float(value) - expected) < 1e-5


# ---- finite-difference gradient checks (2-layer / 2-parameter toys) ----


def test_gan_generator_gradient_matches_fd():
    torch.manual_seed(0)
    base = torch.randn(3, 1, 2, 2)
    gen = TwoParamGenerator(base)
    disc = torch.nn.Sequential(torch.nn.Flatten(), torch.nn.Linear(4, 1), torch.nn.Sigmoid()).double()
    torch.manual_seed(1)
    for p in disc.parameters():
        torch.nn.init.normal_(p, 0, 0.5)

    def loss_of_params(params):
        with torch.no_grad():
            gen.scale.copy_(params[0])
            gen.shift.copy_(params[1])
        fake = gen()
        return generator_realness(lambda x: disc(x).squeeze(1), fake)

    params = torch.tensor([0.8, 0.1], dtype=torch.float64)
    analytic_loss = loss_of_params(params)
    analytic_loss.backward()
    analytic = torch.tensor([float(gen.scale.grad), float(gen.shift.grad)])
    fd = finite_difference_grad(lambda p: loss_of_params(p).item(), params.clone())
    assert relative_error(analytic, fd) <= 1e-3


@pytest.mark.parametrize(
    "term",
    ["control", "similarity", "diversity", "distill_p", "adv_classification", "adv_cw"],
)
def test_input_gradients_match_fd(term):
    torch.manual_seed(3)
    net = TwoLayerNet(in_dim=12, hidden=8, classes=3, seed=4)
    x = torch.rand(2, 3, 2, 2, dtype=torch.float64) * 0.8 + 0.1
    y = torch.tensor([0, 1])
    t_probs = torch.tensor([[0.2, 0.5, 0.3], [0.6, 0.2, 0.2]])

    def fn(inp):
        if term == "control":
            return class_control_loss(net, inp, y)
        if term == "similarity":
            return inter_class_similarity(net, inp, y)
        if term == "diversity":
            return intra_class_diversity(net, inp, y)
        if term == "distill_p":
            return distill_loss(net, _OracleStub(t_probs), inp)
        probs = torch.softmax(net(inp), dim=1)
        kind = "classification" if term == "adv_classification" else "cw-margin"
        return adv_loss(probs, y, AdvLossSpec(kind)).sum()

    x_req = x.clone().requires_grad_(True)
    fn(x_req).backward()
    analytic = x_req.grad.clone()
    fd = finite_difference_grad(lambda inp: float(fn(inp)), x.clone())
    assert relative_error(analytic, fd) <= 1e-3


# ---- property tests ----


@st.composite
def prob_rows(draw, classes=4):
    raw = draw(
        st.lists(
            st.floats(min_value=1e-3, max_value=1.0), min_size=classes, max_size=classes
        )
    )
    total = sum(raw)
    return [v / total for v in raw]


@given(prob_rows(), st.integers(min_value=0, max_value=3))
@settings(max_examples=50, deadline=None)
def test_cw_margin_nonnegative_and_goal_consistent(row, y):
    probs = torch.tensor([row])
    labels = torch.tensor([y])
    value = float(adv_loss(probs, labels, AdvLossSpec("cw-margin"))[0])
    assert value >= 0.0
    misclassified = int(torch.tensor(row).argmax()) != y
    if value > 1e-9:
        assert misclassified


@given(prob_rows(), st.integers(min_value=0, max_value=3))
@settings(max_examples=50, deadline=None)
def test_untargeted_classification_loss_nonnegative(row, y):
    probs = torch.tensor([row])
    value = float(adv_loss(probs, torch.tensor([y]), AdvLossSpec())[0])
    assert value >= -1e-6


@given(st.lists(prob_rows(), min_size=2, max_size=6))
@settings(max_examples=30, deadline=None)
def test_diversity_entropy_bounds(rows):
    from conftest import FixedLogitsNet, probs_to_logits

    net = FixedLogitsNet(probs_to_logits(rows))
    y = torch.zeros(len(rows), dtype=torch.long)
    value = float(intra_class_diversity(net, torch.zeros(len(rows), 1, 8, 8), y))
    c = len(rows[0])
    assert -math.log(c - 1) - 1e-5 <= value <= 1e-5
