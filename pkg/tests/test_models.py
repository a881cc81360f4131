import numpy as np
import pytest
import torch
import torch.nn as nn

from seqforge.models import (
    Cascade,
    CascadePlan,
    Generator,
    PatchDiscriminator,
    PReLU,
    ResidualBlock,
    cascade_forward,
    init_params,
    prelu,
)
from oracles import conv2d_oracle, batchnorm_oracle


@pytest.fixture(scope="module")
def full_plan():
    return CascadePlan()


# --- prelu -----------------------------------------------------------------


def test_prelu_examples():
    a = torch.tensor([0.25])
    assert prelu(torch.tensor([-1.0]), a).item() == -0.25
    assert prelu(torch.tensor([2.0]), torch.tensor([0.9])).item() == 2.0


def test_prelu_slope_gradient():
    a = torch.tensor([0.25], dtype=torch.float64, requires_grad=True)
    x = torch.tensor([-1.0], dtype=torch.float64)
    prelu(x, a).sum().backward()
    h = 1e-6
    fd = (prelu(x, a.detach() + h) - prelu(x, a.detach() - h)).item() / (2 * h)
    assert a.grad.item() == -1.0
    assert abs(fd - a.grad.item()) <= 1e-6


def test_prelu_limits(rng):
    x = torch.from_numpy(rng.standard_normal((2, 3, 4, 4)))
    assert torch.equal(prelu(x, torch.ones(3, dtype=x.dtype)), x)
    assert torch.equal(prelu(x, torch.zeros(3, dtype=x.dtype)), torch.clamp(x, min=0))


def test_prelu_module_starts_at_quarter():
    assert torch.all(PReLU(7).weight == 0.25)


# --- residual block ----------------------------------------------------------


def test_zero_branch_is_identity(rng):
    block = ResidualBlock(4, 4)
    with torch.no_grad():
        for p in block.parameters():
            p.zero_()
    x = torch.from_numpy(rng.standard_normal((2, 4, 6, 6)).astype(np.float32))
    assert torch.equal(block(x), x)


def test_zero_input_gives_branch_offsets():
    block = ResidualBlock(3, 3)
    with torch.no_grad():
        block.norm2.bias.copy_(torch.tensor([0.1, -0.2, 0.3]))
    block.eval()
    out = block(torch.zeros(1, 3, 4, 4))
    assert torch.allclose(out, block.norm2.bias.view(1, 3, 1, 1).expand(1, 3, 4, 4))


def test_residual_matches_conv_oracle(rng):
    block = ResidualBlock(3, 3).double()
    init_params(block, 5)
    with torch.no_grad():
        block.act.weight.copy_(torch.tensor([0.1, 0.25, 0.6], dtype=torch.float64))
        block.norm1.weight.copy_(torch.tensor([1.1, 0.9, 1.3], dtype=torch.float64))
        block.norm2.bias.copy_(torch.tensor([0.05, -0.1, 0.0], dtype=torch.float64))
    x = rng.standard_normal((2, 3, 5, 5))
    got = block(torch.from_numpy(x)).detach().numpy() - x

    eps = block.norm1.eps
    h = conv2d_oracle(x, block.conv1.weight.detach().numpy(), 1)
    h = batchnorm_oracle(h, block.norm1.weight.detach().numpy(), block.norm1.bias.detach().numpy(), eps)
    a = block.act.weight.detach().numpy()[None, :, None, None]
    h = np.where(h > 0, h, a * h)
    h = conv2d_oracle(h, block.conv2.weight.detach().numpy(), 1)
    h = batchnorm_oracle(h, block.norm2.weight.detach().numpy(), block.norm2.bias.detach().numpy(), eps)
    assert np.abs(got - h).max() <= 1e-6


def test_residual_channel_mismatch():
    with pytest.raises(ValueError):
        ResidualBlock(3, 4)


# --- generator / discriminator ----------------------------------------------------


def test_generator_shape_and_bounds(full_plan):
    g = init_params(Generator(full_plan), 0)
    x = torch.rand(2, 3, 64, 128) * 2 - 1
    g.train()
    y = g(x)
    assert y.shape == (2, 3, 64, 128)
    assert y.min() >= -1 and y.max() <= 1


def test_generator_eval_deterministic(tiny_plan):
    g = init_params(Generator(tiny_plan), 1).eval()
    x = torch.rand(2, 3, 64, 128) * 2 - 1
    with torch.no_grad():
        assert torch.equal(g(x), g(x))


def test_generator_dropout_active_in_train(tiny_plan):
    g = init_params(Generator(tiny_plan), 1).train()
    x = torch.rand(2, 3, 64, 128) * 2 - 1
    with torch.no_grad():
        assert not torch.equal(g(x), g(x))


def test_generator_rejects_wrong_extent(tiny_plan):
    g = Generator(tiny_plan)
    with pytest.raises(ValueError):
        g(torch.zeros(1, 3, 64, 64))
    with pytest.raises(ValueError):
        g(torch.zeros(1, 6, 64, 128))


def test_discriminator_patch_grid(full_plan):
    d = init_params(PatchDiscriminator(full_plan), 0)
    assert d(torch.zeros(1, 3, 64, 128), torch.zeros(1, 3, 64, 128)).shape == (1, 1, 8, 16)
    assert full_plan.patch_grid == (8, 16)


def test_discriminator_zero_weights():
    d = PatchDiscriminator(CascadePlan())
    with torch.no_grad():
        for p in d.parameters():
            p.zero_()
    out = d(torch.rand(2, 3, 64, 128), torch.rand(2, 3, 64, 128))
    assert torch.equal(out, torch.zeros_like(out))


def test_discriminator_batch_permutation(tiny_plan):
    d = init_params(PatchDiscriminator(tiny_plan), 2).eval()
    x, y = torch.rand(4, 3, 64, 128), torch.rand(4, 3, 64, 128)
    perm = torch.tensor([2, 0, 3, 1])
    with torch.no_grad():
        assert torch.allclose(d(x[perm], y[perm]), d(x, y)[perm], atol=1e-6)


def test_discriminator_errors(tiny_plan):
    d = PatchDiscriminator(tiny_plan)
    with pytest.raises(ValueError):
        d(torch.zeros(1, 3, 64, 128), torch.zeros(1, 3, 64, 64))
    with pytest.raises(ValueError):
        d(torch.zeros(1, 3, 64, 128), torch.zeros(1, 1, 64, 128))


# --- cascade -------------------------------------------------------------------------


def test_cascade_shapes_and_determinism(tiny_plan):
    c = Cascade(tiny_plan, seed=0)
    x = torch.rand(1, 3, 64, 128) * 2 - 1
    y1, y2 = cascade_forward(c, x, "eval")
    assert y1.shape == y2.shape == (1, 3, 64, 128)
    z1, z2 = cascade_forward(c, x, "eval")
    assert torch.equal(y1, z1) and torch.equal(y2, z2)
    with pytest.raises(ValueError):
        cascade_forward(c, x, "infer")


def test_stage_two_gradient_never_reaches_stage_one(tiny_plan):
    c = Cascade(tiny_plan, seed=0).train()
    x = torch.rand(2, 3, 64, 128) * 2 - 1
    _, y2 = c(x)
    y2.square().mean().backward()
    for p in c.g1.parameters():
        assert p.grad is None or torch.count_nonzero(p.grad) == 0
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in c.g2.parameters())


def test_stage_one_output_feeds_stage_two(tiny_plan):
    c = Cascade(tiny_plan, seed=0)
    x = torch.rand(1, 3, 64, 128) * 2 - 1
    _, before = cascade_forward(c, x)
    with torch.no_grad():
        c.g1.decoder[-1].conv.bias.add_(0.3)
    _, after = cascade_forward(c, x)
    assert not torch.equal(before, after)


def test_generators_share_plan(tiny_plan):
    c = Cascade(tiny_plan)
    assert c.g1.plan is c.g2.plan
    shapes1 = [p.shape for n, p in c.g1.named_parameters() if not n.startswith("encoder.0.conv.weight")]
    shapes2 = [p.shape for n, p in c.g2.named_parameters() if not n.startswith("encoder.0.conv.weight")]
    assert shapes1 == shapes2


# --- initialization ----------------------------------------------------------------


def test_init_is_deterministic(tiny_plan):
    a, b = Cascade(tiny_plan, seed=3), Cascade(tiny_plan, seed=3)
    for (na, ta), (nb, tb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb and ta.numpy().tobytes() == tb.numpy().tobytes()
    c = Cascade(tiny_plan, seed=4)
    assert not torch.equal(a.g1.encoder[0].conv.weight, c.g1.encoder[0].conv.weight)


def test_init_values(tiny_plan):
    c = Cascade(tiny_plan, seed=0)
    slopes = [m.weight for m in c.modules() if isinstance(m, PReLU)]
    assert slopes and all(torch.all(s == 0.25) for s in slopes)
    for m in c.modules():
        if isinstance(m, nn.BatchNorm2d):
            assert torch.all(m.weight == 1) and torch.all(m.bias == 0)
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)) and m.bias is not None:
            assert torch.all(m.bias == 0)


def test_kernel_statistics():
    conv = init_params(nn.Conv2d(64, 128, 4), 11)
    sample = conv.weight.detach().double().flatten()[:100_000]
    assert abs(sample.mean().item()) < 3 * 0.02 / np.sqrt(1e5)
    assert abs(sample.std().item() - 0.02) < 0.0005


# --- plan -----------------------------------------------------------------------


def test_plan_invariants(full_plan):
    assert full_plan.residual_flags == (True, True, True, True, True, False)
    enc = [e for e, _ in full_plan.skip_wiring]
    dec = [d for _, d in full_plan.skip_wiring]
    assert sorted(enc) == list(range(full_plan.levels - 1))
    assert sorted(dec) == list(range(1, full_plan.levels))
    assert full_plan.dropout_flags == (True, True, True, False, False, False)
    assert CascadePlan.from_dict(full_plan.to_dict()) == full_plan


def test_residual_placement_in_generator(full_plan):
    g = Generator(full_plan)
    assert [lvl.res is not None for lvl in g.encoder] == list(full_plan.residual_flags)
    assert isinstance(g.encoder[0].act, type(None))
    assert all(isinstance(lvl.act, PReLU) for lvl in g.encoder[1:])
    assert all(isinstance(lvl.act, nn.LeakyReLU) for lvl in Generator(CascadePlan(encoder_activation="leaky")).encoder[1:])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"image_height": 60},
        {"encoder_activation": "tanh"},
        {"disc_strides": (2, 2)},
        {"dropout_levels": 6},
    ],
)
def test_plan_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        CascadePlan(**kwargs)
