import numpy as np
import pytest
import torch
from oracles import brute_attention, brute_netvlad, brute_soft_assign

from sphereloc.exceptions import ShapeMismatch
from sphereloc.harmonics import s2_correlate, so3_correlate
from sphereloc.nn import (
    EncoderConfig,
    ModelConfig,
    NetVlad,
    S2Correlation,
    SelfAttention,
    SO3Correlation,
    SphereVladNet,
    describe,
    load_checkpoint,
    save_checkpoint,
)
from sphereloc.projection import project, rotate_panorama_yaw

TINY = ModelConfig(encoder=EncoderConfig(input_bandwidth=8,
                                         layers=((4, 4), (6, 2), (6, 2), (4, 2)),
                                         batchnorm=True),
                   attention=True, clusters=4)


def make_pano_batch(rng, bandwidth, n=2):
    return torch.from_numpy(rng.uniform(0, 1, (n, 2 * bandwidth, 2 * bandwidth)))


# --------------------------------------------------------------------------
# encoder
# --------------------------------------------------------------------------
def test_default_encoder_shape_and_descriptor_dim(rng):
    model = SphereVladNet(ModelConfig(), seed=0)
    x = make_pano_batch(rng, 32, n=1).float()
    with torch.no_grad():
        feat = model.encode(x)
    assert feat.shape == (1, 16, 8, 8, 8)       # C=16, L=512 local descriptors
    assert model.config.descriptor_dim == 512   # K=32 clusters x C=16
    with torch.no_grad():
        desc = model(x)
    assert desc.shape == (1, 512)


def test_zero_panorama_gives_finite_output():
    model = SphereVladNet(TINY, seed=1)
    model.eval()  # inference-mode batchnorm with fresh running stats
    x = torch.zeros(1, 16, 16)
    with torch.no_grad():
        feat = model.encode(x)
        desc = model(x)
    assert torch.isfinite(feat).all()
    assert torch.isfinite(desc).all()


def test_encoder_equivariant_to_aligned_yaw_shift(rng):
    model = SphereVladNet(TINY, seed=2)
    model.eval()
    b0 = TINY.encoder.input_bandwidth
    bf = TINY.encoder.final_bandwidth
    k = model.invariant_yaw_steps
    x = make_pano_batch(rng, b0, n=1).float()
    with torch.no_grad():
        base = model.encode(x)
        shifted = model.encode(torch.roll(x, k, dims=1))
    expected = torch.roll(base, k * bf // b0, dims=2)  # alpha axis of the grid
    rel = (shifted - expected).norm() / base.norm()
    assert rel < 1e-4


def test_layer_rejects_bad_shapes(rng):
    layer = S2Correlation(1, 2, 4, 2, rng)
    with pytest.raises(ShapeMismatch):
        layer(torch.zeros(1, 1, 6, 6))
    so3 = SO3Correlation(2, 2, 2, 2, rng)
    with pytest.raises(ShapeMismatch):
        so3(torch.zeros(1, 1, 4, 4, 4))


# --------------------------------------------------------------------------
# torch layers against the float64 reference path
# --------------------------------------------------------------------------
def test_s2_layer_matches_reference_correlation(rng):
    layer = S2Correlation(2, 3, 6, 3, rng).double()
    x = torch.from_numpy(rng.uniform(-1, 1, (1, 2, 12, 12)))
    with torch.no_grad():
        out = layer(x)[0].numpy()
        psi = layer.filter_coefficients().numpy()
    ref = s2_correlate(x[0].numpy(), psi).values
    assert np.allclose(out, ref + layer.bias.detach().numpy()[:, None, None, None],
                       atol=1e-10)


def test_so3_layer_matches_reference_correlation(rng):
    layer = SO3Correlation(2, 2, 3, 2, rng).double()
    x = torch.from_numpy(rng.uniform(-1, 1, (1, 2, 6, 6, 6)))
    with torch.no_grad():
        out = layer(x)[0].numpy()
        psi = layer.filter_coefficients().numpy()
    ref = so3_correlate(x[0].numpy(), psi).values
    assert np.allclose(out, ref + layer.bias.detach().numpy()[:, None, None, None],
                       atol=1e-10)


def test_filter_coefficients_synthesize_real_filters(rng):
    from sphereloc.harmonics import S2Coefficients, SO3Coefficients, sht_inverse, so3_ft_inverse
    s2 = S2Correlation(1, 1, 4, 4, rng)
    psi = s2.filter_coefficients().detach().numpy()[0, 0]
    grid = sht_inverse(S2Coefficients(4, psi))
    assert np.abs(grid.imag).max() < 1e-12
    so3 = SO3Correlation(1, 1, 3, 3, rng)
    psi3 = so3.filter_coefficients().detach().numpy()[0, 0]
    grid3 = so3_ft_inverse(SO3Coefficients(3, psi3))
    assert np.abs(grid3.imag).max() < 1e-12


# --------------------------------------------------------------------------
# attention
# --------------------------------------------------------------------------
def test_attention_zero_gain_is_bitwise_identity(rng):
    att = SelfAttention(6, rng).double()
    x = torch.from_numpy(rng.normal(size=(2, 6, 20)))
    with torch.no_grad():
        out = att(x)
    assert torch.equal(out, x)


def test_attention_single_token(rng):
    att = SelfAttention(4, rng).double()
    with torch.no_grad():
        att.gain.fill_(0.7)
    x = torch.from_numpy(rng.normal(size=(1, 4, 1)))
    with torch.no_grad():
        m = att.attention_map(x)
        out = att(x)
    assert torch.allclose(m, torch.ones(1, 1, 1, dtype=torch.float64))
    expected = x + 0.7 * (att.w_value.detach() @ x[0]).unsqueeze(0)
    assert torch.allclose(out, expected, atol=1e-12)


def test_attention_hand_example_small(rng):
    att = SelfAttention(2, rng).double()
    with torch.no_grad():
        att.w_query.copy_(torch.tensor([[0.3, -0.2]], dtype=torch.float64))
        att.w_key.copy_(torch.tensor([[0.1, 0.4]], dtype=torch.float64))
        att.w_value.copy_(torch.tensor([[0.5, 0.0], [-0.3, 0.2]], dtype=torch.float64))
        att.gain.fill_(0.9)
    F = np.array([[1.0, -0.5, 0.2], [0.3, 0.8, -1.0]])
    with torch.no_grad():
        out = att(torch.from_numpy(F)[None])[0].numpy()
    expected = brute_attention(F, np.array([[0.3, -0.2]]), np.array([[0.1, 0.4]]),
                               np.array([[0.5, 0.0], [-0.3, 0.2]]), 0.9)
    assert np.allclose(out, expected, atol=1e-6)


def test_attention_rows_sum_to_one_and_permutation_equivariance(rng):
    att = SelfAttention(5, rng).double()
    with torch.no_grad():
        att.gain.fill_(1.3)
    x = torch.from_numpy(rng.normal(size=(1, 5, 17)))
    with torch.no_grad():
        m = att.attention_map(x)
        out = att(x)
    assert torch.allclose(m.sum(dim=-1), torch.ones(1, 17, dtype=torch.float64),
                          atol=1e-12)
    perm = torch.from_numpy(rng.permutation(17))
    with torch.no_grad():
        out_perm = att(x[:, :, perm])
    assert torch.allclose(out_perm, out[:, :, perm], atol=1e-10)


def test_attention_shape_mismatch(rng):
    att = SelfAttention(5, rng)
    with pytest.raises(ShapeMismatch):
        att(torch.zeros(1, 4, 7))


# --------------------------------------------------------------------------
# VLAD
# --------------------------------------------------------------------------
def test_soft_assign_uniform_when_weights_zero(rng):
    vlad = NetVlad(3, 4, rng).double()
    with torch.no_grad():
        vlad.assign_weight.zero_()
        vlad.assign_bias.zero_()
    x = torch.from_numpy(rng.normal(size=(1, 3, 9)))
    a = vlad.soft_assign(x)
    assert torch.allclose(a, torch.full((1, 9, 4), 0.25, dtype=torch.float64))


def test_soft_assign_two_way_sigmoid_identity(rng):
    vlad = NetVlad(3, 2, rng).double()
    w = rng.normal(size=3)
    with torch.no_grad():
        vlad.assign_weight.copy_(torch.from_numpy(np.stack([w, -w])))
        vlad.assign_bias.zero_()
    x = torch.from_numpy(rng.normal(size=(1, 3, 11)))
    a = vlad.soft_assign(x)
    expected = torch.sigmoid(2.0 * torch.from_numpy(w) @ x[0])
    assert torch.allclose(a[0, :, 0], expected, atol=1e-12)


def test_soft_assign_saturates_to_one_hot(rng):
    vlad = NetVlad(3, 4, rng).double()
    w3 = vlad.assign_weight[2].detach().numpy()
    x = torch.from_numpy((1e3 * w3 / np.linalg.norm(w3))[:, None])
    a = vlad.soft_assign(x[None])
    assert a[0, 0, 2] > 0.999
    assert torch.allclose(a.sum(-1), torch.ones(1, 1, dtype=torch.float64), atol=1e-9)


def test_netvlad_matches_bruteforce(rng):
    for _ in range(20):
        C = int(rng.integers(1, 4))
        K = int(rng.integers(2, 5))
        L = int(rng.integers(1, 9))
        vlad = NetVlad(C, K, rng).double()
        x = rng.normal(size=(C, L))
        with torch.no_grad():
            out = vlad(torch.from_numpy(x)[None])[0].numpy()
        ref = brute_netvlad(x, vlad.centroids.detach().numpy(),
                            vlad.assign_weight.detach().numpy(),
                            vlad.assign_bias.detach().numpy())
        assert np.allclose(out, ref, atol=1e-6)
        with torch.no_grad():
            assign = vlad.soft_assign(torch.from_numpy(x)[None])[0].numpy()
        ref_assign = brute_soft_assign(x, vlad.assign_weight.detach().numpy(),
                                       vlad.assign_bias.detach().numpy())
        assert np.allclose(assign, ref_assign, atol=1e-10)
        assert np.allclose(assign.sum(-1), 1.0, atol=1e-6)


def test_netvlad_zero_residual_cluster(rng):
    vlad = NetVlad(3, 3, rng).double()
    c1 = vlad.centroids[0].detach()
    x = c1[:, None].repeat(1, 5)  # every descriptor sits exactly on centroid 1
    with torch.no_grad():
        assign = vlad.soft_assign(x[None])
        out = vlad(x[None])[0].reshape(3, 3)
    assert float(assign.sum()) == pytest.approx(5.0, abs=1e-9)
    assert torch.allclose(out[0], torch.zeros(3, dtype=torch.float64), atol=1e-12)


def test_netvlad_permutation_invariance(rng):
    vlad = NetVlad(4, 5, rng).double()
    x = torch.from_numpy(rng.normal(size=(1, 4, 30)))
    perm = torch.from_numpy(rng.permutation(30))
    with torch.no_grad():
        a = vlad(x)
        b = vlad(x[:, :, perm])
    assert torch.allclose(a, b, atol=1e-10)


# --------------------------------------------------------------------------
# full model / describe
# --------------------------------------------------------------------------
def copy_shared_weights(src: SphereVladNet, dst: SphereVladNet) -> None:
    dst_state = dst.state_dict()
    for key, value in src.state_dict().items():
        if key in dst_state and dst_state[key].shape == value.shape:
            dst_state[key] = value.clone()
    dst.load_state_dict(dst_state)


def test_attention_off_equals_zero_gain_bitwise(rng):
    cfg_att = TINY
    cfg_plain = ModelConfig(encoder=TINY.encoder, attention=False,
                            clusters=TINY.clusters)
    model_att = SphereVladNet(cfg_att, seed=5).double()
    model_plain = SphereVladNet(cfg_plain, seed=5).double()
    copy_shared_weights(model_att, model_plain)
    assert float(model_att.attention.gain) == 0.0
    x = make_pano_batch(rng, TINY.encoder.input_bandwidth, n=3)
    model_att.eval()
    model_plain.eval()
    with torch.no_grad():
        a = model_att(x)
        b = model_plain(x)
    assert torch.equal(a, b)


def test_describe_yaw_invariance_float64_and_float32(rng):
    pts = rng.normal(0, 20, (6000, 3))
    model = SphereVladNet(TINY, seed=3).double()
    pano = project(pts, 50.0, TINY.encoder.input_bandwidth)
    base = describe(model, pano).vector
    k = model.invariant_yaw_steps
    for steps in range(k, 2 * TINY.encoder.input_bandwidth, k):
        rotated = rotate_panorama_yaw(pano, steps)
        vec = describe(model, rotated).vector
        assert np.linalg.norm(vec - base) / np.linalg.norm(base) < 1e-8
    model32 = SphereVladNet(TINY, seed=3).float()
    base32 = describe(model32, pano).vector
    vec32 = describe(model32, rotate_panorama_yaw(pano, k)).vector
    assert np.linalg.norm(vec32 - base32) / np.linalg.norm(base32) < 1e-4


def test_descriptor_is_unit_norm_with_provenance(rng):
    model = SphereVladNet(TINY, seed=4)
    pano = project(rng.normal(0, 15, (2000, 3)), 50.0, TINY.encoder.input_bandwidth)
    pano.frame_id = 99
    g = describe(model, pano)
    g.validate()
    assert g.variant == "attention"
    assert g.frame_id == 99


def test_checkpoint_roundtrip(tmp_path, rng):
    model = SphereVladNet(TINY, seed=6)
    x = make_pano_batch(rng, TINY.encoder.input_bandwidth, n=2).float()
    model.eval()
    with torch.no_grad():
        before = model(x)
    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    restored = load_checkpoint(path)
    restored.eval()
    with torch.no_grad():
        after = restored(x)
    assert torch.allclose(before, after, atol=1e-7)
    assert restored.config == model.config


def test_checkpoint_shape_validation(tmp_path):
    model = SphereVladNet(TINY, seed=6)
    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    import json

    import numpy as np
    with np.load(path) as archive:
        data = dict(archive)
    header = json.loads(str(data["__config__"]))
    header["clusters"] = 8  # now the stored VLAD tensors have the wrong shape
    data["__config__"] = json.dumps(header)
    np.savez(path, **data)
    with pytest.raises(ShapeMismatch):
        load_checkpoint(path)


def test_checkpoint_missing_tensor(tmp_path):
    from sphereloc.exceptions import UninitializedWeights
    model = SphereVladNet(TINY, seed=6)
    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    import numpy as np
    with np.load(path) as archive:
        data = dict(archive)
    data.pop("vlad.centroids")
    np.savez(path, **data)
    with pytest.raises(UninitializedWeights):
        load_checkpoint(path)


def test_assignment_rows_sum_to_one_through_both_paths(rng):
    x = make_pano_batch(rng, TINY.encoder.input_bandwidth, n=2).float()
    for attention in (False, True):
        cfg = ModelConfig(encoder=TINY.encoder, attention=attention, clusters=5)
        model = SphereVladNet(cfg, seed=8)
        model.eval()
        with torch.no_grad():
            assign = model.soft_assignment(x)
        sums = assign.sum(dim=-1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)
