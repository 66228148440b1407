import numpy as np
import pytest
import torch

from klat.attention import (
    AttentionTrace,
    FusionParameters,
    dependent_weight,
    final_representation,
    fuse,
    fusion_forward,
    independent_weight,
    label_attention,
    self_attention,
    trace_from_intermediates,
)
from klat.errors import DegenerateInputError

from oracles import fusion_chain


def random_weights(rng, n_labels, enc_width, label_dim, d_a, k):
    return {
        "w1": rng.normal(size=(d_a, enc_width)),
        "w1p": rng.normal(size=(n_labels, d_a)),
        "w1pp": rng.normal(size=(enc_width, 1)),
        "w2": rng.normal(size=(d_a, enc_width)),
        "w2p": rng.normal(size=(n_labels, d_a)),
        "w2pp": rng.normal(size=(enc_width, 1)),
        "w3": rng.normal(size=(label_dim, k)),
        "w3p": rng.normal(size=(enc_width, k)),
        "w4": rng.normal(size=(label_dim, k)),
        "w4p": rng.normal(size=(enc_width, k)),
        "w5": rng.normal(size=(enc_width, 1)),
    }


def params_from_weights(weights, n_labels, enc_width, label_dim, d_a, k,
                        beta_doc=0.5, beta_know=0.5):
    p = FusionParameters(n_labels, enc_width, label_dim, d_a, k, beta_doc, beta_know).double()
    with torch.no_grad():
        for name, arr in weights.items():
            getattr(p, name).copy_(torch.as_tensor(arr, dtype=torch.float64))
    return p


def toy_instance(seed=0, m=3, l1=4, l2=3, h=5, d=4, d_a=3, k=3):
    rng = np.random.default_rng(seed)
    weights = random_weights(rng, m, 2 * h, d, d_a, k)
    en_doc = rng.normal(size=(l1, 2 * h))
    en_know = rng.normal(size=(l2, 2 * h))
    label_emb = rng.normal(size=(m, d))
    doc_mask = np.ones(l1, dtype=np.int64)
    know_mask = np.ones(l2, dtype=np.int64)
    return weights, label_emb, en_doc, doc_mask, en_know, know_mask


def t(x):
    return torch.as_tensor(x, dtype=torch.float64)


def test_self_attention_single_position():
    weights, label_emb, en_doc, *_ = toy_instance(l1=1)
    a, pooled = self_attention(t(en_doc[:1]), t(weights["w1"]), t(weights["w1p"]),
                               torch.ones(1, dtype=torch.long))
    assert torch.allclose(a, torch.ones_like(a))
    for row in pooled:
        assert torch.allclose(row, t(en_doc[0]))


def test_self_attention_identical_rows_uniform():
    weights, *_ = toy_instance()
    en = np.tile(np.arange(10.0), (4, 1))
    a, _ = self_attention(t(en), t(weights["w1"]), t(weights["w1p"]),
                          torch.ones(4, dtype=torch.long))
    assert torch.allclose(a, torch.full_like(a, 0.25))


def test_self_attention_all_masked_raises():
    weights, *_ = toy_instance()
    with pytest.raises(DegenerateInputError):
        self_attention(t(np.zeros((3, 10))), t(weights["w1"]), t(weights["w1p"]),
                       torch.zeros(3, dtype=torch.long))


def test_self_attention_masked_positions_zero_probability():
    weights, _, en_doc, *_ = toy_instance()
    mask = torch.tensor([1, 1, 0, 0])
    a, _ = self_attention(t(en_doc), t(weights["w1"]), t(weights["w1p"]), mask)
    assert torch.all(a[:, 2:] == 0)
    assert torch.allclose(a.sum(dim=-1), torch.ones(a.shape[0], dtype=a.dtype))


def test_independent_weight_zero_matrix_gives_half():
    pooled = torch.randn(3, 8, dtype=torch.float64)
    lam = independent_weight(pooled, torch.zeros(8, 1, dtype=torch.float64))
    assert torch.allclose(lam, torch.full((3,), 0.5, dtype=torch.float64))


def test_independent_weight_monotone_under_doubling():
    torch.manual_seed(0)
    pooled = torch.randn(4, 6, dtype=torch.float64)
    wpp = torch.randn(6, 1, dtype=torch.float64)
    lam1 = independent_weight(pooled, wpp)
    lam2 = independent_weight(2.0 * pooled, wpp)
    logits = (pooled @ wpp).squeeze(-1)
    # doubling pushes each sigmoid away from 0.5 in its own direction
    assert torch.all((lam2 - lam1).sign() == logits.sign())


def test_label_attention_zero_labels():
    weights, label_emb, en_doc, doc_mask, *_ = toy_instance()
    scores, pooled = label_attention(t(np.zeros_like(label_emb)), t(en_doc),
                                     t(weights["w3"]), t(weights["w3p"]),
                                     torch.as_tensor(doc_mask))
    assert torch.all(scores == 0) and torch.all(pooled == 0)


def test_label_attention_orthogonal_label_row_is_zero():
    h, k = 3, 2
    en = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    w3p = np.eye(3)[:, :k]  # project states onto first two coords
    # label 0 projects orthogonally to every projected state
    label_emb = np.array([[0.0, 0.0], [1.0, 1.0]])
    w3 = np.array([[0.0, 0.0], [0.0, 1.0]])
    # projected label 0 = (0,0); any state gives score 0
    scores, _ = label_attention(t(label_emb), t(en), t(w3), t(w3p),
                                torch.ones(2, dtype=torch.long))
    assert torch.all(scores[0] == 0)


def test_fuse_endpoints_and_convexity():
    rng = np.random.default_rng(1)
    pd = t(rng.normal(size=(3, 6)))
    pk = t(rng.normal(size=(3, 6)))
    w5 = t(rng.normal(size=(6, 1)))
    fused, _ = fuse(pd, pk, 1.0, 0.0, w5)
    assert torch.equal(fused, pd)
    fused, _ = fuse(pd, pd, 0.3, 0.7, w5)
    assert torch.allclose(fused, pd)
    for b1 in (0.0, 0.25, 0.5, 0.9, 1.0):
        fused, lam_l = fuse(pd, pk, b1, 1.0 - b1, w5)
        lo = torch.minimum(pd, pk)
        hi = torch.maximum(pd, pk)
        assert torch.all(fused >= lo - 1e-12) and torch.all(fused <= hi + 1e-12)
        assert torch.all((lam_l > 0) & (lam_l < 1))
    with pytest.raises(ValueError):
        fuse(pd, pk, 0.6, 0.6, w5)


def test_dependent_weight_identity_and_arithmetic():
    x = torch.tensor([0.3, 0.5, 0.9], dtype=torch.float64)
    lam = dependent_weight(x, x, x)
    assert torch.allclose(lam, torch.ones(3, dtype=torch.float64))
    lam = dependent_weight(torch.tensor([0.5]), torch.tensor([0.5]), torch.tensor([0.25]))
    assert lam.item() == pytest.approx(0.5 + 0.5 / 0.75)


def test_dependent_weight_range_scalar_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        ll, ld, lk = rng.uniform(1e-6, 1 - 1e-6, 3)
        lam = dependent_weight(torch.tensor([ll]), torch.tensor([ld]), torch.tensor([lk]))
        expected = ll / (ll + ld) + ll / (ll + lk)
        assert lam.item() == pytest.approx(expected, rel=1e-12)
        assert 0.0 < lam.item() < 2.0


def test_final_representation_rows():
    la = torch.randn(4, 5, dtype=torch.float64)
    assert torch.equal(final_representation(torch.ones(4, dtype=torch.float64), la), la)
    lam = torch.tensor([1.0, 0.0, 2.0, 0.5], dtype=torch.float64)
    out = final_representation(lam, la)
    for i in range(4):
        assert torch.allclose(out[i], lam[i] * la[i])


def test_full_chain_matches_dense_oracle():
    for seed in range(5):
        weights, label_emb, en_doc, doc_mask, en_know, know_mask = toy_instance(seed=seed)
        expected = fusion_chain(weights, label_emb, en_doc, doc_mask, en_know, know_mask)
        params = params_from_weights(weights, 3, 10, 4, 3, 3)
        final, inter = fusion_forward(params, t(label_emb), t(en_doc),
                                      torch.as_tensor(doc_mask), t(en_know),
                                      torch.as_tensor(know_mask))
        for key, exp in expected.items():
            got = inter[key].detach().numpy()
            np.testing.assert_allclose(got, exp, atol=1e-9, err_msg=key)


def test_sa_equals_diag_lambda_la_exactly():
    weights, label_emb, en_doc, doc_mask, en_know, know_mask = toy_instance(seed=9)
    params = params_from_weights(weights, 3, 10, 4, 3, 3)
    final, inter = fusion_forward(params, t(label_emb), t(en_doc),
                                  torch.as_tensor(doc_mask), t(en_know),
                                  torch.as_tensor(know_mask))
    recon = inter["dependent_weight"].unsqueeze(-1) * inter["fused"]
    assert torch.equal(final, recon)


def test_label_permutation_equivariance():
    weights, label_emb, en_doc, doc_mask, en_know, know_mask = toy_instance(seed=4)
    perm = [2, 0, 1]
    permuted = dict(weights)
    permuted["w1p"] = weights["w1p"][perm]
    permuted["w2p"] = weights["w2p"][perm]
    base = fusion_chain(weights, label_emb, en_doc, doc_mask, en_know, know_mask)
    swapped = fusion_chain(permuted, label_emb[perm], en_doc, doc_mask, en_know, know_mask)
    for key in base:
        np.testing.assert_allclose(base[key][perm], swapped[key], atol=1e-12, err_msg=key)


def test_row_softmax_flag():
    weights, label_emb, en_doc, doc_mask, en_know, know_mask = toy_instance(seed=3)
    params = params_from_weights(weights, 3, 10, 4, 3, 3)
    _, inter = fusion_forward(params, t(label_emb), t(en_doc), torch.as_tensor(doc_mask),
                              t(en_know), torch.as_tensor(know_mask), row_softmax=True)
    rows = inter["label_doc_attention"].sum(dim=-1)
    assert torch.allclose(rows, torch.ones_like(rows))


def test_trace_save_load(tmp_path):
    weights, label_emb, en_doc, doc_mask, en_know, know_mask = toy_instance(seed=7)
    params = params_from_weights(weights, 3, 10, 4, 3, 3)
    _, inter = fusion_forward(params, t(label_emb), t(en_doc).unsqueeze(0),
                              torch.as_tensor(doc_mask).unsqueeze(0),
                              t(en_know).unsqueeze(0),
                              torch.as_tensor(know_mask).unsqueeze(0))
    trace = trace_from_intermediates(inter, 0)
    path = tmp_path / "trace.npz"
    trace.save(path)
    again = AttentionTrace.load(path)
    np.testing.assert_array_equal(trace.final, again.final)
    np.testing.assert_array_equal(trace.doc_attention, again.doc_attention)
