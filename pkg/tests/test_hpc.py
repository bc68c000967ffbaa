"""Predictive-coding heads: negative sampling contracts, closed-form
loss values, brute-force oracles, temporal causality."""

import numpy as np
import pytest

from duovc.errors import ConfigError, InsufficientContextError
from duovc.hpc import ApcHead, CpcHead, HpcConfig, HpcHeads, sample_negatives
from duovc.rng import Rng
from duovc.tensor import Tensor


class TestSampleNegatives:
    def test_forced_pair(self):
        picks = sample_negatives(Rng(0), 3, 1, 2)
        assert sorted(picks.tolist()) == [0, 2]

    def test_excludes_positive_and_distinct(self):
        for seed in range(50):
            picks = sample_negatives(Rng(seed), 20, 7, 8)
            assert 7 not in picks
            assert len(set(picks.tolist())) == 8

    def test_too_few_candidates_rejected(self):
        with pytest.raises(ConfigError):
            sample_negatives(Rng(0), 8, 0, 8)

    def test_near_uniform_frequencies(self):
        # 10_000 draws of 8 over 99 candidates: expect ~808 hits per index
        counts = np.zeros(100, dtype=np.int64)
        rng = Rng(99)
        for _ in range(10_000):
            counts[sample_negatives(rng, 100, 50, 8)] += 1
        counts = np.delete(counts, 50)
        expected = 10_000 * 8 / 99
        assert counts.min() > expected * 0.8
        assert counts.max() < expected * 1.2


def _uniform_score_head(latent_dim=4, m=2, n_neg=7):
    head = CpcHead(latent_dim, HpcConfig(prediction_steps=m, negatives=n_neg, gnet_hidden=5),
                   Rng(1))
    for j in range(m):
        head.score_mats[j].weight.assign(np.zeros_like(head.score_mats[j].weight.data))
        head.score_mats[j].bias.assign(np.zeros_like(head.score_mats[j].bias.data))
    return head


class TestCpc:
    def test_uniform_scores_give_log_candidates(self):
        head = _uniform_score_head(n_neg=7)
        z = Tensor(Rng(2).normal((12, 4)))
        loss = head.loss(z, Rng(3))
        assert loss.item() == pytest.approx(np.log(8.0), abs=1e-6)

    def test_saturated_scores_give_near_zero_loss(self):
        # the InfoNCE term the head averages: -log softmax with the
        # positive in column 0; +20 vs -20 saturates to ~0
        from duovc.tensor import logsumexp_rows
        scores = np.full((6, 8), -20.0, dtype=np.float32)
        scores[:, 0] = 20.0
        per_row = logsumexp_rows(Tensor(scores)).data - scores[:, 0]
        assert float(np.mean(per_row)) < 1e-8
        # and equal scores recover ln(n_neg + 1) through the real head
        head = _uniform_score_head(latent_dim=2, m=1, n_neg=4)
        z = Rng(4).normal((8, 2))
        assert head.loss(Tensor(z), Rng(6)).item() == pytest.approx(np.log(5.0), abs=1e-6)

    def test_brute_force_oracle(self):
        cfg = HpcConfig(prediction_steps=3, negatives=4, gnet_hidden=6)
        head = CpcHead(4, cfg, Rng(7))
        z = Rng(8).normal((10, 4))
        seed = 9
        got = head.loss(Tensor(z), Rng(seed)).item()

        # independent reimplementation: aggregate with the gru, then loop
        # every (t, j) computing its softmax term directly
        r = head.gnet.forward_seq(Tensor(z)).data
        rng = Rng(seed)
        total, count = 0.0, 0
        for j in range(1, cfg.prediction_steps + 1):
            w = head.score_mats[j - 1].weight.data
            b = head.score_mats[j - 1].bias.data
            for t in range(10 - j):
                proj = r[t] @ w + b
                pos = float(np.dot(proj, z[t + j]))
                negs = [float(np.dot(proj, z[i]))
                        for i in sample_negatives(rng, 10, t + j, cfg.negatives)]
                scores = np.array([pos] + negs, dtype=np.float64)
                total += float(np.log(np.exp(scores - scores.max()).sum()) + scores.max() - pos)
                count += 1
        assert got == pytest.approx(total / count, abs=1e-6)

    def test_sequence_too_short(self):
        head = _uniform_score_head(m=2)
        with pytest.raises(InsufficientContextError):
            head.loss(Tensor(Rng(10).normal((3, 4))), Rng(11))

    def test_aggregation_is_causal(self):
        cfg = HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=5)
        head = CpcHead(3, cfg, Rng(12))
        z = Rng(13).normal((10, 3))
        base = head.gnet.forward_seq(Tensor(z)).data
        z2 = z.copy()
        z2[6] += 1.0
        moved = head.gnet.forward_seq(Tensor(z2)).data
        assert np.array_equal(base[:6], moved[:6])


class TestApc:
    def _head(self, m=2, detach=True):
        return ApcHead(3, HpcConfig(prediction_steps=m, negatives=3, gnet_hidden=4,
                                    detach_targets=detach), Rng(14))

    def test_exact_prediction_gives_zero(self):
        # T-1 = gnet_hidden makes the predictor system square, so an
        # exact interpolating weight matrix exists
        head = self._head(m=1)
        z = Rng(15).normal((5, 3))
        r = head.gnet.forward_seq(Tensor(z)).data
        w = np.linalg.solve(r[:4].astype(np.float64), z[1:].astype(np.float64))
        head.predictors[0].weight.assign(w.astype(np.float32))
        head.predictors[0].bias.assign(np.zeros(3, dtype=np.float32))
        assert head.loss(Tensor(z)).item() < 1e-4

    def test_constant_offset_gives_offset(self):
        head = self._head(m=2)
        z = np.zeros((8, 3), dtype=np.float32)
        for p in head.gnet.parameters():
            p.assign(np.zeros_like(p.data))
        for pred in head.predictors:
            pred.weight.assign(np.zeros_like(pred.weight.data))
            pred.bias.assign(np.full(3, 0.3, dtype=np.float32))
        assert head.loss(Tensor(z)).item() == pytest.approx(0.3, abs=1e-6)

    def test_brute_force_oracle(self):
        head = self._head(m=3)
        z = Rng(16).normal((9, 3))
        got = head.loss(Tensor(z)).item()
        r = head.gnet.forward_seq(Tensor(z)).data
        total, count = 0.0, 0
        for j in range(1, 4):
            w = head.predictors[j - 1].weight.data
            b = head.predictors[j - 1].bias.data
            for t in range(9 - j):
                total += float(np.abs(r[t] @ w + b - z[t + j]).sum())
                count += 3
        assert got == pytest.approx(total / count, abs=1e-6)

    def test_detached_targets_get_no_gradient_through_target_path(self):
        z_data = Rng(17).normal((8, 3))
        zd = Tensor(z_data, requires_grad=True)
        self._head(detach=True).loss(zd).backward()
        grad_detached = zd.grad.copy()
        zf = Tensor(z_data, requires_grad=True)
        self._head(detach=False).loss(zf).backward()
        assert not np.array_equal(grad_detached, zf.grad)

    def test_sequence_too_short(self):
        with pytest.raises(InsufficientContextError):
            self._head(m=4).loss(Tensor(Rng(18).normal((4, 3))))


class TestCombined:
    def test_sum_is_bitwise_exact(self):
        heads = HpcHeads(4, HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=5), Rng(19))
        z = Tensor(Rng(20).normal((12, 4)))
        seed = 21
        combined = heads.loss(z, Rng(seed)).item()
        cpc = heads.cpc.loss(z, Rng(seed)).item()
        apc = heads.apc.loss(z).item()
        assert combined == np.float32(np.float32(cpc) + np.float32(apc))

    def test_known_component_values_add(self):
        heads = HpcHeads(4, HpcConfig(prediction_steps=2, negatives=7, gnet_hidden=5), Rng(22))
        for j in range(2):
            heads.cpc.score_mats[j].weight.assign(np.zeros((5, 4), dtype=np.float32))
            heads.cpc.score_mats[j].bias.assign(np.zeros(4, dtype=np.float32))
        for p in heads.apc.gnet.parameters():
            p.assign(np.zeros_like(p.data))
        for pred in heads.apc.predictors:
            pred.weight.assign(np.zeros_like(pred.weight.data))
            pred.bias.assign(np.full(4, 0.3, dtype=np.float32))
        z = Tensor(np.zeros((12, 4), dtype=np.float32))
        got = heads.loss(z, Rng(23)).item()
        assert got == pytest.approx(np.log(8.0) + 0.3, abs=1e-5)

    def test_gradients_flow_into_latent(self):
        heads = HpcHeads(3, HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=4), Rng(24))
        z = Tensor(Rng(25).normal((10, 3)), requires_grad=True)
        heads.loss(z, Rng(26)).backward()
        assert z.grad is not None and np.abs(z.grad).sum() > 0

    def test_deterministic_given_seed(self):
        heads = HpcHeads(3, HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=4), Rng(27))
        z = Tensor(Rng(28).normal((10, 3)))
        assert heads.loss(z, Rng(5)).item() == heads.loss(z, Rng(5)).item()
