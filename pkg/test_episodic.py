import math

import numpy as np
import pytest

from autograd import Tensor, softmax, tensor
from autograd.gradcheck import check_gradients
from config import MetaLossConfig
from errors import EmptyClassError, InvariantViolation
from evaluation import oracle
from losses.episodic import (
    EpisodeView,
    ViewedEpisode,
    align,
    class_means,
    classify_query,
    cross_view_loss,
    cross_view_terms,
    distance_coefficient,
    distance_logits,
    distance_scaled_loss,
    meta_test_predict,
    meta_total,
    prototype_set,
    prototypes,
    view_loss,
)
from models import AttnModule

D = 4


def make_view(rng, ways=3, shots=2, queries=2, support=None, query=None, with_z=True):
    support_labels = np.repeat(np.arange(ways), shots)
    query_labels = np.repeat(np.arange(ways), queries)
    support = rng.normal(size=(ways * shots, D)) if support is None else support
    query = rng.normal(size=(ways * queries, D)) if query is None else query
    extra = {}
    if with_z:
        extra = {"support_z": Tensor(support * 0.5 + 1.0), "query_z": Tensor(query * 0.5 - 1.0)}
    return EpisodeView(Tensor(support), support_labels, Tensor(query), query_labels, **extra)


def make_episode(rng, ways=3, shots=2, queries=2):
    views = (make_view(rng, ways, shots, queries), make_view(rng, ways, shots, queries))
    return ViewedEpisode(views=views, ways=ways)


class TestPrototypes:
    def test_class_means(self):
        view = make_view(None, ways=2, shots=2, support=np.array([[0.0] * D, [2.0] * D, [1.0] * D, [3.0] * D]),
                         query=np.zeros((4, D)))
        np.testing.assert_array_equal(prototypes(view, 2).data, [[1.0] * D, [2.0] * D])

    def test_empty_class(self, rng):
        with pytest.raises(EmptyClassError):
            class_means(Tensor(rng.normal(size=(2, D))), np.array([0, 0]), ways=2)

    def test_missing_module_leaves_prototypes(self, rng):
        raw = Tensor(rng.normal(size=(3, D)))
        assert align(raw, None) is raw

    def test_single_prototype_alignment(self, rng):
        view = make_view(rng, ways=1, shots=3)
        assert prototype_set(view, 1, AttnModule(D, rng)).aligned.shape == (1, D)

    def test_alignment_follows_class_order(self, rng):
        attn = AttnModule(D, rng)
        raw = rng.normal(size=(4, D))
        order = np.array([3, 1, 0, 2])
        np.testing.assert_allclose(align(Tensor(raw[order]), attn).data, align(Tensor(raw), attn).data[order],
                                   atol=1e-12)


class TestClassification:
    def test_equidistant_query_is_uniform(self):
        probs = classify_query(Tensor([0.0, 0.0]), Tensor([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])).data
        np.testing.assert_allclose(probs, [1 / 3] * 3, atol=1e-15)

    def test_distances_one_and_two(self):
        probs = classify_query(Tensor([0.0, 0.0]), Tensor([[1.0, 0.0], [2.0, 0.0]])).data
        np.testing.assert_allclose(probs, [0.7311, 0.2689], atol=1e-4)
        assert probs[0] == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), abs=1e-12)

    def test_shift_invariance(self, rng):
        h, protos = rng.normal(size=(5, D)), rng.normal(size=(3, D))
        shift = rng.normal(size=D) * 10.0
        base = classify_query(Tensor(h), Tensor(protos)).data
        moved = classify_query(Tensor(h + shift), Tensor(protos + shift)).data
        np.testing.assert_allclose(moved, base, atol=1e-10)

    def test_squared_distance_variant(self):
        probs = classify_query(Tensor([0.0, 0.0]), Tensor([[1.0, 0.0], [2.0, 0.0]]), squared=True).data
        assert probs[0] == pytest.approx(1.0 / (1.0 + math.exp(-3.0)), abs=1e-12)

    def test_tie_goes_to_smallest_index(self):
        view = make_view(None, ways=2, shots=1, queries=1,
                         support=np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]]), query=np.zeros((2, D)))
        assert meta_test_predict(view, 2, None).tolist() == [0, 0]

    def test_nearest_centroid(self, rng):
        centers = np.eye(D)[:3] * 10.0
        support = np.repeat(centers, 2, axis=0) + 0.1 * rng.normal(size=(6, D))
        query = np.repeat(centers, 2, axis=0) + 0.1 * rng.normal(size=(6, D))
        view = make_view(rng, ways=3, shots=2, queries=2, support=support, query=query)
        assert meta_test_predict(view, 3, None).tolist() == [0, 0, 1, 1, 2, 2]

    def test_prediction_ignores_support_order_within_a_class(self, rng):
        attn = AttnModule(D, rng)
        support, query = rng.normal(size=(9, D)), rng.normal(size=(6, D))
        base = make_view(rng, ways=3, shots=3, queries=2, support=support, query=query)
        order = np.array([2, 0, 1, 4, 5, 3, 8, 6, 7])
        shuffled = make_view(rng, ways=3, shots=3, queries=2, support=support[order], query=query)
        for module in (None, attn):
            assert meta_test_predict(shuffled, 3, module).tolist() == meta_test_predict(base, 3, module).tolist()

    def test_constant_logit_shift(self, rng):
        h, protos = Tensor(rng.normal(size=(5, D))), Tensor(rng.normal(size=(3, D)))
        logits = distance_logits(h, protos)
        shifted = logits + 12.5
        assert np.argmax(shifted.data, axis=1).tolist() == np.argmax(logits.data, axis=1).tolist()
        np.testing.assert_allclose(softmax(shifted, axis=-1).data, classify_query(h, protos).data, atol=1e-12)


class TestCrossView:
    def test_identical_views_reduce_to_single_view(self, rng):
        view = make_view(rng)
        ve = ViewedEpisode(views=(view, view), ways=3)
        terms = cross_view_terms(ve, None)
        assert cross_view_loss(ve, None).item() == pytest.approx(terms["l11"].item(), abs=1e-12)

    def test_swapping_views(self, rng):
        ve = make_episode(rng)
        attn = AttnModule(D, rng)
        assert cross_view_loss(ve.swapped(), attn).item() == pytest.approx(cross_view_loss(ve, attn).item(), abs=1e-12)

    def test_term_layout(self, rng):
        ve = make_episode(rng)
        terms = cross_view_terms(ve, None)
        protos_2 = prototype_set(ve.views[1], 3, None)
        assert terms["l12"].item() == pytest.approx(view_loss(ve.views[0], protos_2).item(), abs=1e-12)

    def test_views_must_share_labels(self, rng):
        first = make_view(rng)
        second = make_view(rng)
        second.query_labels = second.query_labels[::-1].copy()
        with pytest.raises(InvariantViolation):
            ViewedEpisode(views=(first, second), ways=3)

    def test_gradients(self, rng):
        attn = AttnModule(D, rng)
        support = tensor(rng.normal(size=(6, D)), requires_grad=True, name="support")
        query = rng.normal(size=(6, D))
        labels = np.repeat(np.arange(3), 2)

        def fn():
            first = EpisodeView(support, labels, Tensor(query), labels)
            second = EpisodeView(support * 0.5, labels, Tensor(query + 1.0), labels)
            return cross_view_loss(ViewedEpisode(views=(first, second), ways=3), attn)

        assert check_gradients(fn, [support] + attn.parameters(), max_checks=60).passed()


class TestDistanceScaled:
    def test_coefficient(self):
        assert distance_coefficient(Tensor([1.0, 0.0, -1.0])).data.tolist() == [1.0, 2.0, 3.0]

    def test_all_vectors_aligned(self):
        ones = np.ones((1, D))
        views = tuple(
            EpisodeView(Tensor(ones), [0], Tensor(ones), [0], support_z=Tensor(ones * s), query_z=Tensor(ones * s))
            for s in (1.0, 2.0)
        )
        loss = distance_scaled_loss(ViewedEpisode(views=views, ways=1), tau=0.1)
        assert loss.item() == pytest.approx(2 * math.log(5.0), abs=1e-12)

    def test_matches_literal_summation(self, rng):
        ve = make_episode(rng, ways=3, shots=2, queries=2)
        first, second = ve.views
        expected = oracle.distance_scaled(
            (first.query_z.data, second.query_z.data),
            (first.support_z.data, second.support_z.data),
            first.support_labels.tolist(),
            first.query_labels.tolist(),
            3,
            0.2,
        )
        assert abs(distance_scaled_loss(ve, 0.2).item() - expected) < 1e-9

    def test_orthogonal_rotation(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(D, D)))
        blocks = [(rng.normal(size=(6, D)), rng.normal(size=(6, D))) for _ in range(2)]
        labels = np.repeat(np.arange(3), 2)

        def loss_for(rotation):
            views = tuple(
                EpisodeView(Tensor(s), labels, Tensor(qv), labels,
                            support_z=Tensor(s @ rotation), query_z=Tensor(qv @ rotation))
                for s, qv in blocks
            )
            return distance_scaled_loss(ViewedEpisode(views=views, ways=3), 0.2).item()

        assert loss_for(q) == pytest.approx(loss_for(np.eye(D)), abs=1e-10)

    def test_needs_projected_vectors(self, rng):
        views = (make_view(rng, with_z=False), make_view(rng, with_z=False))
        with pytest.raises(ValueError):
            distance_scaled_loss(ViewedEpisode(views=views, ways=3), 0.1)

    def test_gradients(self, rng):
        # view x (support, query) x item x D
        z = tensor(rng.normal(size=(2, 2, 2, D)), requires_grad=True, name="z")
        labels = np.array([0, 1])

        def fn():
            views = tuple(
                EpisodeView(z[v, 0], labels, z[v, 1], labels, support_z=z[v, 0], query_z=z[v, 1])
                for v in (0, 1)
            )
            return distance_scaled_loss(ViewedEpisode(views=views, ways=2), 0.5)

        assert check_gradients(fn, [z]).passed()


class TestMetaTotal:
    def test_zero_beta_is_cross_view_only(self, rng):
        ve = make_episode(rng)
        result = meta_total(ve, None, MetaLossConfig(beta=0.0))
        assert result.total.item() == pytest.approx(cross_view_loss(ve, None).item(), abs=1e-12)
        assert result.raw["info"] == pytest.approx(distance_scaled_loss(ve, 0.1).item())

    def test_weighted_info_term(self, rng):
        ve = make_episode(rng)
        result = meta_total(ve, None, MetaLossConfig(beta=0.1, tau5=0.2))
        expected = cross_view_loss(ve, None).item() + 0.1 * distance_scaled_loss(ve, 0.2).item()
        assert result.total.item() == pytest.approx(expected, abs=1e-10)

    def test_single_view_when_cross_view_is_off(self, rng):
        ve = make_episode(rng)
        result = meta_total(ve, None, MetaLossConfig(use_cvet=False, use_info=False))
        expected = view_loss(ve.views[0], prototype_set(ve.views[0], 3, None)).item()
        assert result.total.item() == pytest.approx(expected, abs=1e-12)
        assert set(result.raw) == {"l11", "meta"}

    def test_bypassing_attention(self, rng):
        ve = make_episode(rng)
        attn = AttnModule(D, rng)
        bypassed = meta_total(ve, attn, MetaLossConfig(bypass_attention=True, use_info=False)).total.item()
        assert bypassed == pytest.approx(cross_view_loss(ve, None).item(), abs=1e-12)
