import json

import numpy as np
import pytest

import core.model as model_module
import core.noisemodel as noisemodel_module
import training.trainer as trainer_module
from config import TrainConfig
from core.errors import ShapeError
from core.model import classify, extract
from core.noisemodel import NoiseEstimate, estimate_noise
from data.dataset import DomainDataset
from data.synthetic import gen_blobs
from training.trainer import Trainer, adapt_epoch, epoch_batches, train, warmup
from utils.monitoring import TrainingMonitor


def _params_equal(a, b):
    pa, pb = a.parameters(), b.parameters()
    return pa.keys() == pb.keys() and all(np.array_equal(pa[k], pb[k]) for k in pa)


class TestEpochBatches:

    def test_cycles_with_reshuffle(self):
        batches = epoch_batches(np.arange(10), 4, 5, np.random.default_rng(0))
        assert [len(b) for b in batches] == [4, 4, 2, 4, 4]
        assert sorted(np.concatenate(batches[:3]).tolist()) == list(range(10))

    def test_empty_pool(self):
        assert epoch_batches(np.arange(0), 4, 3, np.random.default_rng(0)) == []


class TestTrain:

    def test_record_layout(self, tiny_config, domain_pair):
        source, target = domain_pair
        result = train(tiny_config, source, target.features)
        phases = [r.phase for r in result.records]
        assert phases == ['warmup', 'warmup', 'adapt', 'adapt']
        assert [r.epoch for r in result.records] == [1, 2, 3, 4]
        assert result.records[0].mean_target_discriminator is None
        assert result.records[1].mean_target_discriminator is not None
        for record in result.records:
            assert sum(record.distance_histogram['counts']) == source.n_samples
        adapt = result.records[-1]
        assert len(adapt.weights) == source.n_samples
        assert adapt.em['iterations'] >= 1
        assert set(adapt.mixture) == {'alpha', 'mu', 'sigma'}
        assert 0.0 <= adapt.retained_fraction <= 1.0
        assert {'cls', 'reg', 'adv_d', 'adv_f'} <= set(adapt.losses)
        assert result.final_noise is not None

    def test_same_seed_same_model(self, tiny_config, domain_pair):
        source, target = domain_pair
        a = train(tiny_config, source, target.features)
        b = train(tiny_config, source, target.features)
        assert _params_equal(a.model, b.model)
        assert [r.losses for r in a.records] == [r.losses for r in b.records]

    def test_different_seed_different_model(self, tiny_config, domain_pair):
        source, target = domain_pair
        a = train(tiny_config, source, target.features)
        b = train(tiny_config.with_overrides(seed=1), source, target.features)
        assert not _params_equal(a.model, b.model)

    def test_no_adaptation_epochs_is_warmup_only(self, tiny_config, domain_pair):
        source, target = domain_pair
        result = train(tiny_config.with_overrides(train_epochs=0), source, target.features)
        assert [r.phase for r in result.records] == ['warmup', 'warmup']
        assert result.final_noise is None

    def test_alternating_mode(self, tiny_config, domain_pair):
        source, target = domain_pair
        a = train(tiny_config.with_overrides(update_mode='alternating'), source, target.features)
        b = train(tiny_config, source, target.features)
        assert all(np.all(np.isfinite(v)) for v in a.model.parameters().values())
        assert not _params_equal(a.model, b.model)

    def test_refuses_labelled_target(self, tiny_config, domain_pair):
        source, target = domain_pair
        with pytest.raises(TypeError):
            train(tiny_config, source, target)

    def test_target_width_checked(self, tiny_config, domain_pair):
        source, _ = domain_pair
        with pytest.raises(ShapeError):
            train(tiny_config, source, np.zeros((5, source.in_dim + 1)))

    def test_records_and_checkpoints_written(self, tmp_path, tiny_config, domain_pair):
        source, target = domain_pair
        config = tiny_config.with_overrides(checkpoint_every=2)
        train(config, source, target.features, records_path=tmp_path / 'records.jsonl',
              checkpoint_dir=tmp_path / 'ckpt')
        lines = (tmp_path / 'records.jsonl').read_text().splitlines()
        assert len(lines) == 4
        assert all(json.loads(line)['schema_version'] == 1 for line in lines)
        assert sorted(p.name for p in (tmp_path / 'ckpt').iterdir()) == [
            'checkpoint_epoch0002.json', 'checkpoint_epoch0004.json']


class TestAdaptEpoch:

    def test_unit_weights_without_adversary_match_warmup_epoch(self, tiny_config, domain_pair):
        source, target = domain_pair
        config = tiny_config.with_overrides(noise_removal=False, adversarial=False)
        model = Trainer(config).initialize_model(source)
        warmed, _ = Trainer(config).warmup_epoch(model, source)
        adapted, record, _ = Trainer(config).adapt_epoch(model, source, target.features)
        assert _params_equal(warmed, adapted)
        assert record.retained_fraction == 1.0

    def test_all_weights_zero_trains_on_target_terms(self, monkeypatch, tiny_config, domain_pair):
        source, target = domain_pair

        def reject_everything(model, ds, eta, max_iter, tol):
            estimate = estimate_noise(model, ds, eta, max_iter, tol)
            return NoiseEstimate(estimate.distances, estimate.posteriors, np.zeros(ds.n_samples),
                                 estimate.mixture, estimate.trace)

        monkeypatch.setattr(trainer_module, 'estimate_noise', reject_everything)
        monitor = TrainingMonitor()
        trainer = Trainer(tiny_config, monitor=monitor)
        model = trainer.initialize_model(source)
        updated, record, _ = trainer.adapt_epoch(model, source, target.features)
        assert record.retained_fraction == 0.0
        assert record.losses['cls'] == 0.0 and record.losses['adv_d'] > 0.0
        assert monitor.warnings == 1
        assert not _params_equal(model, updated)

    def test_module_level_wrappers(self, tiny_config, domain_pair):
        source, target = domain_pair
        model = Trainer(tiny_config).initialize_model(source)
        model, records = warmup(model, source, tiny_config)
        assert len(records) == tiny_config.warmup_epochs
        model, record = adapt_epoch(model, source, target.features, tiny_config, epoch=7)
        assert record.epoch == 8 and record.phase == 'adapt'


def _fixed_weights(full_weights, kept_weights):
    """estimate_noise stand-in that hands back preset weights keyed on the dataset size"""
    def fake(model, ds, eta, max_iter, tol):
        estimate = estimate_noise(model, ds, eta, max_iter, tol)
        weights = full_weights if ds.n_samples == full_weights.size else kept_weights
        return NoiseEstimate(estimate.distances, estimate.posteriors, weights.copy(),
                             estimate.mixture, estimate.trace)
    return fake


class TestWarmup:

    def test_default_config_learns_separable_blobs(self):
        source = gen_blobs(4, 500, 10, 10.0, seed=0)
        config = TrainConfig(warmup_epochs=5)
        trainer = Trainer(config)
        model = trainer.initialize_model(source)
        model, records = trainer.warmup(model, source)
        objective = [r.losses['cls'] + config.lambda1 * r.losses['reg'] for r in records]
        assert all(b < a for a, b in zip(objective, objective[1:])), objective
        predicted = classify(extract(model.extractor, source.features), model.prototypes)
        assert float((predicted == source.labels).mean()) >= 0.95

    def test_consumes_one_pass_of_batches_per_epoch(self, monkeypatch, tiny_config, domain_pair):
        source, _ = domain_pair
        calls = []
        original = Trainer._step

        def counting(self, *args, **kwargs):
            calls.append(len(args[1]))
            return original(self, *args, **kwargs)

        monkeypatch.setattr(Trainer, '_step', counting)
        config = tiny_config.with_overrides(warmup_epochs=3)
        trainer = Trainer(config)
        _, records = trainer.warmup(trainer.initialize_model(source), source)
        per_epoch = -(-source.n_samples // config.batch_size)
        assert len(calls) == 3 * per_epoch
        assert [r.batches for r in records] == [per_epoch] * 3
        assert sum(calls) == 3 * source.n_samples

    def test_zero_learning_rate_leaves_model_unchanged(self, tiny_config, domain_pair):
        source, target = domain_pair
        config = tiny_config.with_overrides(learning_rate=0.0)
        trainer = Trainer(config)
        model = trainer.initialize_model(source)
        warmed, _ = trainer.warmup(model, source)
        assert _params_equal(model, warmed)
        adapted, _, _ = trainer.adapt_epoch(warmed, source, target.features)
        assert _params_equal(model, adapted)

    def test_never_touches_the_noise_model(self, monkeypatch, tiny_config, domain_pair):
        source, target = domain_pair

        def forbidden(*args, **kwargs):
            raise AssertionError('noise model used during warm-up')

        for name in ('estimate_noise', 'compute_weights', 'fit_em', 'prototype_distances'):
            monkeypatch.setattr(noisemodel_module, name, forbidden)
        monkeypatch.setattr(trainer_module, 'estimate_noise', forbidden)
        trainer = Trainer(tiny_config)
        _, records = trainer.warmup(trainer.initialize_model(source), source, target.features)
        assert len(records) == tiny_config.warmup_epochs
        assert trainer_module.prototype_distances is model_module.prototype_distances


class TestSampleRemoval:

    def test_retained_fraction_tracks_planted_clean_share(self, monkeypatch, tiny_config, domain_pair):
        source, target = domain_pair
        n = source.n_samples
        clean = np.arange(n) % 10 < 7
        rng = np.random.default_rng(5)
        planted = np.where(clean, np.abs(rng.normal(0.5, 0.05, n)), np.abs(rng.normal(3.0, 0.3, n)))
        monkeypatch.setattr(noisemodel_module, 'prototype_distances', lambda model, x, labels: planted.copy())
        trainer = Trainer(tiny_config)
        _, record, estimate = trainer.adapt_epoch(trainer.initialize_model(source), source, target.features)
        assert abs(record.retained_fraction - clean.mean()) <= 0.05
        assert np.all(estimate.weights[~clean] == 0.0)

    def test_zero_weight_rows_train_like_removed_rows(self, monkeypatch, tiny_config, domain_pair):
        source, target = domain_pair
        n = source.n_samples
        weights = np.linspace(0.2, 1.0, n)
        weights[::3] = 0.0
        keep = weights > 0
        reduced = DomainDataset(source.features[keep], source.labels[keep], source.class_count)
        monkeypatch.setattr(trainer_module, 'estimate_noise', _fixed_weights(weights, weights[keep]))

        model = Trainer(tiny_config).initialize_model(source)
        full, full_record, _ = Trainer(tiny_config).adapt_epoch(model, source, target.features)
        cut, cut_record, _ = Trainer(tiny_config).adapt_epoch(model, reduced, target.features)

        assert full_record.batches == cut_record.batches
        assert cut_record.retained_fraction == 1.0
        pa, pb = full.parameters(), cut.parameters()
        for key in pa:
            np.testing.assert_allclose(pa[key], pb[key], rtol=0, atol=1e-12)
