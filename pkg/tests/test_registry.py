import pytest

from core.errors import ConfigurationError
from database.registry_models import RegistryManager, RegistryOperations, open_registry
from training.trainer import EpochRecord


@pytest.fixture
def registry(tmp_path):
    return open_registry(f"sqlite:///{tmp_path / 'runs.db'}")


class TestRegistry:

    def test_disabled_without_url(self, monkeypatch):
        monkeypatch.setattr('database.registry_models.Config.DATABASE_URL', '')
        assert open_registry(None) is None
        with pytest.raises(ConfigurationError):
            RegistryManager(None).get_session()

    def test_record_and_list(self, registry):
        first = registry.record_run('train', {'seed': 4}, {'target_accuracy': 0.75},
                                    corruption='mixed', noise_level=0.4)
        second = registry.record_run('sweep', {'seed': 5}, {'target_accuracy': 0.5}, method='baseline')
        assert second > first
        runs = registry.list_runs()
        assert [r['id'] for r in runs] == [second, first]
        assert runs[1]['seed'] == 4 and runs[1]['target_accuracy'] == 0.75
        assert [r['id'] for r in registry.list_runs(command='train')] == [first]
        assert len(registry.list_runs(limit=1)) == 1

    def test_epoch_logs(self, registry):
        records = [
            EpochRecord(epoch=1, phase='warmup', losses={'cls': 1.2}, retained_fraction=1.0, batches=3,
                        distance_histogram={}),
            EpochRecord(epoch=2, phase='adapt', losses={'cls': 0.8, 'adv_D': 0.6}, retained_fraction=0.7, batches=3,
                        distance_histogram={}, mean_target_discriminator=0.4),
        ]
        run_id = registry.record_run('train', {'seed': 0}, None, records)
        logs = registry.get_epoch_logs(run_id)
        assert [log['phase'] for log in logs] == ['warmup', 'adapt']
        assert logs[1]['losses'] == {'adv_D': 0.6, 'cls': 0.8}
        assert logs[1]['retained_fraction'] == 0.7
        assert registry.list_runs()[0]['epochs'] == 2

    def test_drop_and_recreate(self, tmp_path):
        manager = RegistryManager(f"sqlite:///{tmp_path / 'r.db'}")
        manager.create_tables()
        ops = RegistryOperations(manager)
        ops.record_run('train', {'seed': 0})
        manager.drop_tables()
        manager.create_tables()
        assert ops.list_runs() == []


class TestInitScript:

    def test_creates_tables(self, tmp_path):
        from scripts import init_database

        url = f"sqlite:///{tmp_path / 'init.db'}"
        assert init_database.main([url]) == 0
        assert init_database.main([url, '--drop']) == 0
        assert RegistryOperations(RegistryManager(url)).list_runs() == []
