import pathlib
import pytest

from pygravsafe.config import Configuration, ConfigError
from pygravsafe.pipeline import ContextConfig, RunConfig, SweepSpec


configs = pathlib.Path(__file__).parent / 'configs'

def write_config(path, text):
    path.write_text(text)
    return path


def test_defaults():
    config = Configuration()
    assert config.presets() == ['moderate', 'low']
    assert config.get('run', 'framework') == 'gp'
    assert config.get_list('influence', 'degrees', int) == [2, 3, 4, 5]
    assert config.section('low')['extrap_periods'] == '3'

    # Presets inherit what they do not set
    assert Configuration().section('low')['inherits'] == 'moderate'

    assert ContextConfig.from_config(config) == ContextConfig()
    assert RunConfig.from_config(config) == RunConfig()


def test_cli_overrides():
    config = Configuration(overrides={'run': {'sigma_state': .5, 'framework': None}, 'moderate': {'train_periods': 7}})
    assert config.get('run', 'sigma_state', float) == .5
    assert config.get('run', 'framework') == 'gp'

    run = RunConfig.from_config(config)
    assert run.sigma_state == .5
    assert run.train_periods == 7.
    # [run] periods take precedence over the selected preset
    config = Configuration(overrides={'run': {'volume': 'low', 'train_periods': 4}})
    assert config.section('low')['train_periods'] == '10'
    assert RunConfig.from_config(config).train_periods == 4.


def test_ini_config_with_inherited_preset():
    config = Configuration(configs / 'volumes.cfg')
    assert config.presets() == ['moderate', 'low', 'short']

    run = RunConfig.from_config(config)
    assert run.volume == 'short'
    assert run.train_periods == 2.
    assert run.extrap_periods == 3.


def test_toml_config():
    config = Configuration(configs / 'sweep.toml')
    assert config.get('run', 'framework') == 'truth'
    assert config.get('run', 'sigma_accel', float) == .25
    assert config.get_list('sweep', 'frameworks', str) == ['truth', 'nn']
    assert config.get_list('sweep.grid', 'sigma_accel') == [0., .5, 1.]

    spec = SweepSpec.from_config(config, 'ics.csv', workers=2)
    assert len(spec.instances) == 12
    assert spec.workers == 2
    assert spec.instances[0].label == 'truth-sigma_state=0-sigma_accel=0'
    assert spec.instances[-1].label == 'nn-sigma_state=0.1-sigma_accel=1'
    assert spec.instances[-1].run.sigma_accel == 1.
    assert spec.instances[-1].run.framework == 'nn'


def test_user_grid_replaces_default_grid(tmp_path):
    assert len(Configuration().get_list('sweep.grid', 'sigma_state')) == 11

    path = write_config(tmp_path / 'accel.toml', '[tool.pygravsafe.sweep]\nframeworks = ["gp", "nn"]\n'
                                                 '[tool.pygravsafe.sweep.grid]\nsigma_accel = [0.0, 0.1, 0.2]\n')
    spec = SweepSpec.from_config(Configuration(path), 'ics.csv')
    assert len(spec.instances) == 6
    assert [instance.label for instance in spec.instances[:3]] == ['gp-sigma_accel=0', 'gp-sigma_accel=0.1',
                                                                   'gp-sigma_accel=0.2']
    assert all(instance.run.sigma_state == 0. for instance in spec.instances)

    # Command line grids replace the file's grid too
    config = Configuration(configs / 'sweep.toml', {'sweep.grid': {'sigma_accel': '0.5'}})
    assert list(config.section('sweep.grid')) == ['sigma_accel']
    assert len(SweepSpec.from_config(config, 'ics.csv').instances) == 2

    # Other sections still merge
    config = Configuration(configs / 'sweep.toml', {'sweep': {'workers': 3}})
    assert config.get_list('sweep.grid', 'sigma_state') == [0., .1]


def test_toml_without_tool_table(tmp_path):
    path = write_config(tmp_path / 'plain.toml', '[run]\nbase_seed = 12\n[screen]\nperiods = 2.5\n')
    config = Configuration(path)
    assert RunConfig.from_config(config).base_seed == 12
    assert ContextConfig.from_config(config).screen_periods == 2.5


def test_invalid_configs(tmp_path):
    with pytest.raises(ConfigError):
        Configuration(write_config(tmp_path / 'cycle.cfg', '[a]\ninherits = b\n[b]\ninherits = a\n'))

    with pytest.raises(ConfigError):
        Configuration(write_config(tmp_path / 'orphan.cfg', '[a]\ninherits = nowhere\n'))

    with pytest.raises(ConfigError):
        Configuration(write_config(tmp_path / 'broken.cfg', 'no section header\n'))

    with pytest.raises(FileNotFoundError):
        Configuration(tmp_path / 'missing.cfg')

    with pytest.raises(ConfigError):
        RunConfig.from_config(Configuration(overrides={'run': {'volume': 'huge'}}))

    with pytest.raises(ConfigError):
        RunConfig.from_config(Configuration(overrides={'run': {'framework': 'svm'}}))

    with pytest.raises(ConfigError):
        RunConfig.from_config(Configuration(overrides={'run': {'sigma_state': 'lots'}}))

    with pytest.raises(ConfigError):
        ContextConfig.from_config(Configuration(overrides={'ranges': {'eccentricity': '0.5 0.2'}}))

    with pytest.raises(ConfigError):
        ContextConfig.from_config(Configuration(overrides={'gravity': {'zonals': '[(1, 0.1)]'}}))

    with pytest.raises(ConfigError):
        SweepSpec.from_config(Configuration(overrides={'sweep.grid': {'epochs': '1 2'}}), 'ics.csv')


def test_accessors():
    config = Configuration(overrides={'influence': {'degrees': '2, 3,4'}})
    assert config.get_list('influence', 'degrees', int) == [2, 3, 4]
    assert config.get('influence', 'missing', fallback=3) == 3

    with pytest.raises(ConfigError):
        config.get('influence', 'missing')

    with pytest.raises(ConfigError):
        config.section('missing')

    with pytest.raises(ConfigError):
        config.get('run', 'framework', float)


def test_digest():
    assert Configuration().digest() == Configuration().digest()
    assert Configuration().digest() != Configuration(overrides={'run': {'base_seed': 1}}).digest()
    assert Configuration().echo()['run']['volume'] == 'moderate'
