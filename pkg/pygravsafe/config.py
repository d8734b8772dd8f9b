""" Layered configuration: packaged presets, then a user config file, then command line overrides """
import json
import tomli
import hashlib
import pathlib
import functools
import contextlib
import configparser
from collections import OrderedDict

try:
    import importlib.resources as importlib_resources
    importlib_resources.files
except (ImportError, AttributeError):
    import importlib_resources


class ConfigError(ValueError):
    """ The configuration is invalid or inconsistent """
    pass


class Configuration:
    """ Settings of the gravity field, initial condition domain, runs and sweeps, read from INI or TOML files

    Args:
        config (`str` or path-like): Path to a configuration file, INI-style or TOML
        overrides (`dict`): section name to option dictionaries, e.g. from the command line, applied last
    """
    #: Sections that are not data-volume presets
    reserved_sections = ('gravity', 'ranges', 'screen', 'run', 'gp', 'nn', 'sweep', 'sweep.grid', 'influence')
    #: Sections that a layer replaces as a whole instead of merging option by option
    replaced_sections = ('sweep.grid',)

    def __init__(self, config=None, overrides={}):
        self.parser = configparser.ConfigParser(interpolation=configparser.ExtendedInterpolation(),
                                                dict_type=OrderedDict)
        with self.preset_configs() as config_lists:
            self.parser.read(config_lists)

        self.config_file = config
        if config is not None:
            self.load_user_config(config)

        # Load CLI last as it needs to override previous options.
        self._read_layer({section: {opt: str(arg) for opt, arg in options.items() if arg is not None}
                          for section, options in overrides.items()}, 'CLI')
        self._inherit_presets()


    def _read_layer(self, config, source):
        """ Read a dict of sections over the current configuration, clearing the replaced sections it sets """
        for section in self.replaced_sections:
            if config.get(section) and self.parser.has_section(section):
                self.parser.remove_section(section)
        self.parser.read_dict(config, source=source)


    @staticmethod
    @contextlib.contextmanager
    def preset_configs():
        """ Context manager that ensures the preset configurations are in a directory, and yields the sorted list """
        with importlib_resources.as_file(importlib_resources.files('pygravsafe') / 'presets') as defaults_path:
            yield sorted(defaults_path.glob('*.conf'))


    @functools.cache
    @staticmethod
    def load_toml_config(path):
        """ Load a TOML file

        Args:
            path (`str` or path-like): Path to a toml file to load

        Returns:
            `dict`: A dictionary of file contents
        """
        with open(path, 'rb') as f:
            return tomli.load(f)


    def load_user_config(self, path):
        """ Load a config file on top of the presets

        TOML files may hold their tables at the top level or under `tool.pygravsafe`. Nested tables such as
        `[sweep.grid]` map to the dotted section names.

        Args:
            path (`str` or path-like): Path to a configuration file to load
        """
        path = pathlib.Path(path)
        if not path.exists():
            raise FileNotFoundError(str(path))

        if path.suffix == '.toml':
            toml = Configuration.load_toml_config(path)
            toml = toml.get('tool', {}).get('pygravsafe', toml)
            config = {}

            def flatten(prefix, table):
                for key, value in table.items():
                    if isinstance(value, dict):
                        flatten(f'{prefix}{key}.', value)
                    else:
                        config.setdefault(prefix.rstrip('.'), {})[key] = self._toml_value(value)
            flatten('', toml)
        else:
            parser = configparser.RawConfigParser()
            try:
                parser.read(path)
            except configparser.Error as err:
                raise ConfigError(f'Malformed configuration file {path}: {err}') from err
            config = {section: dict(parser.items(section)) for section in parser.sections()}

        if '' in config:
            raise ConfigError(f'Options outside of any section in {path}: {", ".join(config[""])}')
        self._read_layer(config, str(path))


    @staticmethod
    def _toml_value(value):
        """ TOML scalars and arrays to the strings configparser stores: lists of numbers become whitespace lists """
        if isinstance(value, bool):
            return 'yes' if value else 'no'
        if isinstance(value, list) and all(isinstance(v, (int, float, str)) for v in value):
            return ' '.join(map(str, value))
        return str(value)


    def _inherit_presets(self):
        """ Copy raw options down from parent presets along `inherits` chains, which allows re-evaluating interpolations """
        resolved = set()

        def resolve(section, chain=()):
            if section in chain:
                raise ConfigError(f'Cyclic preset inheritance: {" -> ".join((*chain, section))}')
            if section in resolved or not self.parser.has_option(section, 'inherits'):
                return
            parent = self.parser.get(section, 'inherits')
            if not self.parser.has_section(parent):
                raise ConfigError(f'Preset {section} inherits from unknown preset {parent}')
            resolve(parent, (*chain, section))
            self.parser.read_dict({section: {key: value for key, value in self.parser.items(parent, raw=True)
                                             if not self.parser.has_option(section, key)}}, 'inherited')
            resolved.add(section)

        for section in self.parser.sections():
            if section not in self.reserved_sections:
                resolve(section)


    def presets(self):
        """ `list`: names of the available data-volume presets """
        return [section for section in self.parser.sections() if section not in self.reserved_sections]


    def section(self, name):
        """ `dict`: the interpolated options of a section """
        if not self.parser.has_section(name):
            raise ConfigError(f'Missing configuration section [{name}]')
        try:
            return dict(self.parser.items(name))
        except configparser.Error as err:
            raise ConfigError(f'Cannot interpolate section [{name}]: {err}') from err


    def get(self, section, option, convert=str, fallback=None):
        """ Read and convert one option, wrapping conversion failures in :class:`~ConfigError` """
        try:
            value = self.parser.get(section, option, fallback=None)
        except configparser.Error as err:
            raise ConfigError(f'Cannot read {section}:{option}: {err}') from err
        if value is None or value.strip() == '':
            if fallback is None:
                raise ConfigError(f'Missing option {option} in section [{section}]')
            return fallback
        try:
            return convert(value.strip())
        except (TypeError, ValueError) as err:
            raise ConfigError(f'Invalid value {value!r} for {section}:{option}: {err}') from err


    def get_list(self, section, option, convert=float, fallback=None):
        """ Read a whitespace- or comma-separated list option """
        return self.get(section, option, lambda text: [convert(item) for item in text.replace(',', ' ').split()],
                        fallback)


    def getboolean(self, section, option, fallback=None):
        """ Read a boolean option, with the configparser spellings """
        try:
            return self.parser.getboolean(section, option, fallback=fallback)
        except ValueError as err:
            raise ConfigError(f'Invalid boolean for {section}:{option}: {err}') from err


    def echo(self):
        """ `dict`: every effective option of every section, interpolated, for manifests """
        return {section: self.section(section) for section in self.parser.sections()}


    def digest(self):
        """ `str`: SHA-256 of the echoed configuration """
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode('utf-8')).hexdigest()
