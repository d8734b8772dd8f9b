#!/usr/bin/python3
""" Command line interface to the gravity model characterization pipelines """

import io
import csv
import json
import logging
import pathlib
import functools

import click

from pygravsafe.config import Configuration, ConfigError
from pygravsafe.data import RejectedInitialConditionError
from pygravsafe.pipeline import (ContextConfig, RunConfig, SweepSpec, SweepAbortedError, emit_outputs, file_digest,
                                 generate_ic_list, influence_table, load_run_rows, read_ic_list, run_single, run_sweep,
                                 write_report)

EXIT_SWEEP_ABORTED = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3


def list_presets(context, option, value):
    """ Print the list of data volume presets that are available

    Args:
        context (:class:`~click.Context`): The click context
        option (:class:`~click.Option`): The list-presets flag
        value (`bool`): The list-presets flag’s option, `True` iff the flag is present
    """
    if not value or context.resilient_parsing:
        return

    click.echo('Available data volume presets:')
    for section in Configuration().presets():
        click.echo(f'- {section}')

    context.exit(0)


def exit_codes(command):
    """ Turn configuration errors into exit code 2 and I/O errors into exit code 3, with a message on stderr """
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, RejectedInitialConditionError) as err:
            click.echo(f'Configuration error: {err}', err=True)
            raise SystemExit(EXIT_CONFIG_ERROR)
        except OSError as err:
            click.echo(f'I/O error: {err}', err=True)
            raise SystemExit(EXIT_IO_ERROR)
    return wrapper


def load_configuration(config, settings, **run_options):
    """ Layer the configuration file and the command line overrides over the presets

    Args:
        config (`str` or `None`): path to a configuration file
        settings (`list` of 2-`str`-tuples): `section:key` / value pairs
        run_options: `[run]` options, ignored when `None`
    """
    overrides = {'run': {key: value for key, value in run_options.items() if value is not None}}
    for target, value in settings:
        section, sep, key = target.rpartition(':')
        if not sep or not section or not key:
            raise ConfigError(f'Override {target} is not of the form section:key')
        overrides.setdefault(section, {})[key] = value
    return Configuration(config, overrides)


def write_table(rows, out=None):
    """ Write dict rows as CSV to a file, or to standard output """
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, list(dict.fromkeys(key for row in rows for key in row)), lineterminator='\n')
    writer.writeheader()
    writer.writerows(rows)
    if out is None:
        click.echo(buffer.getvalue(), nl=False)
    else:
        pathlib.Path(out).write_text(buffer.getvalue())


config_option = click.option('--config', '-c', type=click.Path(exists=True, dir_okay=False),
                             help='Configuration file, INI-style or TOML, layered over the presets')
set_option = click.option('--set', '-s', 'settings', multiple=True, type=(str, str), metavar='<section:key> <value>',
                          help='Override a specific configuration value (repeatable)')


@click.group(help='Learn small-body gravity from trajectory data and characterize the learned models')
@click.option('--verbose', '-v', count=True, help='Log more (repeatable)')
@click.option('--list-presets', help='List the data volume presets', is_flag=True, callback=list_presets,
              expose_value=False, is_eager=True)
@click.help_option('--help', '-h')
def cli(verbose=0):
    """ Handle command line interface. Options passed on the command line override options from any config file. """
    logging.basicConfig(level=max(logging.WARNING - 10 * verbose, logging.DEBUG),
                        format='%(levelname)s %(name)s: %(message)s')


@cli.command('gen-ics', help='Generate a frozen list of collision-free initial condition pairs')
@click.option('--count', '-n', type=click.IntRange(min=1), required=True, help='Number of pairs')
@click.option('--seed', type=int, default=0, show_default=True, help='Seed of the element draws')
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True, help='CSV file of pairs')
@click.option('--screening-out', type=click.Path(dir_okay=False),
              help='CSV file of every screened draw with its periapsis and collision verdict')
@config_option
@set_option
@exit_codes
def gen_ics(count, seed, out, screening_out, config=None, settings=()):
    """ Rejection-sample the initial conditions and write them """
    ctx = ContextConfig.from_config(load_configuration(config, settings))
    generate_ic_list(ctx, count, seed, out, screening_out)
    click.echo(f'Wrote {count} initial condition pairs to {out}')


@cli.command('run', help='Train and characterize one framework on one pair of an --ics list written by gen-ics')
@click.option('--ics', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Initial condition list written by gen-ics')
@click.option('--ic-index', '-k', type=click.IntRange(min=0), default=0, show_default=True,
              help='Pair of the list to use')
@click.option('--out', '-o', type=click.Path(file_okay=False), required=True, help='Output directory')
@click.option('--framework', '-f', type=click.Choice(['gp', 'nn', 'truth']), help='Overrides [run] framework')
@click.option('--volume', help='Overrides [run] volume')
@click.option('--timings/--no-timings', default=False, help='Also write wall-clock durations to timings.json')
@config_option
@set_option
@exit_codes
def run(ics, ic_index, out, framework=None, volume=None, timings=False, config=None, settings=()):
    """ Run the single-run pipeline and write datasets, model and report """
    configuration = load_configuration(config, settings, framework=framework, volume=volume)
    ctx = ContextConfig.from_config(configuration)
    run_config = RunConfig.from_config(configuration)
    pairs, _ = read_ic_list(ics)
    if ic_index >= len(pairs):
        raise ConfigError(f'Initial condition index {ic_index} out of range, {ics} holds {len(pairs)} pairs')

    durations = {}
    provenance = {'config_digest': configuration.digest(), 'ic_digest': file_digest(ics)}
    _, report = run_single(run_config, ctx, pairs[ic_index], 0, ic_index, out, provenance, timings=durations)
    write_report(report, out, f'{run_config.framework}/{ic_index}')
    if timings:
        (pathlib.Path(out) / 'timings.json').write_text(json.dumps(durations, indent=2, sort_keys=True) + '\n')

    flag = ' (numerical instability during training)' if report.instability_flag else ''
    click.echo(f'Median fractional errors: train {report.median("train"):.3g}, '
               f'interpolation {report.median("interp_test"):.3g}, extrapolation {report.median("extrap_test"):.3g}'
               f'{flag}')


@cli.command('sweep', help='Characterize frameworks over a parameter grid on a shared initial condition list')
@click.option('--ics', type=click.Path(exists=True, dir_okay=False), required=True, help='Initial condition list')
@click.option('--out', '-o', type=click.Path(file_okay=False), required=True, help='Output directory')
@click.option('--workers', '-j', type=click.IntRange(min=0), help='Parallel runs, 0 for all cores')
@click.option('--timings/--no-timings', default=False, help='Also write wall-clock durations to timings.json')
@config_option
@set_option
@exit_codes
def sweep(ics, out, workers=None, timings=False, config=None, settings=()):
    """ Run the sweep and emit its outputs, partial ones if it aborts """
    configuration = load_configuration(config, settings)
    ctx = ContextConfig.from_config(configuration)
    spec = SweepSpec.from_config(configuration, ics, workers)
    try:
        result = run_sweep(spec, ctx, configuration, out)
    except SweepAbortedError as err:
        click.echo(f'{err}, partial results written to {out}', err=True)
        raise SystemExit(EXIT_SWEEP_ABORTED)
    emit_outputs(result, out, timings)
    click.echo(f'{len(result.reports)} of {result.run_count} runs succeeded, outputs written to {out}')


@cli.command('report', help='Tabulate the reports of a run or sweep output directory')
@click.option('--in', 'in_dir', type=click.Path(exists=True, file_okay=False), required=True,
              help='Output directory of run or sweep')
@click.option('--format', 'output_format', type=click.Choice(['csv', 'json']), default='csv', show_default=True)
@exit_codes
def report(in_dir, output_format):
    """ Print one row per run """
    rows = load_run_rows(in_dir)
    if output_format == 'json':
        click.echo(json.dumps(rows, indent=2, sort_keys=True))
    else:
        write_table(rows)


@cli.command('influence', help='Radius where each zonal term reaches a fraction of the potential at the Hill radius')
@click.option('--out', '-o', type=click.Path(dir_okay=False), help='CSV file, standard output if omitted')
@config_option
@set_option
@exit_codes
def influence(out=None, config=None, settings=()):
    """ Tabulate influence radii over colatitudes on the physical field """
    rows = influence_table(load_configuration(config, settings))
    write_table([{'degree': n, 'colatitude_deg': repr(theta), 'radius': '' if radius is None else repr(radius)}
                 for n, theta, radius in rows], out)


if __name__ == '__main__':
    cli()
