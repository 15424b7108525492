"""
Run configuration: an .ini file with one section per engine module.
"""
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from utils.misc import short_hash
from .ansatz import AnsatzConfig
from .errors import ConfigError
from .molecule import Molecule, parse_geometry
from .sampler import SamplerConfig
from .scf import ScfOptions
from .trainer import TrainConfig


# section -> key -> default, as written in an effective config; None means "unset"
DEFAULTS = {
    'molecule': {
        'geometry': None,
        'ionic_charge': '0',
        'multiplicity': None,
    },
    'scf': {
        'max_iterations': '200',
        'damping': '0.5',
        'damping_iterations': '5',
        'density_tolerance': '1e-08',
        'energy_tolerance': '1e-10',
        'dump': 'false',
    },
    'sampler': {
        'batch_size': '8',
        'steps_between_updates': '10',
        'proposal_std': '0.2',
        'init_std': '1.0',
        'burn_in_steps': '500',
    },
    'ansatz': {
        'n_determinants': '4',
        'hidden_one': '32',
        'hidden_two': '8',
        'n_layers': '2',
    },
    'train': {
        'pretrain_epochs': '100',
        'train_iterations': '2000',
        'learning_rate_pretrain': '0.001',
        'learning_rate_train': '0.0003',
        'optimizer': 'adam',
        'gradient_clip_norm': '1.0',
        'checkpoint_every': '0',
        'winsorize': 'true',
        'final_window': '200',
        'blocking': '0',
    },
    'scan': {
        'start': None,
        'stop': None,
        'points': None,
        'references': None,
    },
    'ip': {
        'reference': None,
    },
    'run': {
        'seed': '0',
        'output': 'out',
    },
    'output': {
        'progress': 'true',
        'wall_clock': 'false',
    },
}


@dataclass(frozen=True)
class ScanSettings:
    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = None
    references: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class RunConfig:
    path: Path
    geometry: Path
    molecule: Molecule
    scf: ScfOptions
    dump_scf: bool
    sampler: SamplerConfig
    ansatz: dict
    train: TrainConfig
    scan: ScanSettings
    ip_reference: Optional[float]
    seed: int
    output: Path
    progress: bool
    wall_clock: bool
    effective: ConfigParser

    def __repr__(self):
        return f'RunConfig({self.path}, {self.molecule}, seed={self.seed})'

    def ansatz_config(self, n_up: int, n_down: int) -> AnsatzConfig:
        return AnsatzConfig(n_up, n_down, **self.ansatz)

    def with_molecule(self, molecule: Molecule):
        return replace(self, molecule=molecule)

    def with_output(self, output: Path):
        return replace(self, output=Path(output))

    @property
    def config_hash(self) -> str:
        """
        Hash of everything that affects results; the output directory is left out.
        """
        lines = [f'[{section}] {key} = {value}'
                 for section in self.effective.sections()
                 for key, value in self.effective[section].items()
                 if (section, key) != ('run', 'output')]
        return short_hash('\n'.join(lines))

    def dump(self, path: Path):
        effective = ConfigParser(interpolation=None)
        effective.read_dict({section: dict(self.effective[section]) for section in self.effective.sections()})
        effective['run']['output'] = str(self.output.resolve())
        with open(path, 'w') as f:
            effective.write(f)


def _get(getter, section, key):
    try:
        return getter(section, key)
    except ValueError as e:
        raise ConfigError(f'[{section}] {key}: {e}') from None


def _optional(parser, section, key, convert):
    value = parser[section].get(key)
    if value is None or value.strip().lower() in ('', 'none'):
        return None
    try:
        return convert(value)
    except ValueError as e:
        raise ConfigError(f'[{section}] {key}: {e}') from None


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(','))


def load_config(path: Path, seed: Optional[int] = None, output: Optional[Path] = None) -> RunConfig:
    """
    Read a run configuration. Relative paths resolve against the config file's directory;
    `seed` and `output` override [run].
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'Config file {path} does not exist.')
    parser = ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except ConfigParserError as e:
        raise ConfigError(f'{path}: {e}') from None
    if parser.defaults():
        raise ConfigError(f'{path}: a [DEFAULT] section is not supported.')

    effective = ConfigParser(interpolation=None)
    for section, keys in DEFAULTS.items():
        effective[section] = {key: value for key, value in keys.items() if value is not None}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f'{path}: unknown section [{section}].')
        for key, value in parser[section].items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f'{path}: unknown key {key!r} in [{section}].')
            effective[section][key] = value
    if seed is not None:
        effective['run']['seed'] = str(seed)
    if output is not None:
        effective['run']['output'] = str(output)

    base = path.resolve().parent
    if 'geometry' not in effective['molecule']:
        raise ConfigError(f'{path}: [molecule] geometry is required.')
    geometry = base / effective['molecule']['geometry']
    if not geometry.is_file():
        raise ConfigError(f'{path}: geometry file {geometry} does not exist.')
    effective['molecule']['geometry'] = str(geometry)

    run_seed = _get(effective.getint, 'run', 'seed')
    molecule = parse_geometry(
        geometry.read_text(),
        ionic_charge=_get(effective.getint, 'molecule', 'ionic_charge'),
        spin_multiplicity=_optional(effective, 'molecule', 'multiplicity', int),
    )
    scf = ScfOptions(
        max_iterations=_get(effective.getint, 'scf', 'max_iterations'),
        damping=_get(effective.getfloat, 'scf', 'damping'),
        damping_iterations=_get(effective.getint, 'scf', 'damping_iterations'),
        density_tolerance=_get(effective.getfloat, 'scf', 'density_tolerance'),
        energy_tolerance=_get(effective.getfloat, 'scf', 'energy_tolerance'),
    )
    sampler = SamplerConfig(
        batch_size=_get(effective.getint, 'sampler', 'batch_size'),
        steps_between_updates=_get(effective.getint, 'sampler', 'steps_between_updates'),
        proposal_std=_get(effective.getfloat, 'sampler', 'proposal_std'),
        init_std=_get(effective.getfloat, 'sampler', 'init_std'),
        burn_in_steps=_get(effective.getint, 'sampler', 'burn_in_steps'),
        seed=run_seed,
    )
    ansatz = {key: _get(effective.getint, 'ansatz', key) for key in DEFAULTS['ansatz']}
    AnsatzConfig(1, 0, **ansatz)
    train = TrainConfig(
        pretrain_epochs=_get(effective.getint, 'train', 'pretrain_epochs'),
        train_iterations=_get(effective.getint, 'train', 'train_iterations'),
        learning_rate_pretrain=_get(effective.getfloat, 'train', 'learning_rate_pretrain'),
        learning_rate_train=_get(effective.getfloat, 'train', 'learning_rate_train'),
        optimizer=effective['train']['optimizer'].strip().lower(),
        gradient_clip_norm=_optional(effective, 'train', 'gradient_clip_norm', float),
        checkpoint_every=_get(effective.getint, 'train', 'checkpoint_every'),
        seed=run_seed,
        winsorize=_get(effective.getboolean, 'train', 'winsorize'),
        final_window=_get(effective.getint, 'train', 'final_window'),
        blocking=_get(effective.getint, 'train', 'blocking'),
    )
    scan = ScanSettings(
        start=_optional(effective, 'scan', 'start', float),
        stop=_optional(effective, 'scan', 'stop', float),
        points=_optional(effective, 'scan', 'points', int),
        references=_optional(effective, 'scan', 'references', _floats),
    )

    config = RunConfig(
        path=path,
        geometry=geometry,
        molecule=molecule,
        scf=scf,
        dump_scf=_get(effective.getboolean, 'scf', 'dump'),
        sampler=sampler,
        ansatz=ansatz,
        train=train,
        scan=scan,
        ip_reference=_optional(effective, 'ip', 'reference', float),
        seed=run_seed,
        output=base / effective['run']['output'] if output is None else Path(output),
        progress=_get(effective.getboolean, 'output', 'progress'),
        wall_clock=_get(effective.getboolean, 'output', 'wall_clock'),
        effective=effective,
    )
    logger.debug(f'Loaded {config} (config hash {config.config_hash}).')
    return config
