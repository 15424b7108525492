"""
The four workflows behind the command line: hf, train, scan and ip.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from utils.misc import provenance_lines
from . import __version__
from .basis import BasisSet, build_basis
from .charge_init import ElectronAssignment, assign_electrons, split_spins
from .config import RunConfig
from .energy import EnergyEstimate
from .errors import ConfigError, GeometryError
from .molecule import Atom, Molecule, electron_count
from .scf import MullikenReport, ScfSolution, dump_matrices, run_uhf, mulliken
from .trainer import Trainer, TrainTrace


@dataclass
class HfReport:
    molecule: Molecule
    basis: BasisSet
    scf: ScfSolution
    mulliken: MullikenReport
    assignment: ElectronAssignment

    def lines(self) -> list[str]:
        return [
            f'molecule          {self.molecule}',
            f'total energy      {self.scf.total_energy:.10f} Ha',
            f'scf iterations    {self.scf.iterations}',
            'partial charges   ' + ' '.join(f'{q:+.8f}' for q in self.mulliken.partial_charges),
            f'electrons         {list(self.assignment.per_atom_electrons)}',
            f'up / down         {list(self.assignment.per_atom_up)} / {list(self.assignment.per_atom_down)}',
        ]


@dataclass
class TrainResult:
    estimate: EnergyEstimate
    hf_energy: float
    trace: TrainTrace
    output: Path

    def lines(self) -> list[str]:
        return [
            f'energy            {self.estimate.mean:.6f} +/- {self.estimate.std_error:.6f} Ha',
            f'hf energy         {self.hf_energy:.10f} Ha',
            f'outputs           {self.output}',
        ]


@dataclass
class ScanPoint:
    distance: float
    estimate: EnergyEstimate
    hf_energy: float
    reference: Optional[float] = None


@dataclass
class IpResult:
    ionization_potential: float
    std_error: float
    hf_ionization_potential: float
    neutral: TrainResult
    cation: TrainResult
    reference: Optional[float] = None

    def lines(self) -> list[str]:
        lines = [
            f'ionization potential     {self.ionization_potential:.6f} +/- {self.std_error:.6f} Ha',
            f'hf ionization potential  {self.hf_ionization_potential:.6f} Ha',
        ]
        if self.reference is not None:
            closer = abs(self.ionization_potential - self.reference) < abs(self.hf_ionization_potential - self.reference)
            lines.append(f'reference                {self.reference:.6f} Ha '
                         f'({"closer" if closer else "not closer"} than HF)')
        return lines


def run_hf(mol: Molecule, cfg: RunConfig) -> HfReport:
    """
    Basis, UHF, Mulliken analysis and the per-nucleus electron assignment for one molecule.
    """
    basis = build_basis(mol)
    n_up, n_down = electron_count(mol)
    scf = run_uhf(mol, basis, n_up, n_down, cfg.scf)
    scf.require_converged()
    report = mulliken(scf, basis, mol)
    electrons = assign_electrons(report.partial_charges, mol.charges, mol.ionic_charge)
    assignment = split_spins(electrons, n_up, n_down)
    logger.info(f'Electron assignment for {mol}: {electrons} (up {list(assignment.per_atom_up)}, '
                f'down {list(assignment.per_atom_down)})')
    return HfReport(mol, basis, scf, report, assignment)


def cmd_hf(cfg: RunConfig) -> HfReport:
    report = run_hf(cfg.molecule, cfg)
    if cfg.dump_scf:
        cfg.output.mkdir(parents=True, exist_ok=True)
        dump_matrices(report.scf, cfg.output / 'scf_matrices.txt')
    return report


def _write_summary(path: Path, header: list[str], estimate: EnergyEstimate, hf: HfReport, trace: TrainTrace):
    lines = header + [
        f'molecule {hf.molecule}',
        f'hf_energy {hf.scf.total_energy:.10f}',
        f'energy {estimate.mean:.10f}',
        f'stderr {estimate.std_error:.10f}',
        f'samples {estimate.n_samples}',
        f'iterations {len(trace)}',
    ]
    path.write_text('\n'.join(lines) + '\n')


def cmd_train(cfg: RunConfig, resume: Optional[Path] = None, dump_config: bool = True, notes=()) -> TrainResult:
    """
    HF, charge initialization, walker initialization, pretraining and training. Writes
    trace.csv, checkpoint.db, summary.txt and effective_config.ini to the output directory.
    `notes` are extra provenance comments for trace.csv and summary.txt.
    """
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    if dump_config:
        cfg.dump(out / 'effective_config.ini')

    hf = run_hf(cfg.molecule, cfg)
    if cfg.dump_scf:
        dump_matrices(hf.scf, out / 'scf_matrices.txt')

    trainer = Trainer(
        cfg.molecule, hf.scf, hf.basis, hf.assignment,
        cfg.ansatz_config(hf.scf.n_up, hf.scf.n_down), cfg.sampler, cfg.train,
        progress=cfg.progress, wall_clock=cfg.wall_clock,
    )
    if resume is not None:
        trainer.restore(resume)
    estimate = trainer.run(checkpoint_path=out / 'checkpoint.db')

    header = provenance_lines(__version__, cfg.seed, cfg.config_hash, notes)
    trainer.trace.to_csv(out / 'trace.csv', header)
    trainer.save(out / 'checkpoint.db')
    _write_summary(out / 'summary.txt', header, estimate, hf, trainer.trace)
    logger.info(f'{cfg.molecule}: E = {estimate} (HF {hf.scf.total_energy:.6f} Ha)')
    return TrainResult(estimate, hf.scf.total_energy, trainer.trace, out)


def _stretched(mol: Molecule, distance: float) -> Molecule:
    """
    The diatomic with its second nucleus moved along the bond axis to `distance` Bohr from the first.
    """
    first, second = mol.atoms
    axis = np.asarray(second.position) - np.asarray(first.position)
    axis = axis / np.linalg.norm(axis)
    position = tuple(float(x) for x in np.asarray(first.position) + distance * axis)
    atoms = (first, Atom(second.symbol, second.atomic_number, position))
    return Molecule(atoms, mol.ionic_charge, mol.spin_multiplicity)


def scan_distances(cfg: RunConfig, start=None, stop=None, points=None) -> np.ndarray:
    start = cfg.scan.start if start is None else start
    stop = cfg.scan.stop if stop is None else stop
    points = cfg.scan.points if points is None else points
    if start is None or stop is None or points is None:
        raise ConfigError('A scan needs start, stop and points, from [scan] or the command line.')
    if points < 1 or start <= 0 or stop <= 0:
        raise ConfigError(f'Invalid scan range {start} to {stop} with {points} points.')
    return np.linspace(start, stop, points) if points > 1 else np.array([start])


def cmd_scan(cfg: RunConfig, start=None, stop=None, points=None) -> list[ScanPoint]:
    """
    One training run per bond length; writes scan.csv ordered by distance.
    """
    if cfg.molecule.n_atoms != 2:
        raise GeometryError(f'A bond scan needs a diatomic molecule, got {cfg.molecule}.')
    distances = scan_distances(cfg, start, stop, points)
    references = cfg.scan.references
    if references is not None and len(references) != len(distances):
        raise ConfigError(f'{len(references)} reference energies for {len(distances)} scan points.')
    order = np.argsort(distances, kind='stable')
    distances = distances[order]
    if references is not None:
        references = [references[i] for i in order]

    cfg.output.mkdir(parents=True, exist_ok=True)
    cfg.dump(cfg.output / 'effective_config.ini')
    results = []
    for index, distance in enumerate(tqdm(distances, desc='scan', disable=not cfg.progress)):
        logger.info(f'Scan point {index + 1}/{len(distances)}: {distance:.4f} Bohr')
        point_cfg = cfg.with_molecule(_stretched(cfg.molecule, distance)).with_output(cfg.output / f'point_{index:02d}')
        result = cmd_train(point_cfg, dump_config=False, notes=[f'distance_bohr {distance:.6f}'])
        reference = references[index] if references is not None else None
        if result.estimate.mean > result.hf_energy + 3 * result.estimate.std_error:
            logger.warning(f'At {distance:.4f} Bohr the trained energy {result.estimate.mean:.6f} lies above '
                           f'HF {result.hf_energy:.6f} by more than 3 standard errors.')
        results.append(ScanPoint(float(distance), result.estimate, result.hf_energy, reference))

    header = 'distance_bohr,energy,stderr,hf_energy' + (',reference' if references is not None else '')
    lines = provenance_lines(__version__, cfg.seed, cfg.config_hash) + [header]
    for point in results:
        fields = [f'{point.distance:.6f}', f'{point.estimate.mean:.10f}', f'{point.estimate.std_error:.10f}',
                  f'{point.hf_energy:.10f}']
        if point.reference is not None:
            fields.append(f'{point.reference:.10f}')
        lines.append(','.join(fields))
    (cfg.output / 'scan.csv').write_text('\n'.join(lines) + '\n')
    return results


def cmd_ip(neutral_cfg: RunConfig, cation_cfg: RunConfig) -> IpResult:
    """
    Ionization potential E(cation) - E(neutral) from two training runs, next to the HF-level value.
    Outputs go to neutral/ and cation/ under the neutral config's output directory, with ip.csv.
    """
    difference = cation_cfg.molecule.ionic_charge - neutral_cfg.molecule.ionic_charge
    if difference != 1:
        logger.warning(f'Ionic charges differ by {difference}, not 1; the result is not an ionization potential.')

    out = neutral_cfg.output
    neutral = cmd_train(neutral_cfg.with_output(out / 'neutral'))
    cation = cmd_train(cation_cfg.with_output(out / 'cation'))

    ip = cation.estimate.mean - neutral.estimate.mean
    std_error = float(np.hypot(cation.estimate.std_error, neutral.estimate.std_error))
    reference = neutral_cfg.ip_reference
    result = IpResult(ip, std_error, cation.hf_energy - neutral.hf_energy, neutral, cation, reference)

    lines = provenance_lines(__version__, neutral_cfg.seed, neutral_cfg.config_hash) + [
        'method,ionization_potential,stderr',
        f'hf,{result.hf_ionization_potential:.10f},0.0000000000',
        f'vmc,{result.ionization_potential:.10f},{result.std_error:.10f}',
    ]
    if reference is not None:
        lines.append(f'reference,{reference:.10f},')
    (out / 'ip.csv').write_text('\n'.join(lines) + '\n')
    logger.info(f'Ionization potential {ip:.6f} +/- {std_error:.6f} Ha (HF {result.hf_ionization_potential:.6f} Ha)')
    return result
