import sys
import argparse
from pathlib import Path

# project imports
from fermivmc import __version__
from fermivmc.commands import cmd_hf, cmd_ip, cmd_scan, cmd_train
from fermivmc.config import load_config
from fermivmc.errors import NUMERICAL_FAILURES, VmcError

# logging setup
import logging

logging.basicConfig(format='%(asctime)s - %(name)s - %(levelname)s - %(message)s', datefmt='%d-%b-%y %H:%M:%S')
logger = logging.getLogger('fermivmc')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='vmc.py', description='Neural-network variational Monte Carlo for small molecules.')
    parser.add_argument('--version', action='version', version=f'fermivmc {__version__}')
    commands = parser.add_subparsers(dest='command', required=True)

    def add_command(name, help):
        command = commands.add_parser(name, help=help)
        command.add_argument('--config', type=Path, required=True, help='run configuration (.ini)')
        command.add_argument('--seed', type=int, help='overrides [run] seed')
        command.add_argument('--out', type=Path, help='overrides [run] output')
        command.add_argument('--verbose', action='store_true', help='log per-iteration detail')
        return command

    add_command('hf', 'Hartree-Fock energy, Mulliken charges and electron assignment')
    train = add_command('train', 'pretrain and train the ansatz')
    train.add_argument('--resume', type=Path, help='continue from a checkpoint.db')
    scan = add_command('scan', 'bond-length scan of a diatomic molecule')
    scan.add_argument('--start', type=float, help='first bond length in Bohr')
    scan.add_argument('--stop', type=float, help='last bond length in Bohr')
    scan.add_argument('--points', type=int, help='number of bond lengths')
    ip = add_command('ip', 'ionization potential from a neutral and a cation run')
    ip.add_argument('--cation', type=Path, required=True, help='run configuration of the cation')
    return parser


def run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, output=args.out)
    if args.command == 'hf':
        report = cmd_hf(cfg)
        print('\n'.join(report.lines()))
    elif args.command == 'train':
        result = cmd_train(cfg, resume=args.resume)
        print('\n'.join(result.lines()))
    elif args.command == 'scan':
        for point in cmd_scan(cfg, args.start, args.stop, args.points):
            print(f'{point.distance:.4f} Bohr  {point.estimate}  (HF {point.hf_energy:.6f} Ha)')
    elif args.command == 'ip':
        cation_cfg = load_config(args.cation, seed=args.seed, output=args.out)
        print('\n'.join(cmd_ip(cfg, cation_cfg).lines()))
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors
        return 1 if e.code else 0
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return run(args)
    except NUMERICAL_FAILURES as e:
        logger.error(f'{type(e).__name__}: {e}')
        return 2
    except VmcError as e:
        logger.error(f'{type(e).__name__}: {e}')
        return 1


if __name__ == '__main__':
    sys.exit(main())
