import argparse
import logging
import os
import sys

from bsbu.config import parse_config
from bsbu.errors import BsbuError
from bsbu.experiment import COMMANDS, EXIT_FAILURE, run_command

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='solve',
        description='Price a variable annuity by least-squares Monte Carlo '
                    'and run the accompanying experiments')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True,
                        help='path of the key = value experiment document')
    parser.add_argument('--seed', type=int, help='root seed of the run')
    parser.add_argument('--repeats', type=int,
                        help='independent repeats per setting')
    parser.add_argument('--workers', type=int,
                        help='worker processes (default: CPU count)')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--verbose', action='store_true',
                        help='log at DEBUG level')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(format=('%(asctime)s - %(levelname)s - '
                                '%(name)s - %(message)s'),
                        level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        with open(args.config) as f:
            text = f.read()
        cfg = parse_config(text).with_overrides(
            seed=args.seed, repeats=args.repeats, workers=args.workers,
            out=args.out)
    except (BsbuError, OSError) as e:
        logger.error('cannot load config %s: %s', args.config, e)
        return EXIT_FAILURE
    logger.info('config %s loaded, output to %s', args.config,
                os.path.abspath(cfg.output_dir))
    return run_command(args.command, cfg)


if __name__ == '__main__':
    sys.exit(main())
