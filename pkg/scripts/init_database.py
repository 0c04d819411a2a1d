"""
Creates the run registry tables.
Usage: python scripts/init_database.py [DATABASE_URL] [--drop]
"""
import argparse
import logging
import pathlib
import sys

# Ensure project root on sys.path for package imports
CURRENT_DIR = pathlib.Path(__file__).resolve().parent
ROOT_DIR = CURRENT_DIR.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from database.registry_models import RegistryManager  # noqa: E402
from utils.decorators import handle_errors  # noqa: E402
from utils.monitoring import configure_logging  # noqa: E402

logger = logging.getLogger(__name__)


@handle_errors()
def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Initialize the run registry')
    parser.add_argument('database_url', nargs='?', default=None,
                        help='SQLAlchemy URL (default: NTDA_DATABASE_URL)')
    parser.add_argument('--drop', action='store_true', help='drop existing tables first')
    args = parser.parse_args(argv)

    configure_logging()
    manager = RegistryManager(args.database_url)
    if args.drop:
        manager.drop_tables()
        logger.warning("Dropped registry tables")
    manager.create_tables()
    logger.info("Registry tables ready: runs, epoch_logs")
    return 0


if __name__ == '__main__':
    sys.exit(main())
