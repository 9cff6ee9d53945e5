import sys
import logging

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def main():
    """Run one pipeline stage, e.g. `python run.py gen-phantom --n 40 --seed 1 --out data/phantom`."""
    from src.cli import dispatch

    code = dispatch(sys.argv[1:])
    if code != 0:
        logger.info(f"Exiting with status {code}")
    sys.exit(code)


if __name__ == "__main__":
    main()
