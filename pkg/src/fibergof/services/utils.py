import os
import secrets
from typing import List, Optional, Tuple

from fibergof.errors import UsageError


def ensure_out_dir() -> str:
    """Return path to the run output directory and ensure it exists.

    Defaults to data/runs under the working directory. Override with FIBERGOF_OUT_DIR.

    Returns:
        Path to output directory (created if it doesn't exist)

    Raises:
        OSError: If directory cannot be created
    """
    default_dir = os.path.join(os.getcwd(), "data", "runs")
    base = os.environ.get("FIBERGOF_OUT_DIR", default_dir)
    os.makedirs(base, exist_ok=True)
    return base


def resolve_seed(explicit: Optional[int] = None) -> Tuple[int, str]:
    """Return (seed, source) from the flag, FIBERGOF_SEED, or a fresh random draw.

    Raises:
        UsageError: If FIBERGOF_SEED is not a 64-bit unsigned integer
    """
    if explicit is not None:
        return explicit, "flag"
    env = os.environ.get("FIBERGOF_SEED")
    if env:
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"FIBERGOF_SEED must be an integer, got {env!r}")
        if not 0 <= seed < 2**64:
            raise UsageError(f"FIBERGOF_SEED out of range: {seed}")
        return seed, "env"
    return secrets.randbits(64), "generated"


def is_valid_chain_params(steps: int, burn_in: int, thin: int) -> bool:
    """Validate chain length parameters.

    Args:
        steps: Total proposals including burn-in (must exceed burn_in)
        burn_in: Discarded initial steps (must be >= 0)
        thin: Recording interval (must be >= 1 and leave one kept sample)

    Returns:
        True if parameters are valid, False otherwise
    """
    if burn_in < 0 or thin < 1:
        return False
    if steps <= burn_in:
        return False
    if steps - burn_in < thin:
        return False
    return True


def parse_margins(text: str) -> Tuple[List[int], List[int]]:
    """Parse ``"1,1,1/1,1,1"`` into row and column margins.

    Raises:
        ValueError: If the text is not two comma-separated integer lists
    """
    parts = text.split("/")
    if len(parts) != 2:
        raise ValueError(f"margins must look like 'r1,r2/c1,c2', got {text!r}")
    try:
        rows = [int(x) for x in parts[0].split(",")]
        cols = [int(x) for x in parts[1].split(",")]
    except ValueError:
        raise ValueError(f"margins must be integers, got {text!r}")
    if min(rows + cols) < 0:
        raise ValueError("margins must be nonnegative")
    return rows, cols
