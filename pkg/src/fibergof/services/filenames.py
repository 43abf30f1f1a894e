import re
from datetime import datetime
from typing import Optional


def format_run_name(command: str, model: str, seed: int, stamp: Optional[str] = None) -> str:
    """Return canonical filename stem for a run.

    Example: 20201011T142208_test_p1-constant_s7
    """
    ts = stamp or datetime.now().strftime("%Y%m%dT%H%M%S")
    return f"{ts}_{command}_{model}_s{seed}"


def parse_seed(name: str) -> int:
    m = re.search(r"_s(\d+)(?:_|\.|$)", name)
    if not m:
        raise ValueError("seed not found in name")
    return int(m.group(1))


def parse_model(name: str) -> str:
    m = re.search(r"^\d{8}T\d{6}_[a-z]+_([a-z0-9-]+)_s\d+", name)
    if not m:
        raise ValueError("model not found in name")
    return m.group(1)
