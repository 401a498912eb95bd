import logging
import re
from typing import Iterable, List, Set

LOGGER_NAME = "skillflow"

_MASK64 = (1 << 64) - 1
_WORD_RE = re.compile(r"[a-z0-9]+")


def get_logger(name: str = LOGGER_NAME) -> logging.Logger:
    logger = logging.getLogger(name)
    root = logging.getLogger(LOGGER_NAME)
    if not root.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(
            "%(asctime)s | %(levelname)s | %(message)s", "%H:%M:%S"
        )
        handler.setFormatter(formatter)
        root.addHandler(handler)
        root.setLevel(logging.INFO)
    return logger


def dedupe_preserve_order(items: Iterable[str]) -> List[str]:
    seen: Set[str] = set()
    result: List[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            result.append(item)
    return result


def splitmix64(value: int) -> int:
    """One SplitMix64 step: a 64-bit avalanche of ``value``."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """
    Child seed for substream ``stream`` of ``seed``.

    The child only depends on (seed, stream), so adding streams never
    perturbs the seeds of existing ones.
    """
    return splitmix64((splitmix64(seed & _MASK64) ^ (stream & _MASK64)) & _MASK64)


def normalize_word(word: str) -> str:
    """Lowercase and strip a plural ``s`` (``spots`` -> ``spot``)."""
    word = word.lower()
    if len(word) > 3 and word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


def word_tokens(text: str) -> List[str]:
    """Split text (or a snake_case identifier) into normalized words."""
    return [normalize_word(w) for w in _WORD_RE.findall(text.lower().replace("_", " "))]
