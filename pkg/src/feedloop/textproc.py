"""Tokenization and hashing shared by the classifier, drift detector, and split assignment.

Every component that hashes text uses the same FNV-1a 32-bit function so that
drift is measured in the feature space the classifier actually sees.
"""

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193
FEATURE_DIM = 1 << 18


def fnv1a_32(data: bytes) -> int:
    """FNV-1a over bytes, 32-bit arithmetic."""
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def fnv1a_str(text: str) -> int:
    return fnv1a_32(text.encode("utf-8"))


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric unicode boundaries, dropping empties."""
    tokens: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def bucket(token: str) -> int:
    """Hash bucket of a token in the classifier's feature space."""
    return fnv1a_str(token) % FEATURE_DIM
