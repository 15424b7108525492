import hashlib


def clumped(iterable, n, *, complete=False):
    """
    Consecutive chunks of `n` items. The trailing partial chunk is kept unless `complete` is set.
    """
    it = iter(iterable)
    while True:
        clump = []
        for _ in range(n):
            try:
                clump.append(next(it))
            except StopIteration:
                if clump and not complete:
                    yield clump
                return
        yield clump


def short_hash(text: str, length: int = 12) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:length]


def provenance_lines(version: str, seed: int, config_hash: str, notes=()) -> list[str]:
    """
    Comment lines heading every CSV the commands write. Each note becomes one more comment line.
    """
    return [
        f'# fermivmc {version}',
        f'# seed {seed}',
        f'# config {config_hash}',
    ] + [f'# {note}' for note in notes]
