"""Plain-text ``key = value`` files used for sidecars and scene specs."""

from pathlib import Path


def read_kv(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path, items, header=None):
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header)
    lines.extend(f"{k} = {v}" for k, v in items.items())
    Path(path).write_text("\n".join(lines) + "\n")
