from pathlib import Path
import csv, io, json, math, os, tempfile, logging

log = logging.getLogger("gridfn")

__all__ = ["write_text_atomic", "write_json_atomic", "write_csv_atomic", "json_safe"]


def _atomic_write_bytes(data: bytes, dest: Path):
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=str(dest.parent), delete=False) as tf:
        tf.write(data)
        tf.flush()
        os.fsync(tf.fileno())
        tmp = tf.name
    os.replace(tmp, dest)


def write_text_atomic(text: str, dest: Path):
    payload = text.encode("utf-8")
    _atomic_write_bytes(payload, Path(dest))
    log.info("Wrote %s (%d bytes)", dest, len(payload))


def json_safe(obj):
    """Replace non-finite floats (no JSON literal) with null, recursively."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return json_safe(obj.item())
    return obj


def write_json_atomic(obj, dest: Path):
    payload = json.dumps(json_safe(obj), ensure_ascii=False, indent=2, allow_nan=False).encode("utf-8")
    _atomic_write_bytes(payload, Path(dest))
    log.info("Wrote %s (%d bytes)", dest, len(payload))


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return "" if v is None else v


def write_csv_atomic(columns, rows, dest: Path):
    """Header plus rows; floats at full precision, LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns))
    for r in rows:
        w.writerow([_cell(v) for v in r])
    payload = buf.getvalue().encode("utf-8")
    _atomic_write_bytes(payload, Path(dest))
    log.info("Wrote %s (%d bytes)", dest, len(payload))
