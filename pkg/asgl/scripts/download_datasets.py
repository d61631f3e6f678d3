#!/usr/bin/env python3
"""
Fetch the public signed-network datasets into DATA_DIR.
Run with: python -m asgl.scripts.download_datasets [name ...]
"""
import argparse
import gzip
import logging
import re
import sys
from pathlib import Path
from typing import NamedTuple, Optional

import httpx
from tqdm import tqdm

from asgl.config import configure_logging, settings
from asgl.utils.storage import calculate_checksum

logger = logging.getLogger(__name__)

SNAP_BASE_URL = "https://snap.stanford.edu/data"


class Dataset(NamedTuple):
    url: str
    filename: str
    # Whether the raw file needs the username-vote conversion
    vote_blocks: bool = False


DATASETS = {
    "bitcoin-alpha": Dataset(f"{SNAP_BASE_URL}/soc-sign-bitcoinalpha.csv.gz", "bitcoin-alpha.csv"),
    "bitcoin-otc": Dataset(f"{SNAP_BASE_URL}/soc-sign-bitcoinotc.csv.gz", "bitcoin-otc.csv"),
    "slashdot": Dataset(f"{SNAP_BASE_URL}/soc-sign-Slashdot090221.txt.gz", "slashdot.txt"),
    "epinions": Dataset(f"{SNAP_BASE_URL}/soc-sign-epinions.txt.gz", "epinions.txt"),
    "wiki-rfa": Dataset(f"{SNAP_BASE_URL}/wiki-RfA.txt.gz", "wiki-rfa.txt", vote_blocks=True),
}

_FIELD = re.compile(r"^(SRC|TGT|VOT):(.*)$")


def download(url: str, target: Path, timeout: float = 60.0) -> Path:
    """Stream ``url`` to ``target`` and return the path."""
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".part")
    with httpx.stream("GET", url, follow_redirects=True, timeout=timeout) as response:
        response.raise_for_status()
        total = int(response.headers.get("content-length", 0)) or None
        with tmp.open("wb") as fh, tqdm(
            total=total, unit="B", unit_scale=True, desc=target.name, disable=not settings.SHOW_PROGRESS
        ) as bar:
            for chunk in response.iter_bytes():
                fh.write(chunk)
                bar.update(len(chunk))
    tmp.replace(target)
    return target


def convert_vote_blocks(lines, out) -> int:
    """Turn ``SRC:/TGT:/VOT:`` blocks into ``u v vote`` lines.

    Usernames are numbered in sorted order; blocks with a missing
    source or target are skipped. Neutral votes stay as 0, so ingest
    this file with ``--weight-rule sign-skip-zero``.
    """
    votes = []
    current: dict[str, str] = {}
    for raw in lines:
        line = raw.strip()
        if not line:
            if current:
                votes.append(current)
            current = {}
            continue
        match = _FIELD.match(line)
        if match:
            current[match.group(1)] = match.group(2).strip()
    if current:
        votes.append(current)

    votes = [v for v in votes if v.get("SRC") and v.get("TGT") and v.get("VOT")]
    names = sorted({v["SRC"] for v in votes} | {v["TGT"] for v in votes})
    ids = {name: i for i, name in enumerate(names)}
    for v in votes:
        out.write(f"{ids[v['SRC']]} {ids[v['TGT']]} {int(v['VOT'])}\n")
    return len(votes)


def fetch(name: str, data_dir: Optional[Path] = None, force: bool = False) -> Path:
    dataset = DATASETS[name]
    data_dir = Path(data_dir or settings.DATA_DIR)
    target = data_dir / dataset.filename
    if target.exists() and not force:
        logger.info(f"{name}: {target} already present, skipping")
        return target

    archive = download(dataset.url, data_dir / Path(dataset.url).name)
    with gzip.open(archive, "rt", encoding="utf-8", errors="replace") as src, target.open(
        "w", encoding="utf-8"
    ) as dst:
        if dataset.vote_blocks:
            count = convert_vote_blocks(src, dst)
            logger.info(f"{name}: converted {count} votes")
        else:
            for line in src:
                dst.write(line)
    archive.unlink()
    logger.info(f"{name}: wrote {target} (sha256 {calculate_checksum(target)[:12]})")
    return target


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Download signed-network datasets")
    parser.add_argument(
        "names", nargs="*", help=f"datasets to fetch: {', '.join(DATASETS)} (default: the two Bitcoin graphs)"
    )
    parser.add_argument("--data-dir", type=Path, help="target directory (default: ASGL_DATA_DIR)")
    parser.add_argument("--force", action="store_true", help="download again even if the file exists")
    args = parser.parse_args(argv)
    configure_logging()

    names = args.names or ["bitcoin-alpha", "bitcoin-otc"]
    unknown = [n for n in names if n not in DATASETS]
    if unknown:
        parser.error(f"unknown dataset(s): {', '.join(unknown)}")

    failed = 0
    for name in names:
        try:
            fetch(name, args.data_dir, force=args.force)
        except httpx.HTTPError as e:
            logger.error(f"{name}: download failed: {e}")
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
