"""End-to-end generation and episode batches: one seed's funnel, fanned out
across a worker pool, merged deterministically.

Workers are plain top-level functions over picklable arguments so the pool
can be a process pool; jobs=1 short-circuits to in-process loops, which is
also the reference order every parallel merge must reproduce.
"""

import hashlib
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

from .config import Config
from .dataset import build_entry, build_gt_entries, enforce_ratio
from .failures import generate_failure_case
from .recovery import collect_candidates
from .sim import Simulator
from .supervisor import (
    PerturbedStreamPolicy,
    null_assistant,
    oracle_assistant_decide,
    run_supervised_episode,
    sample_harness_fault,
)
from .verifier import verify_candidates

ASSISTANTS = {"oracle": oracle_assistant_decide, "null": null_assistant}


def build_seed_entries(task_id, seed: int, cfg: Config, sim: Simulator | None = None) -> list:
    """One scene seed's dataset rows: injection, collection, verification,
    entry building for every surviving candidate, plus the seed's success
    windows."""
    sim = sim or Simulator(cfg)
    entries = []
    case = generate_failure_case(task_id, seed, cfg, sim)
    if case is not None:
        candidates = collect_candidates(case, seed, cfg.dataset.candidates_per_case)
        verify_candidates(case, candidates, cfg, sim)
        for candidate in candidates:
            if candidate.verified:
                entry = build_entry(case, candidate, cfg, sim)
                if entry is not None:
                    entries.append(entry)
    entries.extend(build_gt_entries(task_id, seed, cfg, sim))
    return entries


def _entries_worker(args) -> list:
    task_id, seed, cfg = args
    return build_seed_entries(task_id, seed, cfg)


def generate_task_entries(task_id, seeds, cfg: Config, jobs: int = 1) -> list:
    """All entries for one task over a seed range, ratio enforced.

    The merge concatenates per-seed blocks in ascending seed order whether
    or not a pool is used, so the output is identical for any jobs value.
    """
    seeds = list(seeds)
    if jobs <= 1:
        sim = Simulator(cfg)
        blocks = [build_seed_entries(task_id, seed, cfg, sim) for seed in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(
                pool.map(
                    _entries_worker,
                    [(task_id, seed, cfg) for seed in seeds],
                    chunksize=max(1, len(seeds) // (4 * jobs)),
                )
            )
    merged = [entry for block in blocks for entry in block]
    return enforce_ratio(merged, cfg)


def run_episode_pair(task_id, seed: int, cfg: Config, assistant: str, cadence=None):
    """(unassisted success, assisted success, assisted result) for one seed.

    Both runs carry the same confirmed fault, so the pair isolates exactly
    what the assistant contributed.
    """
    sim = Simulator(cfg)
    fault = sample_harness_fault(task_id, seed, cfg, sim)
    bare = run_supervised_episode(
        task_id, seed, PerturbedStreamPolicy(task_id, seed, cfg, fault),
        null_assistant, cfg, sim, cadence,
    )
    helped = run_supervised_episode(
        task_id, seed, PerturbedStreamPolicy(task_id, seed, cfg, fault),
        ASSISTANTS[assistant], cfg, sim, cadence,
    )
    return bare.success, helped.success, helped


def _episode_worker(args):
    task_id, seed, cfg, assistant, cadence = args
    return run_episode_pair(task_id, seed, cfg, assistant, cadence)


def supervise_task(task_id, seeds, cfg: Config, assistant: str = "oracle",
                   cadence=None, jobs: int = 1) -> list:
    """Episode pairs over a seed range: [(seed, bare_ok, helped_ok, result)]."""
    seeds = list(seeds)
    if jobs <= 1:
        outcomes = [run_episode_pair(task_id, s, cfg, assistant, cadence) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(
                pool.map(
                    _episode_worker,
                    [(task_id, s, cfg, assistant, cadence) for s in seeds],
                )
            )
    return [(seed, *outcome) for seed, outcome in zip(seeds, outcomes)]


def config_fingerprint(cfg: Config) -> str:
    """Semantic hash of a parsed config: equal settings, equal hash."""
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, cfg: Config, tasks, seeds, counts: dict, dataset_path) -> str:
    """Atomically write the run manifest; returns its own file hash.

    The manifest pins everything a later `verify` needs to trust the file:
    config hash, seed range, per-task counts, the merged dataset's hash,
    and the artifact version. No timestamps: identical runs must produce
    identical manifests.
    """
    from . import __version__

    seeds = list(seeds)
    manifest = {
        "artifact_version": __version__,
        "config_sha256": config_fingerprint(cfg),
        "tasks": list(tasks),
        "seed_range": [min(seeds), max(seeds)] if seeds else [],
        "counts": counts,
        "dataset_sha256": file_sha256(dataset_path),
    }
    payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return file_sha256(path)


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
