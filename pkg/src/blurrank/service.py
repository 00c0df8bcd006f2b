"""Annotation service: serve image pairs, record judgments, export majority labels.

The append-only judgment log is the source of truth; all in-memory state
is a cache that can be reconstructed by replaying the log. Presentation
order (which image is shown on the left) is a deterministic function of
(campaign seed, pair, annotator), so choices always map back to the
canonical pair orientation without extra bookkeeping.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (
    CHOICE_FIRST,
    CHOICE_SECOND,
    CHOICE_SKIP,
    Judgment,
    Manifest,
    PairLabel,
    append_judgment,
    canonical_pair,
    majority_vote,
    now_timestamp,
    read_judgment_log,
    split_pair_id,
)
from .errors import InvalidArgument

CLIENT_CHOICES = ("left_blurrier", "right_blurrier", "skip")


@dataclass
class Campaign:
    manifest: Manifest
    pair_ids: list[str]  # canonical "id1::id2" pair ids to label
    log_path: Path
    target_annotators: int = 3
    seed: int = 0


class NotFound(Exception):
    pass


class Conflict(Exception):
    pass


def _stable_uint(*parts: str) -> int:
    h = hashlib.sha256("\x1f".join(parts).encode()).digest()
    return int.from_bytes(h[:8], "big")


@dataclass
class ExportResult:
    labels: list[PairLabel]
    counts: dict = field(default_factory=dict)


class AnnotationService:
    """Campaign state machine; the HTTP layer is a thin wrapper around this."""

    def __init__(self, campaign: Campaign):
        known = campaign.manifest.image_by_id()
        for pid in campaign.pair_ids:
            a, b = split_pair_id(pid)
            if a not in known or b not in known:
                raise InvalidArgument(f"campaign pair {pid!r} references unknown image ids")
        self.campaign = campaign
        self._lock = threading.Lock()
        self._queues: dict[str, list[str]] = {}
        self._served: dict[str, set[str]] = {}
        # effective judgments: pair_id -> annotator_id -> Judgment
        self._judgments: dict[str, dict[str, Judgment]] = {}
        for j in read_judgment_log(campaign.log_path):
            self._judgments.setdefault(j.pair_id, {})[j.annotator_id] = j

    # -- presentation -----------------------------------------------------

    def _queue_for(self, annotator_id: str) -> list[str]:
        q = self._queues.get(annotator_id)
        if q is None:
            rng = np.random.default_rng(_stable_uint(str(self.campaign.seed), "queue", annotator_id))
            order = rng.permutation(len(self.campaign.pair_ids))
            q = [self.campaign.pair_ids[i] for i in order]
            self._queues[annotator_id] = q
        return q

    def left_is_first(self, pair_id: str, annotator_id: str) -> bool:
        """Deterministic left/right presentation coin for this (pair, annotator)."""
        return _stable_uint(str(self.campaign.seed), "side", pair_id, annotator_id) % 2 == 0

    def _judged(self, annotator_id: str, pair_id: str) -> bool:
        return annotator_id in self._judgments.get(pair_id, {})

    # -- protocol ---------------------------------------------------------

    def next_pair(self, annotator_id: str) -> Optional[dict]:
        """The annotator's next unjudged pair, or None when the queue is done.

        Re-requesting without judging returns the same pair."""
        if not annotator_id:
            raise InvalidArgument("annotator id must be nonempty")
        queue = self._queue_for(annotator_id)
        judged = sum(1 for pid in queue if self._judged(annotator_id, pid))
        for pid in queue:
            if not self._judged(annotator_id, pid):
                self._served.setdefault(annotator_id, set()).add(pid)
                first_id, second_id = split_pair_id(pid)
                if self.left_is_first(pid, annotator_id):
                    left, right = first_id, second_id
                else:
                    left, right = second_id, first_id
                return {
                    "pair_id": pid,
                    "left_image_id": left,
                    "right_image_id": right,
                    "progress": {"judged": judged, "total": len(queue)},
                }
        return None

    def submit_judgment(self, annotator_id: str, pair_id: str, choice: str) -> None:
        """Translate a left/right choice to canonical terms and append it."""
        if pair_id not in set(self.campaign.pair_ids):
            raise NotFound(f"unknown pair {pair_id!r}")
        if choice not in CLIENT_CHOICES:
            raise InvalidArgument(f"choice must be one of {CLIENT_CHOICES}, got {choice!r}")
        with self._lock:
            served = self._served.get(annotator_id, set())
            already_judged = self._judged(annotator_id, pair_id)
            if pair_id not in served and not already_judged:
                raise Conflict(f"pair {pair_id!r} was not served to annotator {annotator_id!r}")
            if choice == "skip":
                canonical = CHOICE_SKIP
            else:
                left_first = self.left_is_first(pair_id, annotator_id)
                chose_left = choice == "left_blurrier"
                canonical = CHOICE_FIRST if chose_left == left_first else CHOICE_SECOND
            judgment = Judgment(
                pair_id=pair_id,
                annotator_id=annotator_id,
                choice=canonical,
                timestamp=now_timestamp(),
            )
            append_judgment(self.campaign.log_path, judgment)
            self._judgments.setdefault(pair_id, {})[annotator_id] = judgment

    def export_labels(self) -> ExportResult:
        """Majority-vote every pair; only strict majorities yield labels."""
        labels = []
        labeled = excluded = pending = 0
        for pid in self.campaign.pair_ids:
            effective = list(self._judgments.get(pid, {}).values())
            delta = majority_vote(effective)
            if delta is not None:
                a, b = split_pair_id(pid)
                labels.append(canonical_pair(a, b, delta))
                labeled += 1
            elif len(effective) >= self.campaign.target_annotators:
                excluded += 1
            else:
                pending += 1
        return ExportResult(
            labels=labels,
            counts={"labeled": labeled, "excluded": excluded, "pending": pending},
        )

    def progress(self) -> dict:
        per_annotator = {
            a: sum(1 for pid in self.campaign.pair_ids if self._judged(a, pid))
            for a in sorted({a for js in self._judgments.values() for a in js} | set(self._queues))
        }
        coverage = {
            pid: len(self._judgments.get(pid, {})) for pid in self.campaign.pair_ids
        }
        fully_covered = sum(
            1 for c in coverage.values() if c >= self.campaign.target_annotators
        )
        return {
            "pairs_total": len(self.campaign.pair_ids),
            "pairs_fully_covered": fully_covered,
            "per_annotator": {a: {"judged": n, "total": len(self.campaign.pair_ids)} for a, n in per_annotator.items()},
            "per_pair_coverage": coverage,
        }


def create_app(service: AnnotationService, static_dir=None):
    """FastAPI wrapper exposing the fixed endpoint paths."""
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.responses import FileResponse, JSONResponse
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="blurrank annotation service")

    @app.exception_handler(InvalidArgument)
    async def _bad_request(request: Request, exc: InvalidArgument):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(NotFound)
    async def _not_found(request: Request, exc: NotFound):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(Conflict)
    async def _conflict(request: Request, exc: Conflict):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/api/campaign")
    def campaign_info():
        return {
            "pair_count": len(service.campaign.pair_ids),
            "target_annotators": service.campaign.target_annotators,
            "status": "active",
        }

    @app.get("/api/pairs/next")
    def pairs_next(annotator: str):
        item = service.next_pair(annotator)
        if item is None:
            queue = service._queue_for(annotator)
            return {"done": True, "progress": {"judged": len(queue), "total": len(queue)}}
        return {
            "done": False,
            **item,
            "left_url": f"/api/images/{item['left_image_id']}",
            "right_url": f"/api/images/{item['right_image_id']}",
        }

    @app.post("/api/judgments")
    async def post_judgment(payload: dict):
        for key in ("annotator_id", "pair_id", "choice"):
            if key not in payload:
                raise InvalidArgument(f"missing field {key!r}")
        service.submit_judgment(payload["annotator_id"], payload["pair_id"], payload["choice"])
        return {"ok": True}

    @app.get("/api/progress")
    def progress():
        return service.progress()

    @app.post("/api/export")
    def export():
        result = service.export_labels()
        return {
            "pairs": [{"id1": p.id1, "id2": p.id2, "delta": p.delta} for p in result.labels],
            "counts": result.counts,
        }

    @app.get("/api/images/{image_id}")
    def image(image_id: str):
        entries = service.campaign.manifest.image_by_id()
        if image_id not in entries:
            raise NotFound(f"unknown image {image_id!r}")
        path = service.campaign.manifest.image_path(entries[image_id])
        return FileResponse(path, media_type="image/png")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
