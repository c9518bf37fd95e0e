"""HTTP editing service: corpus browsing, edits, and inspection views.

Sessions hold a working copy of one utterance. Every mutation appends to
the session's edit history, and the current state is always exactly what
replaying that history against the pristine utterance yields, which is
how undo is implemented. At most one mutating request may run per
session; concurrent mutations are rejected with 409.

Waveform playback is an optional external hook: a shell command given at
startup that consumes a .campf file and emits audio. Without it the
service exposes features only.
"""

from __future__ import annotations

import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from .corpus import Utterance, features_to_bytes
from .editing import DurationModel, EditResult, fit_duration_model, run_edit
from .errors import CampNetError, EditError, FormatError
from .metrics import voicing_flags
from .model import CampNet
from .transcript import EditScript


class EditRequest(BaseModel):
    script: dict
    epsilon: int = Field(default=5, ge=0)
    word_level: bool = False


class SessionRequest(BaseModel):
    utterance_id: str


@dataclass
class _Applied:
    script: EditScript
    epsilon: int
    word_level: bool


@dataclass
class Session:
    id: str
    pristine: Utterance
    current: Utterance
    history: list[_Applied] = field(default_factory=list)
    last_result: Optional[EditResult] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _word_json(w) -> dict:
    return {
        "word": w.word,
        "phoneme_range": list(w.phoneme_range),
        "frame_range": list(w.frame_range) if w.frame_range else None,
    }


def _utterance_meta(u: Utterance) -> dict:
    return {
        "id": u.id,
        "speaker": u.speaker,
        "frames": len(u.features),
        "hop_ms": u.features.hop_ms,
        "phonemes": list(u.phonemes.ids),
        "vocab": list(u.phonemes.vocab),
        "words": [_word_json(w) for w in u.words],
    }


def _edit_response(session: Session, result: EditResult) -> dict:
    return {
        "session_id": session.id,
        "length": len(session.current.features),
        "iterations": result.iterations,
        "spans": [[[s.start, s.end] for s in p.spans] for p in result.plans],
        "provenance": [int(v) for v in result.provenance],
        "attention_mass": [
            None if m is None else float(m) for m in result.attention_mass
        ],
        "history_length": len(session.history),
        "words": [_word_json(w) for w in session.current.words],
    }


def create_app(
    utts: Sequence[Utterance],
    model: CampNet,
    vocoder_cmd: Optional[str] = None,
    ui_dir: Optional[str] = None,
) -> FastAPI:
    """Build the service over a loaded corpus and a frozen model."""
    model.eval()
    by_id = {u.id: u for u in utts}
    dm: Optional[DurationModel] = fit_duration_model(utts) if utts else None
    app = FastAPI(title="campnet editing service")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions
    counter = threading.Lock()
    next_id = [0]

    def get_utt(utt_id: str) -> Utterance:
        if utt_id not in by_id:
            raise HTTPException(status_code=404, detail=f"unknown utterance {utt_id}")
        return by_id[utt_id]

    def get_session(session_id: str) -> Session:
        if session_id not in sessions:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return sessions[session_id]

    def apply_history(pristine: Utterance, history: list[_Applied]):
        """Replay edits from scratch; returns (utterance, last result)."""
        state = pristine
        result: Optional[EditResult] = None
        for step in history:
            result = run_edit(
                model,
                state,
                step.script,
                expansion=step.epsilon,
                dm=dm,
                word_level=step.word_level,
            )
            plan = result.plans[-1]
            state = Utterance(
                id=pristine.id,
                speaker=pristine.speaker,
                phonemes=plan.x_prime,
                words=plan.words,
                features=result.features,
            )
        return state, result

    @app.get("/meta")
    def meta() -> dict:
        return {
            "utterance_count": len(by_id),
            "vocoder": vocoder_cmd is not None,
        }

    @app.get("/utterances")
    def list_utterances() -> list[dict]:
        return [
            {"id": u.id, "speaker": u.speaker, "frames": len(u.features)}
            for u in sorted(by_id.values(), key=lambda u: u.id)
        ]

    @app.get("/utterances/{utt_id}")
    def utterance_detail(utt_id: str) -> dict:
        return _utterance_meta(get_utt(utt_id))

    @app.get("/utterances/{utt_id}/features")
    def utterance_features(utt_id: str) -> Response:
        u = get_utt(utt_id)
        return Response(
            content=features_to_bytes(u.features.values),
            media_type="application/octet-stream",
        )

    @app.post("/sessions")
    def create_session(req: SessionRequest) -> dict:
        u = get_utt(req.utterance_id)
        with counter:
            next_id[0] += 1
            sid = f"s{next_id[0]}"
        sessions[sid] = Session(id=sid, pristine=u, current=u)
        return {"session_id": sid, "utterance": _utterance_meta(u)}

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str) -> dict:
        s = get_session(session_id)
        return {
            "session_id": s.id,
            "utterance_id": s.pristine.id,
            "length": len(s.current.features),
            "history_length": len(s.history),
        }

    @app.post("/sessions/{session_id}/edit")
    def session_edit(session_id: str, req: EditRequest) -> dict:
        s = get_session(session_id)
        if not s.lock.acquire(blocking=False):
            raise HTTPException(
                status_code=409, detail="another edit is in flight on this session"
            )
        try:
            try:
                script = EditScript.from_json(req.script)
            except (FormatError, EditError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            try:
                result = run_edit(
                    model,
                    s.current,
                    script,
                    expansion=req.epsilon,
                    dm=dm,
                    word_level=req.word_level,
                )
            except EditError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            except CampNetError as exc:
                raise HTTPException(status_code=500, detail=str(exc)) from exc
            plan = result.plans[-1]
            s.current = Utterance(
                id=s.pristine.id,
                speaker=s.pristine.speaker,
                phonemes=plan.x_prime,
                words=plan.words,
                features=result.features,
            )
            s.history.append(_Applied(script, req.epsilon, req.word_level))
            s.last_result = result
            return _edit_response(s, result)
        finally:
            s.lock.release()

    @app.post("/sessions/{session_id}/undo")
    def session_undo(session_id: str) -> dict:
        s = get_session(session_id)
        if not s.lock.acquire(blocking=False):
            raise HTTPException(
                status_code=409, detail="another edit is in flight on this session"
            )
        try:
            if not s.history:
                raise HTTPException(status_code=409, detail="nothing to undo")
            history = s.history[:-1]
            state, result = apply_history(s.pristine, history)
            s.current = state
            s.history = history
            s.last_result = result
            return {
                "session_id": s.id,
                "length": len(s.current.features),
                "history_length": len(s.history),
            }
        finally:
            s.lock.release()

    @app.get("/sessions/{session_id}/view")
    def session_view(session_id: str) -> dict:
        s = get_session(session_id)
        feats = s.current.features
        view = {
            "session_id": s.id,
            "utterance_id": s.pristine.id,
            "length": len(feats),
            "hop_ms": feats.hop_ms,
            "words": [_word_json(w) for w in s.current.words],
            "transcript": [w.word for w in s.current.words],
            "phonemes": list(s.current.phonemes.ids),
            "vocab": list(s.current.phonemes.vocab),
            "heatmap": feats.bfcc.astype(float).tolist(),
            "f0": feats.pitch.astype(float).tolist(),
            "voicing": [bool(v) for v in voicing_flags(feats)],
            "history_length": len(s.history),
            "mask_spans": [],
        }
        if s.last_result is not None:
            view["mask_spans"] = [
                [s2.start, s2.end]
                for plan in s.last_result.plans
                for s2 in plan.spans
            ]
            view["attention_mass"] = [
                None if m is None else float(m)
                for m in s.last_result.attention_mass
            ]
            out = s.last_result.last_outputs
            if out is not None and out.attention:
                view["attention"] = (
                    out.attention[-1].mean(axis=0).astype(float).tolist()
                )
        return view

    @app.get("/sessions/{session_id}/audio")
    def session_audio(session_id: str) -> Response:
        s = get_session(session_id)
        if vocoder_cmd is None:
            raise HTTPException(status_code=404, detail="no vocoder hook configured")
        with tempfile.TemporaryDirectory(prefix="campnet-vocoder-") as tmp:
            inp = Path(tmp) / "features.campf"
            outp = Path(tmp) / "audio.bin"
            inp.write_bytes(features_to_bytes(s.current.features.values))
            cmd = vocoder_cmd.format(input=str(inp), output=str(outp))
            proc = subprocess.run(cmd, shell=True, capture_output=True)
            if proc.returncode != 0 or not outp.exists():
                raise HTTPException(
                    status_code=502,
                    detail=f"vocoder hook failed: {proc.stderr.decode(errors='replace')}",
                )
            return Response(
                content=outp.read_bytes(), media_type="application/octet-stream"
            )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
