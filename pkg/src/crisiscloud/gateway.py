"""HTTP/WebSocket gateway: the boundary external clients talk to.

Endpoints (all payloads use the canonical event line format where events
are returned; see docs/api.md for the pattern encoding):

* ``GET  /state/processes``   process instances and activity statuses
* ``GET  /state/inventory``   inventory levels and reservations
* ``GET  /proposals``         adaptation proposals and their state
* ``GET  /decision-points``   issued decision points
* ``POST /choices``           submit an operator choice (acked with the
                              seq of the recorded DecisionChoice event)
* ``GET  /history``           range query over the live event store
* ``GET  /metrics``           phase rates, milestone table, sim clock
* ``WS   /stream``            live event lines filtered by a pattern

Sessions are fully concurrent; every engine interaction goes through the
broker's fan-out or the driver's serialized choice queue.
"""

from __future__ import annotations

import asyncio
import json
import queue
import socket
import threading

from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .driver import AlreadyDecided, ChoiceRequest, Driver, UnknownPoint
from .model import encode_event
from .patterns import MalformedPattern, Pattern
from .runmetrics import metrics
from .sar import ProposalState


class PortInUse(OSError):
    pass


def parse_where(clauses: list[str]) -> list[tuple[str, str, object]]:
    """attr:op:value clauses for history queries; values parsed as JSON
    scalars with a string fallback."""
    predicates = []
    for clause in clauses:
        attr, op, raw = clause.split(":", 2)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        predicates.append((attr, op, value))
    return predicates


def create_app(driver: Driver) -> FastAPI:
    app = FastAPI(title="crisiscloud gateway", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.driver = driver

    @app.get("/state/processes")
    def state_processes():
        with driver.lock:
            snap = driver.orchestrator.snapshot()
        return {"sim_now": driver.now, "instances": snap["instances"]}

    @app.get("/state/inventory")
    def state_inventory():
        with driver.lock:
            snap = driver.orchestrator.snapshot()
        return {"sim_now": driver.now, "inventory": snap["inventory"], "reservations": snap["reservations"]}

    @app.get("/proposals")
    def proposals():
        with driver.lock:
            rows = [
                {
                    "proposal": p.proposal_id,
                    "state": p.state.value,
                    "gap_kind": p.gap.kind.value,
                    "subject": p.gap.subject,
                    "expected": p.gap.expected,
                    "actual": p.gap.actual,
                    "detected_ts": p.gap.detected_ts,
                    "role": p.role,
                    "alternatives": [{"id": a.id, "label": a.label} for a in p.alternatives],
                    "chosen": p.chosen,
                }
                for p in driver.recommender.proposals.values()
            ]
        return {"proposals": rows}

    @app.get("/decision-points")
    def decision_points():
        with driver.lock:
            rows = [
                {
                    "point": p.spec.point_id,
                    "role": p.spec.role,
                    "prompt": p.spec.prompt,
                    "issued_ts": p.issued_ts,
                    "options": [{"id": oid, "label": label} for oid, label in p.spec.options],
                    "decided": p.decided,
                    "chosen": p.chosen,
                }
                for p in driver._points.values()
            ]
        return {"decision_points": rows, "paused_for": list(driver.paused_for)}

    @app.post("/choices")
    async def post_choice(request: Request):
        body = await request.json()
        target = body.get("target") or body.get("point") or body.get("proposal")
        option = body.get("option")
        chooser = body.get("chooser", "anonymous")
        if not target or not option:
            return JSONResponse({"error": "need target and option"}, status_code=400)
        with driver.lock:
            known_point = target in driver._points
            known_proposal = target in driver.recommender.proposals
            if not known_point and not known_proposal:
                return JSONResponse({"error": f"unknown decision point or proposal {target!r}"}, status_code=404)
            if known_point and driver._points[target].decided:
                return JSONResponse({"error": f"{target} already decided"}, status_code=409)
            if known_proposal and driver.recommender.proposals[target].state is not ProposalState.OPEN:
                return JSONResponse({"error": f"{target} already decided"}, status_code=409)
        req = ChoiceRequest(target_id=target, option_id=option, chooser=chooser)
        driver.submit_choice(req)
        ok = await asyncio.get_event_loop().run_in_executor(None, req.done.wait, 30.0)
        if not ok:
            return JSONResponse({"error": "driver did not pick up the choice (not paused?)"}, status_code=503)
        if req.error is not None:
            if isinstance(req.error, AlreadyDecided):
                return JSONResponse({"error": str(req.error)}, status_code=409)
            if isinstance(req.error, (UnknownPoint, KeyError)):
                return JSONResponse({"error": str(req.error)}, status_code=404)
            return JSONResponse({"error": str(req.error)}, status_code=400)
        return {"ok": True, "seq": req.seq, "target": target, "option": option}

    @app.get("/history")
    def history(
        ts_from: int = Query(0, alias="from"),
        ts_to: int = Query(2**62, alias="to"),
        etype: list[str] | None = Query(None),
        where: list[str] | None = Query(None),
    ):
        try:
            pattern = Pattern.of(
                etypes=etype if etype else None,
                predicates=parse_where(where or []),
            )
        except (MalformedPattern, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        events = driver.broker.query_history(ts_from, ts_to, pattern)
        body = "\n".join(encode_event(e) for e in events)
        return PlainTextResponse(body + ("\n" if body else ""), media_type="application/x-ndjson")

    @app.get("/metrics")
    def metrics_view():
        with driver.lock:
            events = list(driver.events)
            sim_now = driver.now
            finished = driver.finished
            paused_for = list(driver.paused_for)
        doc = metrics(events, driver.script).to_dict()  # computed lock-free
        doc["sim_now"] = sim_now
        doc["finished"] = finished
        doc["paused_for"] = paused_for
        return doc

    @app.websocket("/stream")
    async def stream(websocket: WebSocket, pattern: str | None = None):
        try:
            parsed = Pattern.from_dict(json.loads(pattern)) if pattern else Pattern()
        except (MalformedPattern, json.JSONDecodeError) as exc:
            await websocket.close(code=4400, reason=str(exc))
            return
        await websocket.accept()
        q: queue.Queue = queue.Queue()
        sub_id = driver.broker.subscribe(parsed, q)
        try:
            while True:
                batch = []
                try:
                    batch.append(q.get_nowait())
                    while True:
                        batch.append(q.get_nowait())
                except queue.Empty:
                    pass
                if batch:
                    # One text frame may carry several newline-separated
                    # lines; clients split on "\n" (documented in the API).
                    await websocket.send_text("\n".join(encode_event(e) for e in batch))
                elif driver.finished and q.empty():
                    await websocket.send_text(json.dumps({"control": "run-finished"}))
                    break
                else:
                    await asyncio.sleep(0.02)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            driver.broker.unsubscribe(sub_id)

    return app


def serve(
    driver: Driver,
    port: int,
    host: str = "127.0.0.1",
    run_driver: bool = True,
    console_dir: str | None = None,
) -> None:
    """Start the gateway and (optionally) the scenario driver thread.

    Blocks serving until the process is interrupted.  Raises PortInUse
    when the port is already bound.  ``console_dir`` mounts the built web
    console at /console for one-port demos.
    """
    import uvicorn

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"port {port} on {host} is already in use") from exc
    finally:
        probe.close()

    app = create_app(driver)
    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")
    if run_driver:
        worker = threading.Thread(target=driver.run, name="scenario-driver", daemon=True)
        worker.start()
    uvicorn.run(app, host=host, port=port, log_level="warning")
