"""WebSocket front end for the match runtime.

The asyncio game task owns the Match and advances it at the control rate;
socket handlers only enqueue inbound actions and register clients.  Sends
are fire-and-forget so a slow client drops frames instead of stalling the
simulation.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path
from typing import Dict, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .arena import CONTROL_HZ, Match, PROTOCOL_VERSION, ProtocolError
from .tasks import BLACK, WHITE


def _error(reason: str) -> str:
    return json.dumps(
        {"type": "error", "protocol_version": PROTOCOL_VERSION, "reason": reason}
    )


def create_app(match: Match, static_dir: Optional[str] = None) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(game_loop())
        yield
        task.cancel()

    app = FastAPI(lifespan=lifespan)
    clients: Dict[WebSocket, Optional[str]] = {}
    app.state.match = match

    async def game_loop():
        loop = asyncio.get_running_loop()
        dt = 1.0 / CONTROL_HZ
        next_tick = loop.time() + dt
        while not match.finished:
            state = match.step()
            _broadcast(json.dumps(state))
            delay = next_tick - loop.time()
            next_tick += dt
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                await asyncio.sleep(0)  # yield, then catch up
        _broadcast(json.dumps(match.end_message()))

    def _broadcast(text: str):
        for ws in list(clients):
            asyncio.ensure_future(_send_quietly(ws, text))

    async def _send_quietly(ws: WebSocket, text: str):
        try:
            await ws.send_text(text)
        except Exception:
            clients.pop(ws, None)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        clients[ws] = None
        try:
            while True:
                try:
                    msg = json.loads(await ws.receive_text())
                except json.JSONDecodeError:
                    await ws.send_text(_error("malformed JSON"))
                    break
                kind = msg.get("type")
                if kind == "join":
                    side = msg.get("side")
                    if side not in (WHITE, BLACK):
                        await ws.send_text(_error("side must be white or black"))
                        break
                    clients[ws] = side
                    await ws.send_text(
                        json.dumps(
                            {
                                "type": "joined",
                                "protocol_version": PROTOCOL_VERSION,
                                "side": side,
                            }
                        )
                    )
                elif kind == "action":
                    side = clients.get(ws)
                    if side is None:
                        await ws.send_text(_error("join before sending actions"))
                        break
                    try:
                        match.handle_action(side, msg)
                    except ProtocolError as exc:
                        await ws.send_text(_error(str(exc)))
                        break
                else:
                    await ws.send_text(_error(f"unknown message type {kind!r}"))
                    break
        except WebSocketDisconnect:
            pass
        finally:
            clients.pop(ws, None)

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def serve(match: Match, host: str = "127.0.0.1", port: int = 8765,
          static_dir: Optional[str] = None):
    import uvicorn

    uvicorn.run(create_app(match, static_dir), host=host, port=port, log_level="warning")
