#!/usr/bin/env python3
"""
SQLite run ledger and sweep-drop cache.

run_records keeps one row per CLI invocation (command, config hash, seed,
status, headline metrics). drop_cache keeps finished DropResult records keyed
by scenario, so an interrupted sweep can resume without recomputing drops.
The store never feeds result files; cached drops are bit-identical to fresh
ones because every drop is a pure function of (config, seed, drop).
"""

import asyncio
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import aiosqlite

from data_model import DropResult

logger = logging.getLogger(__name__)


def drop_key(config_hash: str, seed: int, mode: str, power_mode: str, drop: int) -> str:
    """Cache identity of one drop."""
    return f"{config_hash}:{seed}:{mode}:{power_mode}:{drop}"


class RunStore:
    """Manages the lab database."""

    def __init__(self, db_path: Union[str, Path]):
        self.db_path = Path(db_path)

    async def _get_connection(self):
        return await aiosqlite.connect(self.db_path)

    async def initialize(self):
        """Create tables and indexes if missing."""
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        conn = await self._get_connection()
        try:
            await conn.execute("PRAGMA journal_mode=WAL")
            await conn.execute("PRAGMA synchronous=NORMAL")
            await conn.execute("""
                CREATE TABLE IF NOT EXISTS run_records (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    command TEXT NOT NULL,
                    config_hash TEXT NOT NULL,
                    seed INTEGER NOT NULL,
                    status TEXT NOT NULL,
                    summary_json TEXT NOT NULL
                )
            """)
            await conn.execute("""
                CREATE TABLE IF NOT EXISTS drop_cache (
                    key TEXT PRIMARY KEY,
                    config_hash TEXT NOT NULL,
                    status TEXT NOT NULL,
                    result_json TEXT NOT NULL,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)
            await conn.execute("CREATE INDEX IF NOT EXISTS idx_run_records_hash ON run_records(config_hash)")
            await conn.execute("CREATE INDEX IF NOT EXISTS idx_drop_cache_hash ON drop_cache(config_hash)")
            await conn.commit()
        finally:
            await conn.close()
        logger.debug("run store ready at %s", self.db_path)

    async def record_run(self, command: str, config_hash: str, seed: int, status: str,
                         summary: Dict[str, Any]) -> int:
        """Append one run to the ledger; returns its id."""
        try:
            payload = json.dumps(summary, sort_keys=True)
        except (TypeError, ValueError) as e:
            raise ValueError(f"summary is not JSON-serializable: {e}")
        conn = await self._get_connection()
        try:
            cursor = await conn.execute("""
                INSERT INTO run_records (command, config_hash, seed, status, summary_json)
                VALUES (?, ?, ?, ?, ?)
            """, (command, config_hash, seed, status, payload))
            await conn.commit()
            return cursor.lastrowid
        finally:
            await conn.close()

    async def recent_runs(self, limit: int = 10, command: Optional[str] = None) -> List[Dict[str, Any]]:
        conn = await self._get_connection()
        try:
            query = "SELECT id, command, config_hash, seed, status, summary_json FROM run_records"
            params: Tuple = ()
            if command:
                query += " WHERE command = ?"
                params = (command,)
            query += " ORDER BY id DESC LIMIT ?"
            results = []
            async with conn.execute(query, params + (limit,)) as cursor:
                async for row in cursor:
                    try:
                        summary = json.loads(row[5])
                    except json.JSONDecodeError:
                        logger.warning(f"Skipping corrupted run record {row[0]}")
                        continue
                    results.append({"id": row[0], "command": row[1], "config_hash": row[2],
                                    "seed": row[3], "status": row[4], "summary": summary})
            return results
        finally:
            await conn.close()

    async def save_drops(self, items: Iterable[Tuple[str, DropResult]]) -> int:
        """Upsert finished drops; failed drops are not cached."""
        rows = [(key, r.config_hash, r.status, json.dumps(asdict(r))) for key, r in items if r.ok]
        if not rows:
            return 0
        conn = await self._get_connection()
        try:
            await conn.executemany("""
                INSERT OR REPLACE INTO drop_cache (key, config_hash, status, result_json)
                VALUES (?, ?, ?, ?)
            """, rows)
            await conn.commit()
        finally:
            await conn.close()
        return len(rows)

    async def load_drops(self, keys: Iterable[str]) -> Dict[str, DropResult]:
        """Cached drops for the given keys (missing keys are absent)."""
        keys = list(keys)
        if not keys:
            return {}
        conn = await self._get_connection()
        found: Dict[str, DropResult] = {}
        try:
            for start in range(0, len(keys), 500):
                chunk = keys[start:start + 500]
                marks = ",".join("?" * len(chunk))
                async with conn.execute(
                        f"SELECT key, result_json FROM drop_cache WHERE key IN ({marks})", chunk) as cursor:
                    async for key, payload in cursor:
                        try:
                            found[key] = DropResult(**json.loads(payload))
                        except (json.JSONDecodeError, TypeError):
                            logger.warning(f"Corrupted cached drop: {key}")
            return found
        finally:
            await conn.close()

    async def health_check(self) -> bool:
        conn = await self._get_connection()
        try:
            tables = []
            async with conn.execute("""
                SELECT name FROM sqlite_master
                WHERE type='table' AND name IN ('run_records', 'drop_cache')
            """) as cursor:
                async for row in cursor:
                    tables.append(row[0])
            if len(tables) < 2:
                logger.error(f"Missing required tables. Found: {tables}")
                return False
            async with conn.execute("PRAGMA integrity_check") as cursor:
                result = await cursor.fetchone()
            return result[0] == "ok"
        finally:
            await conn.close()


async def open_store(db_path: Union[str, Path]) -> RunStore:
    store = RunStore(db_path)
    await store.initialize()
    return store


# Synchronous wrappers for the CLI and the sweep driver
def record_run_sync(db_path: Union[str, Path], command: str, config_hash: str, seed: int,
                    status: str, summary: Dict[str, Any]) -> int:
    async def _run():
        store = await open_store(db_path)
        return await store.record_run(command, config_hash, seed, status, summary)
    return asyncio.run(_run())


def load_drops_sync(db_path: Union[str, Path], keys: Iterable[str]) -> Dict[str, DropResult]:
    async def _run():
        store = await open_store(db_path)
        return await store.load_drops(keys)
    return asyncio.run(_run())


def save_drops_sync(db_path: Union[str, Path], items: Iterable[Tuple[str, DropResult]]) -> int:
    async def _run():
        store = await open_store(db_path)
        return await store.save_drops(items)
    return asyncio.run(_run())


def recent_runs_sync(db_path: Union[str, Path], limit: int = 10) -> List[Dict[str, Any]]:
    async def _run():
        store = await open_store(db_path)
        return await store.recent_runs(limit)
    return asyncio.run(_run())
