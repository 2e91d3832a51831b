# utils/history.py
"""
Request-history backends shared by the behavior check and the request logger
- LedgerHistory: BC-P-MON / BC-P-LOG style access through a peer credential
- TableHistory: plain SQL table (variants without a blockchain)
- NoHistory: conventional variant, nothing is recorded
- RequestLogger: background writer with bounded retries
"""

import logging
import queue
import threading
import time
from typing import List

from utils.errors import (
    DuplicateTransaction,
    HistoryUnavailable,
    InfrastructureError,
    OrdererUnavailable,
    PeerDown,
    StoreUnavailable,
    UnauthorizedPeer,
)
from utils.model import HistoryRecord

logger = logging.getLogger(__name__)


class LedgerHistory:
    def __init__(self, ledger, credential: str):
        self._ledger = ledger
        self._credential = credential

    def recent(self, actor_id: str, limit: int) -> List[HistoryRecord]:
        try:
            return self._ledger.query_history(actor_id, limit, credential=self._credential)
        except UnauthorizedPeer as e:
            raise HistoryUnavailable(str(e)) from e

    def record(self, record: HistoryRecord):
        return self._ledger.submit_log(record, credential=self._credential)


class TableHistory:
    def __init__(self, database):
        self._db = database

    def recent(self, actor_id: str, limit: int) -> List[HistoryRecord]:
        try:
            return self._db.recent_history(actor_id, limit)
        except StoreUnavailable as e:
            raise HistoryUnavailable(str(e)) from e

    def record(self, record: HistoryRecord):
        self._db.add_history(record)


class NoHistory:
    def recent(self, actor_id: str, limit: int) -> List[HistoryRecord]:
        return []

    def record(self, record: HistoryRecord):
        return None


# --------------------------
# Request logger (BC-P-LOG)
# --------------------------
class RequestLogger:
    """
    Writes decided requests to a history backend off the requester path.
    Failed writes are retried with exponential backoff and dropped after
    `retries` attempts; a duplicate request_id means the record is already stored.
    """

    def __init__(self, backend, retries: int = 3, backoff_seconds: float = 0.05, synchronous: bool = False):
        self._backend = backend
        self._retries = retries
        self._backoff = backoff_seconds
        self._synchronous = synchronous
        self.submitted = 0
        self.dropped = 0
        self._lock = threading.Lock()
        self._queue: "queue.Queue" = queue.Queue()
        self._worker = None
        if not synchronous:
            self._worker = threading.Thread(target=self._run, name="request-logger", daemon=True)
            self._worker.start()

    def submit(self, record: HistoryRecord):
        if self._synchronous:
            self._write(record)
        else:
            self._queue.put(record)

    def _write(self, record: HistoryRecord):
        for attempt in range(self._retries + 1):
            try:
                self._backend.record(record)
            except DuplicateTransaction:
                logger.debug("record %s already stored", record.request_id)
                return
            except (InfrastructureError, OrdererUnavailable, PeerDown, StoreUnavailable) as e:
                if attempt < self._retries:
                    logger.warning("history write for %s failed (%s), retrying", record.request_id, e)
                    time.sleep(self._backoff * (2 ** attempt))
                    continue
                with self._lock:
                    self.dropped += 1
                logger.error("dropping history record %s after %d attempts", record.request_id, attempt + 1)
                return
            with self._lock:
                self.submitted += 1
            return

    def _run(self):
        while True:
            record = self._queue.get()
            try:
                if record is None:
                    return
                self._write(record)
            finally:
                self._queue.task_done()

    def flush(self):
        if self._worker is not None:
            self._queue.join()

    def close(self):
        if self._worker is not None:
            self._queue.put(None)
            self._worker.join(timeout=5)
