# utils/broker.py
"""
In-process message broker for asynchronous validation results
- Topic per request: validation.results.<request_id>
- Delivery on a dispatcher thread, at-least-once
- Last message per topic is retained until a subscriber picks it up;
  the oldest retained topics are dropped past max_retained
- Can be switched off to simulate an outage
"""

import logging
import queue
import threading
from collections import OrderedDict, defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Dict, List

from utils.errors import BrokerUnavailable

logger = logging.getLogger(__name__)

TOPIC_PREFIX = "validation.results."


def result_topic(request_id: str) -> str:
    return f"{TOPIC_PREFIX}{request_id}"


@dataclass(frozen=True)
class Message:
    topic: str
    payload: Any


Callback = Callable[[Message], None]


class MessageBroker:
    def __init__(self, max_retained: int = 1024):
        self.available = True
        self.max_retained = max_retained
        self._subscribers: Dict[str, List[Callback]] = defaultdict(list)
        self._retained: "OrderedDict[str, Message]" = OrderedDict()
        self._lock = threading.Lock()
        self._queue: "queue.Queue" = queue.Queue()
        self.published = 0
        self.delivered = 0
        self._thread = threading.Thread(target=self._dispatch, name="broker-dispatch", daemon=True)
        self._thread.start()

    # --------------------------
    # Publish / subscribe
    # --------------------------
    def publish(self, topic: str, payload: Any):
        if not self.available:
            raise BrokerUnavailable(f"broker down, cannot publish on {topic}")
        message = Message(topic, payload)
        with self._lock:
            self.published += 1
            callbacks = list(self._subscribers.get(topic, ()))
            if not callbacks:
                self._retain(message)
        for callback in callbacks:
            self._queue.put((callback, message))

    def _retain(self, message: Message):
        self._retained[message.topic] = message
        self._retained.move_to_end(message.topic)
        while len(self._retained) > self.max_retained:
            dropped, _ = self._retained.popitem(last=False)
            logger.warning("retained message on %s dropped, nobody subscribed", dropped)

    def subscribe(self, topic: str, callback: Callback):
        with self._lock:
            self._subscribers[topic].append(callback)
            retained = self._retained.pop(topic, None)
        if retained is not None:
            self._queue.put((callback, retained))

    def unsubscribe(self, topic: str, callback: Callback):
        with self._lock:
            subs = self._subscribers.get(topic, [])
            if callback in subs:
                subs.remove(callback)
            if not subs:
                self._subscribers.pop(topic, None)

    def retained_topics(self) -> List[str]:
        with self._lock:
            return list(self._retained)

    def open_topics(self) -> int:
        """Topics still holding a subscriber or a retained message."""
        with self._lock:
            return len(set(self._subscribers) | set(self._retained))

    # --------------------------
    # Delivery
    # --------------------------
    def _dispatch(self):
        while True:
            item = self._queue.get()
            try:
                if item is None:
                    return
                callback, message = item
                try:
                    callback(message)
                    with self._lock:
                        self.delivered += 1
                except Exception:
                    logger.exception("subscriber failed on %s", message.topic)
            finally:
                self._queue.task_done()

    def drain(self):
        """Block until every queued delivery has been handed to its subscriber."""
        self._queue.join()

    def close(self):
        self._queue.put(None)
        self._thread.join(timeout=5)
