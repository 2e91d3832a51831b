import pytest

from utils.broker import MessageBroker, result_topic
from utils.errors import BrokerUnavailable


@pytest.fixture
def broker():
    b = MessageBroker()
    yield b
    b.close()


def test_result_topic_naming():
    assert result_topic("abc") == "validation.results.abc"


def test_subscriber_receives_published_message(broker):
    got = []
    broker.subscribe("t", lambda m: got.append(m.payload))
    broker.publish("t", 1)
    broker.drain()
    assert got == [1]
    assert broker.delivered == 1


def test_message_published_before_subscribe_is_retained(broker):
    broker.publish("t", "early")
    assert broker.retained_topics() == ["t"]
    got = []
    broker.subscribe("t", lambda m: got.append(m.payload))
    broker.drain()
    assert got == ["early"]
    assert broker.retained_topics() == []


def test_unsubscribed_callback_gets_nothing(broker):
    got = []

    def callback(message):
        got.append(message.payload)

    broker.subscribe("t", callback)
    broker.unsubscribe("t", callback)
    broker.publish("t", 1)
    broker.drain()
    assert got == []
    # nobody listening, so it is retained for the next subscriber
    assert broker.retained_topics() == ["t"]


def test_unavailable_broker_refuses_publish(broker):
    broker.available = False
    with pytest.raises(BrokerUnavailable):
        broker.publish("t", 1)
    assert broker.published == 0


def test_failing_subscriber_does_not_stop_delivery(broker):
    got = []

    def bad(message):
        raise RuntimeError("boom")

    broker.subscribe("a", bad)
    broker.subscribe("b", lambda m: got.append(m.payload))
    broker.publish("a", 1)
    broker.publish("b", 2)
    broker.drain()
    assert got == [2]
    assert broker.delivered == 1


def test_retained_messages_are_bounded():
    broker = MessageBroker(max_retained=3)
    try:
        for i in range(5):
            broker.publish(f"t{i}", i)
        assert broker.retained_topics() == ["t2", "t3", "t4"]
    finally:
        broker.close()


def test_topics_are_released_after_delivery(broker):
    callbacks = {}
    for i in range(20):
        topic = result_topic(f"r{i}")
        callbacks[topic] = lambda m: None
        broker.subscribe(topic, callbacks[topic])
    for topic, callback in callbacks.items():
        broker.publish(topic, "done")
        broker.unsubscribe(topic, callback)
    broker.drain()
    assert broker.open_topics() == 0


def test_topics_are_isolated(broker):
    received = {f"topic{i}": [] for i in range(100)}
    for topic, sink in received.items():
        broker.subscribe(topic, lambda m, sink=sink: sink.append(m))
    for i, topic in enumerate(received):
        broker.publish(topic, i)
    broker.drain()
    for i, (topic, sink) in enumerate(received.items()):
        assert [(m.topic, m.payload) for m in sink] == [(topic, i)]
    assert broker.delivered == 100
