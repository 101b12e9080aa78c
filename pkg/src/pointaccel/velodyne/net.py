"""Reception of sensor packets over UDP

A listener thread receives the datagrams and publishes them in a bounded
queue. When the consumer falls behind, the oldest packets are discarded so
that ingestion never blocks.

Example:
    .. code-block:: python

        from pointaccel.velodyne.net import listen
        from pointaccel.velodyne.frames import assemble_frame

        with listen(2368) as stream:
            for frame in assemble_frame(stream):
                print(len(frame))
"""

import logging
import queue
import socket
import threading
import time

from ..config import config
from ..constants import VLP16
from ..errors import StreamClosedError

__all__ = ["DropOldestQueue", "PacketStream", "listen", "replay"]

log = logging.getLogger(__name__)

QUEUE_FRAMES = 4
"""Default capacity of the packet queue, in revolutions"""


class DropOldestQueue:
    """Bounded FIFO discarding its oldest item when full

    Args:
        maxsize (int):
    """

    def __init__(self, maxsize):
        self._queue = queue.Queue(maxsize=maxsize)
        self._lock = threading.Lock()
        self.overflowed = 0

    def __len__(self):
        return self._queue.qsize()

    @property
    def maxsize(self):
        return self._queue.maxsize

    def put(self, item):
        """Insert an item, never blocking

        Return:
            bool: True if an older item had to be discarded
        """
        with self._lock:
            dropped = False
            try:
                self._queue.put_nowait(item)
            except queue.Full:
                try:
                    self._queue.get_nowait()
                except queue.Empty:  # pragma: no cover
                    pass
                self._queue.put_nowait(item)
                self.overflowed += 1
                dropped = True
        return dropped

    def get(self, timeout=None):
        """Oldest item

        Raise:
            queue.Empty: if nothing arrived before the timeout
        """
        return self._queue.get(timeout=timeout)


class PacketStream:
    """Handle on a packet listener

    Iterating over the stream yields ``(timestamp, payload)`` records until
    the stream is closed, the timestamp being the reception time in
    microseconds.

    Args:
        sock (socket.socket): bound UDP socket
        capacity (int): number of packets kept when the consumer is late
        model (SensorModel):
    """

    POLL = 0.1
    """Period at which the listener checks for closure, in seconds"""

    def __init__(self, sock, capacity, model=VLP16):
        self.model = model
        self.malformed = 0
        self._sock = sock
        self._sock.settimeout(self.POLL)
        self._queue = DropOldestQueue(capacity)
        self._closed = threading.Event()
        self._thread = threading.Thread(target=self._receive, daemon=True)
        self._thread.start()

    @property
    def port(self):
        """Port the stream is bound to"""
        return self._sock.getsockname()[1]

    @property
    def overflowed(self):
        """Number of packets discarded because the queue was full"""
        return self._queue.overflowed

    @property
    def closed(self):
        return self._closed.is_set()

    def _receive(self):
        # Any datagram longer than a packet is malformed as well
        size = self.model.payload_size + 1
        while not self._closed.is_set():
            try:
                payload = self._sock.recv(size)
            except socket.timeout:
                continue
            except OSError:
                break

            if len(payload) != self.model.payload_size:
                self.malformed += 1
                log.warning(f"Datagram of {len(payload)} bytes dropped")
                continue

            if self._queue.put((time.time_ns() // 1000, payload)):
                log.warning("Packet queue full, oldest packet dropped")

        log.debug(f"Listener on port {self.port} stopped")

    def get(self, timeout=None):
        """Next record

        Args:
            timeout (float): seconds to wait, forever if None
        Return:
            tuple: (timestamp, payload), or None on timeout
        Raise:
            StreamClosedError: if the stream is closed and empty
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            wait = self.POLL
            if deadline is not None:
                wait = min(wait, max(deadline - time.monotonic(), 0))
            try:
                return self._queue.get(timeout=wait)
            except queue.Empty:
                if self.closed:
                    raise StreamClosedError("Packet stream closed")
                if deadline is not None and time.monotonic() >= deadline:
                    return None

    def __iter__(self):
        while True:
            try:
                record = self.get(timeout=self.POLL)
            except StreamClosedError:
                return
            if record is not None:
                yield record

    def close(self):
        """Stop the listener. Records already received can still be read."""
        if self.closed:
            return
        self._closed.set()
        self._thread.join()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()


def listen(port=None, host="", queue_frames=None, model=VLP16):
    """Start receiving sensor packets

    Args:
        port (int): UDP port, from ``velodyne.port`` if omitted. 0 picks a
            free port.
        host (str): interface to bind, all if empty
        queue_frames (int): queue capacity in revolutions, from
            ``velodyne.queue_frames`` if omitted
        model (SensorModel):
    Return:
        PacketStream
    Raise:
        OSError: if the port cannot be bound
    """

    if port is None:
        port = config.get("velodyne", "port", fallback=model.port)
    if queue_frames is None:
        queue_frames = config.get("velodyne", "queue_frames", fallback=QUEUE_FRAMES)

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.bind((host, port))
    except OSError:
        sock.close()
        raise

    stream = PacketStream(sock, queue_frames * model.packets_per_revolution, model)
    log.debug(f"Listening on port {stream.port}")
    return stream


def replay(records, port, host="127.0.0.1", realtime=False):
    """Send records as UDP datagrams

    Args:
        records (iterable): (timestamp, payload) pairs, timestamps in
            microseconds
        port (int):
        host (str):
        realtime (bool): if True, the intervals between records are kept
    Return:
        int: number of datagrams sent
    """

    sent = 0
    first = None
    t0 = time.monotonic()

    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        for timestamp, payload in records:
            if realtime:
                if first is None:
                    first = timestamp
                delay = (timestamp - first) / 1e6 - (time.monotonic() - t0)
                if delay > 0:
                    time.sleep(delay)
            sock.sendto(payload, (host, port))
            sent += 1

    log.debug(f"{sent} datagrams sent to {host}:{port}")
    return sent
