"""STGen: a lightweight hybrid IoT testbed.

Emulated sensor fleets publish binary-encoded readings over UDP to a
central core (sink) node, which registers nodes, dual-archives traffic,
relays subscribed streams to clients, and emits per-packet capture
records for real-time analytics.
"""

__version__ = "0.1.0"
