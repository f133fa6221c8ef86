"""Event-driven business awareness stack.

Pub/sub event bus, windowed complex-event processing, a goal-tree runtime
with context-conditioned actions, an action/recommendation service, and a
deterministic logistics simulator that closes the loop.
"""

__version__ = "0.1.0"
