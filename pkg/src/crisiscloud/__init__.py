"""crisiscloud — desk-scale event-cloud platform for emergency management.

Components: an event model with a canonical line format, a content-based
publish/subscribe broker with a queryable history store, a complex-event
processing engine for the crisis business rules, a workflow orchestrator
with a resource inventory, an adaptation recommender, a scripted scenario
driver with a simulated clock, and an HTTP/WebSocket gateway.
"""

__version__ = "0.1.0"
