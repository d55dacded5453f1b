"""caseflow: process enactment via triggered continuous-query rules.

Imperative (BPMN) and declarative (DCR) process models compile into
triggered rules over an event stream and state tables; a runtime
orchestrates live cases, hybrid models, and live model migration on top.
"""

__version__ = "0.1.0"
