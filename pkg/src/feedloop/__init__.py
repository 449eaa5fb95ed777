"""feedloop: self-hosted Telegram channel monitoring with a feedback-driven
classifier lifecycle.

Messages from channel exports are classified with a binary conspiracy-theory
label and confidence by either a locally trained reference model or a prompted
text-completion client. User feedback accumulates into a gold-standard
dataset; drift detection, gated promotion, and staged rollouts govern model
and prompt versions. All state is event-sourced in an append-only log.
"""

__version__ = "0.1.0"
