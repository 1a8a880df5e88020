"""Carbon-report question answering: corpus synthesis, field extraction,
retrieval, critic reranking, answer-program generation and scoring."""

__version__ = "0.1.0"
