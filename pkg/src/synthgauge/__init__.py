"""synthgauge: generate-and-validate toolkit for synthetic embeddings.

Toy generators, fidelity/diversity/authenticity metrics, latent projection,
closed-form direction discovery, a federated-averaging simulator, a small
classifier harness and t-SNE/SVG output.
"""
__version__ = "0.1.0"

from .errors import DomainError, FormatError, NumericalError, SynthGaugeError, ValidationError  # noqa: E402

__all__ = ["__version__", "SynthGaugeError", "ValidationError", "FormatError", "NumericalError", "DomainError"]
