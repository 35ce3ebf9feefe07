"""Person-wise gradient pruning with mask intersection for stress detection that generalises across subjects."""

__version__ = "0.1.0"
