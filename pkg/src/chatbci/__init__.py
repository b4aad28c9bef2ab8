"""chatbci: a human-AI collaborative workbench for EEG/BCI experimentation.

Subpackages cover the whole desk-scale loop: validated recording containers
(datastore), signal conditioning (preprocess), exploratory analyses
(analysis), a compact convolutional decoder with a compiled kernel core
(decoder), within-subject training (training), a granularity-leveled
knowledge base (knowledge), an LLM bridge with adaptive autonomy (llm),
idea generation (ideation), figure rendering (figures), and an HTTP/CLI
surface (workspace, service, cli).
"""

__version__ = "0.1.0"
