"""raglab: a retrieval-augmented generation experimentation toolkit.

Core pieces:

- corpus loading, chunking, and sentence splitting (`raglab.corpus`)
- embedding / LM providers, offline-deterministic or OpenAI-compatible
  remote (`raglab.providers`)
- exact inner-product vector index with binary persistence (`raglab.index`)
- LM-driven query expansion (`raglab.expansion`)
- staged retrieval pipelines with document- and sentence-level refinement
  (`raglab.retrieval`)
- prompt assembly: system prompt variants, contrastive in-context examples,
  multilingual instructions (`raglab.prompt`)
- generation loops, including periodic re-retrieval during decoding
  (`raglab.generation`)
- evaluation metrics and paired significance testing (`raglab.metrics`)
- the experiment harness: configs, runners, reports (`raglab.harness`)
"""

__version__ = "0.1.0"
