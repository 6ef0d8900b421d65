"""convosim: simulate information-seeking conversations over documents and
measure what comes out.

Layers, lowest first: `corpus` (data model and canonical files), `textnorm`
(normalization and token metrics), `agents` (prompt construction, scripted
and remote endpoints), `simulator` (turn loops, batching, roundtrip
filtering), `analysis` (statistics, curves, classifier training data),
`evalsuite` (downstream metrics), `humaneval` (pairwise judgment protocol
and service), `cli` (the `convosim` command).
"""

from __future__ import annotations

__version__ = "0.1.0"
