"""coevo: dual-agent coach/client co-evolution over branching dialogues.

Pipeline stages: persona pool management, dialogue-tree rollouts against
pluggable chat backends, structured multi-dimensional judging, discounted
value backup, Pareto-dominant preference pair extraction, DPO dataset
export with trainer hand-off, the evaluation matrix and difficulty probe,
scalarization consistency checks, and a blinded human pair-ranking study
service.
"""

__version__ = "0.1.0"
