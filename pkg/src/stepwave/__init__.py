"""Step counting from smartphone inertial data with a from-scratch LSTM.

Pipeline: parse walk recordings and heel-strike annotations (``ingest``),
encode strikes as a square-wave label (``labeling``), window into training
examples and splits (``dataset``), train a two-layer LSTM with BPTT and Adam
(``neural``), binarize predictions into step times (``postprocess``), score
over/undercount with three interval metrics (``metrics``), and orchestrate
the mixed / leave-one-person-out protocols (``experiment``). ``synth``
generates labeled synthetic cohorts so everything runs without recordings.
"""

__version__ = "0.1.0"
