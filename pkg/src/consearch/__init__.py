"""Conservative off-policy search engine for discrete sequence design.

Core pieces: fixed-length token sequences over small alphabets
(`seqcore`), pluggable score oracles and dataset builders (`oracle`), a
minimal autodiff engine (`ndgrad`), an ensemble proxy with acquisition
rules (`proxy`), an autoregressive generative policy with flow-matching
objectives (`gfnpolicy`), the masking/denoising sampler (`deltacs`), the
round-based active-learning loop (`activeloop`), and benchmark presets
plus a CLI (`presets`, `cli`).
"""

__version__ = "0.1.0"
