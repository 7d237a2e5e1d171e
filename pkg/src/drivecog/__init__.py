"""EEG and facial-landmark pipeline for driver attention and hazard classification.

Subpackages and modules:

* :mod:`drivecog.session` -- dataset manifest, EEG / landmark trial I/O
* :mod:`drivecog.preproc` -- band-pass filtering, artifact masking, segmentation
* :mod:`drivecog.info` -- histogram entropies and channel-pair features
* :mod:`drivecog.topomap` -- Welch band power and RGB scalp maps
* :mod:`drivecog.face` -- landmark geometry features
* :mod:`drivecog.embeddings` -- 4096-dim image embedding providers
* :mod:`drivecog.learners` -- PCA, extreme learning machine, LSTM
* :mod:`drivecog.features`, :mod:`drivecog.evaluation` -- feature assembly and
  leave-one-subject-out evaluation
* :mod:`drivecog.synth` -- seeded synthetic sessions
"""

__version__ = "0.1.0"
