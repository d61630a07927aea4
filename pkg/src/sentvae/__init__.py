"""Sentence autoencoders over a bidirectional GRU backbone.

Three variants (plain AE, variational AE, and a semantic VAE whose latent
head also sees an attention-weighted bag of word vectors), trained from
scratch in numpy with analytic gradients, plus skip-gram embedding
pre-training, beam-search decoding and the three evaluation tasks:
reconstruction BLEU, missing-word imputation and paraphrase identification.
"""

__version__ = "0.1.0"
