"""Tree-to-tree transduction toolkit for sentence compression.

Induces a synchronous tree-substitution grammar from word-aligned parse
pairs, trains a sparse linear model with a cutting-plane large-margin
learner, and decodes new source trees into compressed target trees with a
chart search intersected with an ngram language model.
"""

__version__ = "0.1.0"
