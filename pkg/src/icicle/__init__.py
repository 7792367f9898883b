"""In-context generative retrieval over dynamic corpora.

Core flow: ingest a corpus and queries, split into train/new sides, build
the vocabulary and docid tries, construct in-context instances, decode with
router-aware constrained beam search over a pluggable token scorer, and
evaluate with the bundled harness (Hits@k, calibration, routing
decomposition, a BM25 baseline). A deterministic mock scorer makes every
metric reproducible at desk scale.
"""

from .corpus import (
    Corpus,
    CorpusError,
    CorpusSplit,
    Document,
    QueryRecord,
    ingest_corpus,
    ingest_queries,
    load_split,
    save_split,
    split_corpus,
    split_queries,
)
from .decoder import (
    DecodeError,
    DecodeResult,
    constrained_beam_search,
)
from .dpo import PairKind, PreferencePair, dpo_loss, mine_pairs, pair_margin
from .evaluation import (
    BM25Index,
    BM25System,
    EvalReport,
    IcicleSystem,
    build_query_candidate_set,
    ece,
    evaluate,
    latency_probe,
    shot_sweep,
)
from .prompt import (
    HardNegativeMiner,
    InContextInstance,
    InstanceBuilder,
    Mode,
    mine_hard_negatives,
    render_template,
)
from .scorer import (
    MockModelConfig,
    MockRetrievalModel,
    ParametricMemory,
    Scorer,
    TfidfModel,
    UniformScorer,
    lexical_similarity,
    sequence_nll,
)
from .tokenizer import (
    COPY_ID,
    EOS_ID,
    UNK_ID,
    Vocabulary,
    build_vocab,
    decode,
    encode,
    encode_docid,
    tokenize_words,
)
from .trie import DocidTrie, TrieCollisionError, build_context_trie, build_trie

__version__ = "0.1.0"
