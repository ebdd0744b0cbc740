"""Cross-device user matching from browsing logs.

Candidate generation (TF-IDF + document-embedding KNN), pairwise gradient-
boosted classification, and cluster-merging inference, verified end-to-end on
synthetic clickstreams with planted ground truth.
"""

from .config import Settings, full_scale_profile, load_settings
from .embedding import EmbedConfig, EmbeddingModel, embedding_ensemble, train_doc_embeddings
from .evaluate import EvalReport, f1_curve, f1_from_pr, score_submission
from .events import (
    Event,
    UserLog,
    build_user_documents,
    dedup_consecutive,
    parse_events,
    split_users,
    token_at_level,
)
from .features import FeatureContext, FeatureSchema, TimeProfile, default_schema, time_profile
from .gbdt import (
    GbdtParams,
    LabeledPair,
    PairClassifier,
    ScoredPair,
    sample_training_pairs,
    score_pairs,
    train_gbdt,
)
from .inference import (
    Blind,
    ClusterState,
    SizeCapped,
    VoterGated,
    final_selection,
    merge_inference,
    train_voter,
)
from .knn import NeighborList, knn_dense, knn_sparse, recall_at_k, union_candidates
from .pairs import CandidatePair, make_pair, restrict_pairs
from .pipeline import PipelineResult, run_pipeline
from .synth import SynthConfig, generate_dataset
from .tfidf import SparseVector, Vocabulary, build_vocabulary, tfidf_vectors

__version__ = "0.1.0"
