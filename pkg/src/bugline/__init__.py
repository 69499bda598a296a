"""Resolution-time anomaly detection and thematic clustering for bug trackers."""

from .anomaly import AnomalyConfig, AnomalySet, detect_anomalies, distribution_stats, monthly_counts
from .cluster import Clustering, ClusterTheme, KMeansConfig, cluster_top_terms, kmeans
from .ingest import (
    BugReport,
    RepoSummary,
    ResolutionRecord,
    SchemaConfig,
    compute_resolution,
    dataset_summary,
    parse_bug_reports,
    read_project_csv,
    resolution_records,
)
from .reduce import PcaModel, pca_fit, pca_transform
from .textvec import DocTermMatrix, Vocabulary, build_vocabulary, tfidf_matrix, tokenize, vectorize

__version__ = "0.1.0"
