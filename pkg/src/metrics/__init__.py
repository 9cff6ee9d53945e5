from src.metrics.segmentation import (
    ConfusionCounts,
    MetricsReport,
    aggregate_reports,
    ahd,
    confusion_counts,
    evaluate_case,
    overlap_scores,
)
from src.metrics.plots import plot_class_metrics, plot_overlay, plot_training_curves, read_train_log
