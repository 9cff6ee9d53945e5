from src.training.folds import make_folds
from src.training.augment import augment_slice, flip_group, jitter_intensity
from src.training.dataset import SliceDataset, pad_to_multiple
from src.training.evaluate import EvaluationResult, SubjectPrediction, evaluate_model, predict_subject
from src.training.trainer import RunRecord, cross_validate, run_epoch, seed_everything, train_model
from src.training.ablation import ABLATION_ROWS, run_ablation_matrix
