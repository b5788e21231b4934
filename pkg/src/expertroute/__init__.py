"""Per-task expert routing for transfer learning at desk scale.

Slice an upstream label hierarchy into overlapping expert domains, score
candidate experts for a downstream task without fine-tuning any of them
(leave-one-out 1-NN accuracy, domain prediction, label matching), and
benchmark every strategy against an explicit fine-tune oracle.
"""

from .bench import (CostModelInput, CostTable, RegretSummary, SyntheticWorld,
                    TaskInstance, WorldConfig, asymptotic_costs, bootstrap_ci,
                    evaluate_selectors, generate_world, render_report)
from .dataset_io import (CATEGORICAL, MULTILABEL, DataFormatError, EmbeddingMatrix,
                         ProbMatrix, TaskDataset, read_embeddings, read_probs,
                         read_task, write_embeddings, write_probs, write_task)
from .hierarchy import (ExpertSlice, HierarchyError, LabelHierarchy,
                        MultiLabelExample, balanced_resample, build_slices,
                        close_labels, closed_counts, load_examples,
                        load_hierarchy, select_domains)
from .knn import LoocvResult, knn_select, loocv_1nn_accuracy, pairwise_sq_dists
from .selectors import (LabelDistribution, SelectionReport, SelectorInputError,
                        bernoulli_kl, empirical_prior, epn_select,
                        estimate_task_distribution, kl_select, random_select)
from .toy_models import (AdapterParams, FeatureMap, LinearExtractor, LogisticModel,
                         NumericError, ParamReport, TrainerConfig, adapted_block_forward,
                         adapter_forward, count_params, extract, group_norm,
                         logistic_gradient, oracle_downstream_accuracy, predict_proba,
                         train_logistic)

__version__ = "0.1.0"
