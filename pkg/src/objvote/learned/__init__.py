from .io import ModelFileError, load_model, load_model_with_meta, save_model
from .model import (
    AdamState,
    DeepSetModel,
    adam_step,
    batch_loss_and_grad,
    featurize,
    forward,
    loss_and_grad,
)
from .train import (
    SEARCH_SPACE,
    TrainConfig,
    Trial,
    frozen_loss,
    frozen_set,
    hyperparameter_search,
    run_search,
    sample_batch,
    search_space_configs,
    train,
)
