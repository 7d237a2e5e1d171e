from .elm import ElmModel, SingleClassError, elm_predict, elm_scores, elm_train, tribas
from .lstm import (LstmModel, SgdmConfig, gradcheck, loss_and_grads, lstm_forward, lstm_init,
                   lstm_predict, lstm_train)
from .pca import PcaModel, RankError, pca_fit, pca_inverse, pca_transform

__all__ = [
    "ElmModel", "SingleClassError", "elm_predict", "elm_scores", "elm_train", "tribas",
    "LstmModel", "SgdmConfig", "gradcheck", "loss_and_grads", "lstm_forward", "lstm_init",
    "lstm_predict", "lstm_train",
    "PcaModel", "RankError", "pca_fit", "pca_inverse", "pca_transform",
]
