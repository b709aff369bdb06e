from .gradcheck import gradient_check
from .gru import GRUStack
from .optim import Adam
from .rbm import MultinomialRBM

__all__ = ["GRUStack", "MultinomialRBM", "Adam", "gradient_check"]
