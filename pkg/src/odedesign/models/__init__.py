"""Model registry and the four shipped systems."""

from .base import (
    DelayStructure,
    Model,
    OdeSystem,
    PriorDraws,
    TreatmentPlan,
    available_models,
    get_model,
    register_model,
)
from . import compartmental, fitzhugh_nagumo, jakstat, placenta  # noqa: F401

from .compartmental import CompartmentalModel, exact_solution
from .fitzhugh_nagumo import FitzHughNagumoModel
from .jakstat import JakStatModel, forcing_kappa
from .placenta import PlacentaModel
