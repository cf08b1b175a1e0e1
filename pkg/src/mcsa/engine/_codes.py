"""Integer codes shared by both engine backends."""

METHOD_MSC = 0
METHOD_MSCRB = 1
METHOD_JSA = 2
METHOD_PMCSA = 3
METHOD_ELBO = 4

METHOD_CODES = {
    "MSC": METHOD_MSC,
    "MSCRB": METHOD_MSCRB,
    "JSA": METHOD_JSA,
    "PMCSA": METHOD_PMCSA,
    "ELBO": METHOD_ELBO,
    # kernel-level aliases used by the 1-D variance simulation
    "CIS": METHOD_MSC,
    "CISRB": METHOD_MSCRB,
    "PIMH": METHOD_PMCSA,
}

OPT_SGD = 0
OPT_MOMENTUM = 1
OPT_NESTEROV = 2
OPT_ADAM = 3

OPT_CODES = {"sgd": OPT_SGD, "momentum": OPT_MOMENTUM, "nesterov": OPT_NESTEROV,
             "adam": OPT_ADAM}

SCHED_CONSTANT = 0
SCHED_INV_SQRT = 1
SCHED_INV = 2

SCHED_CODES = {"constant": SCHED_CONSTANT, "inv_sqrt": SCHED_INV_SQRT, "inv": SCHED_INV}
