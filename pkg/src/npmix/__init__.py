"""Nonparametric ML estimation of mixing distributions in discrete choice."""

from .adapt import (AdaptConfig, estimate, init_grid, mh_sample_support,
                    probe_grid, refine_grid, split_component)
from .data import (Dataset, TrueMixing, case_kernel, load_dataset,
                   save_dataset, simulate_case)
from .em import EmConfig, e_step, em_run, m_step
from .kernel import KernelSpec, bvn_cdf, component_prob, mnl_prob, mnp_prob
from .metrics import MetricsReport, cdf_dist, compute_report, ll_gap, prob_mae
from .mixture import (Component, MixingDistribution, ProbCache, build_cache,
                      check_optimality, gradient_D, scaled_loglik)
from .weights import WeightSolveConfig, line_search_alpha, optimize_weights, prune

__version__ = "0.1.0"
