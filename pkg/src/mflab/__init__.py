"""Particle systems with agent-dependent interactions and their mean-field, graph and PDE limits."""

from .kernels import (BoundBox, InteractionKernel, cucker_smale_kernel, hamiltonian_pair_kernel,
                      lipschitz_estimate, opinion_kernel, sup_estimate, zero_kernel)
from .partition import PartitionField, TaggedPartition, uniform_partition
from .particles import BlowUpError, ParticleState, Trajectory, integrate, particle_rhs
from .measures import ConditionalFamily, DiscreteMeasure, empirical, moments
from .wasserstein import l1nu_w1, w1, w1_line, w1_lp
from .marginals import chaos_certificate, epsilon_bound, epsilon_n, symmetrized_marginal
from .euler import graph_limit_experiment, graph_limit_experiment_2
from .fitting import RateFit, fit_rate
from .dsl import ParseError, PdeSpec, parse_pde
from .pde import (apply_A_eps, gaussian_pde_kernel, mollified_kernel, particle_pde_solve, polynomial_mollifier,
                  reference_pde_solve, scaling_schedule, sigma_eps)

__version__ = "0.1.0"
