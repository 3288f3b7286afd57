"""Quantum causal models: layered networks of SIC-instruments, inference of
un-measurements and interventions from reference statistics, and checks."""

from .classical import ClassicalModel, classical_do, classical_undo, cmc_check, do_model, joint_from_cpts
from .graph import (CLASSICAL, EXOGENOUS, INTERNAL, QUANTUM, TERMINAL, Dag, GraphError, Layering, Node,
                    implied_independences, kin, reverse_dag, separated, surgery_do, surgery_undo, validate_layering)
from .inference import (DeltaKernel, InferenceError, NonQuantumError, SicGram, delta_and_gram, multi_undo,
                        quantum_do, quantum_do_many, undo_layer, undo_subset, urgleichung_chain)
from .modelfile import ModelError, load_model, parse_model
from .network import (Do, DoFine, NetworkError, QuantumNetwork, Reference, SubChannel, Undo, counterfactual_oracle,
                      random_network, reference_distribution)
from .quantum import (Channel, InterventionInstrument, QuantumError, SicPovm, check_channel, random_unbiased_channel,
                      sic_povm)
from .table import NegativityWarning, ProbTable, TableError, load_table

__version__ = "0.1.0"
