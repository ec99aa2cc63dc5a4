"""Federated causal discovery from distributed interventional data.

Simulated clients fit linear-Gaussian structure locally and answer scalar
regret queries; a data-less server reconstructs first the observational
equivalence class of the shared causal graph, then a strictly more oriented
refinement that exploits the clients' (undisclosed) interventions. Regret
reports can carry Laplace noise for differential privacy.
"""

from .federation import (
    ClientFailure,
    ClientState,
    DpConfig,
    FederationConfig,
    FederationResult,
    Phase,
    RegretQuery,
    RegretReport,
    laplace_noise,
    phase1_aggregate,
    phase2_refine,
    run_federated_discovery,
)
from .ges import GesConfig, GesResult, ges_fit, local_discovery
from .graphs import (
    Cpdag,
    ClientTargets,
    Dag,
    InconsistentPdagError,
    InterventionFamily,
    Mark,
    PDGraph,
    complete_pdag,
    consistent_extension,
    cpdag_of,
    includes,
    intersect,
    intervention_equivalent,
    mutilate,
    novel_v_structures,
    refined_cpdag,
    skeleton,
    v_structures,
)
from .metrics import EvalResult, evaluate, orientation_f1, shd
from .scoring import (
    CollinearParentsError,
    LocalScoreCache,
    local_bic,
    regret,
    score_dag,
    score_pdag,
)
from .sem import (
    ClientScenario,
    Dataset,
    LinearSem,
    derive_seed,
    erdos_renyi_dag,
    family_of,
    plan_interventions,
    sample_client,
    sample_weights,
    shielded_colliders,
)

__version__ = "0.1.0"
