from .lp import solve_lp_benders
from .miblp import build_master, cut_block, miblp_floor, solve_miblp
from .reaction import ReactionCertificate, build_primal, build_reaction_dual, evaluate_reaction
from .trace import BendersResult, BendersTrace
from .two_stage import solve_2ssmilp

__all__ = [
    "BendersResult",
    "BendersTrace",
    "ReactionCertificate",
    "build_master",
    "build_primal",
    "build_reaction_dual",
    "cut_block",
    "evaluate_reaction",
    "miblp_floor",
    "solve_2ssmilp",
    "solve_lp_benders",
    "solve_miblp",
]
