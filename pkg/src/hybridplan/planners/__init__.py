from .search import CostField, NoPath, astar, astar_search, bfs_distance, bfs_distances, dijkstra, dijkstra_search
from .pipeline import ASTAR_FALLBACK, GAN_CANDIDATE, TRANSFORMER, Models, PipelineConfig, PlanResult, all_configs, hybrid_plan, replan
from .multi import NoJointPlan, ReservationTable, joint_positions, prioritized_multi, space_time_astar

__all__ = ["CostField", "NoPath", "astar", "astar_search", "bfs_distance", "bfs_distances", "dijkstra", "dijkstra_search",
           "ASTAR_FALLBACK", "GAN_CANDIDATE", "TRANSFORMER", "Models", "PipelineConfig", "PlanResult", "all_configs",
           "hybrid_plan", "replan", "NoJointPlan", "ReservationTable", "joint_positions", "prioritized_multi",
           "space_time_astar"]
