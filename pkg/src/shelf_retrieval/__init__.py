"""Retrieving an occluded object from a cluttered shelf by rearranging what blocks it."""

from .scene import Pose, ObjectInstance, Scene, Workspace, load_scene, save_scene
from .geometry import Box, Cylinder
from .sensor import CameraModel, render
from .planner import Heuristic, PipelineConfig, Status, rc_pipeline, random_pipeline

__all__ = ["Box", "CameraModel", "Cylinder", "Heuristic", "ObjectInstance", "PipelineConfig",
           "Pose", "Scene", "Status", "Workspace", "load_scene", "random_pipeline", "rc_pipeline",
           "render", "save_scene"]
