"""Multi-expert-agent object classification with online K/M/D feature learning."""
from .center_agent import (
    BaseFeatureRegistry,
    CenterAgent,
    ClassificationVector,
    DegreeOfConfidence,
    DispatchPolicy,
    aggregate,
    bootstrap,
    confidence,
    dispatch,
)
from .config import ScenarioConfig
from .corpus import CorpusObject, CorpusSpec, generate_corpus, preprocess
from .expert_agent import AgentParams, ExpertAgent, ResultPackage, SubConcept
from .feature_model import FeatureCollection, Region, Thresholds
from .harness import compare_baseline, run_scenario
from .simulation import Simulation
from .time_memory import TimeIntervalMemory

__all__ = [
    "AgentParams",
    "BaseFeatureRegistry",
    "CenterAgent",
    "ClassificationVector",
    "CorpusObject",
    "CorpusSpec",
    "DegreeOfConfidence",
    "DispatchPolicy",
    "ExpertAgent",
    "FeatureCollection",
    "Region",
    "ResultPackage",
    "ScenarioConfig",
    "Simulation",
    "SubConcept",
    "Thresholds",
    "TimeIntervalMemory",
    "aggregate",
    "bootstrap",
    "compare_baseline",
    "confidence",
    "dispatch",
    "generate_corpus",
    "preprocess",
    "run_scenario",
]
