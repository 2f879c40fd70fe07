"""Flow-matching regression processes with product-of-experts guided sampling."""

from .binned import (BinnedDensity, factorized_grad, gaussian_bins,
                     sample_binned, smoothed_cdf, smoothed_logpdf_grad,
                     smoothed_pdf, uniform_bins)
from .checks import (CheckReport, consistency_check, exchangeability_check,
                     predictive_metrics)
from .errors import (ClientError, ConfigError, ContractError,
                     DegenerateDensityError, FlowPoeError, FormatError,
                     IntegrationError, NumericalError, ProtocolError,
                     SamplingError, TrainingError)
from .gp import (GeneratorConfig, GpKernelSpec, GpOracleField,
                 exact_posterior, gen_tasks, sample_prior)
from .llm import (CachingClient, HttpCompletionClient, PromptConfig,
                  ScriptedClient, TokenDistribution, autoregressive_sample,
                  digit_bin_density, format_prompt, marginal_densities)
from .network import FlowNetwork, NetworkConfig
from .sampling import (LangevinCorrector, NetworkField, SampleResult,
                       SamplerConfig, conditional_guided_field, integrate_ode,
                       poe_guided_field, sample_process)
from .schedulers import (ConversionCoefficients, Scheduler,
                         conversion_coefficients, flow_from_score,
                         guidance_variance, score_from_flow, x1_from_flow)
from .tasks import (RegressionTask, read_tasks_jsonl, task_from_record,
                    task_to_record, write_tasks_jsonl)
from .training import TrainConfig, TrainResult, load_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "BinnedDensity", "CachingClient", "CheckReport", "ClientError",
    "ConfigError", "ContractError", "ConversionCoefficients",
    "DegenerateDensityError", "FlowNetwork", "FlowPoeError", "FormatError",
    "GeneratorConfig", "GpKernelSpec", "GpOracleField",
    "HttpCompletionClient", "IntegrationError", "LangevinCorrector",
    "NetworkConfig", "NetworkField", "NumericalError", "PromptConfig",
    "ProtocolError", "RegressionTask", "SampleResult", "SamplerConfig",
    "SamplingError", "Scheduler", "ScriptedClient", "TokenDistribution",
    "TrainConfig", "TrainResult", "TrainingError", "autoregressive_sample",
    "conditional_guided_field", "consistency_check",
    "conversion_coefficients", "digit_bin_density", "exact_posterior",
    "exchangeability_check", "factorized_grad", "flow_from_score",
    "format_prompt", "gaussian_bins", "gen_tasks", "guidance_variance",
    "integrate_ode", "load_checkpoint", "marginal_densities",
    "poe_guided_field", "predictive_metrics", "read_tasks_jsonl",
    "sample_binned", "sample_prior", "sample_process", "score_from_flow",
    "smoothed_cdf", "smoothed_logpdf_grad", "smoothed_pdf",
    "task_from_record", "task_to_record", "train", "uniform_bins",
    "write_tasks_jsonl", "x1_from_flow",
]
