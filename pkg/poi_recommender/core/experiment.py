"""
Experiment orchestration.

An experiment is a list of cells. A cell fixes the method, privacy budget,
budget split, iteration count and normalisation switch; it is trained and
evaluated once per seed and reported as the mean over seeds. Cells are
independent and may run in parallel; reports are written in cell order.
"""

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Union

from joblib import Parallel, delayed

from ..data.checkins import CheckinDataset, load_checkins
from ..data.features import truncate_history
from ..data.synthetic import generate_from_manifest, load_manifest, preset_manifest
from ..evaluation.metrics import MetricsReport, average_reports, evaluate_result
from ..evaluation.reports import CsvReportWriter
from ..privacy.budget import split_budget
from ..training.baselines import train_npb, train_pb
from ..training.model import TrainConfig
from ..training.trainer import TrainResult, train_spirel
from ..utils.logging import logger, setup_logging
from .config import DatasetConfig, ExperimentConfig
from .exceptions import InvalidParameterError

# PB reads only the total; the split is a placeholder for PrivacyBudget
_PB_SPLIT = 0.5


@dataclass(frozen=True)
class ExperimentCell:
    """One point of the experiment grid."""

    method: str
    epsilon: Optional[float]
    split_ratio: Optional[float]
    iterations: int
    normalize_q: Optional[bool] = None

    @property
    def private(self) -> bool:
        return self.epsilon is not None

    def label(self) -> str:
        parts = [self.method, f"eps={self.epsilon:g}" if self.private else "non-private"]
        if self.split_ratio is not None:
            parts.append(f"split={self.split_ratio:g}")
        parts.append(f"k={self.iterations}")
        if self.normalize_q is False:
            parts.append("raw-q")
        return " ".join(parts)


def load_dataset(config: DatasetConfig) -> CheckinDataset:
    """
    Load or generate the histories a dataset section describes.

    Args:
        config: Validated [dataset] section

    Returns:
        CheckinDataset: Histories, truncated to max_length when set
    """
    if config.path is not None:
        dataset = load_checkins(config.path)
    elif config.manifest is not None:
        manifest_path = Path(config.manifest)
        dataset = generate_from_manifest(load_manifest(manifest_path), base_dir=manifest_path.parent)
    else:
        dataset = generate_from_manifest(preset_manifest(str(config.preset)))

    if config.max_length:
        dataset = CheckinDataset(
            domain=dataset.domain,
            histories=[truncate_history(h, config.max_length) for h in dataset],
            dropped_users=dataset.dropped_users,
            name=dataset.name,
        )
    dataset.name = config.descriptor
    return dataset


def build_cells(config: ExperimentConfig, sweep: bool = False, private: bool = True) -> List[ExperimentCell]:
    """
    Expand the configuration into experiment cells.

    Without sweep only the base values are used. In the non-private mode
    every cell runs without a budget and the budget axes collapse.

    Args:
        config: Validated experiment configuration
        sweep: Use the [sweep] axes
        private: False forces the non-private mode

    Returns:
        List[ExperimentCell]: Cells in method order, without duplicates
    """
    private = private and config.privacy.enabled
    axes = config.sweep if sweep else None
    epsilons = (axes.epsilons if axes and axes.epsilons else [config.privacy.epsilon]) if private else [None]
    ratios = (axes.split_ratios if axes and axes.split_ratios else [config.privacy.split_ratio]) if private else [None]
    iterations = axes.iterations if axes and axes.iterations else [config.trainer.iterations]
    normalize = axes.normalize_q if axes and axes.normalize_q else [config.trainer.normalize_q]

    cells: List[ExperimentCell] = []
    for method in config.evaluation.methods:
        if method == "spirel":
            for eps, ratio, k, norm in itertools.product(epsilons, ratios, iterations, normalize):
                cells.append(ExperimentCell(method, eps, ratio, k, norm))
        elif method == "pb":
            for eps, k in itertools.product(epsilons, iterations):
                cells.append(ExperimentCell(method, eps, None, k))
        else:
            cells.append(ExperimentCell(method, None, None, config.baselines.npb_epochs))
    return list(dict.fromkeys(cells))


def train_config_for(
    cell: ExperimentCell, config: ExperimentConfig, seed: int, track_trace: bool = False
) -> TrainConfig:
    """Translate a cell and the [trainer]/[baselines] sections into trainer settings."""
    trainer = config.trainer
    baselines = config.baselines
    if cell.method == "spirel":
        return TrainConfig(
            d=trainer.d,
            regularization=trainer.regularization,
            gamma=trainer.gamma,
            iterations=cell.iterations,
            beta1=trainer.beta1,
            beta2=trainer.beta2,
            adam_epsilon=trainer.adam_epsilon,
            use_adam=trainer.use_adam,
            normalize_q=trainer.normalize_q if cell.normalize_q is None else cell.normalize_q,
            sigmoid_scale=trainer.sigmoid_scale,
            budget=split_budget(cell.epsilon, cell.split_ratio) if cell.private else None,
            seed=seed,
            track_trace=track_trace,
        )
    if cell.method == "pb":
        return TrainConfig(
            d=baselines.d,
            regularization=trainer.regularization,
            gamma=baselines.pb_gamma,
            iterations=cell.iterations,
            use_adam=False,
            budget=split_budget(cell.epsilon, _PB_SPLIT) if cell.private else None,
            seed=seed,
        )
    if cell.method == "npb":
        return TrainConfig(
            d=baselines.d,
            regularization=trainer.regularization,
            gamma=baselines.npb_gamma,
            epochs=baselines.npb_epochs,
            seed=seed,
        )
    raise InvalidParameterError(f"unknown method {cell.method!r}")


def train_method(
    dataset: CheckinDataset, cell: ExperimentCell, train_config: TrainConfig, show_progress: bool = False
) -> TrainResult:
    if cell.method == "spirel":
        return train_spirel(dataset, train_config, show_progress=show_progress)
    if cell.method == "pb":
        return train_pb(dataset, train_config, show_progress=show_progress)
    if cell.method == "npb":
        return train_npb(dataset, train_config, show_progress=show_progress)
    raise InvalidParameterError(f"unknown method {cell.method!r}")


def run_cell(dataset: CheckinDataset, cell: ExperimentCell, config: ExperimentConfig) -> MetricsReport:
    """Train and evaluate one cell for every configured seed and average."""
    reports = []
    for seed in config.evaluation.seeds:
        result = train_method(dataset, cell, train_config_for(cell, config, seed))
        reports.append(evaluate_result(result, config.evaluation.ks))
    report = average_reports(reports)
    report.metadata.update(
        {
            "method": cell.method,
            "dataset": dataset.name,
            "epsilon": cell.epsilon,
            "split_ratio": cell.split_ratio,
            "iterations": cell.iterations,
        }
    )
    return report


class ExperimentRunner:
    """Runs cells, in parallel when asked, and streams reports to a CSV file."""

    def __init__(self, config: ExperimentConfig, jobs: int = 1):
        """
        Initialize the runner.

        Args:
            config: Validated experiment configuration
            jobs: Worker processes; 1 runs cells in this process
        """
        if jobs == 0 or jobs < -1:
            raise InvalidParameterError("jobs must be a positive count or -1 for all cores")
        self.config = config
        self.jobs = jobs
        self.logger = setup_logging(f"{__name__}.{self.__class__.__name__}")

    def run(
        self,
        dataset: CheckinDataset,
        cells: Iterable[ExperimentCell],
        csv_path: Optional[Union[str, Path]] = None,
    ) -> List[MetricsReport]:
        """
        Run every cell and return its seed-averaged report.

        Rows of finished cells are already on disk if a later cell fails.

        Args:
            dataset: Histories shared by all cells
            cells: Cells to run
            csv_path: Report file, written as cells finish

        Returns:
            List[MetricsReport]: One report per cell, in cell order
        """
        cells = list(cells)
        writer = CsvReportWriter(csv_path) if csv_path is not None else None
        self.logger.info(
            f"Running {len(cells)} cells x {self.config.evaluation.seed_count} seeds on "
            f"{dataset.name} ({dataset.m} users, {dataset.n} POIs) with {self.jobs} job(s)"
        )

        results = Parallel(n_jobs=self.jobs, return_as="generator")(
            delayed(run_cell)(dataset, cell, self.config) for cell in cells
        )
        reports: List[MetricsReport] = []
        for cell, report in zip(cells, results):
            self.logger.info(
                f"Finished {cell.label()}: "
                + ", ".join(f"recall@{k}={report.recall_at[k]:.4f}" for k in report.ks)
            )
            if writer is not None:
                writer.write(report)
            reports.append(report)
        return reports


def run_experiment(
    config: ExperimentConfig,
    sweep: bool = False,
    private: bool = True,
    jobs: int = 1,
    csv_path: Optional[Union[str, Path]] = None,
    dataset: Optional[CheckinDataset] = None,
) -> List[MetricsReport]:
    """
    Load the dataset, expand the cells and run them.

    Args:
        config: Validated experiment configuration
        sweep: Use the [sweep] axes instead of the base cell only
        private: False runs every cell in the non-private mode
        jobs: Worker processes
        csv_path: Report file
        dataset: Histories to use instead of the configured source

    Returns:
        List[MetricsReport]: One report per cell
    """
    data = dataset if dataset is not None else load_dataset(config.dataset)
    cells = build_cells(config, sweep=sweep, private=private)
    logger.debug(f"Cells: {[cell.label() for cell in cells]}")
    return ExperimentRunner(config, jobs=jobs).run(data, cells, csv_path=csv_path)
