"""Figure rendering: files appear next to the CSVs and are deterministic."""

import numpy as np

from recdrop.analysis import RunRecord, SpectrumCurve, SweepCell, default_cells
from recdrop.figures import (
    save_bias_figure,
    save_difficulty_figure,
    save_heatmap_figure,
    save_spectrum_figure,
    save_sweep_figure,
)
from recdrop.metrics import BiasCurve, MetricReport, aggregate_reports
from recdrop.simulator import ClusterLayout, TransitionSpec


def fake_records():
    records = []
    rng = np.random.default_rng(0)
    for cell in default_cells((0, 1, 2)):
        reports = [
            MetricReport(
                map1=0.07 - 0.01 * cell.expected_dropout + rng.normal(0, 1e-3),
                map10=0.2 - 0.02 * cell.expected_dropout + rng.normal(0, 1e-3),
                entropy=3.8 + 0.1 * cell.expected_dropout,
                kl=max(0.9 - 0.3 * cell.expected_dropout, 0.01),
            )
            for _ in range(3)
        ]
        records.append(
            RunRecord(cell=cell, seeds=[1, 2, 3], reports=reports,
                      aggregate=aggregate_reports(reports))
        )
    return records


def test_all_figures_render(tmp_path):
    records = fake_records()
    sweep_png = save_sweep_figure(records, tmp_path / "sweep.png")
    heat_png = save_heatmap_figure(np.random.default_rng(1).random((10, 100)),
                                   tmp_path / "heat.png", tag="demo")
    curve = SpectrumCurve(
        ks=np.array([1, 10, 50]),
        mean_modulus=np.array([0.2, 1e-3, 1e-9]),
        stderr=np.array([1e-3, 1e-5, 1e-11]),
        max_modulus=np.array([0.4, 2e-3, 2e-9]),
    )
    spec_png = save_spectrum_figure([("baseline", curve), ("dropout", curve)],
                                    tmp_path / "spec.png")
    bias = BiasCurve(ks=np.arange(1, 20), values=np.linspace(0.5, 0.1, 19))
    bias_png = save_bias_figure([("baseline", bias)], 0.1, tmp_path / "bias.png")
    spec = TransitionSpec(ClusterLayout(10, 10), 0.7)
    diff_png = save_difficulty_figure(spec, [SweepCell("fixed", 5), SweepCell("uniform", 5)],
                                      tmp_path / "difficulty.png")
    for path in (sweep_png, heat_png, spec_png, bias_png, diff_png):
        assert path.exists() and path.stat().st_size > 0


def test_rendering_is_byte_deterministic(tmp_path):
    records = fake_records()
    a = save_sweep_figure(records, tmp_path / "a.png")
    b = save_sweep_figure(records, tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()
