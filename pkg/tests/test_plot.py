import main as cli
import plot_results
from sar import experiments


def test_run_plots(tmp_path, write_ini):
    ini = write_ini("[run]\nproblem = oscillatory\nn = 20\nensemble_size = 4\nmax_steps = 50\n")
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(ini), "--out", str(out)]) == 0
    assert plot_results.main(["--run", str(out)]) == 0
    assert (out / "trajectory.png").stat().st_size > 0
    assert (out / "mean.png").stat().st_size > 0


def test_rates_plot(tmp_path):
    rows = [experiments.RateRow(d, 10 * i, 2.0 * d**0.4) for i, d in enumerate((1e-1, 1e-2, 1e-3))]
    fit = experiments.fit_rates(rows, gamma=1.0 / 3.0)
    experiments.write_rates(rows, fit, tmp_path, {"problem": "diagonal"})
    assert plot_results.main(["--rates", str(tmp_path)]) == 0
    assert (tmp_path / "rates.png").exists()


def test_sweep_plot(tmp_path):
    rows = [
        experiments.SweepRow(theta, size, "Stopped", 40, 0.4 + theta, 0.01, 0.1, theta)
        for theta in (0.0, 0.1)
        for size in (10, 50)
    ]
    experiments.write_csv(
        tmp_path / "sweep.csv",
        experiments.SWEEP_HEADER,
        ([getattr(r, name) for name in experiments.SWEEP_HEADER] for r in rows),
    )
    assert plot_results.main(["--sweep", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.png").stat().st_size > 0
