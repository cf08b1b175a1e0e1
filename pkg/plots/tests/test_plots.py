"""Figure rendering against synthetic and real pipeline CSVs, plus the
acceptance check for the variance-panels figure."""

import shutil
import subprocess
import sys

import pytest

from mcsa_plot import FigureSpec, SchemaError, render

RAW_HEADER = ("experiment,method,N,repetition,iteration,kl,grad_variance,"
              "acceptance_rate,diverged,wall_ns")


def write_variance_csv(path, methods=("CIS", "CISRB", "PIMH"),
                       dmus=(0, 2, 4), ns=(4, 8, 16, 32, 64, 128)):
    lines = [RAW_HEADER]
    for dmu in dmus:
        for m_i, method in enumerate(methods):
            for n_i, n in enumerate(ns):
                var = (1.0 + dmu) * (0.5 + m_i) / (n ** (0.5 * m_i))
                lines.append(f"variance_simulation:dmu={dmu},{method},{n},0,,,"
                             f"{var},,false,")
    path.write_text("\n".join(lines) + "\n")


def write_aggregated_convergence_csv(path):
    lines = ["method,N,iteration,q0.1,q0.5,q0.9"]
    for method, base in (("MSC", 1.0), ("PMCSA", 0.5)):
        for n in (4, 64):
            for it in (0, 100, 200, 300):
                mid = base * 10.0 / (1 + it) + 0.01
                lines.append(f"{method},{n},{it},{0.8 * mid:.6g},{mid:.6g},"
                             f"{1.2 * mid:.6g}")
    path.write_text("\n".join(lines) + "\n")


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "mcsa_plot.cli", *args],
                          capture_output=True, text=True)


class TestRender:
    def test_variance_panels_three_panels(self, tmp_path):
        csv = tmp_path / "v.csv"
        write_variance_csv(csv)
        out = tmp_path / "v.png"
        render(FigureSpec.create("variance_panels", str(csv), str(out)))
        assert out.exists() and out.stat().st_size > 0

    def test_single_method_single_budget_convergence(self, tmp_path):
        csv = tmp_path / "c.csv"
        lines = ["method,N,iteration,q0.1,q0.5,q0.9"]
        for it in (0, 50, 100):
            lines.append(f"MSC,4,{it},{1.0 / (1 + it)},{2.0 / (1 + it)},"
                         f"{3.0 / (1 + it)}")
        csv.write_text("\n".join(lines) + "\n")
        out = tmp_path / "c.png"
        render(FigureSpec.create("convergence", str(csv), str(out)))
        assert out.exists()

    def test_convergence_band_figure(self, tmp_path):
        csv = tmp_path / "c.csv"
        write_aggregated_convergence_csv(csv)
        out = tmp_path / "c.png"
        render(FigureSpec.create("convergence", str(csv), str(out)))
        assert out.exists()

    def test_stepsize_panels(self, tmp_path):
        csv = tmp_path / "s.csv"
        lines = ["experiment,method,q0.1,q0.5,q0.9"]
        for opt in ("sgd", "adam"):
            for gamma in (1e-3, 1e-2, 1e-1):
                for method, kl in (("MSC", 1.0), ("PMCSA", 0.3)):
                    kl = kl / gamma
                    lines.append(f"stepsize_sweep:opt={opt}:gamma={gamma},"
                                 f"{method},{0.9 * kl},{kl},{1.1 * kl}")
        csv.write_text("\n".join(lines) + "\n")
        out = tmp_path / "s.png"
        render(FigureSpec.create("stepsize", str(csv), str(out)))
        assert out.exists()

    def test_schema_mismatch_names_columns(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("a,b\n1,2\n")
        out = tmp_path / "x.png"
        with pytest.raises(SchemaError, match="missing column"):
            render(FigureSpec.create("variance_panels", str(csv), str(out)))
        assert not out.exists()

    def test_empty_after_filtering_is_an_error(self, tmp_path):
        csv = tmp_path / "empty.csv"
        csv.write_text(RAW_HEADER + "\n"
                       "variance_simulation:dmu=0,CIS,4,0,,,,,false,\n")
        out = tmp_path / "x.png"
        with pytest.raises(SchemaError, match="no plottable"):
            render(FigureSpec.create("variance_panels", str(csv), str(out)))
        assert not out.exists()

    def test_deterministic_output_bytes(self, tmp_path):
        csv = tmp_path / "v.csv"
        write_variance_csv(csv)
        outs = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            render(FigureSpec.create("variance_panels", str(csv), str(out)))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestCli:
    def test_exit_zero_and_file(self, tmp_path):
        csv = tmp_path / "v.csv"
        write_variance_csv(csv)
        out = tmp_path / "fig.png"
        proc = run_cli("variance_panels", "--in", str(csv), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_schema_mismatch_exit_nonzero(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("foo,bar\n1,2\n")
        out = tmp_path / "fig.png"
        proc = run_cli("variance_panels", "--in", str(csv), "--out", str(out))
        assert proc.returncode != 0
        assert "missing column" in proc.stderr
        assert "method" in proc.stderr

    def test_axis_flag_overrides(self, tmp_path):
        csv = tmp_path / "v.csv"
        write_variance_csv(csv)
        out = tmp_path / "fig.png"
        proc = run_cli("variance_panels", "--in", str(csv), "--out", str(out),
                       "--no-logy", "--logx")
        assert proc.returncode == 0, proc.stderr


@pytest.mark.skipif(shutil.which("mcsa") is None,
                    reason="primary mcsa CLI not installed")
def test_acceptance_10_variance_panels_from_pipeline(tmp_path):
    """Acceptance: a three-panel log-scale figure with all three method
    legends from the variance-simulation CSV; schema mismatch exits nonzero
    with a column diagnostic."""
    conf = tmp_path / "vs.conf"
    conf.write_text("experiment = variance_simulation\ndim = 1\n"
                    "methods = MSC, MSCRB, PMCSA\nbudgets = 4, 8, 16, 32, 64, 128\n"
                    "delta_mus = 0, 2, 4\nnum_replicates = 2048\nalpha = 1.0\n"
                    "seed = 1010\n")
    csv = tmp_path / "vs.csv"
    proc = subprocess.run(["mcsa", "run", str(conf), "--out", str(csv)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

    out = tmp_path / "vs.png"
    proc = run_cli("variance_panels", "--in", str(csv), "--out", str(out))
    ok_render = proc.returncode == 0 and out.exists() and out.stat().st_size > 0

    # panel/legend structure: three offsets, three kernel labels
    rows = csv.read_text().splitlines()[1:]
    panels = {r.split(",")[0] for r in rows}
    methods = {r.split(",")[1] for r in rows}
    ok_structure = len(panels) == 3 and methods == {"CIS", "CISRB", "PIMH"}

    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    proc_bad = run_cli("variance_panels", "--in", str(bad), "--out",
                       str(tmp_path / "nope.png"))
    ok_mismatch = proc_bad.returncode != 0 and "column" in proc_bad.stderr

    ok = ok_render and ok_structure and ok_mismatch
    print(f"[acceptance 10] variance_panels figure: {'PASS' if ok else 'FAIL'} "
          f"(render={ok_render}, structure={ok_structure}, "
          f"mismatch-diagnostic={ok_mismatch})")
    assert ok
