//! Transfer metrics (jumpstart and asymptotic performance) and experiment
//! report rendering.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::training::TrainReport;

/// Baseline-vs-transferred pairing with its derived metrics.
#[derive(Debug, Clone)]
pub struct TransferComparison {
    /// Model family label used in tables and file names.
    pub model: String,
    /// Freeze-plan label of the transferred run.
    pub plan: String,
    pub baseline: TrainReport,
    pub transferred: TrainReport,
    pub jumpstart: f64,
    pub asymptotic: f64,
    /// Final achieved performance of the transferred run.
    pub final_acc: f64,
}

impl TransferComparison {
    pub fn new(baseline: TrainReport, transferred: TrainReport) -> Result<Self> {
        let jumpstart = jumpstart(&baseline, &transferred)?;
        let asymptotic = asymptotic(&baseline, &transferred)?;
        let final_acc = transferred.final_acc()?;
        Ok(TransferComparison {
            model: transferred.variant.clone(),
            plan: transferred.plan.clone(),
            baseline,
            transferred,
            jumpstart,
            asymptotic,
            final_acc,
        })
    }
}

/// Initial-performance gain: the transferred model's test accuracy after
/// epoch 1 minus the baseline's. Negative transfer yields a negative value.
pub fn jumpstart(baseline: &TrainReport, transferred: &TrainReport) -> Result<f64> {
    Ok(transferred.initial_acc()? - baseline.initial_acc()?)
}

/// Final-performance gain: the transferred model's best test accuracy over
/// the run minus the baseline's best.
pub fn asymptotic(baseline: &TrainReport, transferred: &TrainReport) -> Result<f64> {
    Ok(transferred.final_acc()? - baseline.final_acc()?)
}

/// Mean of each metric over a group of comparisons (multi-seed averaging).
/// The returned comparison reuses the first pair's curves.
pub fn average_comparisons(group: &[TransferComparison]) -> Result<TransferComparison> {
    let first = group
        .first()
        .ok_or_else(|| Error::Data("cannot average an empty comparison group".into()))?;
    let n = group.len() as f64;
    Ok(TransferComparison {
        model: first.model.clone(),
        plan: first.plan.clone(),
        baseline: first.baseline.clone(),
        transferred: first.transferred.clone(),
        jumpstart: group.iter().map(|c| c.jumpstart).sum::<f64>() / n,
        asymptotic: group.iter().map(|c| c.asymptotic).sum::<f64>() / n,
        final_acc: group.iter().map(|c| c.final_acc).sum::<f64>() / n,
    })
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

/// Plain-text summary table: model, plan, final achieved performance,
/// jumpstart, asymptotic performance.
pub fn summary_text(comparisons: &[TransferComparison]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<8} {:>8} {:>10} {:>11}",
        "model", "plan", "final", "jumpstart", "asymptotic"
    );
    for c in comparisons {
        let _ = writeln!(
            out,
            "{:<10} {:<8} {:>8} {:>10} {:>11}",
            c.model,
            c.plan,
            fmt4(c.final_acc),
            fmt4(c.jumpstart),
            fmt4(c.asymptotic)
        );
    }
    out
}

/// Comma-separated version of the summary table.
pub fn summary_csv(comparisons: &[TransferComparison]) -> String {
    let mut out = String::from("model,plan,final,jumpstart,asymptotic\n");
    for c in comparisons {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.model,
            c.plan,
            fmt4(c.final_acc),
            fmt4(c.jumpstart),
            fmt4(c.asymptotic)
        );
    }
    out
}

fn svg_polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Accuracy-curve overlay (baseline vs transferred) as a standalone SVG.
pub fn curves_svg(comparison: &TransferComparison) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 50.0; // left margin
    const MB: f64 = 40.0; // bottom margin
    const MT: f64 = 30.0;
    const MR: f64 = 20.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;

    let epochs = comparison
        .baseline
        .rows
        .len()
        .max(comparison.transferred.rows.len())
        .max(1) as f64;
    let to_xy = |epoch: usize, acc: f64| {
        let x = ML + plot_w * (epoch as f64 / epochs);
        let y = MT + plot_h * (1.0 - acc.clamp(0.0, 1.0));
        (x, y)
    };
    let curve = |report: &TrainReport| {
        let mut pts = vec![to_xy(0, report.epoch0_test_acc)];
        pts.extend(report.rows.iter().map(|r| to_xy(r.epoch, r.test_acc)));
        pts
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MT + plot_h
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ML}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MT + plot_h,
        ML + plot_w,
        MT + plot_h
    );
    for tick in 0..=4 {
        let acc = tick as f64 * 0.25;
        let y = MT + plot_h * (1.0 - acc);
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{:.2}</text>",
            ML - 6.0,
            y + 4.0,
            acc
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#cccccc\"/>",
            ML,
            ML + plot_w
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">epoch (test accuracy, {} {})</text>",
        ML + plot_w / 2.0,
        H - 10.0,
        comparison.model,
        comparison.plan
    );
    svg.push_str(&svg_polyline(&curve(&comparison.baseline), "#1f4fbf"));
    svg.push_str(&svg_polyline(&curve(&comparison.transferred), "#8c2fbf"));
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#1f4fbf\">baseline</text>",
        ML + 8.0,
        MT + 14.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#8c2fbf\">transferred ({})</text>",
        ML + 8.0,
        MT + 30.0,
        comparison.plan
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `summary.txt`, `summary.csv`, and one `curves_<model>_<plan>.svg`
/// per comparison into the output directory. Same inputs produce
/// byte-identical files.
pub fn render_report(comparisons: &[TransferComparison], out_dir: &Path) -> Result<()> {
    if comparisons.is_empty() {
        return Err(Error::Data("render_report needs at least one comparison".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let write = |name: &str, content: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))
    };
    write("summary.txt", summary_text(comparisons))?;
    write("summary.csv", summary_csv(comparisons))?;
    for c in comparisons {
        write(&format!("curves_{}_{}.svg", c.model, c.plan), curves_svg(c))?;
    }
    Ok(())
}
