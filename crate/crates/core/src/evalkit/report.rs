use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::Outcome;
use crate::error::Result;

use super::{CdfPoint, ConfusionMatrix, DemandRow, EvaluationReport};

const OUTCOMES: [Outcome; 3] = [Outcome::Skip, Outcome::Play, Outcome::Replay];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn confusion_records(w: &mut csv::Writer<fs::File>, id: &str, m: &ConfusionMatrix) -> Result<()> {
    let rates = m.rates();
    for a in OUTCOMES {
        let r = rates[a.index()];
        w.write_record([
            id,
            a.as_str(),
            &m.row_total(a).to_string(),
            &r[0].to_string(),
            &r[1].to_string(),
            &r[2].to_string(),
        ])?;
    }
    Ok(())
}

/// Writes `report.json`, `hit_rates.csv`, `positions.csv`, `confusion.csv`,
/// `demand.csv`, `cdf.csv`, `cdf.svg` and `demand.svg` into `dir`.
pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;

    let mut w = csv::Writer::from_path(dir.join("hit_rates.csv"))?;
    w.write_record(["playlist_id", "sessions", "observations", "hits", "hit_rate", "pseudo_r2"])?;
    for p in &report.playlists {
        w.write_record([
            p.playlist_id.as_str(),
            &p.sessions.to_string(),
            &p.hits.total.to_string(),
            &p.hits.hits.to_string(),
            &opt(p.hit_rate),
            &opt(p.pseudo_r2),
        ])?;
    }
    let sessions: usize = report.playlists.iter().map(|p| p.sessions).sum();
    w.write_record([
        "ALL",
        &sessions.to_string(),
        &report.hits.total.to_string(),
        &report.hits.hits.to_string(),
        &opt(report.hit_rate),
        "",
    ])?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("positions.csv"))?;
    w.write_record(["position", "observations", "hits", "hit_rate"])?;
    for r in &report.positions {
        w.write_record([r.position.to_string(), r.total.to_string(), r.hits.to_string(), r.rate.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("confusion.csv"))?;
    w.write_record(["playlist_id", "actual", "observations", "skip", "play", "replay"])?;
    for p in &report.playlists {
        confusion_records(&mut w, &p.playlist_id, &p.confusion)?;
    }
    confusion_records(&mut w, "ALL", &report.confusion)?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("demand.csv"))?;
    w.write_record(["playlist_id", "track", "actual", "predicted"])?;
    for p in &report.playlists {
        for r in &p.demand {
            w.write_record([
                p.playlist_id.as_str(),
                &r.track.to_string(),
                &r.actual.to_string(),
                &r.predicted.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("cdf.csv"))?;
    w.write_record(["hit_rate", "cumulative"])?;
    for p in &report.cdf {
        w.write_record([p.rate.to_string(), p.cumulative.to_string()])?;
    }
    w.flush()?;

    fs::write(dir.join("cdf.svg"), cdf_svg(&[(report.model.as_str(), &report.cdf)]))?;
    let demand: Vec<DemandRow> = report.playlists.iter().flat_map(|p| p.demand.iter().copied()).collect();
    fs::write(dir.join("demand.svg"), demand_svg(&demand))?;
    Ok(())
}

/// Aligned text rendering of a report.
pub fn format_report(report: &EvaluationReport) -> String {
    let width = report
        .playlists
        .iter()
        .map(|p| p.playlist_id.len())
        .max()
        .unwrap_or(0)
        .max(8);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let mut out = format!("model: {}  session end: {}\n\n", report.model, report.session_end);
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>9}", "playlist", "obs", "hit rate", "pseudo R2");
    for p in &report.playlists {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>9}",
            p.playlist_id,
            p.hits.total,
            fmt(p.hit_rate),
            fmt(p.pseudo_r2)
        );
    }
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}", "weighted", report.hits.total, fmt(report.hit_rate));
    let _ = writeln!(out, "\nconfusion (rows actual, columns predicted)");
    let _ = writeln!(out, "{:<8}  {:>6}  {:>6}  {:>6}", "", "skip", "play", "replay");
    for a in OUTCOMES {
        let r = report.confusion_rates[a.index()];
        let _ = writeln!(out, "{:<8}  {:>6.2}  {:>6.2}  {:>6.2}", a.as_str(), r[0], r[1], r[2]);
    }
    out
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn sx(x: f64) -> f64 {
    PAD + x * (W - 2.0 * PAD)
}

fn sy(y: f64) -> f64 {
    H - PAD - y * (H - 2.0 * PAD)
}

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"16\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">{y_label}</text>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 8.0,
        H / 2.0,
        H / 2.0
    )
}

/// Step chart of one or more hit-rate CDFs on `[0, 1]²`.
pub fn cdf_svg(series: &[(&str, &[CdfPoint])]) -> String {
    let mut out = frame("hit-rate CDF", "hit rate", "cumulative share");
    for (k, (label, cdf)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = format!("M {:.1} {:.1}", sx(0.0), sy(0.0));
        let mut level = 0.0;
        for p in cdf.iter() {
            let _ = write!(path, " H {:.1} V {:.1}", sx(p.rate), sy(p.cumulative));
            level = p.cumulative;
        }
        let _ = write!(path, " H {:.1}", sx(1.0));
        let _ = writeln!(out, "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" data-final=\"{level}\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{label}</text>",
            sx(0.05),
            sy(0.95) + 14.0 * k as f64
        );
    }
    out + "</svg>\n"
}

/// Scatter of predicted against actual plays per track.
pub fn demand_svg(rows: &[DemandRow]) -> String {
    let top = rows
        .iter()
        .flat_map(|r| [r.actual, r.predicted])
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut out = frame("demand per track", "actual plays", "predicted plays");
    let _ = writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    for r in rows {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{}\"/>",
            sx(r.actual / top),
            sy(r.predicted / top),
            COLORS[0]
        );
    }
    out + "</svg>\n"
}
