use std::collections::BTreeSet;
use std::fs;

use bundleseq_core::dataio::Split;
use bundleseq_core::evalkit::{cdf_svg, dominates, evaluate_playlist, format_report, write_report, EvaluationReport};
use log::warn;
use serde_json::json;

use crate::config::{load_file, write_json, EvaluateSettings};
use crate::manifest::Manifest;
use crate::models::{model_path, prepared, read_settings, selected, LoadedModel};
use crate::{EvaluateArgs, UsageError};

pub fn run(args: EvaluateArgs) -> anyhow::Result<()> {
    let mut s: EvaluateSettings = load_file(args.config.as_deref())?;
    s.data = args.data.merge(s.data);
    if !args.models.is_empty() {
        s.models = args.models;
    }
    if let Some(v) = args.out {
        s.out = v;
    }
    if args.session_end.is_some() {
        s.session_end = args.session_end;
    }
    if let Some(v) = args.demand {
        s.demand = v;
    }
    if !args.only.is_empty() {
        s.playlists = args.only;
    }
    if s.models.is_empty() {
        return Err(UsageError("evaluate needs at least one --model-dir".into()).into());
    }

    super::create_out(&s.out)?;
    let mut manifest = Manifest::new("evaluate", &s)?;
    let mut labels = BTreeSet::new();
    let mut reports: Vec<(String, EvaluationReport)> = Vec::new();
    for root in &s.models {
        let trained = read_settings(root)?;
        let data_config = if s.data.is_set() { &s.data } else { &trained.data };
        let end = s.session_end.unwrap_or(trained.session_end);
        let data = prepared(&data_config.load()?, &trained, end)?;
        let mut evaluations = Vec::new();
        for playlist in selected(&data, &s.playlists)? {
            let dir = model_path(root, &playlist.playlist_id)?;
            if !dir.exists() {
                warn!("{}: no model for playlist {}", root.display(), playlist.playlist_id);
                continue;
            }
            let model = LoadedModel::load(&dir, playlist)?;
            let test = data.sessions_in(&playlist.playlist_id, Split::Test);
            if test.is_empty() {
                warn!("playlist {}: no holdout sessions", playlist.playlist_id);
                continue;
            }
            evaluations.push(evaluate_playlist(model.predictor(), &test, playlist, data.cap, s.demand)?);
        }
        if evaluations.is_empty() {
            anyhow::bail!("{}: nothing to evaluate", root.display());
        }
        let mut label = trained.model.to_string();
        let mut k = 2;
        while !labels.insert(label.clone()) {
            label = format!("{}-{k}", trained.model);
            k += 1;
        }
        let report = EvaluationReport::new(&label, end, s.demand, evaluations);
        println!("{}", format_report(&report));
        write_report(&s.out.join(&label), &report)?;
        manifest.input(&root.join(crate::models::CONFIG_FILE))?;
        reports.push((label, report));
    }

    if reports.len() >= 2 {
        let series: Vec<(&str, &[_])> = reports.iter().map(|(l, r)| (l.as_str(), r.cdf.as_slice())).collect();
        fs::write(s.out.join("cdf.svg"), cdf_svg(&series))?;
        let mut pairs = Vec::new();
        for (a, ra) in &reports {
            for (b, rb) in &reports {
                if a != b {
                    pairs.push(json!({ "model": a, "over": b, "dominates": dominates(&ra.cdf, &rb.cdf) }));
                }
            }
        }
        let rates: Vec<_> = reports
            .iter()
            .map(|(l, r)| json!({ "model": l, "hit_rate": r.hit_rate, "observations": r.hits.total }))
            .collect();
        write_json(&s.out.join("comparison.json"), &json!({ "hit_rates": rates, "dominance": pairs }))?;
    }
    manifest.finish(&s.out)
}
