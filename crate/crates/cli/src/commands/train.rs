use bundleseq_core::baselines::{fit_markov, fit_zero_order, BaselineModel};
use bundleseq_core::dataio::Split;
use bundleseq_core::seqmodels::{fit_neural, ModelConfig};
use log::{info, warn};
use serde_json::json;

use crate::config::{load_file, write_json, ModelChoice, TrainSettings};
use crate::manifest::Manifest;
use crate::models::{model_path, prepared, selected, LoadedModel, CONFIG_FILE};
use crate::{TrainArgs, UsageError};

pub fn merge(args: TrainArgs) -> anyhow::Result<TrainSettings> {
    let mut s: TrainSettings = load_file(args.config.as_deref())?;
    s.data = args.data.merge(s.data);
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = args.$f { s.$f = v; })*};
    }
    set!(out, model, seed, train_fraction, session_end, smoothing, epochs, batch_size, patience, validation_fraction);
    if !args.only.is_empty() {
        s.playlists = args.only;
    }
    s.features.leak |= args.leak;
    s.mask_feasible |= args.mask_feasible;
    if let Some(v) = args.learning_rate {
        s.adam.learning_rate = v;
    }
    let t = &mut s.transformer;
    for (flag, field) in [
        (args.embed_dim, &mut t.embed_dim),
        (args.blocks, &mut t.n_blocks),
        (args.heads, &mut t.n_heads),
        (args.head_dim, &mut t.head_dim),
        (args.ff_dim, &mut t.ff_dim),
    ] {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(h) = args.hidden {
        s.lstm.hidden = h;
        s.mlp.hidden = h;
    }
    if let Some(l) = args.layers {
        s.lstm.layers = l;
        s.mlp.layers = l;
    }
    if !s.data.is_set() {
        return Err(UsageError("train needs --data or --sessions/--playlists".into()).into());
    }
    Ok(s)
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let s = merge(args)?;
    let raw = s.data.load()?;
    let data = prepared(&raw, &s, s.session_end)?;
    let cap = s.data.cap;
    let train_config = s.train_config();

    super::create_out(&s.out)?;
    write_json(&s.out.join(CONFIG_FILE), &s)?;
    std::fs::create_dir_all(s.out.join("training"))?;
    let mut trained = 0usize;
    for playlist in selected(&data, &s.playlists)? {
        let id = &playlist.playlist_id;
        let train = data.sessions_in(id, Split::Train);
        if train.is_empty() {
            warn!("playlist {id}: no training sessions, skipped");
            continue;
        }
        let (model, log) = match s.model.neural() {
            None => {
                let b = match s.model {
                    ModelChoice::Mc => BaselineModel::Mc(fit_markov(&train, playlist, false, s.smoothing, cap)?),
                    ModelChoice::Pmc => BaselineModel::Pmc(fit_markov(&train, playlist, true, s.smoothing, cap)?),
                    _ => BaselineModel::Zero(fit_zero_order(&train, playlist, cap)?),
                };
                (LoadedModel::Baseline(b), json!({ "model": s.model, "train_sessions": train.len() }))
            }
            Some(kind) => {
                let mut config = ModelConfig::new(kind, 1);
                config.transformer = s.transformer.clone();
                config.lstm = s.lstm.clone();
                config.mlp = s.mlp.clone();
                config.mask_feasible = s.mask_feasible;
                config.init_seed = s.seed;
                let (p, report) = fit_neural(&train, playlist, cap, s.features.clone(), config, &train_config)?;
                (LoadedModel::Neural(p), serde_json::to_value(report)?)
            }
        };
        let dir = model_path(&s.out, id)?;
        model.save(&dir)?;
        write_json(&s.out.join("training").join(format!("{id}.json")), &log)?;
        info!("playlist {id}: {} trained on {} sessions", s.model, train.len());
        trained += 1;
    }
    if trained == 0 {
        anyhow::bail!("no playlist had training sessions");
    }
    println!("{} model(s) of type {} written to {}", trained, s.model, s.out.display());
    let mut m = Manifest::new("train", &s)?;
    let (sessions, playlists) = s.data.paths()?;
    m.input(&sessions)?;
    m.input(&playlists)?;
    m.finish(&s.out)
}
