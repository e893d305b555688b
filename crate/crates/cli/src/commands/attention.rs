use bundleseq_core::attention::{format_profile_table, playlist_attention_profile, write_profiles_csv, PlaylistProfile};
use bundleseq_core::dataio::Split;
use log::warn;
use serde_json::json;

use crate::config::{load_file, write_json, AttentionSettings, ModelChoice};
use crate::manifest::Manifest;
use crate::models::{model_path, prepared, read_settings, selected, LoadedModel, CONFIG_FILE};
use crate::{AttentionArgs, UsageError};

pub fn run(args: AttentionArgs) -> anyhow::Result<()> {
    let mut s: AttentionSettings = load_file(args.config.as_deref())?;
    s.data = args.data.merge(s.data);
    if args.model.is_some() {
        s.model = args.model;
    }
    if let Some(v) = args.out {
        s.out = v;
    }
    if !args.only.is_empty() {
        s.playlists = args.only;
    }
    let Some(root) = s.model.clone() else {
        return Err(UsageError("analyze-attention needs --model-dir".into()).into());
    };
    let trained = read_settings(&root)?;
    if !matches!(trained.model, ModelChoice::Transformer | ModelChoice::Encoder) {
        let why = format!("attention analysis needs a Transformer, got {}", trained.model);
        return Err(bundleseq_core::Error::Unsupported(why).into());
    }
    let data_config = if s.data.is_set() { &s.data } else { &trained.data };
    let data = prepared(&data_config.load()?, &trained, trained.session_end)?;

    let mut profiles: Vec<PlaylistProfile> = Vec::new();
    for playlist in selected(&data, &s.playlists)? {
        let dir = model_path(&root, &playlist.playlist_id)?;
        if !dir.exists() {
            warn!("{}: no model for playlist {}", root.display(), playlist.playlist_id);
            continue;
        }
        let LoadedModel::Neural(model) = LoadedModel::load(&dir, playlist)? else {
            unreachable!("neural training config");
        };
        let test = data.sessions_in(&playlist.playlist_id, Split::Test);
        profiles.push(playlist_attention_profile(&model, &test)?);
    }

    super::create_out(&s.out)?;
    write_profiles_csv(&s.out.join("attention_profiles.csv"), &profiles)?;
    let summary: Vec<_> = profiles
        .iter()
        .map(|p| {
            json!({
                "playlist_id": p.playlist_id,
                "sessions": p.sessions.len(),
                "excluded": p.excluded,
                "undefined": p.undefined,
                "mean_correlation": p.mean_correlation,
            })
        })
        .collect();
    write_json(&s.out.join("attention_summary.json"), &summary)?;
    write_json(&s.out.join("config.json"), &s)?;
    print!("{}", format_profile_table(&profiles));
    let mut m = Manifest::new("analyze-attention", &s)?;
    m.input(&root.join(CONFIG_FILE))?;
    m.finish(&s.out)
}
