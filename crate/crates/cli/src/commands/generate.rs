use std::fs;

use anyhow::Context;
use bundleseq_core::dataio::{write_playlists_jsonl, write_sessions_csv, write_sessions_jsonl, SessionFormat};
use bundleseq_core::synthgen::{bayes_rate, first_order_rate, generate, GeneratorSpec};
use serde_json::json;

use crate::config::{load_file, write_json, GenerateSettings, Preset};
use crate::manifest::Manifest;
use crate::{GenerateArgs, UsageError};

pub fn run(args: GenerateArgs) -> anyhow::Result<()> {
    let mut s: GenerateSettings = load_file(args.config.as_deref())?;
    if args.spec.is_some() {
        s.spec = args.spec;
    }
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = args.$f { s.$f = v.into(); })*};
    }
    set!(preset, tracks, out, format);
    if args.sessions.is_some() {
        s.sessions = args.sessions;
    }
    if args.seed.is_some() {
        s.seed = args.seed;
    }

    let mut spec = match &s.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<GeneratorSpec>(&text)
                .map_err(|e| UsageError(format!("generator spec {}: {e}", path.display())))?
        }
        None => {
            let sessions = s.sessions.unwrap_or(1000);
            let seed = s.seed.unwrap_or(0);
            match s.preset {
                Preset::Table6 => GeneratorSpec::table6(s.tracks, sessions, seed),
                Preset::Order2 => GeneratorSpec::order2_demo(s.tracks, sessions, seed),
            }
        }
    };
    if let Some(n) = s.sessions {
        spec.sessions = n;
    }
    if let Some(seed) = s.seed {
        spec.seed = seed;
    }
    let data = generate(&spec)?;

    super::create_out(&s.out)?;
    write_playlists_jsonl(&s.out.join("playlists.jsonl"), data.playlists.values())?;
    match s.format {
        SessionFormat::Jsonl => write_sessions_jsonl(&s.out.join("sessions.jsonl"), &data.sessions)?,
        SessionFormat::Csv => write_sessions_csv(&s.out.join("sessions.csv"), &data.sessions)?,
    }
    write_json(&s.out.join("spec.json"), &spec)?;
    write_json(&s.out.join("config.json"), &s)?;

    let bayes = bayes_rate(&spec);
    let first_order = first_order_rate(&spec);
    println!(
        "{} sessions on {} tracks written to {}; Bayes hit rate {bayes:.4}",
        spec.sessions,
        spec.n(),
        s.out.display()
    );
    let mut m = Manifest::new("generate", &s)?;
    if let Some(path) = &s.spec {
        m.input(path)?;
    }
    m.extra = json!({ "bayes_rate": bayes, "first_order_rate": first_order });
    m.finish(&s.out)
}
