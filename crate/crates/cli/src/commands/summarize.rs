use bundleseq_core::evalkit::{format_summary, summary_statistics};

use crate::config::{load_file, write_json, SummarizeSettings};
use crate::manifest::Manifest;
use crate::{SummarizeArgs, UsageError};

pub fn run(args: SummarizeArgs) -> anyhow::Result<()> {
    let mut s: SummarizeSettings = load_file(args.config.as_deref())?;
    s.data = args.data.merge(s.data);
    if args.out.is_some() {
        s.out = args.out;
    }
    if !s.data.is_set() {
        return Err(UsageError("summarize needs --data or --sessions/--playlists".into()).into());
    }
    let rows = summary_statistics(&s.data.load()?);
    print!("{}", format_summary(&rows));
    let Some(out) = &s.out else {
        return Ok(());
    };
    super::create_out(out)?;
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&out.join("summary.json"), &rows)?;
    write_json(&out.join("config.json"), &s)?;
    let mut m = Manifest::new("summarize", &s)?;
    let (sessions, playlists) = s.data.paths()?;
    m.input(&sessions)?;
    m.input(&playlists)?;
    m.finish(out)
}
