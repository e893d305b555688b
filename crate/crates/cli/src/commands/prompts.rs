use bundleseq_core::dataio::{export_prompts, split, write_prompts_jsonl, Split};

use crate::config::{load_file, write_json, PromptSettings, PromptSplit};
use crate::manifest::Manifest;
use crate::{PromptArgs, UsageError};

pub fn run(args: PromptArgs) -> anyhow::Result<()> {
    let mut s: PromptSettings = load_file(args.config.as_deref())?;
    s.data = args.data.merge(s.data);
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = args.$f { s.$f = v; })*};
    }
    set!(out, split, seed, train_fraction);
    s.dedupe |= args.dedupe;
    if !s.data.is_set() {
        return Err(UsageError("export-prompts needs --data or --sessions/--playlists".into()).into());
    }
    let data = s.data.load()?;
    // Unsplit data is all TRAIN.
    let (data, which) = match s.split {
        PromptSplit::All => (data, Split::Train),
        PromptSplit::Train => (split(&data, s.train_fraction, s.seed)?, Split::Train),
        PromptSplit::Test => (split(&data, s.train_fraction, s.seed)?, Split::Test),
    };
    let pairs = export_prompts(&data, which, s.dedupe)?;
    super::create_out(&s.out)?;
    write_prompts_jsonl(&s.out.join("prompts.jsonl"), &pairs)?;
    write_json(&s.out.join("config.json"), &s)?;
    println!("{} prompt pairs written to {}", pairs.len(), s.out.display());
    let mut m = Manifest::new("export-prompts", &s)?;
    let (sessions, playlists) = s.data.paths()?;
    m.input(&sessions)?;
    m.input(&playlists)?;
    m.finish(&s.out)
}
