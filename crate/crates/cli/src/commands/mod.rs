pub mod attention;
pub mod evaluate;
pub mod generate;
pub mod prompts;
pub mod summarize;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::Context;

pub fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
