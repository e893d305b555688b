use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Outcome;
use crate::error::{Error, Result};

use super::{Dataset, Split};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub prompt: String,
    pub completion: String,
}

/// One parsed prompt line; the last line of a prompt has no action.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptLine {
    pub index: usize,
    pub duration: f64,
    pub action: Option<Outcome>,
}

/// Two decimals when that representation reads back as the same number,
/// otherwise the shortest exact representation.
pub fn format_duration(seconds: f64) -> String {
    let short = format!("{seconds:.2}");
    if short.parse::<f64>().ok() == Some(seconds) {
        short
    } else {
        format!("{seconds}")
    }
}

/// Prompt/completion pairs for every position `j >= 2` of the sessions in
/// one split. A prompt lists `k. (duration=D) action=A` for the first `j-1`
/// events and ends with the blank line for position `j`, whose duration is
/// that of the next item in line. With `dedupe`, only the first occurrence
/// of each prompt string is kept.
pub fn export_prompts(dataset: &Dataset, split: Split, dedupe: bool) -> Result<Vec<PromptPair>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (session, _) in dataset.sessions.iter().zip(&dataset.splits).filter(|(_, &t)| t == split) {
        let playlist = dataset.playlist(&session.playlist_id)?;
        let mut lines = Vec::with_capacity(session.len());
        let mut covered = 0;
        for (k, event) in session.events.iter().enumerate() {
            if k >= 1 {
                let candidate = (covered + 1).min(playlist.len());
                let prompt = format!(
                    "{}\n{}. (duration={}) action=",
                    lines.join("\n"),
                    k + 1,
                    format_duration(playlist.duration(candidate))
                );
                if !dedupe || seen.insert(prompt.clone()) {
                    out.push(PromptPair {
                        prompt,
                        completion: event.action.as_str().to_string(),
                    });
                }
            }
            lines.push(format!(
                "{}. (duration={}) action={}",
                k + 1,
                format_duration(playlist.duration(event.pos)),
                event.action
            ));
            covered = covered.max(event.pos);
        }
    }
    Ok(out)
}

pub fn parse_prompt(prompt: &str) -> Result<Vec<PromptLine>> {
    prompt
        .lines()
        .map(|line| {
            let bad = || Error::invalid(format!("malformed prompt line `{line}`"));
            let (index, rest) = line.split_once(". (duration=").ok_or_else(bad)?;
            let (duration, action) = rest.split_once(") action=").ok_or_else(bad)?;
            Ok(PromptLine {
                index: index.trim().parse().map_err(|_| bad())?,
                duration: duration.parse().map_err(|_| bad())?,
                action: if action.is_empty() { None } else { Some(action.parse()?) },
            })
        })
        .collect()
}

pub fn write_prompts_jsonl(path: &Path, pairs: &[PromptPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Playlist, Session};
    use Outcome::*;

    fn figure_dataset(copies: usize) -> Dataset {
        let p = Playlist::from_durations("p", &[337.94, 226.94, 337.94, 226.94, 244.68, 288.09, 222.48]).unwrap();
        let sessions = (0..copies)
            .map(|k| Session::from_outcomes(format!("s{k}"), "p", &[Skip, Play, Play, Play, Skip, Play, Play]))
            .collect();
        Dataset::with_default_cap(vec![p], sessions).unwrap()
    }

    #[test]
    fn seven_line_prompt() {
        let pairs = export_prompts(&figure_dataset(1), Split::Train, true).unwrap();
        assert_eq!(pairs.len(), 6);
        let last = pairs.last().unwrap();
        let expected = "1. (duration=337.94) action=skip\n\
                        2. (duration=226.94) action=play\n\
                        3. (duration=337.94) action=play\n\
                        4. (duration=226.94) action=play\n\
                        5. (duration=244.68) action=skip\n\
                        6. (duration=288.09) action=play\n\
                        7. (duration=222.48) action=";
        assert_eq!(last.prompt, expected);
        assert_eq!(last.completion, "play");
    }

    #[test]
    fn dedupe_keeps_one_copy() {
        let ds = figure_dataset(2);
        assert_eq!(export_prompts(&ds, Split::Train, true).unwrap().len(), 6);
        assert_eq!(export_prompts(&ds, Split::Train, false).unwrap().len(), 12);
        assert!(export_prompts(&ds, Split::Test, false).unwrap().is_empty());
    }

    #[test]
    fn parse_round_trip() {
        let pairs = export_prompts(&figure_dataset(1), Split::Train, false).unwrap();
        let lines = parse_prompt(&pairs[5].prompt).unwrap();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0].duration, 337.94);
        assert_eq!(lines[4].action, Some(Skip));
        assert_eq!(lines[6].action, None);
        assert!(parse_prompt("nonsense").is_err());
    }

    #[test]
    fn duration_formatting() {
        assert_eq!(format_duration(337.94), "337.94");
        assert_eq!(format_duration(200.0), "200.00");
        assert_eq!(format_duration(1.0 / 3.0), "0.3333333333333333");
    }
}
