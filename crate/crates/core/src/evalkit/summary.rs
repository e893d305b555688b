use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::domain::Outcome;

/// Descriptive statistics of one playlist's sessions, all positions
/// included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaylistSummary {
    pub playlist_id: String,
    pub tracks: usize,
    pub sessions: usize,
    pub events: usize,
    /// Mean seconds listened per session (plays and replays).
    pub avg_listening_time: f64,
    /// Mean number of PLAY events per session.
    pub avg_songs_played: f64,
    pub skip_pct: f64,
    pub play_pct: f64,
    pub replay_pct: f64,
}

pub fn summary_statistics(dataset: &Dataset) -> Vec<PlaylistSummary> {
    dataset
        .playlists
        .values()
        .map(|playlist| {
            let sessions = dataset.sessions_of(&playlist.playlist_id);
            let mut counts = [0usize; 3];
            let mut seconds = 0.0;
            for s in &sessions {
                for e in &s.events {
                    counts[e.action.index()] += 1;
                }
                seconds += s.listening_times(playlist).iter().sum::<f64>();
            }
            let events: usize = counts.iter().sum();
            if sessions.is_empty() {
                warn!("playlist {} has no sessions", playlist.playlist_id);
            }
            let per_session = |x: f64| if sessions.is_empty() { 0.0 } else { x / sessions.len() as f64 };
            let pct = |k: Outcome| {
                if events == 0 {
                    0.0
                } else {
                    100.0 * counts[k.index()] as f64 / events as f64
                }
            };
            PlaylistSummary {
                playlist_id: playlist.playlist_id.clone(),
                tracks: playlist.len(),
                sessions: sessions.len(),
                events,
                avg_listening_time: per_session(seconds),
                avg_songs_played: per_session(counts[Outcome::Play.index()] as f64),
                skip_pct: pct(Outcome::Skip),
                play_pct: pct(Outcome::Play),
                replay_pct: pct(Outcome::Replay),
            }
        })
        .collect()
}

/// Aligned text table of [`summary_statistics`].
pub fn format_summary(rows: &[PlaylistSummary]) -> String {
    let width = rows.iter().map(|r| r.playlist_id.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>8}  {:>10}  {:>8}  {:>7}  {:>7}  {:>7}\n",
        "playlist", "tracks", "sessions", "listen (s)", "played", "skip %", "play %", "replay %"
    );
    for r in rows {
        out += &format!(
            "{:<width$}  {:>6}  {:>8}  {:>10.1}  {:>8.2}  {:>7.2}  {:>7.2}  {:>7.2}\n",
            r.playlist_id,
            r.tracks,
            r.sessions,
            r.avg_listening_time,
            r.avg_songs_played,
            r.skip_pct,
            r.play_pct,
            r.replay_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Playlist, Session};
    use crate::synthgen::{generate, GeneratorSpec};
    use Outcome::*;

    #[test]
    fn single_session_all_played() {
        let playlist = Playlist::from_durations("p", &[100.0, 50.0]).unwrap();
        let s = Session::from_outcomes("s", "p", &[Play, Play]);
        let data = Dataset::with_default_cap(vec![playlist], vec![s]).unwrap();
        let row = &summary_statistics(&data)[0];
        assert_eq!((row.play_pct, row.skip_pct, row.replay_pct), (100.0, 0.0, 0.0));
        assert_eq!(row.avg_listening_time, 150.0);
        assert_eq!(row.avg_songs_played, 2.0);
    }

    #[test]
    fn empty_playlist_gives_a_zero_row() {
        let playlist = Playlist::from_durations("p", &[100.0]).unwrap();
        let data = Dataset::with_default_cap(vec![playlist], vec![]).unwrap();
        let row = &summary_statistics(&data)[0];
        assert_eq!((row.sessions, row.events, row.play_pct), (0, 0, 0.0));
        assert!(format_summary(&[row.clone()]).contains("p "));
    }

    #[test]
    fn percentages_sum_to_one_hundred() {
        let data = generate(&GeneratorSpec::table6(12, 300, 2)).unwrap();
        for row in summary_statistics(&data) {
            assert!((row.skip_pct + row.play_pct + row.replay_pct - 100.0).abs() < 0.1);
        }
    }
}
