//! Results files: a one-line JSON manifest header followed by one JSON
//! episode result per line.
//!
//! The manifest pins everything needed to reproduce or compare a run:
//! dataset hash, planner identity and config hash, strategy, turn budget,
//! seed, and tool version. Timestamps honour `SOURCE_DATE_EPOCH` so repeated
//! runs over identical inputs produce byte-identical files.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::planners::Strategy;
use crate::sim::EpisodeResult;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// SHA-256 over the episode file bytes this run consumed.
    pub dataset_hash: String,
    pub planner: String,
    /// SHA-256 over the canonical JSON of the planner + sim configuration.
    pub config_hash: String,
    pub strategy: Strategy,
    pub max_turns: u32,
    pub n_agents: usize,
    pub seed: u64,
    pub tool_version: String,
    /// Unix seconds; taken from `SOURCE_DATE_EPOCH` when set.
    pub created_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("results file is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported results schema version {0}")]
    SchemaVersion(u32),
    #[error("manifests are incompatible: {0}")]
    Incompatible(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{:02x}", b));
    }
    s
}

/// Current time in Unix seconds, overridable via `SOURCE_DATE_EPOCH` for
/// reproducible output.
pub fn timestamp_now() -> u64 {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(secs) = v.trim().parse::<u64>() {
            return secs;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_results<W: Write>(
    w: &mut W,
    manifest: &RunManifest,
    results: &[EpisodeResult],
) -> Result<(), ManifestError> {
    serde_json::to_writer(&mut *w, manifest).map_err(|e| ManifestError::Parse { line: 1, source: e })?;
    w.write_all(b"\n")?;
    for (i, r) in results.iter().enumerate() {
        serde_json::to_writer(&mut *w, r)
            .map_err(|e| ManifestError::Parse { line: i + 2, source: e })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results<R: BufRead>(
    r: R,
) -> Result<(RunManifest, Vec<EpisodeResult>), ManifestError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(ManifestError::Empty)??;
    let manifest: RunManifest =
        serde_json::from_str(&header).map_err(|e| ManifestError::Parse { line: 1, source: e })?;
    if manifest.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(ManifestError::SchemaVersion(manifest.schema_version));
    }
    let mut results = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let res: EpisodeResult = serde_json::from_str(&line)
            .map_err(|e| ManifestError::Parse { line: i + 2, source: e })?;
        results.push(res);
    }
    Ok((manifest, results))
}

/// Two runs may be compared only when they scored the same dataset with the
/// same episode structure; planner and strategy are allowed to differ.
pub fn check_comparable(a: &RunManifest, b: &RunManifest) -> Result<(), ManifestError> {
    if a.dataset_hash != b.dataset_hash {
        return Err(ManifestError::Incompatible(format!(
            "dataset hashes differ ({} vs {})",
            &a.dataset_hash[..12.min(a.dataset_hash.len())],
            &b.dataset_hash[..12.min(b.dataset_hash.len())],
        )));
    }
    if a.n_agents != b.n_agents {
        return Err(ManifestError::Incompatible(format!(
            "agent counts differ ({} vs {})",
            a.n_agents, b.n_agents
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::CellCoord;
    use crate::sim::{AgentResult, AgentStatus};

    fn manifest() -> RunManifest {
        RunManifest {
            schema_version: RESULTS_SCHEMA_VERSION,
            dataset_hash: "abc".into(),
            planner: "oracle".into(),
            config_hash: "def".into(),
            strategy: Strategy::Additive,
            max_turns: 4,
            n_agents: 1,
            seed: 7,
            tool_version: "0.1.0".into(),
            created_at: 1_700_000_000,
        }
    }

    fn result() -> EpisodeResult {
        EpisodeResult {
            episode_id: "m0000p0".into(),
            strategy: Strategy::Additive,
            agents: vec![AgentResult {
                agent_id: 0,
                success: true,
                status: AgentStatus::Done,
                turns_used: 1,
                traversed_len: 2.5,
                traversed_final_plan: 2.5,
                final_plan_len: 3.0,
                final_plan: Some(vec![CellCoord::new(0, 0), CellCoord::new(0, 3)]),
                final_position: CellCoord::new(0, 3).center(),
                d_opt: 3.0,
            }],
            events: vec![],
            ticks: 10,
        }
    }

    #[test]
    fn roundtrip_preserves_manifest_and_results() {
        let mut buf = Vec::new();
        write_results(&mut buf, &manifest(), &[result(), result()]).unwrap();
        let (m, rs) = read_results(&buf[..]).unwrap();
        assert_eq!(m, manifest());
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[0], result());
    }

    #[test]
    fn header_is_exactly_one_line() {
        let mut buf = Vec::new();
        write_results(&mut buf, &manifest(), &[result()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: RunManifest = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.planner, "oracle");
    }

    #[test]
    fn rejects_unknown_schema_version() {
        let mut m = manifest();
        m.schema_version = 99;
        let mut buf = Vec::new();
        write_results(&mut buf, &m, &[]).unwrap();
        assert!(matches!(read_results(&buf[..]), Err(ManifestError::SchemaVersion(99))));
    }

    #[test]
    fn bad_result_line_reports_line_number() {
        let mut buf = Vec::new();
        write_results(&mut buf, &manifest(), &[result()]).unwrap();
        buf.extend_from_slice(b"{not json}\n");
        match read_results(&buf[..]) {
            Err(ManifestError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn comparability_requires_matching_dataset() {
        let a = manifest();
        let mut b = manifest();
        assert!(check_comparable(&a, &b).is_ok());
        b.dataset_hash = "zzz".into();
        assert!(check_comparable(&a, &b).is_err());
        b.dataset_hash = a.dataset_hash.clone();
        b.n_agents = 2;
        assert!(check_comparable(&a, &b).is_err());
    }

    #[test]
    fn source_date_epoch_overrides_clock() {
        std::env::set_var("SOURCE_DATE_EPOCH", "12345");
        assert_eq!(timestamp_now(), 12345);
        std::env::remove_var("SOURCE_DATE_EPOCH");
    }

    #[test]
    fn sha256_hex_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
