//! Checkpoint persistence.
//!
//! Layout of a checkpoint directory:
//! - `manifest.json`: shapes, backbone, epoch counter, config echo
//! - `embeddings.bin`: user rows then item rows
//! - `perturbations.bin`: per-item noise rows
//! - `optimizer.bin`: Adam first/second moments for all three states
//! - `log.json`: the training log (authoritative for resume)
//! - `log.csv`: the same log for humans
//!
//! Each `.bin` file is a little-endian u64 header length, a JSON header,
//! then a row-major little-endian f32 payload. Round trips are bit-exact.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::PerturbationSet;
use crate::backbone::{AdamParams, AdamState, EmbeddingTable};
use crate::dataset::InteractionDataset;
use crate::trainer::{log_to_csv, BackboneKind, TrainConfig, TrainLog};
use crate::{FdaError, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub backbone: BackboneKind,
    pub dim: usize,
    pub num_users: usize,
    pub num_items: usize,
    /// The next epoch to run; equals the number of completed epochs.
    pub next_epoch: usize,
    pub seed: u64,
    pub config: TrainConfig,
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone)]
pub struct CheckpointData {
    pub manifest: CheckpointManifest,
    pub table: EmbeddingTable,
    pub theta: PerturbationSet,
    pub user_adam: AdamState,
    pub item_adam: AdamState,
    pub theta_adam: AdamState,
    pub log: TrainLog,
}

impl CheckpointData {
    /// Checks shape agreement with a dataset before resuming on it.
    pub fn validate_against(&self, ds: &InteractionDataset) -> Result<()> {
        if self.manifest.num_users != ds.num_users || self.manifest.num_items != ds.num_items {
            return Err(FdaError::Checkpoint(format!(
                "checkpoint is for {}x{} (users x items), dataset has {}x{}",
                self.manifest.num_users, self.manifest.num_items, ds.num_users, ds.num_items
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    schema_version: u32,
    kind: String,
    byte_order: String,
    scalar_width: u32,
    rows: usize,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

fn write_matrix(path: &Path, kind: &str, rows: usize, dim: usize, extra: Option<serde_json::Value>, payload: &[f32]) -> Result<()> {
    debug_assert_eq!(rows * dim, payload.len());
    let header = MatrixHeader {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        kind: kind.to_string(),
        byte_order: "little-endian".to_string(),
        scalar_width: 32,
        rows,
        dim,
        extra,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let file = fs::File::create(path).map_err(|e| FdaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| FdaError::io(path, e);
    w.write_all(&(header_bytes.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header_bytes).map_err(io)?;
    for x in payload {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn read_matrix(path: &Path, expect_kind: &str) -> Result<(MatrixHeader, Vec<f32>)> {
    let file = fs::File::open(path).map_err(|e| FdaError::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| FdaError::io(path, e);
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes).map_err(io)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 1 << 20 {
        return Err(FdaError::Checkpoint(format!(
            "{}: implausible header length {header_len}",
            path.display()
        )));
    }
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(io)?;
    let header: MatrixHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| FdaError::Checkpoint(format!("{}: bad header: {e}", path.display())))?;
    if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(FdaError::Checkpoint(format!(
            "{}: unsupported schema version {}",
            path.display(),
            header.schema_version
        )));
    }
    if header.kind != expect_kind {
        return Err(FdaError::Checkpoint(format!(
            "{}: expected kind {expect_kind:?}, found {:?}",
            path.display(),
            header.kind
        )));
    }
    if header.byte_order != "little-endian" || header.scalar_width != 32 {
        return Err(FdaError::Checkpoint(format!(
            "{}: unsupported layout ({} / {} bits)",
            path.display(),
            header.byte_order,
            header.scalar_width
        )));
    }
    let n = header.rows * header.dim;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw).map_err(|_| {
        FdaError::Checkpoint(format!(
            "{}: truncated payload, expected {n} scalars",
            path.display()
        ))
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(FdaError::Checkpoint(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    let payload = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, payload))
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeaderEntry {
    name: String,
    len: usize,
    step: u64,
    params: AdamParams,
}

pub fn save(dir: &Path, data: &CheckpointData) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FdaError::io(dir, e))?;
    let m = &data.manifest;
    if m.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(FdaError::Checkpoint(format!(
            "unsupported schema version {}",
            m.schema_version
        )));
    }
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_vec_pretty(m)?)
        .map_err(|e| FdaError::io(&manifest_path, e))?;

    let mut emb = Vec::with_capacity(data.table.users.len() + data.table.items.len());
    emb.extend_from_slice(&data.table.users);
    emb.extend_from_slice(&data.table.items);
    write_matrix(
        &dir.join("embeddings.bin"),
        "embeddings",
        m.num_users + m.num_items,
        m.dim,
        None,
        &emb,
    )?;

    write_matrix(
        &dir.join("perturbations.bin"),
        "perturbations",
        m.num_items,
        m.dim,
        Some(serde_json::json!({ "epsilon": data.theta.epsilon })),
        &data.theta.delta,
    )?;

    let states = [
        ("user", &data.user_adam),
        ("item", &data.item_adam),
        ("theta", &data.theta_adam),
    ];
    let entries: Vec<AdamHeaderEntry> = states
        .iter()
        .map(|(name, st)| AdamHeaderEntry {
            name: name.to_string(),
            len: st.m.len(),
            step: st.step,
            params: st.params,
        })
        .collect();
    let mut moments = Vec::new();
    for (_, st) in &states {
        moments.extend_from_slice(&st.m);
        moments.extend_from_slice(&st.v);
    }
    write_matrix(
        &dir.join("optimizer.bin"),
        "optimizer",
        moments.len(),
        1,
        Some(serde_json::to_value(&entries)?),
        &moments,
    )?;

    let log_json = dir.join("log.json");
    fs::write(&log_json, serde_json::to_vec(&data.log)?).map_err(|e| FdaError::io(&log_json, e))?;
    let log_csv = dir.join("log.csv");
    fs::write(&log_csv, log_to_csv(&data.log, &m.config.k_list))
        .map_err(|e| FdaError::io(&log_csv, e))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<CheckpointData> {
    let manifest_path = dir.join("manifest.json");
    let manifest_bytes =
        fs::read(&manifest_path).map_err(|e| FdaError::io(&manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(FdaError::Checkpoint(format!(
            "unsupported schema version {}",
            manifest.schema_version
        )));
    }
    let (m, n, d) = (manifest.num_users, manifest.num_items, manifest.dim);

    let (eh, emb) = read_matrix(&dir.join("embeddings.bin"), "embeddings")?;
    if eh.rows != m + n || eh.dim != d {
        return Err(FdaError::Checkpoint(format!(
            "embeddings shape {}x{} disagrees with manifest {}x{}",
            eh.rows,
            eh.dim,
            m + n,
            d
        )));
    }
    let table = EmbeddingTable {
        dim: d,
        num_users: m,
        num_items: n,
        users: emb[..m * d].to_vec(),
        items: emb[m * d..].to_vec(),
    };

    let (ph, delta) = read_matrix(&dir.join("perturbations.bin"), "perturbations")?;
    if ph.rows != n || ph.dim != d {
        return Err(FdaError::Checkpoint(format!(
            "perturbation shape {}x{} disagrees with manifest {}x{}",
            ph.rows, ph.dim, n, d
        )));
    }
    let epsilon = ph
        .extra
        .as_ref()
        .and_then(|e| e.get("epsilon"))
        .and_then(|e| e.as_f64())
        .ok_or_else(|| FdaError::Checkpoint("perturbations.bin missing epsilon".to_string()))?
        as f32;
    let theta = PerturbationSet {
        dim: d,
        num_items: n,
        epsilon,
        delta,
    };

    let (oh, moments) = read_matrix(&dir.join("optimizer.bin"), "optimizer")?;
    let entries: Vec<AdamHeaderEntry> = serde_json::from_value(
        oh.extra
            .clone()
            .ok_or_else(|| FdaError::Checkpoint("optimizer.bin missing state table".to_string()))?,
    )?;
    if entries.len() != 3 || entries[0].name != "user" || entries[1].name != "item" || entries[2].name != "theta" {
        return Err(FdaError::Checkpoint(
            "optimizer.bin must hold user, item, theta states".to_string(),
        ));
    }
    let expected: usize = entries.iter().map(|e| 2 * e.len).sum();
    if moments.len() != expected {
        return Err(FdaError::Checkpoint(format!(
            "optimizer payload holds {} scalars, state table implies {expected}",
            moments.len()
        )));
    }
    let mut offset = 0;
    let mut states = Vec::new();
    for e in &entries {
        let m_vec = moments[offset..offset + e.len].to_vec();
        let v_vec = moments[offset + e.len..offset + 2 * e.len].to_vec();
        offset += 2 * e.len;
        states.push(AdamState {
            params: e.params,
            m: m_vec,
            v: v_vec,
            step: e.step,
        });
    }
    let theta_adam = states.pop().expect("three states");
    let item_adam = states.pop().expect("three states");
    let user_adam = states.pop().expect("three states");
    if user_adam.m.len() != m * d || item_adam.m.len() != n * d || theta_adam.m.len() != n * d {
        return Err(FdaError::Checkpoint(
            "optimizer state lengths disagree with manifest shapes".to_string(),
        ));
    }

    let log_path = dir.join("log.json");
    let log_bytes = fs::read(&log_path).map_err(|e| FdaError::io(&log_path, e))?;
    let log: TrainLog = serde_json::from_slice(&log_bytes)?;

    Ok(CheckpointData {
        manifest,
        table,
        theta,
        user_adam,
        item_adam,
        theta_adam,
        log,
    })
}
