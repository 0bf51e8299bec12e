//! On-disk artifacts: checkpoints, cohort and episode files, manifests with
//! input hashes, and CSV exports. Every format is deterministic so reruns
//! from the same seeds produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    DatasetConfig, Episode, EpisodeSet, MortalityModel, NormStats, PatientState, RewardNorms,
    Transition, CHANNELS,
};
use crate::error::{Error, Result};
use crate::net::{ModelConfig, ParamVec};
use crate::sim::{CohortRanges, SimConfig, TwinParams};
use crate::tcql::{AdamState, MetricsRow, TrainConfig};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"VLCKPT1\n";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyKind {
    TCql,
    Ddqn,
    CqlFixed,
    Bcq { threshold: f64 },
}

impl PolicyKind {
    pub fn id(&self) -> &'static str {
        match self {
            PolicyKind::TCql => "tcql",
            PolicyKind::Ddqn => "ddqn",
            PolicyKind::CqlFixed => "cql_fixed",
            PolicyKind::Bcq { .. } => "bcq",
        }
    }
}

/// Everything needed to resume or evaluate a trained policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: PolicyKind,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub seed: u64,
    pub steps: u64,
    pub params: ParamVec,
    pub target_params: ParamVec,
    pub opt_state: AdamState,
    /// Behavior-cloning head (batch-constrained policies only).
    pub behavior: Option<ParamVec>,
    pub norm_stats: NormStats,
    pub reward_norms: RewardNorms,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    schema: String,
    #[serde(flatten)]
    kind: PolicyKind,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: u64,
    steps: u64,
    adam_t: u64,
    norm_stats: NormStats,
    reward_norms: RewardNorms,
    arrays: Vec<(String, usize)>,
}

fn write_f64s(out: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(input: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut arrays: Vec<(String, &[f64])> = vec![
        ("params".into(), &ck.params.data),
        ("target_params".into(), &ck.target_params.data),
        ("adam_m".into(), &ck.opt_state.m),
        ("adam_v".into(), &ck.opt_state.v),
    ];
    if let Some(b) = &ck.behavior {
        arrays.push(("behavior".into(), &b.data));
    }
    let manifest = CheckpointManifest {
        schema: "ventlab.checkpoint.v1".into(),
        kind: ck.kind,
        model_cfg: ck.model_cfg,
        train_cfg: ck.train_cfg,
        seed: ck.seed,
        steps: ck.steps,
        adam_t: ck.opt_state.t,
        norm_stats: ck.norm_stats.clone(),
        reward_norms: ck.reward_norms,
        arrays: arrays.iter().map(|(n, d)| (n.clone(), d.len())).collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&manifest_bytes)?;
    for (_, data) in &arrays {
        write_f64s(&mut out, data)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut input = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Artifact(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    input.read_exact(&mut len_bytes)?;
    let mut manifest_bytes = vec![0u8; u64::from_le_bytes(len_bytes) as usize];
    input.read_exact(&mut manifest_bytes)?;
    let manifest: CheckpointManifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.schema != "ventlab.checkpoint.v1" {
        return Err(Error::Artifact(format!(
            "unsupported checkpoint schema {}",
            manifest.schema
        )));
    }
    let mut arrays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, len) in &manifest.arrays {
        arrays.insert(name.clone(), read_f64s(&mut input, *len)?);
    }
    let take = |name: &str, arrays: &mut BTreeMap<String, Vec<f64>>| -> Result<Vec<f64>> {
        arrays
            .remove(name)
            .ok_or_else(|| Error::Artifact(format!("checkpoint missing array {name}")))
    };
    let build = |data: Vec<f64>| -> Result<ParamVec> {
        let mut p = ParamVec::zeros(&manifest.model_cfg);
        if p.len() != data.len() {
            return Err(Error::Artifact(format!(
                "array length {} does not match the model layout {}",
                data.len(),
                p.len()
            )));
        }
        p.data = data;
        Ok(p)
    };
    let params = build(take("params", &mut arrays)?)?;
    let target_params = build(take("target_params", &mut arrays)?)?;
    let m = take("adam_m", &mut arrays)?;
    let v = take("adam_v", &mut arrays)?;
    let behavior = match arrays.remove("behavior") {
        Some(data) => Some(build(data)?),
        None => None,
    };
    Ok(Checkpoint {
        kind: manifest.kind,
        model_cfg: manifest.model_cfg,
        train_cfg: manifest.train_cfg,
        seed: manifest.seed,
        steps: manifest.steps,
        params,
        target_params,
        opt_state: AdamState { m, v, t: manifest.adam_t },
        behavior,
        norm_stats: manifest.norm_stats,
        reward_norms: manifest.reward_norms,
    })
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// Provenance sidecar written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub schema: String,
    pub seed: u64,
    /// Hash of the artifact itself, for downstream integrity checks.
    pub artifact_sha256: String,
    /// Snapshot of the configuration that produced the artifact.
    pub config: serde_json::Value,
    /// Input-artifact hashes (name -> sha256 hex).
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(artifact: &Path) -> std::path::PathBuf {
    let mut os = artifact.as_os_str().to_owned();
    os.push(".manifest.json");
    os.into()
}

pub fn write_manifest(artifact: &Path, manifest: &ArtifactManifest) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(manifest)?;
    fs::write(manifest_path(artifact), bytes)?;
    Ok(())
}

pub fn read_manifest(artifact: &Path) -> Result<ArtifactManifest> {
    let path = manifest_path(artifact);
    let bytes = fs::read(&path)
        .map_err(|e| Error::Artifact(format!("missing manifest {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Hashes a freshly written artifact and writes its manifest sidecar.
pub fn finish_artifact(
    artifact: &Path,
    schema: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
) -> Result<()> {
    let manifest = ArtifactManifest {
        schema: schema.to_string(),
        seed,
        artifact_sha256: sha256_hex(artifact)?,
        config,
        inputs,
    };
    write_manifest(artifact, &manifest)
}

/// Checks an input artifact against its own manifest and returns its hash.
pub fn verify_artifact(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::Artifact(format!("missing artifact {}", path.display())));
    }
    let manifest = read_manifest(path)?;
    let actual = sha256_hex(path)?;
    if actual != manifest.artifact_sha256 {
        return Err(Error::Artifact(format!(
            "artifact {} does not match its manifest (recorded {}, actual {actual})",
            path.display(),
            manifest.artifact_sha256
        )));
    }
    Ok(actual)
}

/// Confirms that the named inputs still hash to what the manifest recorded.
pub fn verify_inputs(manifest: &ArtifactManifest, inputs: &[(&str, &Path)]) -> Result<()> {
    for (name, path) in inputs {
        let recorded = manifest.inputs.get(*name).ok_or_else(|| {
            Error::Artifact(format!("manifest does not record input {name}"))
        })?;
        let actual = sha256_hex(path)?;
        if &actual != recorded {
            return Err(Error::Artifact(format!(
                "input {name} ({}) hash mismatch: manifest {recorded}, actual {actual}",
                path.display()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cohort file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFile {
    pub schema: String,
    pub seed: u64,
    pub ranges: CohortRanges,
    pub twins: Vec<TwinParams>,
}

pub fn save_cohort(path: &Path, cohort: &[TwinParams], seed: u64, ranges: &CohortRanges) -> Result<()> {
    let file = CohortFile {
        schema: "ventlab.cohort.v1".into(),
        seed,
        ranges: ranges.clone(),
        twins: cohort.to_vec(),
    };
    fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}

pub fn load_cohort(path: &Path) -> Result<CohortFile> {
    let file: CohortFile = serde_json::from_slice(&fs::read(path)?)?;
    if file.schema != "ventlab.cohort.v1" {
        return Err(Error::Artifact(format!("unsupported cohort schema {}", file.schema)));
    }
    for t in &file.twins {
        t.validate()?;
    }
    Ok(file)
}

// ---------------------------------------------------------------------------
// Episode set (line-delimited JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeHeader {
    schema: String,
    seed: u64,
    config: DatasetConfig,
    sim: SimConfig,
    reward_norms: RewardNorms,
    norm_stats: NormStats,
    train_ids: Vec<u32>,
    test_ids: Vec<u32>,
    n_episodes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransitionLine {
    episode_id: u32,
    twin_id: u32,
    step_index: u32,
    state: Vec<f64>,
    action_index: u16,
    reward: f64,
    next_state: Vec<f64>,
    terminal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    survived: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_death: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_injury: Option<f64>,
    mech: crate::sim::MechanicsObservation,
    fio2_t: f64,
    fio2_t1: f64,
}

/// Writes one transition per line behind a schema-versioned header line.
pub fn save_episode_set(path: &Path, set: &EpisodeSet, sim: &SimConfig) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let header = EpisodeHeader {
        schema: "ventlab.episodes.v1".into(),
        seed: set.seed,
        config: set.config.clone(),
        sim: *sim,
        reward_norms: set.reward_norms,
        norm_stats: set.norm_stats.clone(),
        train_ids: set.train_ids.clone(),
        test_ids: set.test_ids.clone(),
        n_episodes: set.episodes.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for ep in &set.episodes {
        for t in 0..ep.len() {
            let tr = ep.transition(t);
            let terminal = tr.terminal;
            let line = TransitionLine {
                episode_id: ep.episode_id,
                twin_id: ep.twin_id,
                step_index: tr.step_index,
                state: tr.state.to_array().to_vec(),
                action_index: tr.action_index.0,
                reward: tr.reward,
                next_state: tr.next_state.to_array().to_vec(),
                terminal,
                survived: tr.survived,
                p_death: terminal.then_some(ep.p_death),
                final_injury: terminal.then_some(ep.final_injury),
                mech: tr.mech,
                fio2_t: ep.fio2_in_effect[t as usize],
                fio2_t1: ep.fio2_in_effect[t as usize + 1],
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads an episode file back into a full `EpisodeSet`.
pub fn load_episode_set(path: &Path) -> Result<(EpisodeSet, SimConfig)> {
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let header: EpisodeHeader = serde_json::from_str(
        &lines
            .next()
            .ok_or_else(|| Error::Artifact("empty episode file".into()))??,
    )?;
    if header.schema != "ventlab.episodes.v1" {
        return Err(Error::Artifact(format!(
            "unsupported episode schema {}",
            header.schema
        )));
    }
    let mut episodes: Vec<Episode> = Vec::with_capacity(header.n_episodes);
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let tl: TransitionLine = serde_json::from_str(&line)?;
        if tl.episode_id as usize >= episodes.len() {
            if tl.episode_id as usize != episodes.len() || tl.step_index != 0 {
                return Err(Error::Artifact(format!(
                    "episode file out of order at episode {} step {}",
                    tl.episode_id, tl.step_index
                )));
            }
            episodes.push(Episode {
                episode_id: tl.episode_id,
                twin_id: tl.twin_id,
                states: vec![PatientState::from_array(&tl.state)?],
                actions: Vec::new(),
                mechs: Vec::new(),
                fio2_in_effect: vec![tl.fio2_t],
                apaches: Vec::new(),
                rewards: Vec::new(),
                survived: false,
                p_death: f64::NAN,
                final_injury: f64::NAN,
            });
        }
        let ep = episodes.last_mut().expect("episode exists");
        if tl.step_index as usize != ep.actions.len() {
            return Err(Error::Artifact(format!(
                "episode {} has non-contiguous steps",
                tl.episode_id
            )));
        }
        ep.states.push(PatientState::from_array(&tl.next_state)?);
        ep.actions.push(crate::data::ActionIndex::new(tl.action_index as usize)?);
        ep.mechs.push(tl.mech);
        ep.fio2_in_effect.push(tl.fio2_t1);
        ep.rewards.push(tl.reward);
        if tl.terminal {
            ep.survived = tl
                .survived
                .ok_or_else(|| Error::Artifact("terminal line lacks a survival flag".into()))?;
            ep.p_death = tl.p_death.unwrap_or(f64::NAN);
            ep.final_injury = tl.final_injury.unwrap_or(f64::NAN);
        }
    }
    for ep in episodes.iter_mut() {
        ep.apaches = ep
            .states
            .iter()
            .zip(&ep.fio2_in_effect)
            .map(|(s, f)| f64::from(crate::data::apache2_score(s, *f)))
            .collect();
    }
    if episodes.len() != header.n_episodes {
        return Err(Error::Artifact(format!(
            "episode count {} does not match header {}",
            episodes.len(),
            header.n_episodes
        )));
    }
    Ok((
        EpisodeSet {
            episodes,
            train_ids: header.train_ids,
            test_ids: header.test_ids,
            reward_norms: header.reward_norms,
            norm_stats: header.norm_stats,
            config: header.config,
            seed: header.seed,
        },
        header.sim,
    ))
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// Per-step training metrics log.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "step,td,cql_raw,coeff_mean,sc,total,grad_norm")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.td, r.cql_raw, r.coeff_mean, r.sc, r.total, r.grad_norm
        )?;
    }
    out.flush()?;
    Ok(())
}

/// One row per decision step: every state channel plus the mechanics.
pub fn write_trajectory_csv(path: &Path, episode: &Episode) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "step,action_index")?;
    for c in CHANNELS {
        write!(out, ",{c}")?;
    }
    writeln!(out, ",pip,peep_set,auto_peep,tidal_volume,driving_pressure,alveolar_ventilation,mechanical_power,reward")?;
    for t in 0..episode.len() {
        let tr: Transition = episode.transition(t);
        write!(out, "{},{}", t, tr.action_index.0)?;
        for v in tr.next_state.to_array() {
            write!(out, ",{v}")?;
        }
        let m = tr.mech;
        writeln!(
            out,
            ",{},{},{},{},{},{},{},{}",
            m.pip_cmh2o,
            m.peep_set_cmh2o,
            m.auto_peep_cmh2o,
            m.tidal_volume_ml,
            m.driving_pressure_cmh2o,
            m.alveolar_ventilation_l_per_min,
            m.mechanical_power_proxy,
            tr.reward
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Plot-ready per-dimension action histograms.
pub fn write_action_histogram_csv(path: &Path, hist: &[Vec<f64>]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "dimension,bin,percent")?;
    let names = ["peep", "fio2", "rr", "ie", "pvent"];
    for (dim, bins) in hist.iter().enumerate() {
        for (b, pct) in bins.iter().enumerate() {
            writeln!(out, "{},{},{}", names.get(dim).unwrap_or(&"?"), b, pct)?;
        }
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Baseline/mortality defaults echoed into manifests
// ---------------------------------------------------------------------------

pub fn mortality_model_json(m: &MortalityModel) -> serde_json::Value {
    serde_json::json!({
        "intercept": m.intercept,
        "apache_coef": m.apache_coef,
        "injury_coef": m.injury_coef,
    })
}
