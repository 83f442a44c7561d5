//! Binary model archives.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MLREGARC"
//! version    u32      (currently 1)
//! manifest   u32 length + UTF-8 "key=value" lines, sorted by key
//! body       model-specific blocks (below)
//! checksum   32 bytes SHA-256 of everything before it
//! ```
//!
//! A linear model block is `u32 classes, u32 dim, u32 vectors`, then per score
//! vector an `f64` intercept, a `u32` nonzero count and that many
//! `(u32 index, f64 value)` pairs. Only nonzero weights are stored. Bodies:
//!
//! * `br`: `u32 L`, then `L` linear blocks.
//! * `pcc`: `u32 L`, the chain order as `L` `u32`s, then `L` linear blocks.
//! * `cbm`: `u32 K`, a gating tag (`0` single, `1` followed by a linear
//!   block), then `K` `br` bodies.
//! * `crf`: `u32 L, u32 D, u8 pairwise flag`, `L` sparse unary rows of width
//!   `D + 1`, a sparse array of the `4 · L(L-1)/2` pairwise weights, and the
//!   support as `u32 count` entries of `u32 multiplicity, u32 size, size × u32`.
//! * `lsf`: a `br` body for the marginals, a linear block for the empty-set
//!   model, then per label a tag (`0` fixed distribution as a sparse array,
//!   `1` linear block).
//!
//! A sparse array is `u32 length, u32 nonzeros, nonzeros × (u32, f64)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{BrModel, CbmModel, CrfModel, Estimator, Gating, JointEstimator, PccModel};
use crate::fpredict::{CardinalityModel, LsfModel};
use crate::linreg::LinearModel;
use crate::types::{LabelVector, SupportSet};

const MAGIC: &[u8; 8] = b"MLREGARC";
pub const ARCHIVE_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Any trained model the archive can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Joint(Estimator),
    Lsf(LsfModel),
}

impl StoredModel {
    pub fn kind(&self) -> &'static str {
        match self {
            StoredModel::Joint(e) => e.kind(),
            StoredModel::Lsf(_) => "lsf",
        }
    }

    pub fn num_labels(&self) -> usize {
        match self {
            StoredModel::Joint(e) => e.num_labels(),
            StoredModel::Lsf(m) => m.num_labels(),
        }
    }

    pub fn num_features(&self) -> usize {
        match self {
            StoredModel::Joint(e) => e.num_features(),
            StoredModel::Lsf(m) => m.num_features(),
        }
    }

    /// Every linear model with the number of leading weight columns that
    /// refer to input features.
    fn linear_models(&self) -> Vec<&LinearModel> {
        let mut out = Vec::new();
        match self {
            StoredModel::Joint(Estimator::Br(m)) => out.extend(m.models()),
            StoredModel::Joint(Estimator::Pcc(m)) => out.extend(m.models()),
            StoredModel::Joint(Estimator::Cbm(m)) => {
                if let Gating::Linear(g) = m.gating() {
                    out.push(g);
                }
                for c in m.components() {
                    out.extend(c.models());
                }
            }
            StoredModel::Joint(Estimator::Crf(_)) => {}
            StoredModel::Lsf(m) => {
                out.extend(m.marginal_model().models());
                out.push(m.empty_model());
                for c in m.cardinality_models() {
                    if let CardinalityModel::Linear(lm) = c {
                        out.push(lm);
                    }
                }
            }
        }
        out
    }
}

/// A model plus free-form metadata (hyperparameters, training data path).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub model: StoredModel,
    pub metadata: BTreeMap<String, String>,
}

impl ModelArchive {
    pub fn new(model: StoredModel) -> Self {
        Self {
            model,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }
}

/// Size accounting of an archive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchiveStats {
    pub byte_size: usize,
    /// Stored nonzero weights; intercepts and biases excluded.
    pub nonzero_weight_count: usize,
    /// Input features with a nonzero weight in at least one base learner.
    pub selected_feature_count: usize,
    /// `nonzero_weight_count / L`.
    pub mean_nonzero_per_label: f64,
}

pub fn archive_stats(archive: &ModelArchive) -> Result<ArchiveStats> {
    let bytes = encode_archive(archive)?;
    Ok(stats_for(archive, bytes.len()))
}

fn stats_for(archive: &ModelArchive, byte_size: usize) -> ArchiveStats {
    let model = &archive.model;
    let d = model.num_features();
    let mut nonzero = 0;
    let mut selected = BTreeSet::new();
    for m in model.linear_models() {
        nonzero += m.nonzero_count();
        for v in 0..m.weights().len() {
            selected.extend(m.sparse_weights(v).map(|(j, _)| j).filter(|&j| j < d));
        }
    }
    if let StoredModel::Joint(Estimator::Crf(crf)) = model {
        for row in crf.unary() {
            nonzero += row[..d].iter().filter(|w| **w != 0.0).count();
            selected.extend(row[..d].iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, _)| j));
        }
        nonzero += crf.pairwise().iter().flatten().filter(|w| **w != 0.0).count();
    }
    ArchiveStats {
        byte_size,
        nonzero_weight_count: nonzero,
        selected_feature_count: selected.len(),
        mean_nonzero_per_label: nonzero as f64 / model.num_labels() as f64,
    }
}

pub fn save_model(archive: &ModelArchive, path: impl AsRef<Path>) -> Result<ArchiveStats> {
    let bytes = encode_archive(archive)?;
    fs::write(path, &bytes)?;
    Ok(stats_for(archive, bytes.len()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArchive> {
    decode_archive(&fs::read(path)?)
}

pub fn encode_archive(archive: &ModelArchive) -> Result<Vec<u8>> {
    let mut manifest = BTreeMap::new();
    for (k, v) in &archive.metadata {
        if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') || k == "kind" {
            return Err(Error::Archive(format!("invalid metadata entry `{k}`")));
        }
        manifest.insert(k.as_str(), v.as_str());
    }
    manifest.insert("kind", archive.model.kind());
    let manifest: String = manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();

    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(ARCHIVE_VERSION);
    w.len(manifest.len());
    w.0.extend_from_slice(manifest.as_bytes());
    match &archive.model {
        StoredModel::Joint(Estimator::Br(m)) => w.br(m),
        StoredModel::Joint(Estimator::Pcc(m)) => {
            w.len(m.models().len());
            for &o in m.order() {
                w.len(o);
            }
            for lm in m.models() {
                w.linear(lm);
            }
        }
        StoredModel::Joint(Estimator::Cbm(m)) => {
            w.len(m.num_components());
            match m.gating() {
                Gating::Single => w.0.push(0),
                Gating::Linear(g) => {
                    w.0.push(1);
                    w.linear(g);
                }
            }
            for c in m.components() {
                w.br(c);
            }
        }
        StoredModel::Joint(Estimator::Crf(m)) => {
            w.len(m.num_labels());
            w.len(m.num_features());
            w.0.push(u8::from(m.include_pairwise()));
            for row in m.unary() {
                w.sparse(row);
            }
            let flat: Vec<f64> = m.pairwise().iter().flatten().copied().collect();
            w.sparse(&flat);
            w.len(m.support().len());
            for (y, count) in m.support().iter() {
                w.len(count);
                w.len(y.cardinality());
                for &l in y.labels() {
                    w.len(l);
                }
            }
        }
        StoredModel::Lsf(m) => {
            w.br(m.marginal_model());
            w.linear(m.empty_model());
            for c in m.cardinality_models() {
                match c {
                    CardinalityModel::Fixed(p) => {
                        w.0.push(0);
                        w.sparse(p);
                    }
                    CardinalityModel::Linear(lm) => {
                        w.0.push(1);
                        w.linear(lm);
                    }
                }
            }
        }
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    Ok(w.0)
}

pub fn decode_archive(bytes: &[u8]) -> Result<ModelArchive> {
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Archive("not a model archive".into()));
    }
    let (content, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let mut r = Reader {
        bytes: content,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Archive(format!(
            "unsupported version {version} (expected {ARCHIVE_VERSION})"
        )));
    }
    if Sha256::digest(content).as_slice() != checksum {
        return Err(Error::Archive("checksum mismatch".into()));
    }
    let manifest_len = r.len()?;
    let manifest = std::str::from_utf8(r.take(manifest_len)?)
        .map_err(|_| Error::Archive("manifest is not UTF-8".into()))?;
    let mut metadata = BTreeMap::new();
    for line in manifest.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Archive(format!("malformed manifest line `{line}`")))?;
        metadata.insert(k.to_string(), v.to_string());
    }
    let kind = metadata
        .remove("kind")
        .ok_or_else(|| Error::Archive("manifest has no kind".into()))?;

    let model = match kind.as_str() {
        "br" => StoredModel::Joint(Estimator::Br(r.br()?)),
        "pcc" => {
            let l = r.len()?;
            let order = (0..l).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let models = (0..l).map(|_| r.linear()).collect::<Result<Vec<_>>>()?;
            StoredModel::Joint(Estimator::Pcc(PccModel::new(order, models)?))
        }
        "cbm" => {
            let k = r.len()?;
            let gating = match r.u8()? {
                0 => Gating::Single,
                1 => Gating::Linear(r.linear()?),
                t => return Err(Error::Archive(format!("unknown gating tag {t}"))),
            };
            let components = (0..k).map(|_| r.br()).collect::<Result<Vec<_>>>()?;
            StoredModel::Joint(Estimator::Cbm(CbmModel::new(gating, components)?))
        }
        "crf" => {
            let l = r.len()?;
            let d = r.len()?;
            let include_pairwise = r.u8()? != 0;
            let unary = (0..l).map(|_| r.sparse(Some(d + 1))).collect::<Result<Vec<_>>>()?;
            let flat = r.sparse(Some(2 * l * l.saturating_sub(1)))?;
            let pairwise = flat.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let count = r.len()?;
            let mut support = Vec::with_capacity(count);
            for _ in 0..count {
                let multiplicity = r.len()?;
                let size = r.len()?;
                let ids = (0..size).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
                support.push((LabelVector::new(l, ids)?, multiplicity));
            }
            let support = SupportSet::from_counted(support);
            StoredModel::Joint(Estimator::Crf(CrfModel::new(unary, pairwise, include_pairwise, support)?))
        }
        "lsf" => {
            let marginals = r.br()?;
            let empty = r.linear()?;
            let l = marginals.models().len();
            let mut cardinality = Vec::with_capacity(l);
            for _ in 0..l {
                cardinality.push(match r.u8()? {
                    0 => CardinalityModel::Fixed(r.sparse(None)?),
                    1 => CardinalityModel::Linear(r.linear()?),
                    t => return Err(Error::Archive(format!("unknown cardinality tag {t}"))),
                });
            }
            StoredModel::Lsf(LsfModel::new(marginals, cardinality, empty)?)
        }
        other => return Err(Error::Archive(format!("unknown model kind `{other}`"))),
    };
    if r.pos != content.len() {
        return Err(Error::Archive("trailing bytes after model body".into()));
    }
    Ok(ModelArchive { model, metadata })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("archive sizes fit in u32"));
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn sparse(&mut self, values: &[f64]) {
        self.len(values.len());
        self.len(values.iter().filter(|v| **v != 0.0).count());
        for (j, &v) in values.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            self.len(j);
            self.f64(v);
        }
    }

    fn linear(&mut self, m: &LinearModel) {
        self.len(m.num_classes());
        self.len(m.dim());
        self.len(m.weights().len());
        for (v, &b) in m.intercepts().iter().enumerate() {
            self.f64(b);
            let pairs: Vec<(usize, f64)> = m.sparse_weights(v).collect();
            self.len(pairs.len());
            for (j, w) in pairs {
                self.len(j);
                self.f64(w);
            }
        }
    }

    fn br(&mut self, m: &BrModel) {
        self.len(m.models().len());
        for lm in m.models() {
            self.linear(lm);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Archive("truncated archive".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Sparse array, optionally checked against an expected length.
    fn sparse(&mut self, expected: Option<usize>) -> Result<Vec<f64>> {
        let n = self.len()?;
        if expected.is_some_and(|e| e != n) {
            return Err(Error::Archive(format!("sparse array of length {n}, expected {expected:?}")));
        }
        let nnz = self.len()?;
        self.bound(nnz, 12)?;
        let mut out = vec![0.0; n];
        for _ in 0..nnz {
            let j = self.len()?;
            let v = self.f64()?;
            *out.get_mut(j).ok_or_else(|| Error::Archive(format!("index {j} out of range")))? = v;
        }
        Ok(out)
    }

    fn linear(&mut self) -> Result<LinearModel> {
        let classes = self.len()?;
        let dim = self.len()?;
        let vectors = self.len()?;
        self.bound(vectors, 12)?;
        let mut intercepts = Vec::with_capacity(vectors);
        let mut weights = Vec::with_capacity(vectors);
        for _ in 0..vectors {
            intercepts.push(self.f64()?);
            let nnz = self.len()?;
            self.bound(nnz, 12)?;
            let mut w = vec![0.0; dim];
            for _ in 0..nnz {
                let j = self.len()?;
                let v = self.f64()?;
                *w.get_mut(j).ok_or_else(|| Error::Archive(format!("weight index {j} out of range")))? = v;
            }
            weights.push(w);
        }
        LinearModel::from_parts(classes, dim, intercepts, weights)
    }

    fn br(&mut self) -> Result<BrModel> {
        let l = self.len()?;
        self.bound(l, 12)?;
        BrModel::new((0..l).map(|_| self.linear()).collect::<Result<Vec<_>>>()?)
    }

    /// Rejects counts that cannot fit in the remaining bytes before allocating.
    fn bound(&self, count: usize, item_size: usize) -> Result<()> {
        if count.saturating_mul(item_size) > self.bytes.len() - self.pos {
            return Err(Error::Archive("truncated archive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SparseInstance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_linear(rng: &mut ChaCha8Rng, classes: usize, dim: usize) -> LinearModel {
        let v = LinearModel::score_vectors_for(classes);
        let weights = (0..v)
            .map(|_| {
                (0..dim)
                    .map(|_| if rng.gen_bool(0.3) { rng.gen_range(-2.0..2.0) } else { 0.0 })
                    .collect()
            })
            .collect();
        LinearModel::from_parts(classes, dim, (0..v).map(|_| rng.gen_range(-1.0..1.0)).collect(), weights).unwrap()
    }

    fn random_br(rng: &mut ChaCha8Rng, l: usize, d: usize) -> BrModel {
        BrModel::new((0..l).map(|_| random_linear(rng, 2, d)).collect()).unwrap()
    }

    fn all_models() -> Vec<StoredModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (l, d) = (3, 6);
        let pcc = PccModel::new(vec![2, 0, 1], (0..l).map(|j| random_linear(&mut rng, 2, d + j)).collect()).unwrap();
        let cbm = CbmModel::new(
            Gating::Linear(random_linear(&mut rng, 3, d)),
            (0..3).map(|_| random_br(&mut rng, l, d)).collect(),
        )
        .unwrap();
        let support = SupportSet::from_counted(vec![
            (LabelVector::new(l, [0]).unwrap(), 3),
            (LabelVector::new(l, [1, 2]).unwrap(), 1),
        ]);
        let crf = CrfModel::new(
            (0..l).map(|_| (0..=d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            (0..3).map(|_| [rng.gen(), 0.0, rng.gen(), -1.5]).collect(),
            true,
            support,
        )
        .unwrap();
        let lsf = LsfModel::new(
            random_br(&mut rng, l, d),
            vec![
                CardinalityModel::Linear(random_linear(&mut rng, l, d)),
                CardinalityModel::Fixed(vec![0.5, 0.5, 0.0]),
                CardinalityModel::Linear(random_linear(&mut rng, l, d)),
            ],
            random_linear(&mut rng, 2, d),
        )
        .unwrap();
        vec![
            StoredModel::Joint(Estimator::Br(random_br(&mut rng, l, d))),
            StoredModel::Joint(Estimator::Pcc(pcc)),
            StoredModel::Joint(Estimator::Cbm(cbm)),
            StoredModel::Joint(Estimator::Crf(crf)),
            StoredModel::Lsf(lsf),
        ]
    }

    #[test]
    fn round_trip_every_kind() {
        for model in all_models() {
            let archive = ModelArchive::new(model).with("lambda", 0.01).with("train", "data/train.txt");
            let bytes = encode_archive(&archive).unwrap();
            let back = decode_archive(&bytes).unwrap();
            assert_eq!(back, archive, "{}", archive.model.kind());
            assert_eq!(encode_archive(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn loaded_models_predict_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for model in all_models() {
            let back = decode_archive(&encode_archive(&ModelArchive::new(model.clone())).unwrap()).unwrap();
            let (StoredModel::Joint(a), StoredModel::Joint(b)) = (&model, &back.model) else {
                continue;
            };
            for _ in 0..5 {
                let x = SparseInstance::from_dense(&(0..6).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
                    .unwrap();
                let y = LabelVector::from_mask(3, rng.gen_range(0..8));
                let (pa, pb) = (a.log_joint(&x, &y), b.log_joint(&x, &y));
                if let (Ok(pa), Ok(pb)) = (pa, pb) {
                    assert_eq!(pa.to_bits(), pb.to_bits());
                }
            }
        }
    }

    #[test]
    fn corruption_is_detected() {
        let model = all_models().remove(0);
        let mut bytes = encode_archive(&ModelArchive::new(model)).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(decode_archive(&bytes), Err(Error::Archive(m)) if m.contains("checksum")));
        let mut versioned = encode_archive(&ModelArchive::new(all_models().remove(0))).unwrap();
        versioned[8] = 7;
        assert!(matches!(decode_archive(&versioned), Err(Error::Archive(m)) if m.contains("version")));
        assert!(decode_archive(b"garbage").is_err());
    }

    #[test]
    fn zero_model_stats() {
        let br = BrModel::new(vec![LinearModel::zeros(2, 50).unwrap(); 4]).unwrap();
        let archive = ModelArchive::new(StoredModel::Joint(Estimator::Br(br)));
        let stats = archive_stats(&archive).unwrap();
        assert_eq!(stats.nonzero_weight_count, 0);
        assert_eq!(stats.selected_feature_count, 0);
        // header + manifest "kind=br\n" + L + 4 blocks of (3 u32 + intercept + nnz) + checksum
        assert_eq!(stats.byte_size, 8 + 4 + 4 + 8 + 4 + 4 * (12 + 8 + 4) + 32);
    }

    #[test]
    fn nonzero_count_matches_recount() {
        for model in all_models() {
            let stats = archive_stats(&ModelArchive::new(model.clone())).unwrap();
            let recount: usize = match &model {
                StoredModel::Joint(Estimator::Crf(m)) => {
                    let d = m.num_features();
                    m.unary().iter().map(|r| r[..d].iter().filter(|w| **w != 0.0).count()).sum::<usize>()
                        + m.pairwise().iter().flatten().filter(|w| **w != 0.0).count()
                }
                _ => model
                    .linear_models()
                    .iter()
                    .flat_map(|m| m.weights().iter().flatten())
                    .filter(|w| **w != 0.0)
                    .count(),
            };
            assert_eq!(stats.nonzero_weight_count, recount);
        }
    }

    #[test]
    fn metadata_keys_validated() {
        let model = all_models().remove(0);
        assert!(encode_archive(&ModelArchive::new(model.clone()).with("a=b", 1)).is_err());
        assert!(encode_archive(&ModelArchive::new(model).with("kind", "pcc")).is_err());
    }
}
