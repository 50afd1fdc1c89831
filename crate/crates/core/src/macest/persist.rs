//! Model file format.
//!
//! ```text
//! "MACE" | u16 LE format version | UTF-8 JSON document
//! ```
//!
//! Float arrays inside the document are base64 strings of little-endian
//! IEEE-754 float64 values, so coordinates round-trip bit for bit. Neighbour
//! graphs are not stored; they are rebuilt deterministically from the stored
//! points on load.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClassGraph, MacestModel};
use crate::embedding::{Embedding, PcaModel, Standardizer};
use crate::error::{Error, Result};
use crate::neighbour::{Backend, HnswParams};
use crate::predictor::KnnClassifier;

pub const MAGIC: &[u8; 4] = b"MACE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
struct F64Array(#[serde(with = "le_f64")] Vec<f64>);

mod le_f64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("float array length not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: F64Array,
}

impl Matrix {
    fn from_array(a: &Array2<f64>) -> Matrix {
        Matrix {
            rows: a.nrows(),
            cols: a.ncols(),
            data: F64Array(a.iter().copied().collect()),
        }
    }

    fn into_array(self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.0)
            .map_err(|e| Error::CorruptModel(format!("matrix shape: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EmbeddingDoc {
    None {
        dim: usize,
    },
    Std {
        means: F64Array,
        sds: F64Array,
    },
    Pca {
        means: F64Array,
        sds: F64Array,
        pca_means: F64Array,
        components: Matrix,
        explained_variance: F64Array,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassDoc {
    k: usize,
    points: Matrix,
    incorrect: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictorDoc {
    vote_k: usize,
    points: Matrix,
    labels: Vec<usize>,
    backend: Backend,
    hnsw: HnswParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    alpha: f64,
    beta: f64,
    sharpness: f64,
    k: usize,
    d_min: f64,
    class_count: usize,
    fitted_ece: Option<f64>,
    backend: Backend,
    hnsw: HnswParams,
    embedding: EmbeddingDoc,
    classes: Vec<ClassDoc>,
    calibration_epistemic: F64Array,
    predictor: Option<PredictorDoc>,
}

fn embedding_doc(e: &Embedding) -> EmbeddingDoc {
    match e {
        Embedding::Identity { dim } => EmbeddingDoc::None { dim: *dim },
        Embedding::Standardize(s) => EmbeddingDoc::Std {
            means: F64Array(s.means.clone()),
            sds: F64Array(s.sds.clone()),
        },
        Embedding::Pca { standardizer, pca } => EmbeddingDoc::Pca {
            means: F64Array(standardizer.means.clone()),
            sds: F64Array(standardizer.sds.clone()),
            pca_means: F64Array(pca.means.clone()),
            components: Matrix::from_array(&pca.components),
            explained_variance: F64Array(pca.explained_variance.clone()),
        },
    }
}

fn embedding_from_doc(doc: EmbeddingDoc) -> Result<Embedding> {
    Ok(match doc {
        EmbeddingDoc::None { dim } => Embedding::Identity { dim },
        EmbeddingDoc::Std { means, sds } => Embedding::Standardize(Standardizer {
            means: means.0,
            sds: sds.0,
        }),
        EmbeddingDoc::Pca {
            means,
            sds,
            pca_means,
            components,
            explained_variance,
        } => Embedding::Pca {
            standardizer: Standardizer {
                means: means.0,
                sds: sds.0,
            },
            pca: PcaModel {
                components: components.into_array()?,
                means: pca_means.0,
                explained_variance: explained_variance.0,
            },
        },
    })
}

/// Serializes a model to bytes.
pub fn to_bytes(model: &MacestModel) -> Result<Vec<u8>> {
    let doc = ModelDoc {
        alpha: model.alpha,
        beta: model.beta,
        sharpness: model.sharpness,
        k: model.k,
        d_min: model.d_min,
        class_count: model.class_count,
        fitted_ece: model.fitted_ece.is_finite().then_some(model.fitted_ece),
        backend: model.backend,
        hnsw: model.hnsw,
        embedding: embedding_doc(&model.embedding),
        classes: model
            .classes
            .iter()
            .map(|c| ClassDoc {
                k: c.k,
                points: Matrix::from_array(&c.points),
                incorrect: c.incorrect.clone(),
            })
            .collect(),
        calibration_epistemic: F64Array(model.calibration_epistemic.clone()),
        predictor: model.predictor.as_ref().map(|p| {
            let idx = p.index();
            PredictorDoc {
                vote_k: p.vote_k(),
                points: Matrix {
                    rows: idx.len(),
                    cols: idx.dim(),
                    data: F64Array(idx.points_flat().to_vec()),
                },
                labels: p.labels().to_vec(),
                backend: idx.backend(),
                hnsw: *idx.params(),
            }
        }),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    serde_json::to_writer(&mut out, &doc)?;
    Ok(out)
}

/// Parses a model from bytes, rebuilding its neighbour indexes.
pub fn from_bytes(bytes: &[u8]) -> Result<MacestModel> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::NotAModel);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let doc: ModelDoc = serde_json::from_slice(&bytes[6..]).map_err(|e| Error::CorruptModel(e.to_string()))?;
    if doc.classes.len() != doc.class_count {
        return Err(Error::CorruptModel(format!(
            "{} class graphs for {} classes",
            doc.classes.len(),
            doc.class_count
        )));
    }
    let classes = doc
        .classes
        .into_iter()
        .map(|c| {
            let points = c.points.into_array()?;
            if points.nrows() != c.incorrect.len() || c.k == 0 || c.k > points.nrows() {
                return Err(Error::CorruptModel("class graph sizes disagree".into()));
            }
            ClassGraph::new(points, c.incorrect, c.k, doc.backend, doc.hnsw)
        })
        .collect::<Result<Vec<_>>>()?;
    let class_count = doc.class_count;
    let predictor = doc
        .predictor
        .map(|p| {
            let points = p.points.into_array()?;
            KnnClassifier::from_parts(points.view(), p.labels, class_count, p.vote_k, p.backend, p.hnsw)
        })
        .transpose()?;
    Ok(MacestModel {
        alpha: doc.alpha,
        beta: doc.beta,
        sharpness: doc.sharpness,
        k: doc.k,
        d_min: doc.d_min,
        class_count,
        classes,
        embedding: embedding_from_doc(doc.embedding)?,
        backend: doc.backend,
        hnsw: doc.hnsw,
        calibration_epistemic: doc.calibration_epistemic.0,
        fitted_ece: doc.fitted_ece.unwrap_or(f64::NAN),
        predictor,
    })
}

pub fn save(model: &MacestModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MacestModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
