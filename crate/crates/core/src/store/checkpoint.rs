use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::bytes::{magic_string, put_f32s, Reader};
use super::{read_bytes, write_atomic, StoreError};
use crate::neural::{Head, ModelCheckpoint, NetSpec, StageParams, TrainMeta};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LWTM";
pub const CHECKPOINT_VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<(), StoreError> {
    let v = u32::try_from(v).map_err(|_| StoreError::Shape(format!("{what} = {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), StoreError> {
    let n = u16::try_from(s.len())
        .map_err(|_| StoreError::Shape(format!("tag of {} bytes is too long", s.len())))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Layout: magic, version, descriptor (head kind u8, dropout f64, bn_eps
/// f64, input u32, hidden count u16, hidden widths u32, output u32), per
/// stage gamma, beta, running mean, running var, weight (row-major), bias,
/// then head weight and bias, all as f32; finally the training metadata.
pub fn save_checkpoint(model: &ModelCheckpoint) -> Result<Vec<u8>, StoreError> {
    model
        .validate()
        .map_err(|e| StoreError::Shape(e.to_string()))?;
    let spec = &model.spec;
    let mut out = Vec::with_capacity(64 + 4 * spec.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(match spec.head {
        Head::SoftmaxClassifier => 0,
        Head::LinearRegressor => 1,
    });
    out.extend_from_slice(&spec.dropout_p.to_le_bytes());
    out.extend_from_slice(&spec.bn_eps.to_le_bytes());
    put_u32(&mut out, spec.input_dim, "input dim")?;
    let hidden = u16::try_from(spec.hidden_dims.len())
        .map_err(|_| StoreError::Shape("too many stages".into()))?;
    out.extend_from_slice(&hidden.to_le_bytes());
    for &h in &spec.hidden_dims {
        put_u32(&mut out, h, "hidden width")?;
    }
    put_u32(&mut out, spec.output_dim, "output dim")?;
    for st in &model.stages {
        for v in [
            &st.bn_gamma,
            &st.bn_beta,
            &st.bn_running_mean,
            &st.bn_running_var,
        ] {
            put_f32s(&mut out, v.iter());
        }
        put_f32s(&mut out, st.weight.iter());
        put_f32s(&mut out, st.bias.iter());
    }
    put_f32s(&mut out, model.head_weight.iter());
    put_f32s(&mut out, model.head_bias.iter());
    let m = &model.train_meta;
    out.extend_from_slice(&m.seed.to_le_bytes());
    out.extend_from_slice(&m.epochs.to_le_bytes());
    out.extend_from_slice(&m.best_epoch.to_le_bytes());
    out.extend_from_slice(&m.final_train_loss.to_le_bytes());
    out.extend_from_slice(&m.final_val_loss.to_le_bytes());
    let tags =
        u16::try_from(m.tags.len()).map_err(|_| StoreError::Shape("too many tags".into()))?;
    out.extend_from_slice(&tags.to_le_bytes());
    for (k, v) in &m.tags {
        put_str(&mut out, k)?;
        put_str(&mut out, v)?;
    }
    Ok(out)
}

fn vector(rd: &mut Reader, n: usize, what: String) -> Result<Array1<f64>, StoreError> {
    Ok(Array1::from(rd.f32s(n, &what).map_err(shape)?))
}

fn matrix(
    rd: &mut Reader,
    rows: usize,
    cols: usize,
    what: String,
) -> Result<Array2<f64>, StoreError> {
    let v = rd.f32s(rows * cols, &what).map_err(shape)?;
    Ok(Array2::from_shape_vec((rows, cols), v).expect("length checked"))
}

/// A short parameter block means the descriptor does not match the payload.
fn shape(e: StoreError) -> StoreError {
    match e {
        StoreError::Truncated { what, needed, available } => {
            StoreError::Shape(format!("{what} needs {needed} bytes but only {available} remain; descriptor and payload disagree"))
        }
        other => other,
    }
}

fn read_string(rd: &mut Reader, what: &str) -> Result<String, StoreError> {
    let n = rd.u16(what)? as usize;
    let raw = rd.take(n, what)?;
    String::from_utf8(raw.to_vec()).map_err(|_| StoreError::Shape(format!("{what} is not UTF-8")))
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint, StoreError> {
    let mut rd = Reader::new(bytes);
    let magic = rd.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(StoreError::BadMagic {
            format: "LWTM checkpoint",
            found: magic_string(magic),
        });
    }
    let version = rd.u16("format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(StoreError::UnsupportedVersion {
            format: "checkpoint",
            version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let head = match rd.u8("head kind")? {
        0 => Head::SoftmaxClassifier,
        1 => Head::LinearRegressor,
        h => return Err(StoreError::Shape(format!("unknown head kind {h}"))),
    };
    let dropout_p = rd.f64("dropout")?;
    let bn_eps = rd.f64("batchnorm epsilon")?;
    let input_dim = rd.u32("input dim")? as usize;
    let n_hidden = rd.u16("stage count")? as usize;
    let hidden_dims = (0..n_hidden)
        .map(|s| {
            rd.u32(&format!("stage {} width", s + 1))
                .map(|w| w as usize)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let output_dim = rd.u32("output dim")? as usize;
    let spec = NetSpec {
        input_dim,
        hidden_dims,
        output_dim,
        head,
        dropout_p,
        bn_eps,
    };
    spec.validate()
        .map_err(|e| StoreError::Shape(e.to_string()))?;
    let widths = spec.widths();
    let mut stages = Vec::with_capacity(n_hidden);
    for s in 0..n_hidden {
        let (n_in, n_out) = (widths[s], widths[s + 1]);
        let tag = |p: &str| format!("stage {} {p}", s + 1);
        stages.push(StageParams {
            bn_gamma: vector(&mut rd, n_in, tag("bn_gamma"))?,
            bn_beta: vector(&mut rd, n_in, tag("bn_beta"))?,
            bn_running_mean: vector(&mut rd, n_in, tag("bn_running_mean"))?,
            bn_running_var: vector(&mut rd, n_in, tag("bn_running_var"))?,
            weight: matrix(&mut rd, n_out, n_in, tag("weight"))?,
            bias: vector(&mut rd, n_out, tag("bias"))?,
        });
    }
    let last = widths[widths.len() - 2];
    let head_weight = matrix(&mut rd, output_dim, last, "head weight".into())?;
    let head_bias = vector(&mut rd, output_dim, "head bias".into())?;
    let seed = rd.u64("metadata seed")?;
    let epochs = rd.u32("metadata epochs")?;
    let best_epoch = rd.u32("metadata best epoch")?;
    let final_train_loss = rd.f64("metadata train loss")?;
    let final_val_loss = rd.f64("metadata validation loss")?;
    let n_tags = rd.u16("metadata tag count")? as usize;
    let mut tags = BTreeMap::new();
    for _ in 0..n_tags {
        let k = read_string(&mut rd, "tag key")?;
        let v = read_string(&mut rd, "tag value")?;
        tags.insert(k, v);
    }
    rd.finish()?;
    let model = ModelCheckpoint {
        spec,
        stages,
        head_weight,
        head_bias,
        train_meta: TrainMeta {
            seed,
            epochs,
            best_epoch,
            final_train_loss,
            final_val_loss,
            tags,
        },
    };
    model
        .validate()
        .map_err(|e| StoreError::Shape(e.to_string()))?;
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &ModelCheckpoint) -> Result<(), StoreError> {
    write_atomic(path, &save_checkpoint(model)?)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint, StoreError> {
    load_checkpoint(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn model(spec: NetSpec) -> ModelCheckpoint {
        let mut m = ModelCheckpoint::initialize(spec, &mut stream_rng(3, 0, Stream::Init)).unwrap();
        m.quantize_to_f32();
        m.train_meta.tags.insert("task".into(), "keypad".into());
        m.train_meta.epochs = 7;
        m
    }

    fn keypad() -> NetSpec {
        NetSpec::new(392, vec![100, 50], 13, Head::SoftmaxClassifier)
    }

    #[test]
    fn round_trip_is_exact_and_idempotent() {
        let m = model(keypad());
        let b = save_checkpoint(&m).unwrap();
        let back = load_checkpoint(&b).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_checkpoint(&back).unwrap(), b);
    }

    #[test]
    fn payload_float_count_matches_descriptor() {
        let m = model(keypad());
        let b = save_checkpoint(&m).unwrap();
        // magic, version, head, dropout, eps, input, count, 2 widths, output
        let descriptor = 4 + 2 + 1 + 8 + 8 + 4 + 2 + 2 * 4 + 4;
        let meta = 8 + 4 + 4 + 8 + 8 + 2 + (2 + 4) + (2 + 6);
        assert_eq!((b.len() - descriptor - meta) / 4, m.spec.parameter_count());
        assert_eq!(m.spec.parameter_count(), 46_981);
    }

    #[test]
    fn mismatched_descriptor_names_stage() {
        let m = model(NetSpec::new(10, vec![8, 6], 4, Head::LinearRegressor));
        let mut b = save_checkpoint(&m).unwrap();
        // Widen the second hidden stage in the descriptor only.
        let off = 4 + 2 + 1 + 8 + 8 + 4 + 2 + 4;
        b[off..off + 4].copy_from_slice(&600u32.to_le_bytes());
        let err = load_checkpoint(&b).unwrap_err().to_string();
        assert!(err.contains("stage 2"), "{err}");
    }

    #[test]
    fn header_errors() {
        let b =
            save_checkpoint(&model(NetSpec::new(4, vec![3], 2, Head::SoftmaxClassifier))).unwrap();
        let mut bad = b.clone();
        bad[..4].copy_from_slice(b"LWTD");
        assert!(matches!(
            load_checkpoint(&bad),
            Err(StoreError::BadMagic { .. })
        ));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(
            load_checkpoint(&bad),
            Err(StoreError::UnsupportedVersion { .. })
        ));
        let mut long = b.clone();
        long.push(1);
        assert!(matches!(
            load_checkpoint(&long),
            Err(StoreError::TrailingBytes(1))
        ));
        let mut bad = b;
        bad[6] = 5;
        assert!(matches!(load_checkpoint(&bad), Err(StoreError::Shape(_))));
    }
}
