//! Binary container for every released structure.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DPSIM1" | version: u16 | function id: u16 | header length: u32 | JSON header
//!          | float count: u64 | payload: f64 x count
//! ```
//!
//! The JSON header holds every public parameter; the payload holds the
//! noisy numbers in a structure-defined order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierHeader, DpClassifier};
use crate::error::{Error, Result};
use crate::highdim::{L1Header, L1Structure, L2Header, L2Structure};
use crate::kde::{DpKdeSketch, KdeHeader};
use crate::kernel::Kernel;
use crate::l2sq::{MomentsHeader, NoisyMoments};
use crate::onedim::{NoisyTree, TreeHeader};
use crate::scalar::Scalar;
use crate::smooth::{ExpSumApprox, SmoothHeader, SmoothKdeSketch};

pub const MAGIC: &[u8; 6] = b"DPSIM1";
pub const VERSION: u16 = 1;

/// The functions a sketch file can answer, with their on-disk ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionId {
    L1 = 1,
    L2 = 2,
    L2Sq = 3,
    Lpp = 4,
    GaussKde = 5,
    ExpKde = 6,
    LaplaceKde = 7,
    Inv1pL2 = 8,
    Inv1pL2Sq = 9,
    Inv1pL1 = 10,
    Classifier = 11,
}

impl FunctionId {
    pub const ALL: [FunctionId; 11] = [
        FunctionId::L1,
        FunctionId::L2,
        FunctionId::L2Sq,
        FunctionId::Lpp,
        FunctionId::GaussKde,
        FunctionId::ExpKde,
        FunctionId::LaplaceKde,
        FunctionId::Inv1pL2,
        FunctionId::Inv1pL2Sq,
        FunctionId::Inv1pL1,
        FunctionId::Classifier,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.code() == code)
            .ok_or_else(|| Error::Format(format!("unknown function id {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::L1 => "l1",
            FunctionId::L2 => "l2",
            FunctionId::L2Sq => "l2sq",
            FunctionId::Lpp => "lpp",
            FunctionId::Classifier => "classifier",
            f => f.kernel().expect("kernel function").name(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::param(format!("unknown function `{name}`")))
    }

    /// The kernel behind a KDE function.
    pub fn kernel(self) -> Option<Kernel> {
        Some(match self {
            FunctionId::GaussKde => Kernel::Gaussian,
            FunctionId::ExpKde => Kernel::Exponential,
            FunctionId::LaplaceKde => Kernel::Laplacian,
            FunctionId::Inv1pL2 => Kernel::Inv1pL2,
            FunctionId::Inv1pL2Sq => Kernel::Inv1pL2Sq,
            FunctionId::Inv1pL1 => Kernel::Inv1pL1,
            _ => return None,
        })
    }

    pub fn from_kernel(kernel: Kernel) -> Self {
        match kernel {
            Kernel::Gaussian => FunctionId::GaussKde,
            Kernel::Exponential => FunctionId::ExpKde,
            Kernel::Laplacian => FunctionId::LaplaceKde,
            Kernel::Inv1pL2 => FunctionId::Inv1pL2,
            Kernel::Inv1pL2Sq => FunctionId::Inv1pL2Sq,
            Kernel::Inv1pL1 => FunctionId::Inv1pL1,
        }
    }
}

/// Any released structure.
#[derive(Debug, Clone)]
pub enum Sketch<T> {
    /// l1 or l_p^p distance sums (the structure's `p` decides which).
    Distance(L1Structure<T>),
    L2(L2Structure<T>),
    L2Sq(NoisyMoments<T>),
    Kde(DpKdeSketch<T>),
    Smooth(SmoothKdeSketch<T>),
    Classifier(DpClassifier<T>),
}

impl<T: Scalar> PartialEq for Sketch<T> {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Sketch::Distance(a), Sketch::Distance(b)) => a == b,
            (Sketch::L2(a), Sketch::L2(b)) => a == b,
            (Sketch::L2Sq(a), Sketch::L2Sq(b)) => a == b,
            (Sketch::Kde(a), Sketch::Kde(b)) => a == b,
            (Sketch::Smooth(a), Sketch::Smooth(b)) => a == b,
            (Sketch::Classifier(a), Sketch::Classifier(b)) => a == b,
            _ => false,
        }
    }
}

impl<T: Scalar> Sketch<T> {
    pub fn function(&self) -> FunctionId {
        match self {
            Sketch::Distance(s) if s.p() == 1.0 => FunctionId::L1,
            Sketch::Distance(_) => FunctionId::Lpp,
            Sketch::L2(_) => FunctionId::L2,
            Sketch::L2Sq(_) => FunctionId::L2Sq,
            Sketch::Kde(k) => FunctionId::from_kernel(k.header().kernel),
            Sketch::Smooth(k) => FunctionId::from_kernel(k.header().kernel),
            Sketch::Classifier(_) => FunctionId::Classifier,
        }
    }

    /// Dimension queries must have.
    pub fn input_dim(&self) -> usize {
        match self {
            Sketch::Distance(s) => s.dim(),
            Sketch::L2(s) => s.header().input_promise.dim,
            Sketch::L2Sq(s) => s.dim(),
            Sketch::Kde(s) => s.header().input_dim,
            Sketch::Smooth(s) => s.header().input_dim,
            Sketch::Classifier(s) => s.header().input_dim,
        }
    }

    pub fn is_noise_off(&self) -> bool {
        match self {
            Sketch::Distance(s) => s.header().noise_off,
            Sketch::L2(s) => s.inner().header().noise_off,
            Sketch::L2Sq(s) => s.header().noise_off,
            Sketch::Kde(s) => s.header().noise_off,
            Sketch::Smooth(s) => s.header().noise_off,
            Sketch::Classifier(s) => s.header().noise_off,
        }
    }

    /// Answers one query. A classifier answers with its predicted label.
    pub fn evaluate(&self, y: &[T]) -> Result<f64> {
        Ok(match self {
            Sketch::Distance(s) => s.query(y)?.as_f64(),
            Sketch::L2(s) => s.query_l2(y)?.as_f64(),
            Sketch::L2Sq(s) => s.query_l2sq(y)?.as_f64(),
            Sketch::Kde(s) => s.query_kde(y)?.as_f64(),
            Sketch::Smooth(s) => s.query_smooth_kde(y)?.as_f64(),
            Sketch::Classifier(s) => s.predict(y)? as f64,
        })
    }

    /// Serialises to the sketch file format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let body = match self {
            Sketch::Distance(s) => Body::Distance(distance_body(s, None, &mut payload)),
            Sketch::L2(s) => Body::Distance(distance_body(s.inner(), Some(*s.header()), &mut payload)),
            Sketch::L2Sq(m) => Body::Moments { moments: moments_body(m, &mut payload) },
            Sketch::Kde(k) => Body::Kde { kde: kde_body(k, &mut payload) },
            Sketch::Smooth(s) => Body::Smooth {
                smooth: *s.header(),
                approx: s.approx().clone(),
                subs: s.sub_sketches().iter().map(|k| kde_body(k, &mut payload)).collect(),
            },
            Sketch::Classifier(c) => Body::Classifier {
                classifier: c.header().clone(),
                classes: c.classes().iter().map(|m| moments_body(m, &mut payload)).collect(),
            },
        };
        let header = serde_json::to_vec(&Header { scalar: scalar_name::<T>().into(), noise_off: self.is_noise_off(), body })
            .map_err(|e| Error::Internal(format!("header serialisation failed: {e}")))?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;

        let mut out = Vec::with_capacity(22 + header.len() + 8 * payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.function().code().to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses a sketch file, rejecting unknown magic, versions and ids.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(6)? != MAGIC {
            return Err(Error::Format("not a sketch file (bad magic)".into()));
        }
        let version = u16::from_le_bytes(cur.array()?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported sketch file version {version}")));
        }
        let function = FunctionId::from_code(u16::from_le_bytes(cur.array()?))?;
        let header_len = u32::from_le_bytes(cur.array()?) as usize;
        let header: Header =
            serde_json::from_slice(cur.take(header_len)?).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.scalar != scalar_name::<T>() {
            return Err(Error::Format(format!("sketch holds {} values, expected {}", header.scalar, scalar_name::<T>())));
        }
        let count = u64::from_le_bytes(cur.array()?) as usize;
        if count.checked_mul(8) != Some(bytes.len() - cur.pos) {
            return Err(Error::Format("payload length does not match its float count".into()));
        }
        let mut payload = Payload {
            values: (0..count).map(|_| T::lit(f64::from_le_bytes(cur.array().expect("length checked")))).collect(),
            pos: 0,
        };

        let sketch = match header.body {
            Body::Distance(d) => {
                let trees = d
                    .trees
                    .into_iter()
                    .map(|(h, len)| NoisyTree::from_parts(h, payload.take(len)?))
                    .collect::<Result<Vec<_>>>()?;
                let l1 = L1Structure::from_parts(d.l1, trees)?;
                match d.l2 {
                    Some(h) => Sketch::L2(L2Structure::from_parts(h, l1)?),
                    None => Sketch::Distance(l1),
                }
            }
            Body::Moments { moments } => Sketch::L2Sq(read_moments(moments, &mut payload)?),
            Body::Kde { kde } => Sketch::Kde(read_kde(kde, &mut payload)?),
            Body::Smooth { smooth, approx, subs } => {
                let subs = subs.into_iter().map(|h| read_kde(h, &mut payload)).collect::<Result<Vec<_>>>()?;
                Sketch::Smooth(SmoothKdeSketch::from_parts(smooth, approx, subs)?)
            }
            Body::Classifier { classifier, classes } => {
                let classes = classes.into_iter().map(|h| read_moments(h, &mut payload)).collect::<Result<Vec<_>>>()?;
                Sketch::Classifier(DpClassifier::from_parts(classifier, classes)?)
            }
        };
        if payload.pos != payload.values.len() {
            return Err(Error::Format("trailing payload values".into()));
        }
        if sketch.function() != function {
            return Err(Error::Format(format!("function id {} does not match the header", function.code())));
        }
        Ok(sketch)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn scalar_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    scalar: String,
    noise_off: bool,
    body: Body,
}

#[derive(Serialize, Deserialize)]
struct DistanceBody {
    l1: L1Header,
    /// Each tree header with its node count.
    trees: Vec<(TreeHeader, usize)>,
    l2: Option<L2Header>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Body {
    Distance(DistanceBody),
    Moments { moments: MomentsHeader },
    Kde { kde: KdeHeader },
    Smooth { smooth: SmoothHeader, approx: ExpSumApprox, subs: Vec<KdeHeader> },
    Classifier { classifier: ClassifierHeader, classes: Vec<MomentsHeader> },
}

fn distance_body<T: Scalar>(s: &L1Structure<T>, l2: Option<L2Header>, payload: &mut Vec<f64>) -> DistanceBody {
    let trees = s
        .trees()
        .iter()
        .map(|t| {
            payload.extend(t.node_values().iter().map(|v| v.as_f64()));
            (*t.header(), t.node_values().len())
        })
        .collect();
    DistanceBody { l1: *s.header(), trees, l2 }
}

fn moments_body<T: Scalar>(m: &NoisyMoments<T>, payload: &mut Vec<f64>) -> MomentsHeader {
    payload.extend(m.noisy_mean().iter().map(|v| v.as_f64()));
    payload.push(m.noisy_s().as_f64());
    *m.header()
}

fn kde_body<T: Scalar>(k: &DpKdeSketch<T>, payload: &mut Vec<f64>) -> KdeHeader {
    payload.extend(k.noisy_mean().iter().map(|v| v.as_f64()));
    *k.header()
}

fn read_moments<T: Scalar>(h: MomentsHeader, payload: &mut Payload<T>) -> Result<NoisyMoments<T>> {
    let mut v = payload.take(h.promise.dim + 1)?;
    let s = v.pop().expect("at least one value");
    NoisyMoments::from_parts(h, v, s)
}

fn read_kde<T: Scalar>(h: KdeHeader, payload: &mut Payload<T>) -> Result<DpKdeSketch<T>> {
    let v = payload.take(h.feature_map.features)?;
    DpKdeSketch::from_parts(h, v)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("sketch file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }
}

struct Payload<T> {
    values: Vec<T>,
    pos: usize,
}

impl<T: Copy> Payload<T> {
    fn take(&mut self, len: usize) -> Result<Vec<T>> {
        let end = self.pos + len;
        if end > self.values.len() {
            return Err(Error::Format("payload is shorter than the header describes".into()));
        }
        let out = self.values[self.pos..end].to_vec();
        self.pos = end;
        Ok(out)
    }
}
